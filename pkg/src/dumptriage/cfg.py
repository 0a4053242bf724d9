"""Basic blocks, the control-flow graph over them, and DOT export."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import UnknownBlock
from .isa import BRANCHES, Program


class Terminator(Enum):
    FALLTHROUGH = "FALLTHROUGH"
    JMP = "JMP"
    BRANCH = "BRANCH"
    HALT = "HALT"


class EdgeKind(Enum):
    FALL = "FALL"
    TAKEN = "TAKEN"


@dataclass(frozen=True)
class BasicBlock:
    id: int
    start: int
    end: int  # inclusive
    terminator: Terminator
    cond_var: str | None = None

    @property
    def span(self) -> range:
        return range(self.start, self.end + 1)

    def __len__(self):
        return self.end - self.start + 1


@dataclass(frozen=True)
class Edge:
    parent: int
    child: int
    kind: EdgeKind


@dataclass(frozen=True)
class Cfg:
    blocks: tuple[BasicBlock, ...]
    edges: tuple[Edge, ...]
    entry: int
    block_of: tuple[int, ...]

    def preds(self, block_id: int) -> list[Edge]:
        return [e for e in self.edges if e.child == block_id]

    def succs(self, block_id: int) -> list[Edge]:
        return [e for e in self.edges if e.parent == block_id]

    def edge_kind(self, parent: int, child: int) -> EdgeKind | None:
        for e in self.edges:
            if e.parent == parent and e.child == child:
                return e.kind
        return None

    def block_at(self, instr_index: int) -> BasicBlock:
        return self.blocks[self.block_of[instr_index]]


def block_name(block_id: int) -> str:
    """Spreadsheet-style letters: 0 -> A, 25 -> Z, 26 -> AA."""
    name = ""
    n = block_id + 1
    while n:
        n, r = divmod(n - 1, 26)
        name = chr(ord("A") + r) + name
    return name


def leaders(program: Program) -> list[int]:
    lead = {0}
    for ins in program:
        if ins.target is not None:
            lead.add(program.labels[ins.target])
        if ins.opcode in BRANCHES or ins.opcode in ("JMP", "HALT"):
            if ins.index + 1 < len(program):
                lead.add(ins.index + 1)
    return sorted(lead)


def partition_basic_blocks(program: Program) -> list[BasicBlock]:
    starts = leaders(program)
    ends = [s - 1 for s in starts[1:]] + [len(program) - 1]
    blocks = []
    for bid, (start, end) in enumerate(zip(starts, ends)):
        last = program[end]
        if last.opcode == "JMP":
            term, cond = Terminator.JMP, None
        elif last.opcode in BRANCHES:
            term, cond = Terminator.BRANCH, last.operands[0]
        elif last.opcode == "HALT":
            term, cond = Terminator.HALT, None
        else:
            term, cond = Terminator.FALLTHROUGH, None
        blocks.append(BasicBlock(bid, start, end, term, cond))
    return blocks


def build_cfg(blocks: Sequence[BasicBlock], program: Program) -> Cfg:
    block_of = [0] * len(program)
    for b in blocks:
        for i in b.span:
            block_of[i] = b.id
    edges = []
    for b in blocks:
        last = program[b.end]
        fall = block_of[b.end + 1] if b.end + 1 < len(program) else None
        if b.terminator is Terminator.FALLTHROUGH:
            edges.append(Edge(b.id, fall, EdgeKind.FALL))
        elif b.terminator is Terminator.JMP:
            edges.append(Edge(b.id, block_of[program.target_index(last)], EdgeKind.TAKEN))
        elif b.terminator is Terminator.BRANCH:
            taken = block_of[program.target_index(last)]
            edges.append(Edge(b.id, fall, EdgeKind.FALL))
            # both outcomes reach the same block: one edge, no branch constraint
            if taken != fall:
                edges.append(Edge(b.id, taken, EdgeKind.TAKEN))
    return Cfg(tuple(blocks), tuple(edges), block_of[0], tuple(block_of))


def program_cfg(program: Program) -> Cfg:
    return build_cfg(partition_basic_blocks(program), program)


def emit_dot(cfg: Cfg, highlight: Sequence | None = None, program: Program | None = None) -> str:
    """Render ``cfg`` as a DOT digraph.

    Edges traversed by any highlighted ExecutionPath are drawn red; blocks a
    highlighted path visits one-or-more times get a double border.
    """
    on_path: dict[tuple[int, int], list[int]] = {}
    looped: set[int] = set()
    for path in highlight or ():
        ids = [step.block for step in path.blocks]
        for bid in ids:
            if not 0 <= bid < len(cfg.blocks):
                raise UnknownBlock(bid)
        hops = list(zip(ids, ids[1:]))
        hops += [(s.block, s.block) for s in path.blocks if s.repeated]
        for hop in sorted(set(hops)):
            on_path.setdefault(hop, []).append(path.id + 1)
        looped.update(s.block for s in path.blocks if s.repeated)

    out = ["digraph cfg {", '  node [shape=box, fontname="monospace"];']
    for b in cfg.blocks:
        label = f"{block_name(b.id)} [{b.start}..{b.end}]"
        if program is not None:
            body = "\\l".join(program[i].render() for i in b.span)
            label = f"{label}\\l{body}\\l"
        attrs = [f'label="{label}"']
        if b.id in looped:
            attrs.append("peripheries=2")
        out.append(f"  b{b.id} [{', '.join(attrs)}];")
    for e in sorted(cfg.edges, key=lambda e: (e.parent, e.child)):
        attrs = [f'label="{e.kind.value}"']
        paths = on_path.get((e.parent, e.child))
        if paths:
            attrs.append('color="red"')
            attrs.append("penwidth=2")
            attrs.append(f'xlabel="path {",".join(map(str, paths))}"')
        out.append(f"  b{e.parent} -> b{e.child} [{', '.join(attrs)}];")
    out.append("}")
    return "\n".join(out) + "\n"

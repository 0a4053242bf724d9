"""Backward enumeration of feasible partial paths to a PASTHELD fault.

A path runs from the instruction that last designated the out-of-bounds
variable's value (or from program entry) to the faulting instruction.
Loops are not unrolled: a block that can repeat between those two points,
i.e. one lying on a cycle of blocks free of fresh writes to the root
variable, is marked ONE_OR_MORE. Concrete traces are mapped onto the same
abstraction by chronological loop erasure (``collapse_trace``), which is
what makes the enumeration sound.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Sequence

from .cfg import Cfg, EdgeKind, Terminator, block_name, program_cfg
from .isa import ADJUSTS, SET_FAMILY, DumpSnapshot, MemoryMap, Program, as_address, wrap64
from .errors import NoRootVariable

DEFAULT_PATH_CAP = 512
# Route extensions explored before giving up; only reachable on pathological CFGs.
DEFAULT_SEARCH_BUDGET = 200_000


class Multiplicity(Enum):
    ONE = "ONE"
    ONE_OR_MORE = "ONE_OR_MORE"


class Designation(Enum):
    SET_ON_PATH = "SET_ON_PATH"
    EXTERNAL = "EXTERNAL"


@dataclass(frozen=True)
class PathStep:
    block: int
    multiplicity: Multiplicity = Multiplicity.ONE

    @property
    def repeated(self) -> bool:
        return self.multiplicity is Multiplicity.ONE_OR_MORE

    def __str__(self):
        return block_name(self.block) + ("+" if self.repeated else "")


@dataclass(frozen=True)
class ExecutionPath:
    id: int
    blocks: tuple[PathStep, ...]
    start_instr: int
    end_instr: int
    designation: Designation

    @property
    def key(self):
        return self.blocks, self.start_instr, self.designation

    @property
    def block_ids(self) -> tuple[int, ...]:
        return tuple(s.block for s in self.blocks)

    def describe(self) -> str:
        return " ".join(str(s) for s in self.blocks)


@dataclass(frozen=True)
class RootVariable:
    name: str
    value: int
    address: int
    overshoot: int | None


@dataclass(frozen=True)
class PathSet:
    paths: tuple[ExecutionPath, ...]
    truncated: bool = False
    root: RootVariable | None = None
    removed: tuple[ExecutionPath, ...] = field(default=(), compare=False)

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)


# -- root variable ---------------------------------------------------------------

def overshoot(address: int, memory_map: MemoryMap) -> int | None:
    """Signed distance from ``address`` to the nearest legal block boundary."""
    legal = memory_map.legal_blocks
    if not legal:
        return None
    below = [b for b in legal if b.base <= address]
    if below:
        return address - below[-1].end
    return address - legal[0].base


def find_root_variable(dump: DumpSnapshot) -> RootVariable:
    ins = dump.program[dump.fault.instr_index]
    operand = ins.address_operand()
    candidates = []
    for order, (name, offset) in enumerate([operand] if operand else []):
        value = dump.registers[name]
        address = as_address(value + offset)
        if dump.memory_map.is_legal(address):
            continue
        over = overshoot(address, dump.memory_map)
        rank = abs(over) if over is not None else float("inf")
        candidates.append((rank, order, RootVariable(name, value, address, over)))
    if not candidates:
        raise NoRootVariable(
            f"no illegal address operand at instruction {dump.fault.instr_index}"
        )
    return min(candidates, key=lambda c: c[:2])[2]


# -- per-root structural facts -------------------------------------------------------

class RootFacts:
    """Where ``var`` is written in ``program`` and which blocks can repeat."""

    def __init__(self, program: Program, cfg: Cfg, var: str):
        self.program = program
        self.cfg = cfg
        self.var = var
        self.set_sites = frozenset(
            i.index for i in program if i.opcode in SET_FAMILY and i.dest == var
        )
        self.adjust_sites = frozenset(
            i.index for i in program if i.opcode in ADJUSTS and i.dest == var
        )

    def last_set(self, lo: int, hi: int) -> int | None:
        """Latest set-family write of the root in instructions [lo, hi]."""
        for i in range(hi, lo - 1, -1):
            if i in self.set_sites:
                return i
        return None

    @cached_property
    def set_free(self) -> frozenset:
        return frozenset(
            b.id for b in self.cfg.blocks if not any(i in self.set_sites for i in b.span)
        )

    def _reach(self, allowed) -> dict[int, set]:
        succ = {b: [e.child for e in self.cfg.succs(b) if e.child in allowed] for b in allowed}
        reach = {}
        for b in allowed:
            seen, todo = set(), list(succ[b])
            while todo:
                x = todo.pop()
                if x not in seen:
                    seen.add(x)
                    todo.extend(succ[x])
            reach[b] = seen
        return reach

    @cached_property
    def _set_free_reach(self):
        return self._reach(self.set_free)

    @cached_property
    def loopy(self) -> frozenset:
        r = self._set_free_reach
        return frozenset(b for b in self.set_free if b in r[b])

    def scc(self, block: int) -> frozenset:
        r = self._set_free_reach
        if block not in r:
            return frozenset({block})
        return frozenset({block} | {x for x in r[block] if block in r[x]})

    def full_scc(self, block: int) -> frozenset:
        r = self._reach(frozenset(b.id for b in self.cfg.blocks))
        return frozenset({block} | {x for x in r[block] if block in r[x]})


def _finish_route(route: Sequence[int], start: int, designation: Designation,
                  facts: RootFacts, end_instr: int):
    """Attach multiplicities and apply the adjust cut to a forward route."""
    steps = []
    for k, b in enumerate(route):
        cut_block = k == 0 and designation is Designation.SET_ON_PATH
        mult = Multiplicity.ONE_OR_MORE if (b in facts.loopy and not cut_block) else Multiplicity.ONE
        steps.append(PathStep(b, mult))
    if designation is Designation.EXTERNAL:
        # No fresh write reaches the fault on this route, so the most upstream
        # adjust operates on an externally supplied value: it designates.
        n = len(steps)
        for k, step in enumerate(steps):
            for i in _step_span(step, k, n, start, end_instr, facts.cfg):
                if i in facts.adjust_sites and i != end_instr:
                    return tuple(steps[k:]), i, Designation.SET_ON_PATH
    return tuple(steps), start, designation


def _step_span(step: PathStep, k: int, n: int, start: int, end_instr: int, cfg: Cfg):
    blk = cfg.blocks[step.block]
    if step.repeated:
        return list(blk.span)
    lo = start if k == 0 else blk.start
    hi = end_instr if k == n - 1 else blk.end
    if lo > hi:  # cut after the fault inside a self-reentered fault block
        return list(range(lo, blk.end + 1)) + list(range(blk.start, hi + 1))
    return list(range(lo, hi + 1))


def path_instructions(path: ExecutionPath, cfg: Cfg) -> list[int]:
    """Instruction indices the path covers, in route order.

    Blocks that may repeat contribute their whole span; the fault
    instruction is always included.
    """
    n = len(path.blocks)
    out = []
    for k, step in enumerate(path.blocks):
        out.extend(_step_span(step, k, n, path.start_instr, path.end_instr, cfg))
    return out


# -- enumeration ---------------------------------------------------------------------

def enumerate_paths(cfg: Cfg, dump: DumpSnapshot, root: RootVariable,
                    cap: int = DEFAULT_PATH_CAP,
                    budget: int = DEFAULT_SEARCH_BUDGET) -> PathSet:
    if cap < 1:
        raise ValueError("cap must be at least 1")
    program = dump.program
    facts = RootFacts(program, cfg, root.name)
    f = dump.fault.instr_index
    fault_block = cfg.block_of[f]
    fb = cfg.blocks[fault_block]

    found: dict = {}
    state = {"truncated": False, "budget": budget}

    def emit(route, start, designation) -> bool:
        key = _finish_route(route, start, designation, facts, f)
        if key in found:
            return True
        if len(found) >= cap:
            state["truncated"] = True
            return False
        found[key] = None
        return True

    s = facts.last_set(fb.start, f - 1)
    if s is not None:
        emit([fault_block], s, Designation.SET_ON_PATH)
        return _pathset(found, f, False, root)

    def walk(route: list[int], on: set[int]) -> bool:
        state["budget"] -= 1
        if state["budget"] < 0:
            state["truncated"] = True
            return False
        head = route[-1]
        if head == cfg.entry and not emit(route[::-1], 0, Designation.EXTERNAL):
            return False
        for e in sorted(cfg.preds(head), key=lambda e: (e.kind is not EdgeKind.FALL, e.parent)):
            p = e.parent
            if p == fault_block:
                # Re-entering the fault block: a fresh write after the fault
                # instruction, executed on an earlier pass, is the cut.
                s = facts.last_set(f + 1, fb.end)
                if s is not None and not emit([fault_block], s, Designation.SET_ON_PATH):
                    return False
                continue
            if p in on:
                continue
            pb = cfg.blocks[p]
            s = facts.last_set(pb.start, pb.end)
            if s is not None:
                if not emit((route + [p])[::-1], s, Designation.SET_ON_PATH):
                    return False
                continue
            route.append(p)
            on.add(p)
            ok = walk(route, on)
            route.pop()
            on.discard(p)
            if not ok:
                return False
        return True

    walk([fault_block], {fault_block})
    return _pathset(found, f, state["truncated"], root)


def _pathset(found, end_instr, truncated, root) -> PathSet:
    paths = tuple(
        ExecutionPath(i, steps, start, end_instr, desig)
        for i, (steps, start, desig) in enumerate(found)
    )
    return PathSet(paths, truncated, root)


def loop_erase(seq: Sequence[int]) -> list[int]:
    """Chronological loop erasure of a block walk."""
    out: list[int] = []
    pos: dict[int, int] = {}
    for b in seq:
        if b in pos:
            k = pos[b]
            for x in out[k + 1:]:
                del pos[x]
            del out[k + 1:]
        else:
            pos[b] = len(out)
            out.append(b)
    return out


def collapse_trace(pcs: Sequence[int], cfg: Cfg, program: Program, root_name: str):
    """Abstract a faulting trace the way ``enumerate_paths`` abstracts routes.

    Returns ``(steps, start_instr, designation)``, comparable with
    ``ExecutionPath.key``.
    """
    facts = RootFacts(program, cfg, root_name)
    last = len(pcs) - 1
    begin = None
    for pos in range(last - 1, -1, -1):
        if pcs[pos] in facts.set_sites:
            begin = pos
            break
    designation = Designation.EXTERNAL if begin is None else Designation.SET_ON_PATH
    start = 0 if begin is None else pcs[begin]
    begin = begin or 0
    walk = []
    for pos in range(begin, last + 1):
        pc = pcs[pos]
        b = cfg.block_of[pc]
        if pos == begin or pc == cfg.blocks[b].start:
            walk.append(b)
    return _finish_route(loop_erase(walk), start, designation, facts, pcs[last])


# -- feasibility ---------------------------------------------------------------------

class _Unknown:
    __slots__ = ("kind",)

    def __init__(self, kind):
        self.kind = kind

    def __repr__(self):
        return self.kind


UNKNOWN = _Unknown("unknown")
OVERWRITTEN = _Unknown("overwritten")


def is_const(value) -> bool:
    return not isinstance(value, _Unknown)


def _fold(op: str, lhs, rhs):
    if not (is_const(lhs) and is_const(rhs)):
        return OVERWRITTEN
    if op == "ADD":
        return wrap64(lhs + rhs)
    if op == "SUB":
        return wrap64(lhs - rhs)
    if op == "MUL":
        return wrap64(lhs * rhs)
    if op == "SHL":
        return wrap64(lhs << rhs)
    return lhs >> rhs


def _step(state: dict, ins) -> None:
    op, ops = ins.opcode, ins.operands
    if op == "SET":
        state[ops[0]] = ops[1] if isinstance(ops[1], int) else state.get(ops[1], UNKNOWN)
    elif op in ("SETX", "LOAD"):
        state[ops[0]] = OVERWRITTEN
    elif op in ADJUSTS:
        rhs = ops[1] if isinstance(ops[1], int) else state.get(ops[1], UNKNOWN)
        state[ops[0]] = _fold(op, state.get(ops[0], UNKNOWN), rhs)


@dataclass
class PathAnalysis:
    feasible: bool
    # abstract state on entry to each step, before loop havoc
    entry_states: list[dict]
    conflict: tuple[int, str] | None = None


def _written(program: Program, blocks) -> set:
    out = set()
    for b in blocks:
        for i in b.span:
            d = program[i].dest
            if d:
                out.add(d)
    return out


def analyze_path(path: ExecutionPath, dump: DumpSnapshot, cfg: Cfg, facts: RootFacts) -> PathAnalysis:
    """Forward constant propagation along ``path``.

    Fault-time register values are trusted only for variables that nothing
    in the path's reach can overwrite. Blocks that may repeat first havoc
    everything written anywhere in their loop.
    """
    program = dump.program
    n = len(path.blocks)
    written = set()
    for i in path_instructions(path, cfg):
        if i != path.end_instr and program[i].dest:
            written.add(program[i].dest)
    for step in path.blocks:
        if step.repeated:
            written |= _written(program, (cfg.blocks[b] for b in facts.scc(step.block)))
    if n == 1 and path.start_instr > path.end_instr:
        written |= _written(program, (cfg.blocks[b] for b in facts.full_scc(path.blocks[0].block)))

    state = {}
    for v in program.variables:
        if v not in written and v in dump.registers:
            state[v] = dump.registers[v]
        else:
            state[v] = UNKNOWN
    entries = []
    for k, step in enumerate(path.blocks):
        blk = cfg.blocks[step.block]
        entries.append(dict(state))
        if step.repeated:
            for v in _written(program, (cfg.blocks[b] for b in facts.scc(step.block))):
                state[v] = OVERWRITTEN
        span = _step_span(step, k, n, path.start_instr, path.end_instr, cfg)
        if k == n - 1:
            # the final pass stops at the fault instruction
            stop = span.index(path.end_instr) if step.repeated else len(span) - 1
            span = span[:stop] if step.repeated else [i for i in span if i != path.end_instr]
        for i in span:
            _step(state, program[i])
        if k == n - 1 or blk.terminator is not Terminator.BRANCH:
            continue
        if len(cfg.succs(blk.id)) < 2:
            continue
        kind = cfg.edge_kind(blk.id, path.blocks[k + 1].block)
        cond = state.get(blk.cond_var, UNKNOWN)
        if not is_const(cond):
            continue
        last = program[blk.end]
        taken = (cond == 0) if last.opcode == "BRZ" else (cond != 0)
        if taken != (kind is EdgeKind.TAKEN):
            return PathAnalysis(False, entries, (blk.id, blk.cond_var))
    return PathAnalysis(True, entries)


def prune_infeasible(paths: PathSet, dump: DumpSnapshot, cfg: Cfg | None = None) -> PathSet:
    """Drop paths whose required branch outcomes contradict propagated constants."""
    if paths.root is None:
        raise ValueError("PathSet carries no root variable")
    cfg = cfg or program_cfg(dump.program)
    facts = RootFacts(dump.program, cfg, paths.root.name)
    keep, removed = [], []
    for p in paths:
        (keep if analyze_path(p, dump, cfg, facts).feasible else removed).append(p)
    renum = tuple(
        ExecutionPath(i, p.blocks, p.start_instr, p.end_instr, p.designation)
        for i, p in enumerate(keep)
    )
    return PathSet(renum, paths.truncated, paths.root, tuple(removed))


def find_paths(dump: DumpSnapshot, cap: int = DEFAULT_PATH_CAP, cfg: Cfg | None = None) -> PathSet:
    """Root variable, enumeration and pruning in one call."""
    cfg = cfg or program_cfg(dump.program)
    root = find_root_variable(dump)
    return prune_infeasible(enumerate_paths(cfg, dump, root, cap), dump, cfg)

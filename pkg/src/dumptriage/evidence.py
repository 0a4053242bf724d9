"""Per-path findings for PASTHELD diagnosis."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .cfg import Cfg, program_cfg
from .errors import ParseError
from .isa import ADJUSTS, SET_FAMILY, DumpSnapshot, Program, as_address
from .pathfinder import (
    ExecutionPath,
    PathSet,
    RootFacts,
    RootVariable,
    analyze_path,
    is_const,
    path_instructions,
)


class StructureClass(Enum):
    NO_MODIFY_FAIL = "NO_MODIFY_FAIL"
    SET_FAIL = "SET_FAIL"
    ADJUST_FAIL = "ADJUST_FAIL"
    SET_ADJUST_FAIL = "SET_ADJUST_FAIL"
    ADJUST_IN_LOOP_FAIL = "ADJUST_IN_LOOP_FAIL"
    SET_ADJUST_IN_LOOP_FAIL = "SET_ADJUST_IN_LOOP_FAIL"


class BorderProximity(Enum):
    NEAR_END = "NEAR_END"
    FAR_FROM_END = "FAR_FROM_END"
    NOT_APPLICABLE = "NOT_APPLICABLE"


@dataclass(frozen=True)
class PathFindings:
    structure: StructureClass
    close_regs: bool
    neg_regs: bool
    border_proximity: BorderProximity

    def as_dict(self) -> dict:
        return {
            "structure": self.structure.value,
            "close_regs": self.close_regs,
            "neg_regs": self.neg_regs,
            "border_proximity": self.border_proximity.value,
        }


@dataclass(frozen=True)
class EvidenceConfig:
    close_threshold: int = 256
    neg_threshold: int = -65536
    near_end_window: int = 256

    def __post_init__(self):
        if self.close_threshold <= 0:
            raise ValueError("close_threshold must be positive")
        if self.near_end_window <= 0:
            raise ValueError("near_end_window must be positive")
        if self.neg_threshold >= 0:
            raise ValueError("neg_threshold must be negative")


def classify_structure(path: ExecutionPath, root: RootVariable, program: Program,
                       cfg: Cfg | None = None) -> StructureClass:
    cfg = cfg or program_cfg(program)
    has_set = has_adjust = in_loop = False
    repeated = {s.block for s in path.blocks if s.repeated}
    for i in path_instructions(path, cfg):
        ins = program[i]
        if i == path.end_instr or ins.dest != root.name:
            continue
        if ins.opcode in SET_FAMILY:
            has_set = True
        elif ins.opcode in ADJUSTS:
            has_adjust = True
            if cfg.block_of[i] in repeated:
                in_loop = True
    if not has_adjust:
        return StructureClass.SET_FAIL if has_set else StructureClass.NO_MODIFY_FAIL
    if in_loop:
        return StructureClass.SET_ADJUST_IN_LOOP_FAIL if has_set else StructureClass.ADJUST_IN_LOOP_FAIL
    return StructureClass.SET_ADJUST_FAIL if has_set else StructureClass.ADJUST_FAIL


def close_regs(dump: DumpSnapshot, root: RootVariable, cfg: EvidenceConfig) -> bool:
    return any(
        abs(value - root.value) <= cfg.close_threshold
        for name, value in dump.registers.items()
        if name != root.name
    )


def neg_regs(dump: DumpSnapshot, path: ExecutionPath, cfg: EvidenceConfig,
             graph: Cfg | None = None) -> bool:
    graph = graph or program_cfg(dump.program)
    touched = set()
    for i in path_instructions(path, graph):
        touched |= dump.program[i].variables
    return any(dump.registers.get(v, 0) < cfg.neg_threshold for v in touched)


def border_proximity(dump: DumpSnapshot, path: ExecutionPath, root: RootVariable,
                     cfg: EvidenceConfig, graph: Cfg | None = None) -> BorderProximity:
    """Where the loop-entry value of the root sits inside its legal block.

    Applies only when a fresh write of the root precedes a repeated block and
    the value reaching that block can be reconstructed by constant propagation.
    """
    na = BorderProximity.NOT_APPLICABLE
    program = dump.program
    graph = graph or program_cfg(program)
    first_loop = next((k for k, s in enumerate(path.blocks) if s.repeated), None)
    start = program[path.start_instr]
    if first_loop is None or first_loop == 0 or start.opcode not in SET_FAMILY:
        return na
    if start.dest != root.name:
        return na
    facts = RootFacts(program, graph, root.name)
    value = analyze_path(path, dump, graph, facts).entry_states[first_loop].get(root.name)
    if value is None or not is_const(value):
        return na
    block = dump.memory_map.legal_block_of(value)
    if block is None:
        return na
    if block.end - as_address(value) <= cfg.near_end_window:
        return BorderProximity.NEAR_END
    return BorderProximity.FAR_FROM_END


def extract_findings(paths: PathSet, dump: DumpSnapshot, config: EvidenceConfig | None = None,
                     graph: Cfg | None = None) -> list[PathFindings]:
    config = config or EvidenceConfig()
    graph = graph or program_cfg(dump.program)
    root = paths.root
    close = close_regs(dump, root, config)
    return [
        PathFindings(
            classify_structure(p, root, dump.program, graph),
            close,
            neg_regs(dump, p, config, graph),
            border_proximity(dump, p, root, config, graph),
        )
        for p in paths
    ]


def render_findings(findings: list[PathFindings]) -> str:
    """One line per path: number (from 1), then the four findings."""
    out = ["# path structure close_regs neg_regs border_proximity"]
    for k, f in enumerate(findings, 1):
        out.append(
            f"{k} {f.structure.value} {str(f.close_regs).lower()} "
            f"{str(f.neg_regs).lower()} {f.border_proximity.value}"
        )
    return "\n".join(out) + "\n"


def parse_findings(text: str) -> list[PathFindings]:
    flags = {"true": True, "false": False}
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            number, structure, close, neg, border = parts
            if int(number) != len(out) + 1:
                raise ValueError(f"expected path {len(out) + 1}, got {number}")
            out.append(PathFindings(
                StructureClass(structure), flags[close], flags[neg], BorderProximity(border),
            ))
        except (ValueError, KeyError) as exc:
            raise ParseError(lineno, f"bad findings line: {exc}") from None
    return out

"""Random programs, class-labelled fault injection, and calibration runs.

Generated programs follow a naming convention the harness relies on:
pointers are ``p0``, ``p1``, ...; loop counters ``n0``, ``n1``, ...;
``c`` drives the conditional branches and ``d`` carries loaded data.
"""
from __future__ import annotations

import dataclasses
import itertools
import math
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .cfg import Cfg, program_cfg
from .diagnosis import Diagnosis, ErrorClass, PastheldModel
from .errors import (
    InjectionFailed, NoCompatibleSite, ParseError, PipelineError, TriageError,
)
from .evidence import EvidenceConfig
from .isa import (
    ADJUSTS, SET_FAMILY, CompiledProgram, DumpSnapshot, MemoryBlock, MemoryMap, Outcome,
    Program, parse_dump, parse_program, serialize_dump, snapshot_from_trace,
)
from .pathfinder import (
    Designation, ExecutionPath, Multiplicity, PathStep, collapse_trace, find_paths, find_root_variable,
    path_instructions,
)
from .pipeline import analyze

HARNESS_MEMORY = MemoryMap([
    MemoryBlock(0, 4096, 0),
    MemoryBlock(4096, 800, 1),
    MemoryBlock(4896, 4096, 0),
])
_LEGAL = HARNESS_MEMORY.legal_blocks[0]
ADDRESS_GRID = (_LEGAL.base, _LEGAL.end - 8, _LEGAL.end + 80, 0, -1)
COUNTER_GRID = (0, 1, 2, 11)
# SETX sites plus entered pointers; keeps each program's grid sweep small
MAX_INPUTS = 4
HARNESS_STEP_LIMIT = 20_000
DEFAULT_SIZE = 20


def is_pointer(var: str) -> bool:
    return re.fullmatch(r"p\d+", var) is not None


# -- program generation ----------------------------------------------------------

class _Builder:
    def __init__(self):
        self.lines: list[list] = []  # [label, text]
        self.pending: list[str] = []
        self.alias: dict[str, str] = {}
        self.n_labels = 0

    def label(self) -> str:
        self.n_labels += 1
        return f"L{self.n_labels}"

    def place(self, name: str) -> None:
        self.pending.append(name)

    def emit(self, text: str) -> None:
        label = None
        if self.pending:
            label = self.pending[0]
            for other in self.pending[1:]:
                self.alias[other] = label
            self.pending = []
        self.lines.append([label, text])

    def __len__(self):
        return len(self.lines)

    def render(self) -> str:
        def fix(text):
            return re.sub(r"\bL\d+\b", lambda m: self.alias.get(m.group(0), m.group(0)), text)
        return "".join(
            (f"{lab}: " if lab else "") + fix(text) + "\n" for lab, text in self.lines
        )


def _legal_imm(rng: random.Random) -> int:
    return _LEGAL.base + 8 * rng.randrange(_LEGAL.length // 8)


def gen_program(seed: int, size: int = DEFAULT_SIZE) -> Program:
    """A random terminating TinyASM program of at most ``size`` instructions.

    Loops count a non-negative counter down behind a BRZ guard, so every
    program halts or faults for counters drawn from COUNTER_GRID.
    """
    if size < 4:
        raise ValueError("size must be at least 4")
    rng = random.Random(seed)
    b = _Builder()
    inputs = 0

    n_ptr = 1 if size < 12 else rng.choice((1, 2, 2, 3))
    ptrs = [f"p{i}" for i in range(n_ptr)]
    main = ptrs[0]
    if size < 6:
        # SETX, one adjust when there is room, dereference, HALT
        b.emit(f"SETX {main}")
        if size > 4:
            b.emit(f"ADD {main}, {8 * rng.randint(1, 4)}")
        b.emit(f"PRINT {main}")
        b.emit("HALT")
        return parse_program(b.render())

    for p in ptrs:
        kind = rng.choice(("set", "set", "setx", "entered"))
        if kind == "set":
            b.emit(f"SET {p}, {_legal_imm(rng)}")
        else:
            inputs += 1
            if kind == "setx":
                b.emit(f"SETX {p}")

    n_loops = 0
    has_cond = False

    def inner(p: str) -> None:
        r = rng.random()
        if r < 0.4:
            b.emit(f"{rng.choice(('ADD', 'SUB'))} {p}, {8 * rng.randint(1, 6)}")
        elif r < 0.7:
            b.emit(f"SET {p}, {_legal_imm(rng)}")
        else:
            deref(p)

    def deref(p: str) -> None:
        r = rng.random()
        if r < 0.4:
            b.emit(f"LOAD d, [{p}+{8 * rng.randint(0, 3)}]")
        elif r < 0.7:
            b.emit(f"STORE [{p}], d")
        else:
            b.emit(f"PRINT {p}")

    while True:
        left = size - 2 - len(b)  # keep room for the final dereference and HALT
        # the branch condition arrives once from outside; diamonds consume its bits
        cond_cost = 0 if has_cond else 1
        choices = []
        if left >= 1:
            choices += ["adjust"] * 3 + ["reset", "deref"]
        if left >= 3 + cond_cost:
            choices += ["diamond"] * 3
        if left >= 5 + cond_cost:
            choices += ["ifelse"]
        if left >= 6:
            choices += ["loop"] * 4
        if not choices:
            break
        if n_loops == 0 and not has_cond and 3 + cond_cost <= left <= 8:
            choices = ["diamond"]
        kind = rng.choice(choices)
        p = rng.choice(ptrs)
        if kind in ("diamond", "ifelse") and not has_cond:
            b.emit("SETX c")
            inputs += 1
            has_cond = True
            left -= 1
        if kind == "adjust":
            b.emit(f"{rng.choice(('ADD', 'ADD', 'SUB'))} {p}, {8 * rng.randint(1, 8)}")
        elif kind == "reset":
            b.emit(f"SET {p}, {_legal_imm(rng)}")
        elif kind == "deref":
            deref(p)
        elif kind == "diamond":
            end = b.label()
            b.emit(f"{rng.choice(('BRZ', 'BRNZ'))} c, {end}")
            inner(p)
            if left >= 4 and rng.random() < 0.5:
                inner(rng.choice(ptrs))
            b.place(end)
            b.emit("SHR c, 1")
        elif kind == "ifelse":
            other, end = b.label(), b.label()
            b.emit(f"BRZ c, {other}")
            inner(p)
            b.emit(f"JMP {end}")
            b.place(other)
            inner(p)
            b.place(end)
            b.emit("SHR c, 1")
        else:
            n = f"n{n_loops}"
            n_loops += 1
            reserve = 0 if has_cond else 1
            if inputs + reserve < MAX_INPUTS and rng.random() < 0.4:
                b.emit(f"SETX {n}")
                inputs += 1
            else:
                b.emit(f"SET {n}, {rng.randint(1, 12)}")
            top, after = b.label(), b.label()
            b.emit(f"BRZ {n}, {after}")
            b.place(top)
            b.emit(f"ADD {p}, {rng.choice((8, 8, 16))}")
            if left >= 7 and rng.random() < 0.4:
                b.emit(f"LOAD d, [{p}]")
            b.emit(f"SUB {n}, 1")
            b.emit(f"BRNZ {n}, {top}")
            b.place(after)
    b.emit(f"PRINT {main}" if rng.random() < 0.6 else f"LOAD d, [{main}]")
    b.emit("HALT")
    program = parse_program(b.render())
    if not program.setx_sites:
        # every pointer was initialized in-segment and nothing branched
        return gen_program(seed + 1_000_003, size)
    return program


# -- program inputs -------------------------------------------------------------------

def live_at_entry(program: Program, cfg: Cfg | None = None) -> frozenset:
    """Variables read before any set-family write on some route from entry."""
    cfg = cfg or program_cfg(program)
    use, kill = {}, {}
    for blk in cfg.blocks:
        u, k = set(), set()
        for i in blk.span:
            ins = program[i]
            u |= ins.reads - k
            if ins.opcode in SET_FAMILY:
                k.add(ins.dest)
        use[blk.id], kill[blk.id] = u, k
    live_in = {blk.id: set() for blk in cfg.blocks}
    changed = True
    while changed:
        changed = False
        for blk in reversed(cfg.blocks):
            out = set()
            for e in cfg.succs(blk.id):
                out |= live_in[e.child]
            new = use[blk.id] | (out - kill[blk.id])
            if new != live_in[blk.id]:
                live_in[blk.id], changed = new, True
    return frozenset(live_in[cfg.entry])


def entered_pointers(program: Program) -> tuple[str, ...]:
    return tuple(sorted(v for v in live_at_entry(program) if is_pointer(v)))


def input_grid(program: Program) -> list[tuple[object, tuple[int, ...]]]:
    """(input, candidate values): SETX sites by index, entered pointers by name."""
    grid: list[tuple[object, tuple[int, ...]]] = []
    for site in program.setx_sites:
        var = program[site].operands[0]
        grid.append((site, ADDRESS_GRID if is_pointer(var) else COUNTER_GRID))
    for var in entered_pointers(program):
        grid.append((var, ADDRESS_GRID))
    return grid


def grid_assignments(program: Program) -> Iterable[dict]:
    grid = input_grid(program)
    keys = [k for k, _ in grid]
    for values in itertools.product(*(v for _, v in grid)):
        yield dict(zip(keys, values))


def split_inputs(assignment: Mapping) -> tuple[dict[int, int], dict[str, int]]:
    externals = {k: v for k, v in assignment.items() if isinstance(k, int)}
    initial = {k: v for k, v in assignment.items() if isinstance(k, str)}
    return externals, initial


def format_inputs(assignment: Mapping) -> str:
    ext, init = split_inputs(assignment)
    parts = [f"{k}={ext[k]}" for k in sorted(ext)]
    parts += [f"@{k}={init[k]}" for k in sorted(init)]
    return ",".join(parts) or "-"


def parse_inputs(text: str) -> dict:
    out: dict = {}
    if text == "-":
        return out
    for part in text.split(","):
        key, _, value = part.partition("=")
        out[key[1:] if key.startswith("@") else int(key)] = int(value)
    return out


# -- fault injection -------------------------------------------------------------------

def _format_key(key) -> str:
    steps, start, designation = key
    return f"{' '.join(str(s) for s in steps)}|{start}|{designation.value}"


def _block_id(name: str) -> int:
    n = 0
    for ch in name:
        if not "A" <= ch <= "Z":
            raise ValueError(f"bad block name {name!r}")
        n = n * 26 + (ord(ch) - ord("A") + 1)
    return n - 1


def _parse_key(text: str):
    blocks, start, designation = text.split("|")
    steps = []
    for tok in blocks.split():
        mult = Multiplicity.ONE_OR_MORE if tok.endswith("+") else Multiplicity.ONE
        steps.append(PathStep(_block_id(tok.rstrip("+")), mult))
    return tuple(steps), int(start), Designation(designation)


@dataclass(frozen=True)
class CorpusEntry:
    seed: int
    program: Program
    injected_class: ErrorClass
    injected_site: int | None
    dump: DumpSnapshot
    true_path: tuple  # same shape as ExecutionPath.key
    inputs: Mapping = dataclasses.field(default_factory=dict)

    @property
    def true_path_blocks(self) -> tuple[int, ...]:
        return tuple(s.block for s in self.true_path[0])

    def replay(self):
        ext, init = split_inputs(self.inputs)
        return CompiledProgram(self.program, self.dump.memory_map).run(
            ext, HARNESS_STEP_LIMIT, init, record_states=False,
        )


def _loops(program: Program, cfg: Cfg):
    """(counter SET index, loop block id, pointer adjusted in the loop)."""
    out = []
    for blk in cfg.blocks:
        last = program[blk.end]
        if last.opcode != "BRNZ" or program.target_index(last) != blk.start:
            continue
        n = last.operands[0]
        ptrs = [program[i].dest for i in blk.span
                if program[i].opcode in ADJUSTS and is_pointer(program[i].dest or "")]
        if not ptrs:
            continue
        # counter initialization just before the guard
        guard = blk.start - 1
        init = guard - 1
        if init >= 0 and program[init].opcode == "SET" and program[init].operands[0] == n \
                and isinstance(program[init].operands[1], int):
            out.append((init, blk.id, ptrs[0]))
    return out


def _replace(program: Program, index: int, operands: tuple) -> Program:
    ins = dataclasses.replace(program[index], operands=operands)
    instrs = list(program.instructions)
    instrs[index] = ins
    return Program(tuple(instrs), program.labels)


def _candidates(program: Program, cls: ErrorClass, cfg: Cfg):
    """(site, root variable, mutated programs in order of increasing size, check)."""
    out = []
    if cls is ErrorClass.BAD_SET:
        for ins in program:
            if ins.opcode == "SET" and is_pointer(ins.operands[0]) and isinstance(ins.operands[1], int):
                values = (_LEGAL.end, _LEGAL.end + 8, _LEGAL.end + 80, _LEGAL.base - 8, _LEGAL.end + 800)
                muts = [_replace(program, ins.index, (ins.operands[0], v))
                        for v in values if v != ins.operands[1]]
                out.append((ins.index, ins.operands[0], muts))
    elif cls is ErrorClass.BAD_ADJUST:
        in_loop = {b for _, b, _ in _loops(program, cfg)}
        for ins in program:
            if ins.opcode in ADJUSTS and is_pointer(ins.operands[0]) \
                    and isinstance(ins.operands[1], int) and cfg.block_of[ins.index] not in in_loop:
                k = ins.operands[1]
                values = (k + 800, k + 4096, -(1 << 24))
                muts = [_replace(program, ins.index, (ins.operands[0], v)) for v in values]
                out.append((ins.index, ins.operands[0], muts))
    elif cls is ErrorClass.BAD_LOOP:
        for init, _, ptr in _loops(program, cfg):
            n, k = program[init].operands
            muts = [_replace(program, init, (n, k + d)) for d in (1, 2, 5, 20, 100)]
            out.append((init, ptr, muts))
    else:
        for var in entered_pointers(program):
            out.append((None, var, [program]))
    return out


def _accepts(cls: ErrorClass, site, key, fault_instr: int, program: Program, cfg: Cfg) -> bool:
    """Whether the faulting route leaves the injected class structurally possible."""
    steps, start, designation = key
    if cls is ErrorClass.ENTERED_BAD:
        return designation is Designation.EXTERNAL
    if cls is ErrorClass.BAD_SET:
        return designation is Designation.SET_ON_PATH and start == site
    if cls is ErrorClass.BAD_LOOP:
        loop_blocks = {b for s, b, _ in _loops(program, cfg) if s == site}
        return any(s.repeated and s.block in loop_blocks for s in steps)
    path = ExecutionPath(0, steps, start, fault_instr, designation)
    return site in path_instructions(path, cfg)


def inject_fault(program: Program, cls: ErrorClass, seed: int) -> CorpusEntry:
    """Mutate ``program`` minimally so that it faults for a reason of class ``cls``.

    The original must halt and the mutant must fault under the same inputs,
    with the mutated variable as root and the mutation on the true path.
    ENTERED_BAD leaves the code alone and only swaps an entered pointer's
    value for an illegal one.
    """
    rng = random.Random(seed)
    cfg = program_cfg(program)
    sites = _candidates(program, cls, cfg)
    if not sites:
        raise NoCompatibleSite(cls.value)
    rng.shuffle(sites)
    assignments = list(grid_assignments(program))
    rng.shuffle(assignments)
    original = CompiledProgram(program, HARNESS_MEMORY)
    halts = []
    for a in assignments:
        ext, init = split_inputs(a)
        if original.run(ext, HARNESS_STEP_LIMIT, init, record_states=False).outcome is Outcome.HALTED:
            halts.append(a)
    if not halts:
        raise InjectionFailed(f"no grid input lets the original program halt ({cls.value})")

    for site, root, mutants in sites:
        for mutant in mutants:
            runner = CompiledProgram(mutant, HARNESS_MEMORY)
            for a in halts:
                if cls is ErrorClass.ENTERED_BAD:
                    tries = [dict(a, **{root: v}) for v in ADDRESS_GRID
                             if not HARNESS_MEMORY.is_legal(v)]
                else:
                    tries = [a]
                for inputs in tries:
                    ext, init = split_inputs(inputs)
                    trace = runner.run(ext, HARNESS_STEP_LIMIT, init, record_states=False)
                    if trace.outcome is not Outcome.PASTHELD:
                        continue
                    dump = snapshot_from_trace(mutant, trace, HARNESS_MEMORY)
                    try:
                        found = find_root_variable(dump)
                    except TriageError:
                        continue
                    if found.name != root:
                        continue
                    key = collapse_trace(trace.pcs, cfg, mutant, root)
                    if not _accepts(cls, site, key, trace.fault.instr_index, mutant, cfg):
                        continue
                    return CorpusEntry(seed, mutant, cls, site, dump, key, inputs)
    raise InjectionFailed(f"no {cls.value} mutation produced a qualifying fault")


def build_corpus(master_seed: int, n: int, size: int = DEFAULT_SIZE,
                 max_attempts: int = 200) -> list[CorpusEntry]:
    """``n`` entries cycling through the error classes; entry i depends only on (master_seed, i)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    classes = list(ErrorClass)
    entries = []
    for i in range(n):
        rng = random.Random(f"{master_seed}:{i}")
        cls = classes[i % len(classes)]
        for _ in range(max_attempts):
            seed = rng.getrandbits(31)
            program = gen_program(seed, size)
            try:
                entries.append(inject_fault(program, cls, seed))
                break
            except (NoCompatibleSite, InjectionFailed):
                continue
        else:
            raise InjectionFailed(f"entry {i}: no program accepted a {cls.value} fault")
    return entries


# -- corpus files ----------------------------------------------------------------------

MANIFEST = "manifest.tsv"
_MANIFEST_HEADER = "# file\tseed\tclass\tsite\ttrue_path\tinputs"


def write_corpus(entries: Sequence[CorpusEntry], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [_MANIFEST_HEADER]
    for i, e in enumerate(entries):
        name = f"entry{i:04d}.dump"
        (out / name).write_text(serialize_dump(e.dump))
        site = "-" if e.injected_site is None else str(e.injected_site)
        rows.append("\t".join([
            name, str(e.seed), e.injected_class.value, site,
            _format_key(e.true_path), format_inputs(e.inputs),
        ]))
    (out / MANIFEST).write_text("\n".join(rows) + "\n")
    return out / MANIFEST


def read_corpus(corpus_dir: str | Path) -> list[CorpusEntry]:
    root = Path(corpus_dir)
    manifest = root / MANIFEST
    entries = []
    for lineno, line in enumerate(manifest.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 6:
            raise ParseError(lineno, f"{manifest}: expected 6 columns, got {len(cols)}")
        name, seed, cls, site, key, inputs = cols
        try:
            dump = parse_dump((root / name).read_text())
            entries.append(CorpusEntry(
                int(seed), dump.program, ErrorClass(cls),
                None if site == "-" else int(site), dump, _parse_key(key), parse_inputs(inputs),
            ))
        except (ValueError, KeyError, AssertionError) as exc:
            raise ParseError(lineno, f"{manifest}: {exc}") from None
    return entries


# -- calibration -------------------------------------------------------------------------

TIE_TOLERANCE = 1e-12
N_BINS = 10


@dataclass(frozen=True)
class ReliabilityBin:
    lo: float
    hi: float
    count: int
    mean_predicted: float | None
    frequency: float | None


@dataclass(frozen=True)
class CalibrationStats:
    """Localization accuracy and reliability data for one model on one corpus.

    top1, top3 and mrr are exact expectations over uniformly random
    tie-breaking among equal posteriors; the sampled_* fields come from one
    seeded draw of that tie-breaking. mrr_uniform and mrr_uniform_sigma give
    the mean and standard deviation of the MRR of a uniformly random ranking
    over the same path counts.
    """

    n: int
    n_failed: int
    n_missing: int
    top1: float
    top3: float
    mrr: float
    class_top1: float
    reliability: tuple[ReliabilityBin, ...]
    mrr_uniform: float
    mrr_uniform_sigma: float
    sampled_top1: float
    sampled_top3: float
    sampled_mrr: float
    failures: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["reliability"] = [dataclasses.asdict(b) for b in self.reliability]
        d["failures"] = list(self.failures)
        return d


def _tie_groups(diagnosis: Diagnosis, true_id: int) -> tuple[int, int]:
    """(paths strictly ahead of the true path, other paths tied with it)."""
    mine = diagnosis.paths[true_id].posterior
    ahead = sum(1 for p in diagnosis.paths if p.posterior > mine + TIE_TOLERANCE)
    tied = sum(1 for p in diagnosis.paths
               if p.id != true_id and abs(p.posterior - mine) <= TIE_TOLERANCE)
    return ahead, tied


def expected_rank_metrics(ahead: int, tied: int) -> tuple[float, float, float]:
    """E[rank <= 1], E[rank <= 3], E[1/rank] with rank uniform on ahead+1 .. ahead+tied+1."""
    ranks = range(ahead + 1, ahead + tied + 2)
    k = tied + 1
    return (
        sum(r <= 1 for r in ranks) / k,
        sum(r <= 3 for r in ranks) / k,
        math.fsum(1.0 / r for r in ranks) / k,
    )


def uniform_rank_moments(n: int) -> tuple[float, float]:
    """Mean and variance of 1/R for R uniform on 1..n."""
    h1 = math.fsum(1.0 / k for k in range(1, n + 1))
    h2 = math.fsum(1.0 / k ** 2 for k in range(1, n + 1))
    mean = h1 / n
    return mean, h2 / n - mean * mean


def run_calibration(entries: Sequence[CorpusEntry], model: PastheldModel,
                    config: EvidenceConfig | None = None, seed: int = 0,
                    progress: Callable[[int], None] | None = None) -> CalibrationStats:
    """Score every entry and compare its ranking with the injected ground truth.

    The tie-breaking draw for entry i uses an RNG derived from ``seed``, the
    entry's own generator seed and i.
    """
    if not entries:
        raise ValueError("no entries to calibrate on")
    config = config or EvidenceConfig()
    failures = []
    missing = 0
    sums = dict.fromkeys(("top1", "top3", "mrr", "s1", "s3", "smrr", "cls", "umean", "uvar"), 0.0)
    bins = [[0, 0.0, 0] for _ in range(N_BINS)]  # count, summed prediction, hits
    scored = 0
    for idx, entry in enumerate(entries):
        if progress:
            progress(idx)
        try:
            result = analyze(entry.dump, model, config)
        except TriageError as exc:
            failures.append(str(PipelineError(idx, type(exc).__name__, exc)))
            continue
        diag = result.diagnosis
        keys = [p.key for p in result.paths]
        if entry.true_path not in keys:
            missing += 1
            failures.append(str(PipelineError(idx, "match", "true path not among survivors")))
            continue
        true_id = keys.index(entry.true_path)
        scored += 1

        ahead, tied = _tie_groups(diag, true_id)
        e1, e3, err = expected_rank_metrics(ahead, tied)
        sums["top1"] += e1
        sums["top3"] += e3
        sums["mrr"] += err
        rank = ahead + 1 + random.Random(f"{seed}:{entry.seed}:{idx}:ties").randrange(tied + 1)
        sums["s1"] += rank == 1
        sums["s3"] += rank <= 3
        sums["smrr"] += 1.0 / rank
        m, v = uniform_rank_moments(diag.n_paths)
        sums["umean"] += m
        sums["uvar"] += v

        breakdown = diag.paths[true_id].breakdown
        best = max(breakdown.values())
        winners = [c for c, x in breakdown.items() if abs(x - best) <= TIE_TOLERANCE]
        if entry.injected_class in winners:
            sums["cls"] += 1.0 / len(winners)

        for p in diag.paths:
            k = min(int(p.posterior * N_BINS), N_BINS - 1)
            bins[k][0] += 1
            bins[k][1] += p.posterior
            bins[k][2] += p.id == true_id

    reliability = tuple(
        ReliabilityBin(
            k / N_BINS, (k + 1) / N_BINS, count,
            (total / count) if count else None,
            (hits / count) if count else None,
        )
        for k, (count, total, hits) in enumerate(bins)
    )
    d = scored or 1
    return CalibrationStats(
        n=len(entries),
        n_failed=len(entries) - scored,
        n_missing=missing,
        top1=sums["top1"] / d,
        top3=sums["top3"] / d,
        mrr=sums["mrr"] / d,
        class_top1=sums["cls"] / d,
        reliability=reliability,
        mrr_uniform=sums["umean"] / d,
        mrr_uniform_sigma=math.sqrt(sums["uvar"]) / d,
        sampled_top1=sums["s1"] / d,
        sampled_top3=sums["s3"] / d,
        sampled_mrr=sums["smrr"] / d,
        failures=tuple(failures),
    )


# -- soundness sweep ---------------------------------------------------------------------

@dataclass
class SweepResult:
    programs: int = 0
    executions: int = 0
    faulting: int = 0
    distinct_dumps: int = 0
    pruned_paths: int = 0  # summed over distinct dumps
    unmatched: list = dataclasses.field(default_factory=list)
    realized_pruned: list = dataclasses.field(default_factory=list)


def soundness_sweep(seeds: Iterable[int], size: int, result: SweepResult | None = None) -> SweepResult:
    """Run every grid input for each generated program and check each fault.

    A faulting trace must collapse to one of the surviving paths of its own
    dump, and never to a path that pruning removed.
    """
    result = result or SweepResult()
    for seed in seeds:
        program = gen_program(seed, size)
        cfg = program_cfg(program)
        runner = CompiledProgram(program, HARNESS_MEMORY)
        result.programs += 1
        cache: dict[str, tuple] = {}
        for a in grid_assignments(program):
            ext, init = split_inputs(a)
            trace = runner.run(ext, HARNESS_STEP_LIMIT, init, record_states=False)
            result.executions += 1
            if trace.outcome is not Outcome.PASTHELD:
                continue
            result.faulting += 1
            dump = snapshot_from_trace(program, trace, HARNESS_MEMORY)
            text = serialize_dump(dump)
            if text not in cache:
                paths = find_paths(dump, cfg=cfg)
                result.pruned_paths += len(paths.removed)
                cache[text] = (
                    paths.root.name,
                    {p.key for p in paths},
                    {p.key for p in paths.removed},
                )
            root, kept, removed = cache[text]
            key = collapse_trace(trace.pcs, cfg, program, root)
            if key not in kept:
                result.unmatched.append((seed, format_inputs(a)))
            if key in removed:
                result.realized_pruned.append((seed, format_inputs(a)))
        result.distinct_dumps += len(cache)
    return result

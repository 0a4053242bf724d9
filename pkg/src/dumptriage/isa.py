"""TinyASM: instructions, programs, memory maps, dump files and the interpreter.

Dump file layout (UTF-8, ``#`` comments, blank lines ignored)::

    %PROGRAM
    x: ADD var1, 80
    LOAD t, [p+8]
    %REGISTERS
    var1 = 4976
    %MEMORY
    BLOCK base=4096 len=800 key=1
    %ERROR
    type = PASTHELD
    instr = 9
    addr = 4976
"""
from __future__ import annotations

import re
from array import array
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import MissingExternal, ParseError, ValidationError

try:
    from ._vmcore import run_kernel as _run_kernel

    BACKEND = "cython"
except ImportError:  # pragma: no cover - exercised when the extension is not built
    from ._vmcore_py import run_kernel as _run_kernel

    BACKEND = "python"

from . import _vmcore_py

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1
UINT64_MAX = (1 << 64) - 1
DEFAULT_STEP_LIMIT = 100_000

OPCODES = (
    "SET", "SETX", "ADD", "SUB", "MUL", "SHL", "SHR",
    "JMP", "BRZ", "BRNZ", "LOAD", "STORE", "PRINT", "HALT",
)
_OPCODE_NUM = {name: i for i, name in enumerate(OPCODES)}

ADJUSTS = frozenset({"ADD", "SUB", "MUL", "SHL", "SHR"})
BRANCHES = frozenset({"BRZ", "BRNZ"})
MEMORY_REFS = frozenset({"LOAD", "STORE", "PRINT"})
# Instructions that give their destination a fresh value (as opposed to adjusting it).
SET_FAMILY = frozenset({"SET", "SETX", "LOAD"})

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_IDENT_RE = re.compile(rf"^{_IDENT}$")
_INT_RE = re.compile(r"^-?[0-9]+$")
_MEM_RE = re.compile(rf"^\[\s*({_IDENT})\s*(?:([+-])\s*([0-9]+)\s*)?\]$")
_LINE_RE = re.compile(rf"^(?:({_IDENT})\s*:\s*)?([A-Za-z]+)(?:\s+(.*))?$")


def wrap64(x: int) -> int:
    """Reduce an integer to signed 64-bit two's complement."""
    x &= UINT64_MAX
    return x - (1 << 64) if x >> 63 else x


def as_address(value: int) -> int:
    return value & UINT64_MAX


@dataclass(frozen=True)
class Mem:
    """Memory operand ``[base+offset]``."""

    base: str
    offset: int = 0

    def __str__(self):
        if self.offset == 0:
            return f"[{self.base}]"
        sign = "+" if self.offset > 0 else "-"
        return f"[{self.base}{sign}{abs(self.offset)}]"


@dataclass(frozen=True)
class Instruction:
    index: int
    opcode: str
    operands: tuple = ()
    label: str | None = None

    @property
    def dest(self) -> str | None:
        """Variable written by this instruction, if any."""
        if self.opcode in SET_FAMILY or self.opcode in ADJUSTS:
            return self.operands[0]
        return None

    @property
    def reads(self) -> frozenset:
        op, ops = self.opcode, self.operands
        if op == "SET" or op in ADJUSTS:
            names = {ops[0]} if op in ADJUSTS else set()
            if isinstance(ops[1], str):
                names.add(ops[1])
            return frozenset(names)
        if op in BRANCHES or op == "PRINT":
            return frozenset({ops[0]})
        if op == "LOAD":
            return frozenset({ops[1].base})
        if op == "STORE":
            return frozenset({ops[0].base, ops[1]})
        return frozenset()

    @property
    def variables(self) -> frozenset:
        d = self.dest
        return self.reads | ({d} if d else set())

    @property
    def target(self) -> str | None:
        if self.opcode == "JMP":
            return self.operands[0]
        if self.opcode in BRANCHES:
            return self.operands[1]
        return None

    def address_operand(self) -> tuple[str, int] | None:
        """(variable, offset) dereferenced by a memory reference."""
        if self.opcode == "LOAD":
            return self.operands[1].base, self.operands[1].offset
        if self.opcode == "STORE":
            return self.operands[0].base, self.operands[0].offset
        if self.opcode == "PRINT":
            return self.operands[0], 0
        return None

    def render(self) -> str:
        text = self.opcode
        if self.operands:
            text += " " + ", ".join(str(o) for o in self.operands)
        return f"{self.label}: {text}" if self.label else text


@dataclass(frozen=True)
class Program:
    instructions: tuple[Instruction, ...]
    labels: Mapping[str, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.instructions)

    def __getitem__(self, i) -> Instruction:
        return self.instructions[i]

    def __iter__(self):
        return iter(self.instructions)

    def target_index(self, ins: Instruction) -> int | None:
        t = ins.target
        return None if t is None else self.labels[t]

    @property
    def variables(self) -> tuple[str, ...]:
        """Variable names in order of first appearance."""
        seen = {}
        for ins in self.instructions:
            for name in _operand_vars(ins):
                seen.setdefault(name, None)
        return tuple(seen)

    @property
    def read_variables(self) -> frozenset:
        out = set()
        for ins in self.instructions:
            out |= ins.reads
        return frozenset(out)

    @property
    def setx_sites(self) -> tuple[int, ...]:
        return tuple(i.index for i in self.instructions if i.opcode == "SETX")

    def render(self) -> str:
        return "".join(ins.render() + "\n" for ins in self.instructions)


def _operand_vars(ins: Instruction) -> list[str]:
    # operand order, so Program.variables is stable and readable
    op, ops = ins.opcode, ins.operands
    if op == "LOAD":
        return [ops[0], ops[1].base]
    if op == "STORE":
        return [ops[0].base, ops[1]]
    if op in BRANCHES:
        return [ops[0]]
    if op == "JMP":
        return []
    return [o for o in ops if isinstance(o, str)]


# -- program grammar -----------------------------------------------------------

def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def _parse_int(tok: str, lineno: int, what="immediate") -> int:
    if not _INT_RE.match(tok):
        raise ParseError(lineno, f"bad {what} {tok!r}")
    value = int(tok)
    if not INT64_MIN <= value <= INT64_MAX:
        raise ParseError(lineno, f"{what} {tok} out of signed 64-bit range")
    return value


def _parse_var(tok: str, lineno: int) -> str:
    if not _IDENT_RE.match(tok):
        raise ParseError(lineno, f"bad variable name {tok!r}")
    return tok


def _parse_var_or_imm(tok: str, lineno: int):
    if _INT_RE.match(tok):
        return _parse_int(tok, lineno)
    return _parse_var(tok, lineno)


def _parse_mem(tok: str, lineno: int) -> Mem:
    m = _MEM_RE.match(tok)
    if not m:
        raise ParseError(lineno, f"bad memory operand {tok!r}")
    base, sign, digits = m.groups()
    offset = 0
    if digits is not None:
        offset = _parse_int(("-" if sign == "-" else "") + digits, lineno, "offset")
    return Mem(base, offset)


_ARITY = {
    "SET": 2, "SETX": 1, "ADD": 2, "SUB": 2, "MUL": 2, "SHL": 2, "SHR": 2,
    "JMP": 1, "BRZ": 2, "BRNZ": 2, "LOAD": 2, "STORE": 2, "PRINT": 1, "HALT": 0,
}


def _parse_operands(op: str, toks: list[str], lineno: int) -> tuple:
    if len(toks) != _ARITY[op]:
        raise ParseError(lineno, f"{op} takes {_ARITY[op]} operands, got {len(toks)}")
    if op in ("SET", "ADD", "SUB", "MUL"):
        return _parse_var(toks[0], lineno), _parse_var_or_imm(toks[1], lineno)
    if op in ("SHL", "SHR"):
        amount = _parse_int(toks[1], lineno, "shift amount")
        if not 0 <= amount < 64:
            raise ParseError(lineno, f"shift amount {amount} outside [0, 64)")
        return _parse_var(toks[0], lineno), amount
    if op in ("SETX", "PRINT"):
        return (_parse_var(toks[0], lineno),)
    if op == "JMP":
        return (_parse_var(toks[0], lineno),)
    if op in BRANCHES:
        return _parse_var(toks[0], lineno), _parse_var(toks[1], lineno)
    if op == "LOAD":
        return _parse_var(toks[0], lineno), _parse_mem(toks[1], lineno)
    if op == "STORE":
        return _parse_mem(toks[0], lineno), _parse_var(toks[1], lineno)
    return ()


def parse_program(text: str | Iterable[str], first_line: int = 1) -> Program:
    """Parse TinyASM source lines into a validated Program."""
    lines = text.splitlines() if isinstance(text, str) else list(text)
    instructions = []
    labels: dict[str, int] = {}
    label_lines: dict[str, int] = {}
    targets = []
    for offset, raw in enumerate(lines):
        lineno = first_line + offset
        line = _strip(raw)
        if not line:
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise ParseError(lineno, f"cannot parse {line!r}")
        label, op, rest = m.groups()
        if op not in _OPCODE_NUM:
            raise ParseError(lineno, f"unknown opcode {op!r}")
        toks = [t.strip() for t in rest.split(",")] if rest and rest.strip() else []
        operands = _parse_operands(op, toks, lineno)
        index = len(instructions)
        if label is not None:
            if label in labels:
                raise ParseError(lineno, f"duplicate label {label!r}")
            labels[label] = index
            label_lines[label] = lineno
        ins = Instruction(index, op, operands, label)
        if ins.target is not None:
            targets.append((ins.target, lineno))
        instructions.append(ins)
    if not instructions:
        raise ParseError(first_line, "empty program")
    for name, lineno in targets:
        if name not in labels:
            raise ParseError(lineno, f"undefined label {name!r}")
    if instructions[-1].opcode not in ("HALT", "JMP"):
        raise ParseError(None, "program falls off the end (last instruction must be HALT or JMP)")
    return Program(tuple(instructions), labels)


# -- memory ----------------------------------------------------------------------

class Legality(Enum):
    LEGAL = "legal"
    PROTECTED = "protected"
    UNMAPPED = "unmapped"


@dataclass(frozen=True)
class MemoryBlock:
    base: int
    length: int
    protect_key: int

    @property
    def end(self) -> int:
        return self.base + self.length

    def __contains__(self, addr: int) -> bool:
        return self.base <= addr < self.end

    def render(self) -> str:
        return f"BLOCK base={self.base} len={self.length} key={self.protect_key}"


class MemoryMap(tuple):
    """Non-overlapping memory blocks; addresses are unsigned 64-bit."""

    def __new__(cls, blocks: Iterable[MemoryBlock] = ()):
        blocks = tuple(blocks)
        for b in blocks:
            if b.length <= 0:
                raise ValidationError("BAD_BLOCK", f"block at {b.base} has len {b.length}")
            if b.base < 0 or b.end > UINT64_MAX + 1:
                raise ValidationError("BAD_BLOCK", f"block at {b.base} exceeds address space")
            if b.protect_key not in (0, 1):
                raise ValidationError("BAD_BLOCK", f"protect key {b.protect_key}")
        ordered = sorted(blocks, key=lambda b: b.base)
        for lo, hi in zip(ordered, ordered[1:]):
            if hi.base < lo.end:
                raise ValidationError("OVERLAPPING_BLOCKS", f"{lo.base} and {hi.base}")
        return super().__new__(cls, blocks)

    @property
    def legal_blocks(self) -> list[MemoryBlock]:
        return sorted((b for b in self if b.protect_key == 1), key=lambda b: b.base)

    def classify(self, addr: int) -> Legality:
        addr = as_address(addr)
        for b in self:
            if addr in b:
                return Legality.LEGAL if b.protect_key == 1 else Legality.PROTECTED
        return Legality.UNMAPPED

    def is_legal(self, addr: int) -> bool:
        return self.classify(addr) is Legality.LEGAL

    def legal_block_of(self, addr: int) -> MemoryBlock | None:
        addr = as_address(addr)
        for b in self.legal_blocks:
            if addr in b:
                return b
        return None


# -- dumps -------------------------------------------------------------------------

@dataclass(frozen=True)
class Fault:
    error_type: str
    instr_index: int
    offending_address: int


@dataclass(frozen=True)
class DumpSnapshot:
    program: Program
    registers: Mapping[str, int]
    memory_map: MemoryMap
    fault: Fault


def validate_dump(dump: DumpSnapshot) -> DumpSnapshot:
    prog, fault = dump.program, dump.fault
    if fault.error_type != "PASTHELD":
        raise ValidationError("UNSUPPORTED_ERROR", fault.error_type)
    if not 0 <= fault.instr_index < len(prog):
        raise ValidationError("BAD_FAULT_SITE", f"instruction {fault.instr_index} out of range")
    ins = prog[fault.instr_index]
    if ins.opcode not in MEMORY_REFS:
        raise ValidationError("BAD_FAULT_SITE", f"{ins.opcode} does not reference memory")
    missing = sorted(prog.read_variables - set(dump.registers))
    if missing:
        raise ValidationError("MISSING_REGISTERS", ", ".join(missing))
    if dump.memory_map.is_legal(fault.offending_address):
        raise ValidationError("INCONSISTENT_FAULT", f"address {fault.offending_address} is legal")
    var, offset = ins.address_operand()
    effective = as_address(dump.registers[var] + offset)
    if effective != fault.offending_address:
        raise ValidationError(
            "INCONSISTENT_FAULT",
            f"{var}{offset:+d} = {effective}, dump says {fault.offending_address}",
        )
    return dump


_SECTIONS = ("%PROGRAM", "%REGISTERS", "%MEMORY", "%ERROR")
_KV_RE = re.compile(rf"^({_IDENT})\s*=\s*(\S+)$")
_BLOCK_RE = re.compile(r"^BLOCK\s+(.*)$")


def _split_sections(text: str) -> dict[str, list[tuple[int, str]]]:
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip(raw)
        if not line:
            continue
        if line.startswith("%"):
            if line not in _SECTIONS:
                raise ParseError(lineno, f"unknown section {line!r}")
            if line in sections:
                raise ParseError(lineno, f"duplicate section {line}")
            sections[line] = []
            current = line
            continue
        if current is None:
            raise ParseError(lineno, "content before first section")
        sections[current].append((lineno, raw))
    for name in _SECTIONS:
        if name not in sections:
            raise ParseError(None, f"missing section {name}")
    return sections


def _parse_u64(tok: str, lineno: int, what: str) -> int:
    if not tok.isdigit():
        raise ParseError(lineno, f"bad {what} {tok!r}")
    value = int(tok)
    if value > UINT64_MAX:
        raise ParseError(lineno, f"{what} {tok} exceeds 64 bits")
    return value


def parse_dump(text: str) -> DumpSnapshot:
    sections = _split_sections(text)

    prog_lines = sections["%PROGRAM"]
    if not prog_lines:
        raise ParseError(None, "empty %PROGRAM section")
    program = _parse_program_lines(prog_lines)

    registers: dict[str, int] = {}
    for lineno, raw in sections["%REGISTERS"]:
        m = _KV_RE.match(_strip(raw))
        if not m:
            raise ParseError(lineno, f"bad register line {raw.strip()!r}")
        name, value = m.groups()
        if name in registers:
            raise ParseError(lineno, f"duplicate register {name}")
        registers[name] = _parse_int(value, lineno, "register value")

    blocks = []
    for lineno, raw in sections["%MEMORY"]:
        m = _BLOCK_RE.match(_strip(raw))
        if not m:
            raise ParseError(lineno, f"bad memory line {raw.strip()!r}")
        fields = {}
        for tok in m.group(1).split():
            key, eq, value = tok.partition("=")
            if not eq or key not in ("base", "len", "key") or key in fields:
                raise ParseError(lineno, f"bad BLOCK field {tok!r}")
            fields[key] = _parse_u64(value, lineno, key)
        if len(fields) != 3:
            raise ParseError(lineno, "BLOCK needs base, len and key")
        if fields["key"] not in (0, 1):
            raise ParseError(lineno, f"protect key must be 0 or 1, got {fields['key']}")
        if fields["len"] == 0:
            raise ParseError(lineno, "BLOCK len must be positive")
        blocks.append(MemoryBlock(fields["base"], fields["len"], fields["key"]))
    memory_map = MemoryMap(blocks)

    err: dict[str, str] = {}
    err_lines: dict[str, int] = {}
    for lineno, raw in sections["%ERROR"]:
        m = _KV_RE.match(_strip(raw))
        if not m or m.group(1) not in ("type", "instr", "addr") or m.group(1) in err:
            raise ParseError(lineno, f"bad %ERROR line {raw.strip()!r}")
        err[m.group(1)] = m.group(2)
        err_lines[m.group(1)] = lineno
    if set(err) != {"type", "instr", "addr"}:
        raise ParseError(None, "%ERROR needs type, instr and addr")
    if err["type"] != "PASTHELD":
        raise ParseError(err_lines["type"], f"unsupported error type {err['type']!r}")
    fault = Fault(
        "PASTHELD",
        _parse_u64(err["instr"], err_lines["instr"], "instr"),
        _parse_u64(err["addr"], err_lines["addr"], "addr"),
    )
    return validate_dump(DumpSnapshot(program, registers, memory_map, fault))


def _parse_program_lines(numbered: Sequence[tuple[int, str]]) -> Program:
    # Keep physical line numbers in errors even though the section is not contiguous with line 1.
    first = numbered[0][0]
    padded = [""] * (numbered[-1][0] - first + 1)
    for lineno, raw in numbered:
        padded[lineno - first] = raw
    return parse_program(padded, first_line=first)


def serialize_dump(dump: DumpSnapshot) -> str:
    out = ["%PROGRAM"]
    out.extend(ins.render() for ins in dump.program)
    out.append("%REGISTERS")
    out.extend(f"{k} = {v}" for k, v in dump.registers.items())
    out.append("%MEMORY")
    out.extend(b.render() for b in dump.memory_map)
    out.append("%ERROR")
    out.append(f"type = {dump.fault.error_type}")
    out.append(f"instr = {dump.fault.instr_index}")
    out.append(f"addr = {dump.fault.offending_address}")
    return "\n".join(out) + "\n"


# -- execution -------------------------------------------------------------------

class Outcome(Enum):
    HALTED = "HALTED"
    PASTHELD = "PASTHELD"
    STEP_LIMIT = "STEP_LIMIT"


_OUTCOMES = (Outcome.HALTED, Outcome.PASTHELD, Outcome.STEP_LIMIT)


@dataclass(frozen=True)
class Trace:
    """Executed instruction indices with post-step values of ``variables``."""

    variables: tuple[str, ...]
    pcs: tuple[int, ...]
    states: tuple[tuple[int, ...], ...] | None
    outcome: Outcome
    fault: Fault | None
    final: Mapping[str, int]

    @property
    def steps(self):
        if self.states is None:
            raise ValueError("trace was recorded without state snapshots")
        return tuple(zip(self.pcs, (dict(zip(self.variables, s)) for s in self.states)))

    def __len__(self):
        return len(self.pcs)


def _encode(program: Program, variables: Sequence[str]):
    slot = {v: i for i, v in enumerate(variables)}
    n = len(program)
    code, a, b, c = (array("q", [0]) * n for _ in range(4))
    bimm = array("b", [0]) * n
    for ins in program:
        i, op, ops = ins.index, ins.opcode, ins.operands
        code[i] = _OPCODE_NUM[op]
        if op in ("SET", "ADD", "SUB", "MUL", "SHL", "SHR"):
            a[i] = slot[ops[0]]
            if isinstance(ops[1], int):
                b[i], bimm[i] = ops[1], 1
            else:
                b[i] = slot[ops[1]]
        elif op in ("SETX", "PRINT"):
            a[i] = slot[ops[0]]
        elif op == "JMP":
            a[i] = program.labels[ops[0]]
        elif op in BRANCHES:
            a[i], b[i] = slot[ops[0]], program.labels[ops[1]]
        elif op == "LOAD":
            a[i], b[i], c[i] = slot[ops[0]], slot[ops[1].base], ops[1].offset
        elif op == "STORE":
            a[i], b[i], c[i] = slot[ops[0].base], slot[ops[1]], ops[0].offset
    return code, a, b, c, bimm


class CompiledProgram:
    """Program pre-encoded for repeated execution under different externals."""

    def __init__(self, program: Program, memory_map: Iterable[MemoryBlock], kernel=None):
        self.program = program
        self.memory_map = memory_map if isinstance(memory_map, MemoryMap) else MemoryMap(memory_map)
        self.variables = program.variables
        self._slot = {v: i for i, v in enumerate(self.variables)}
        self._enc = _encode(program, self.variables)
        self._bases = array("Q", [blk.base for blk in self.memory_map])
        self._lasts = array("Q", [blk.end - 1 for blk in self.memory_map])
        self._keys = array("b", [blk.protect_key for blk in self.memory_map])
        self._kernel = kernel or _run_kernel

    def run(self, externals: Mapping[int, int], step_limit: int = DEFAULT_STEP_LIMIT,
            initial: Mapping[str, int] | None = None, record_states: bool = True) -> Trace:
        if step_limit <= 0:
            raise ValueError("step_limit must be positive")
        ext = array("q", [0]) * len(self.program)
        for site in self.program.setx_sites:
            if site not in externals:
                raise MissingExternal(site)
            ext[site] = wrap64(externals[site])
        init = array("q", [0]) * len(self.variables)
        for name, value in (initial or {}).items():
            if name in self._slot:
                init[self._slot[name]] = wrap64(value)
        outcome, pcs, states, fpc, faddr, final = self._kernel(
            *self._enc, init, ext, self._bases, self._lasts, self._keys,
            step_limit, record_states,
        )
        outcome = _OUTCOMES[outcome]
        fault = Fault("PASTHELD", fpc, faddr) if outcome is Outcome.PASTHELD else None
        nv = len(self.variables)
        snaps = None
        if record_states:
            flat = list(states)
            snaps = tuple(tuple(flat[k * nv:(k + 1) * nv]) for k in range(len(pcs)))
        return Trace(self.variables, tuple(pcs), snaps, outcome, fault,
                     dict(zip(self.variables, final)))


def execute(program: Program, externals: Mapping[int, int], memory_map: Iterable[MemoryBlock],
            step_limit: int = DEFAULT_STEP_LIMIT, *, initial: Mapping[str, int] | None = None,
            record_states: bool = True) -> Trace:
    """Run ``program`` concretely.

    ``externals`` maps each SETX instruction index to the value it stores.
    ``initial`` gives entry values for variables (default 0), which is how a
    value "entered" from outside the segment is modelled.
    """
    return CompiledProgram(program, memory_map).run(externals, step_limit, initial, record_states)


def python_kernel():
    """The pure-Python kernel, regardless of which backend was selected."""
    return _vmcore_py.run_kernel


def snapshot_from_trace(program: Program, trace: Trace, memory_map: Iterable[MemoryBlock]) -> DumpSnapshot:
    """The dump a faulting run would leave behind; registers sorted by name."""
    if trace.outcome is not Outcome.PASTHELD:
        raise ValueError(f"trace ended with {trace.outcome.value}, not a fault")
    mm = memory_map if isinstance(memory_map, MemoryMap) else MemoryMap(memory_map)
    regs = {v: trace.final[v] for v in sorted(trace.final)}
    return validate_dump(DumpSnapshot(program, regs, mm, trace.fault))

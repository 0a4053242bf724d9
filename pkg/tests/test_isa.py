from __future__ import annotations

import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FIXTURES, GOLDEN
from dumptriage.errors import MissingExternal, ParseError, ValidationError
from dumptriage.harness import HARNESS_MEMORY, gen_program, grid_assignments, split_inputs
from dumptriage.isa import (
    INT64_MAX,
    INT64_MIN,
    CompiledProgram,
    Legality,
    MemoryBlock,
    MemoryMap,
    Outcome,
    execute,
    parse_dump,
    parse_program,
    python_kernel,
    serialize_dump,
    snapshot_from_trace,
    wrap64,
)

FIG2 = (FIXTURES / "fig2.asm").read_text()
VARS = ["a", "b", "c", "p"]


@st.composite
def programs(draw, max_len=14):
    """Arbitrary well-formed TinyASM text covering every opcode."""
    n = draw(st.integers(1, max_len))
    labels = [f"L{k}" for k in range(n)]
    var = st.sampled_from(VARS)
    imm = st.integers(INT64_MIN, INT64_MAX)
    off = st.integers(-64, 64)
    lines = []
    for k in range(n):
        op = draw(st.sampled_from(["SET", "SETX", "ADD", "SUB", "MUL", "SHL", "SHR", "JMP",
                                   "BRZ", "BRNZ", "LOAD", "STORE", "PRINT", "HALT"]))
        if op in ("SET", "ADD", "SUB", "MUL"):
            rhs = draw(st.one_of(var, imm.map(str)))
            body = f"{op} {draw(var)}, {rhs}"
        elif op in ("SHL", "SHR"):
            body = f"{op} {draw(var)}, {draw(st.integers(0, 63))}"
        elif op in ("SETX", "PRINT"):
            body = f"{op} {draw(var)}"
        elif op == "JMP":
            body = f"JMP {draw(st.sampled_from(labels))}"
        elif op in ("BRZ", "BRNZ"):
            body = f"{op} {draw(var)}, {draw(st.sampled_from(labels))}"
        elif op == "LOAD":
            body = f"LOAD {draw(var)}, [{draw(var)}{draw(off):+d}]"
        elif op == "STORE":
            body = f"STORE [{draw(var)}{draw(off):+d}], {draw(var)}"
        else:
            body = "HALT"
        lines.append(f"{labels[k]}: {body}")
    lines.append("HALT")
    return "\n".join(lines)


# -- parsing ------------------------------------------------------------------------

def test_loop_example_program_parses():
    prog = parse_program(FIG2)
    assert len(prog) == 11
    assert dict(prog.labels) == {"x": 3, "y": 7}


def test_single_halt():
    prog = parse_program("HALT")
    assert len(prog) == 1 and not prog.labels


@pytest.mark.parametrize("text, fragment", [
    ("JMP nowhere", "undefined label"),
    ("FROB a\nHALT", "unknown opcode"),
    ("SET a\nHALT", "operand"),
    ("x: HALT\nx: HALT", "duplicate label"),
    ("SET a, 1", "falls off"),
    ("SHL a, 64\nHALT", "shift"),
    ("SET a, 99999999999999999999\nHALT", "64"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError) as exc:
        parse_program(text)
    assert fragment in str(exc.value).lower()


def test_parse_error_reports_line():
    with pytest.raises(ParseError) as exc:
        parse_program("SET a, 1\nSET b, 2\nBOGUS\nHALT")
    assert exc.value.line == 3


@given(programs())
def test_render_round_trip(text):
    prog = parse_program(text)
    again = parse_program(prog.render())
    assert again == prog
    assert again.render() == prog.render()


# -- dumps ---------------------------------------------------------------------------

def test_fixture_dump_fault_is_80_past_strip():
    dump = parse_dump((FIXTURES / "fig2.dump").read_text())
    assert dump.program[dump.fault.instr_index].opcode == "PRINT"
    strip = dump.memory_map.legal_blocks[0]
    assert dump.fault.offending_address == strip.end + 80


def test_dump_with_legal_fault_address_rejected():
    text = (FIXTURES / "fig2.dump").read_text()
    bad = text.replace("addr = 4976", "addr = 4800").replace("var1 = 4976", "var1 = 4800")
    with pytest.raises(ValidationError) as exc:
        parse_dump(bad)
    assert exc.value.code == "INCONSISTENT_FAULT"


@pytest.mark.parametrize("mutate, fragment", [
    (lambda t: t.replace("%MEMORY", "%MEMORY\nBLOCK base=1 len=1 key=1 color=3"), "BLOCK field"),
    (lambda t: t.replace("type = PASTHELD", "type = PASTHELD\nextra = 1"), "%ERROR"),
    (lambda t: t.replace("%ERROR", "%ERRORS"), "unknown section"),
    (lambda t: t + "%PROGRAM\nHALT\n", "duplicate section"),
    (lambda t: t.replace("%REGISTERS\n", "%REGISTERS\nvar1 = x\n"), "register"),
])
def test_dump_parse_errors(mutate, fragment):
    text = (FIXTURES / "fig2.dump").read_text()
    with pytest.raises(ParseError) as exc:
        parse_dump(mutate(text))
    assert fragment in str(exc.value)


def test_dump_missing_register_rejected():
    text = (FIXTURES / "fig2.dump").read_text()
    text = "\n".join(l for l in text.splitlines() if not l.startswith("var3 ="))
    with pytest.raises(ValidationError) as exc:
        parse_dump(text)
    assert exc.value.code == "MISSING_REGISTERS"


def test_generated_dumps_round_trip():
    count = 0
    seed = 0
    while count < 100:
        program = gen_program(seed, 16)
        seed += 1
        runner = CompiledProgram(program, HARNESS_MEMORY)
        for a in grid_assignments(program):
            ext, init = split_inputs(a)
            trace = runner.run(ext, 20000, init, record_states=False)
            if trace.outcome is Outcome.PASTHELD:
                dump = snapshot_from_trace(program, trace, HARNESS_MEMORY)
                assert parse_dump(serialize_dump(dump)) == dump
                count += 1
                break


# -- execution -----------------------------------------------------------------------

def test_loop_example_execution():
    prog = parse_program(FIG2)
    strip = MemoryMap([MemoryBlock(0, 4096, 0), MemoryBlock(4096, 800, 1), MemoryBlock(4896, 4096, 0)])
    trace = execute(prog, {0: 11, 1: 4096, 7: 0, 8: 0}, strip)
    assert trace.outcome is Outcome.PASTHELD
    assert trace.final["var1"] == 4096 + 11 * 80 == 4976
    assert trace.fault.instr_index == 9
    assert trace.fault.offending_address - 4896 == 80
    assert trace.pcs.count(4) == 11


def test_halt_only():
    trace = execute(parse_program("HALT"), {}, [])
    assert trace.outcome is Outcome.HALTED and len(trace) == 1


def test_step_limit():
    trace = execute(parse_program("x: JMP x"), {}, [], 10)
    assert trace.outcome is Outcome.STEP_LIMIT and len(trace) == 10


def test_missing_external():
    with pytest.raises(MissingExternal) as exc:
        execute(parse_program("SET a, 1\nSETX b\nHALT"), {}, [])
    assert exc.value.instr_index == 1


def test_load_store_round_trip_and_protected_store():
    prog = parse_program("SET p, 8\nSET v, 42\nSTORE [p+8], v\nLOAD w, [p+8]\nSTORE [p-16], v\nHALT")
    mm = [MemoryBlock(0, 8, 0), MemoryBlock(8, 64, 1)]
    trace = execute(prog, {}, mm)
    assert trace.outcome is Outcome.PASTHELD
    assert trace.final["w"] == 42
    assert trace.fault.instr_index == 4
    assert trace.fault.offending_address == (1 << 64) - 8


def _py_arith(op, a, b):
    if op == "ADD":
        return wrap64(a + b)
    if op == "SUB":
        return wrap64(a - b)
    if op == "MUL":
        return wrap64(a * b)
    if op == "SHL":
        return wrap64(a << b)
    return a >> b  # Python's >> on negative ints is arithmetic


@given(st.sampled_from(["ADD", "SUB", "MUL", "SHL", "SHR"]),
       st.integers(INT64_MIN, INT64_MAX), st.integers(INT64_MIN, INT64_MAX))
def test_arithmetic_wraps_like_twos_complement(op, a, b):
    if op in ("SHL", "SHR"):
        b = b % 64
    prog = parse_program(f"SET x, {a}\n{op} x, {b}\nHALT")
    assert execute(prog, {}, []).final["x"] == _py_arith(op, a, b)


@given(st.integers(0, 2 ** 64 - 1))
def test_legality_trichotomy(addr):
    mm = MemoryMap([MemoryBlock(0, 4096, 0), MemoryBlock(4096, 800, 1), MemoryBlock(8192, 64, 0)])
    legal = any(b.protect_key == 1 and addr in b for b in mm)
    protected = any(b.protect_key == 0 and addr in b for b in mm)
    unmapped = not any(addr in b for b in mm)
    assert legal + protected + unmapped == 1
    expected = Legality.LEGAL if legal else Legality.PROTECTED if protected else Legality.UNMAPPED
    assert mm.classify(addr) is expected


def test_overlapping_blocks_rejected():
    with pytest.raises(ValidationError):
        MemoryMap([MemoryBlock(0, 10, 1), MemoryBlock(5, 10, 1)])


@given(st.integers(0, 10 ** 6), st.integers(6, 30))
def test_determinism_and_fault_minimality(seed, size):
    program = gen_program(seed, size)
    for a in list(grid_assignments(program))[:40]:
        ext, init = split_inputs(a)
        t1 = execute(program, ext, HARNESS_MEMORY, 20000, initial=init)
        t2 = execute(program, ext, HARNESS_MEMORY, 20000, initial=init)
        assert t1 == t2
        if t1.outcome is not Outcome.PASTHELD:
            continue
        # replay the steps before the fault: every dereference was legal
        for pc, state in t1.steps[:-1]:
            ref = program[pc].address_operand()
            if ref is None:
                continue
            prev = state  # post-state; address registers are not written by memory ops
            var, off = ref
            if program[pc].opcode == "LOAD" and program[pc].operands[0] == var:
                continue  # destination overwrote the base; checked via the kernel comparison
            assert HARNESS_MEMORY.is_legal(prev[var] + off)
        last_pc, last = t1.steps[-1]
        assert last_pc == t1.fault.instr_index
        var, off = program[last_pc].address_operand()
        assert not HARNESS_MEMORY.is_legal(last[var] + off)


@given(programs(), st.lists(st.integers(-300, 5000), min_size=4, max_size=4))
def test_compiled_and_python_kernels_agree(text, values):
    prog = parse_program(text)
    ext = {site: values[k % 4] for k, site in enumerate(prog.setx_sites)}
    mm = [MemoryBlock(0, 64, 0), MemoryBlock(64, 4096, 1)]
    fast = CompiledProgram(prog, mm).run(ext, 500, {"p": values[0]})
    slow = CompiledProgram(prog, mm, python_kernel()).run(ext, 500, {"p": values[0]})
    assert fast == slow


_NO_EXTENSION = """
import sys
class Block:
    def find_spec(self, name, path=None, target=None):
        if name == "dumptriage._vmcore":
            raise ImportError("hidden")
sys.meta_path.insert(0, Block())
from dumptriage import isa
from dumptriage.cli import main
assert isa.BACKEND == "python", isa.BACKEND
sys.exit(main(["analyze", sys.argv[1], "--json"]))
"""


def test_pure_python_fallback_is_selected_without_extension():
    proc = subprocess.run([sys.executable, "-c", _NO_EXTENSION, str(FIXTURES / "fig2.dump")],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout == (GOLDEN / "fig2.json").read_text()

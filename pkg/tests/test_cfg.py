from __future__ import annotations

import pydot
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FIXTURES
from dumptriage.cfg import EdgeKind, Terminator, block_name, build_cfg, emit_dot, partition_basic_blocks, program_cfg
from dumptriage.errors import UnknownBlock
from dumptriage.harness import HARNESS_MEMORY, gen_program, grid_assignments, split_inputs
from dumptriage.isa import CompiledProgram, parse_program
from dumptriage.pathfinder import ExecutionPath, PathStep, Designation
from oracles import brute_edges, brute_leaders
from test_isa import programs

FIG2 = parse_program((FIXTURES / "fig2.asm").read_text())


def test_loop_example_blocks():
    blocks = partition_basic_blocks(FIG2)
    assert [(b.start, b.end) for b in blocks] == [(0, 2), (3, 6), (7, 10)]
    assert [b.terminator for b in blocks] == [Terminator.BRANCH, Terminator.BRANCH, Terminator.HALT]


def test_loop_example_edges():
    cfg = program_cfg(FIG2)
    got = {(block_name(e.parent), block_name(e.child), e.kind) for e in cfg.edges}
    assert got == {
        ("A", "B", EdgeKind.FALL), ("A", "C", EdgeKind.TAKEN),
        ("B", "B", EdgeKind.TAKEN), ("B", "C", EdgeKind.FALL),
    }
    assert cfg.entry == 0


def test_straight_line_is_one_block():
    prog = parse_program("SET a, 1\nADD a, 2\nPRINT a\nHALT")
    blocks = partition_basic_blocks(prog)
    assert len(blocks) == 1 and (blocks[0].start, blocks[0].end) == (0, 3)


def test_single_halt_has_no_edges():
    cfg = program_cfg(parse_program("HALT"))
    assert len(cfg.blocks) == 1 and cfg.edges == ()


def test_branch_to_next_instruction_gets_one_edge():
    cfg = program_cfg(parse_program("SETX c\nBRZ c, n\nn: HALT"))
    assert [(e.parent, e.child, e.kind) for e in cfg.edges] == [(0, 1, EdgeKind.FALL)]


def test_block_names():
    assert [block_name(k) for k in (0, 1, 25, 26, 27, 701, 702)] == ["A", "B", "Z", "AA", "AB", "ZZ", "AAA"]


def _check_against_oracle(prog):
    cfg = program_cfg(prog)
    assert [b.start for b in cfg.blocks] == brute_leaders(prog)
    # spans partition the program and block_of agrees
    covered = [i for b in cfg.blocks for i in b.span]
    assert covered == list(range(len(prog)))
    for b in cfg.blocks:
        assert all(cfg.block_of[i] == b.id for i in b.span)
    got = {(cfg.blocks[e.parent].start, cfg.blocks[e.child].start) for e in cfg.edges}
    assert got == brute_edges(prog)
    assert len(set((e.parent, e.child) for e in cfg.edges)) == len(cfg.edges)


@pytest.mark.parametrize("seed", range(100))
def test_generated_programs_match_leader_oracle(seed):
    _check_against_oracle(gen_program(seed, 4 + seed % 27))


@given(programs(max_len=30))
def test_arbitrary_programs_match_oracle(text):
    _check_against_oracle(parse_program(text))


@pytest.mark.parametrize("seed", range(40))
def test_executed_transitions_are_edges(seed):
    prog = gen_program(seed, 24)
    cfg = program_cfg(prog)
    edges = {(e.parent, e.child) for e in cfg.edges}
    runner = CompiledProgram(prog, HARNESS_MEMORY)
    for a in grid_assignments(prog):
        ext, init = split_inputs(a)
        pcs = runner.run(ext, 20000, init, record_states=False).pcs
        for x, y in zip(pcs, pcs[1:]):
            bx, by = cfg.block_of[x], cfg.block_of[y]
            if x == cfg.blocks[bx].end:
                assert (bx, by) in edges and y == cfg.blocks[by].start
            else:
                assert y == x + 1 and by == bx


def test_build_cfg_from_explicit_blocks():
    assert build_cfg(partition_basic_blocks(FIG2), FIG2) == program_cfg(FIG2)


# -- DOT -----------------------------------------------------------------------------

def _parse_dot(text):
    graphs = pydot.graph_from_dot_data(text)
    assert graphs and len(graphs) == 1
    return graphs[0]


def test_dot_loop_example_shape():
    g = _parse_dot(emit_dot(program_cfg(FIG2)))
    nodes = [n for n in g.get_nodes() if n.get_name() not in ("node", "graph", "edge")]
    assert len(nodes) == 3
    assert len(g.get_edges()) == 4


def test_dot_empty_highlight_equals_none():
    cfg = program_cfg(FIG2)
    assert emit_dot(cfg, []) == emit_dot(cfg) == emit_dot(cfg, None)


def test_dot_highlight_unknown_block():
    bogus = ExecutionPath(0, (PathStep(7),), 0, 0, Designation.EXTERNAL)
    with pytest.raises(UnknownBlock):
        emit_dot(program_cfg(FIG2), [bogus])


@pytest.mark.parametrize("seed", range(30))
def test_dot_parses_and_is_deterministic(seed):
    prog = gen_program(seed, 28)
    cfg = program_cfg(prog)
    text = emit_dot(cfg, program=prog)
    assert text == emit_dot(program_cfg(prog), program=prog)
    g = _parse_dot(text)
    assert len(g.get_edges()) == len(cfg.edges)

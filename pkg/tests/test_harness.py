from __future__ import annotations

import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FIXTURES
from dumptriage.diagnosis import ErrorClass, builtin_model, default_model
from dumptriage.errors import InjectionFailed, NoCompatibleSite, ParseError
from dumptriage.harness import (
    HARNESS_MEMORY,
    CorpusEntry,
    _format_key,
    _parse_key,
    build_corpus,
    expected_rank_metrics,
    format_inputs,
    gen_program,
    grid_assignments,
    inject_fault,
    parse_inputs,
    read_corpus,
    run_calibration,
    split_inputs,
    uniform_rank_moments,
    write_corpus,
)
from dumptriage.isa import MEMORY_REFS, CompiledProgram, Outcome, parse_dump, parse_program
from dumptriage.pathfinder import Designation, find_paths

C = ErrorClass


# -- generation -----------------------------------------------------------------------

def test_generation_is_deterministic():
    for seed in range(20):
        assert gen_program(seed, 25) == gen_program(seed, 25)
    assert any(gen_program(s, 25) != gen_program(s + 1, 25) for s in range(5))


@pytest.mark.parametrize("chunk", range(10))
def test_generated_programs_round_trip(chunk):
    for seed in range(chunk * 100, chunk * 100 + 100):
        size = 4 + seed % 27
        prog = gen_program(seed, size)
        assert len(prog) <= size
        assert parse_program(prog.render()) == prog
        assert prog[len(prog) - 1].opcode == "HALT"


def test_smallest_program_shape():
    prog = gen_program(7, 4)
    ops = [ins.opcode for ins in prog]
    assert ops[0] == "SETX" and ops[-1] == "HALT"
    assert any(op in MEMORY_REFS for op in ops)


def test_size_below_four_rejected():
    with pytest.raises(ValueError):
        gen_program(0, 3)


@pytest.mark.parametrize("seed", range(25))
def test_grid_runs_terminate(seed):
    prog = gen_program(seed, 30)
    runner = CompiledProgram(prog, HARNESS_MEMORY)
    for a in grid_assignments(prog):
        ext, init = split_inputs(a)
        out = runner.run(ext, 20000, init, record_states=False).outcome
        assert out in (Outcome.HALTED, Outcome.PASTHELD)


# -- inputs and keys ------------------------------------------------------------------

@given(st.dictionaries(st.one_of(st.integers(0, 500), st.from_regex(r"p[0-9]{1,2}", fullmatch=True)),
                       st.integers(-(1 << 63), (1 << 63) - 1), max_size=6))
def test_inputs_round_trip(assignment):
    assert parse_inputs(format_inputs(assignment)) == assignment


def test_empty_inputs_render_as_dash():
    assert format_inputs({}) == "-" and parse_inputs("-") == {}


def test_key_round_trip():
    dump = parse_dump((FIXTURES / "fig5.dump").read_text())
    for p in find_paths(dump):
        assert _parse_key(_format_key(p.key)) == p.key


# -- injection ------------------------------------------------------------------------

def _first_entry(cls, size=20, start=0):
    for seed in range(start, start + 200):
        try:
            return inject_fault(gen_program(seed, size), cls, seed)
        except (NoCompatibleSite, InjectionFailed):
            continue
    raise AssertionError(f"no {cls} entry found")


def test_bad_set_writes_an_out_of_bounds_constant():
    e = _first_entry(C.BAD_SET)
    ins = e.program[e.injected_site]
    assert ins.opcode == "SET"
    assert not HARNESS_MEMORY.is_legal(ins.operands[1])
    assert e.true_path[1] == e.injected_site and e.true_path[2] is Designation.SET_ON_PATH


def test_entered_bad_keeps_the_program():
    for seed in range(200):
        prog = gen_program(seed, 20)
        try:
            e = inject_fault(prog, C.ENTERED_BAD, seed)
        except (NoCompatibleSite, InjectionFailed):
            continue
        assert e.program == prog and e.injected_site is None
        assert e.true_path[2] is Designation.EXTERNAL
        assert any(isinstance(k, str) and not HARNESS_MEMORY.is_legal(v) for k, v in e.inputs.items())
        return
    raise AssertionError("no ENTERED_BAD entry found")


def test_bad_loop_needs_a_loop():
    prog = parse_program("SETX p0\nADD p0, 8\nPRINT p0\nHALT")
    with pytest.raises(NoCompatibleSite):
        inject_fault(prog, C.BAD_LOOP, 0)


def test_bad_loop_raises_the_counter():
    e = _first_entry(C.BAD_LOOP)
    assert e.program[e.injected_site].opcode == "SET"
    assert any(s.repeated for s in e.true_path[0])


@pytest.mark.parametrize("cls", list(C))
def test_replay_reproduces_the_dump(cls):
    e = _first_entry(cls)
    trace = e.replay()
    assert trace.outcome is Outcome.PASTHELD
    assert trace.fault == e.dump.fault
    keys = [p.key for p in find_paths(e.dump)]
    assert e.true_path in keys


# -- corpus files ---------------------------------------------------------------------

def test_corpus_round_trip(tmp_path):
    entries = build_corpus(4, 12)
    assert [e.injected_class for e in entries] == [list(C)[i % 4] for i in range(12)]
    write_corpus(entries, tmp_path)
    again = read_corpus(tmp_path)
    assert again == entries


def test_corpus_is_deterministic_per_entry():
    a = build_corpus(9, 6)
    b = build_corpus(9, 10)
    assert a == b[:6]


def test_bad_manifest_line(tmp_path):
    write_corpus(build_corpus(1, 2), tmp_path)
    manifest = tmp_path / "manifest.tsv"
    manifest.write_text(manifest.read_text() + "extra\tcolumns\n")
    with pytest.raises(ParseError):
        read_corpus(tmp_path)


# -- calibration ----------------------------------------------------------------------

def test_expected_rank_metrics_examples():
    assert expected_rank_metrics(0, 0) == (1.0, 1.0, 1.0)
    assert expected_rank_metrics(3, 0) == (0.0, 0.0, 0.25)
    t1, t3, rr = expected_rank_metrics(1, 3)  # ranks 2..5
    assert (t1, t3) == (0.0, 0.5)
    assert rr == pytest.approx((1 / 2 + 1 / 3 + 1 / 4 + 1 / 5) / 4, abs=1e-15)


@given(st.integers(0, 20), st.integers(0, 20))
def test_expected_rank_metrics_match_monte_carlo(ahead, tied):
    rng = random.Random(ahead * 100 + tied)
    draws = [ahead + 1 + rng.randrange(tied + 1) for _ in range(4000)]
    t1, t3, rr = expected_rank_metrics(ahead, tied)
    # exact enumeration over the support
    support = range(ahead + 1, ahead + tied + 2)
    assert rr == pytest.approx(sum(1 / r for r in support) / (tied + 1), abs=1e-12)
    assert abs(sum(1 / r for r in draws) / len(draws) - rr) < 0.05
    assert abs(sum(r == 1 for r in draws) / len(draws) - t1) < 0.05
    assert abs(sum(r <= 3 for r in draws) / len(draws) - t3) < 0.05


def test_uniform_rank_moments_against_simulation():
    rng = random.Random(0)
    for n in (1, 2, 5, 17):
        mean, var = uniform_rank_moments(n)
        xs = [1 / rng.randint(1, n) for _ in range(20000)]
        m = sum(xs) / len(xs)
        v = sum((x - m) ** 2 for x in xs) / len(xs)
        assert abs(m - mean) < 0.01 and abs(v - var) < 0.01
    assert uniform_rank_moments(1) == (1.0, 0.0)


@pytest.fixture(scope="module")
def small_corpus():
    return build_corpus(2, 40)


def test_calibration_stats_are_consistent(small_corpus):
    stats = run_calibration(small_corpus, default_model())
    assert stats.n == 40 and stats.n_failed == 0 and stats.failures == ()
    assert 0 <= stats.top1 <= stats.top3 <= 1
    assert stats.top1 <= stats.mrr <= 1
    for key in ("sampled_top1", "sampled_top3", "sampled_mrr", "class_top1"):
        assert 0 <= getattr(stats, key) <= 1
    assert sum(b.count for b in stats.reliability) == sum(
        len(find_paths(e.dump)) for e in small_corpus)
    for b in stats.reliability:
        if b.count:
            assert b.lo <= b.mean_predicted <= b.hi
        else:
            assert b.mean_predicted is None and b.frequency is None


def test_calibration_is_reproducible(small_corpus):
    model = builtin_model("uninformative")
    a = run_calibration(small_corpus, model, seed=5)
    assert a == run_calibration(small_corpus, model, seed=5)


def test_uninformative_expected_mrr_is_the_uniform_mean(small_corpus):
    stats = run_calibration(small_corpus, builtin_model("uninformative"))
    assert abs(stats.mrr - stats.mrr_uniform) < 1e-12
    n_paths = [len(find_paths(e.dump)) for e in small_corpus]
    want = math.fsum(uniform_rank_moments(n)[0] for n in n_paths) / len(n_paths)
    assert stats.mrr_uniform == pytest.approx(want, abs=1e-12)


def test_single_path_corpus_is_always_right(small_corpus):
    single = [e for e in small_corpus if len(find_paths(e.dump)) == 1]
    assert single
    stats = run_calibration(single, default_model())
    assert stats.top1 == stats.sampled_top1 == stats.mrr == 1.0


def test_missing_true_path_is_counted():
    e = build_corpus(3, 1)[0]
    wrong = CorpusEntry(e.seed, e.program, e.injected_class, e.injected_site, e.dump,
                        ((), 0, Designation.EXTERNAL), e.inputs)
    stats = run_calibration([wrong], default_model())
    assert stats.n_failed == 1 and stats.n_missing == 1 and len(stats.failures) == 1

"""Compare the compiled interpreter kernel with the pure-Python fallback.

Runs every grid input of a batch of generated programs through both kernels,
checks the traces agree, and reports executions per second.

    python benchmarks/bench_vm.py [--programs N] [--size N] [--repeat N]
"""
from __future__ import annotations

import argparse
import sys
import time

from dumptriage.harness import HARNESS_MEMORY, HARNESS_STEP_LIMIT, gen_program, grid_assignments, split_inputs
from dumptriage.isa import BACKEND, CompiledProgram, python_kernel


def workload(n_programs: int, size: int):
    jobs = []
    for seed in range(n_programs):
        program = gen_program(seed, size)
        jobs.append((program, [split_inputs(a) for a in grid_assignments(program)]))
    return jobs


def run(jobs, kernel, repeat: int):
    runners = [(CompiledProgram(p, HARNESS_MEMORY, kernel), inputs) for p, inputs in jobs]
    best, results = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = []
        for runner, inputs in runners:
            for ext, init in inputs:
                trace = runner.run(ext, HARNESS_STEP_LIMIT, init, record_states=False)
                out.append((trace.outcome, trace.pcs, trace.fault))
        best = min(best, time.perf_counter() - t0)
        results = out
    return best, results


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--programs", type=int, default=60)
    ap.add_argument("--size", type=int, default=30)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if BACKEND != "cython":
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    jobs = workload(args.programs, args.size)
    n = sum(len(inputs) for _, inputs in jobs)
    t_c, out_c = run(jobs, None, args.repeat)
    t_py, out_py = run(jobs, python_kernel(), args.repeat)
    if out_c != out_py:
        print("kernels disagree", file=sys.stderr)
        return 2
    print(f"{n} executions over {len(jobs)} programs of size {args.size} (best of {args.repeat})")
    print(f"  cython  {t_c:8.3f} s  {n / t_c:12.0f} exec/s")
    print(f"  python  {t_py:8.3f} s  {n / t_py:12.0f} exec/s")
    print(f"  speedup {t_py / t_c:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())

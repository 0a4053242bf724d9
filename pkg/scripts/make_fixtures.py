"""Regenerate the fixture dumps by running their programs concretely.

    python scripts/make_fixtures.py [--check]

With --check, compare against the files on disk instead of writing them.
"""
import argparse
import sys
from pathlib import Path

from dumptriage.isa import MemoryBlock, MemoryMap, execute, parse_program, serialize_dump, snapshot_from_trace

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

# protected page, one 800-byte legal strip, protected page
MEMORY = MemoryMap([
    MemoryBlock(0, 4096, 0),
    MemoryBlock(4096, 800, 1),
    MemoryBlock(4896, 4096, 0),
])

# SETX site -> value for the run that produced each dump
RUNS = {
    # counter 11, pointer at the start of the strip: 4096 + 11*80 = 4976
    "fig2": {0: 11, 1: 4096, 7: 0, 8: 7},
    # take the initialization, run the loop 12 times, skip the negative arm
    "fig5": {0: -16777216, 1: 1, 3: 1, 9: 1, 11: 12, 17: 0},
}


def build(name: str) -> str:
    program = parse_program((FIXTURES / f"{name}.asm").read_text())
    trace = execute(program, RUNS[name], MEMORY)
    return serialize_dump(snapshot_from_trace(program, trace, MEMORY))


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--check", action="store_true")
    args = ap.parse_args()
    stale = []
    for name in RUNS:
        text = build(name)
        target = FIXTURES / f"{name}.dump"
        if args.check:
            if not target.exists() or target.read_text() != text:
                stale.append(target.name)
        else:
            target.write_text(text)
            print(f"wrote {target}")
    if stale:
        print("stale: " + ", ".join(stale), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``dumptriage {analyze,dot,gen,calibrate}``.

Exit status 0 on success, 1 when the dump cannot be diagnosed (no out-of-bounds
operand, or every path excluded), 2 on unreadable or malformed input.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .cfg import emit_dot, program_cfg
from .diagnosis import MODEL_DIR, PastheldModel, builtin_model, default_model, read_model
from .errors import AllPathsExcluded, NoRootVariable, ParseError, TriageError
from .evidence import EvidenceConfig
from .harness import DEFAULT_SIZE, build_corpus, read_corpus, run_calibration, write_corpus
from .isa import parse_dump
from .pathfinder import DEFAULT_PATH_CAP
from .pipeline import analyze
from .report import calibration_json, render_calibration, render_json, render_text

EXIT_OK, EXIT_UNDIAGNOSABLE, EXIT_BAD_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad input; the message already names the file."""


def _fail(where, exc) -> InputError:
    if isinstance(exc, ParseError) and exc.line is not None:
        return InputError(f"{where}:{exc.line}: {exc.reason}")
    return InputError(f"{where}: {exc}")


def load_model_arg(spec: str | None) -> PastheldModel:
    """A model file path, or the name of a shipped model (with or without ``.model``)."""
    if spec is None:
        return default_model()
    path = Path(spec)
    try:
        if path.is_file():
            return read_model(path)
        name = spec[:-len(".model")] if spec.endswith(".model") else spec
        if (MODEL_DIR / f"{name}.model").is_file():
            return builtin_model(name)
    except (OSError, TriageError, ValueError) as exc:
        raise _fail(spec, exc) from None
    raise InputError(f"{spec}: no such model file or shipped model")


def _read_dump(path: str):
    try:
        return parse_dump(Path(path).read_text())
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: {getattr(exc, 'strerror', None) or exc}") from None
    except TriageError as exc:
        raise _fail(path, exc) from None


def _config(args) -> EvidenceConfig:
    try:
        return EvidenceConfig(args.close_threshold, args.neg_threshold, args.near_end_window)
    except ValueError as exc:
        raise InputError(f"config: {exc}") from None


def _run_analysis(args):
    if args.path_cap < 1:
        raise InputError("config: --path-cap must be at least 1")
    dump = _read_dump(args.dump)
    model = load_model_arg(args.model)
    return analyze(dump, model, _config(args), args.path_cap)


def cmd_analyze(args) -> str:
    result = _run_analysis(args)
    if args.json:
        return render_json(result)
    return render_text(result, expand_all=args.expand_all)


def cmd_dot(args) -> str:
    if args.highlight_top < 0:
        raise InputError("--highlight-top must be non-negative")
    if args.highlight_top == 0:
        dump = _read_dump(args.dump)
        return emit_dot(program_cfg(dump.program), program=dump.program)
    result = _run_analysis(args)
    top = result.diagnosis.ranking[:args.highlight_top]
    paths = [result.paths.paths[i] for i in top]
    return emit_dot(result.cfg, paths, result.dump.program)


def cmd_gen(args) -> str:
    if args.n < 1:
        raise InputError("--n must be at least 1")
    if args.size < 4:
        raise InputError("--size must be at least 4")
    entries = build_corpus(args.seed, args.n, args.size)
    try:
        manifest = write_corpus(entries, args.out)
    except OSError as exc:
        raise InputError(f"{args.out}: {exc.strerror or exc}") from None
    return f"wrote {len(entries)} entries to {manifest.parent}\n"


def cmd_calibrate(args) -> str:
    try:
        entries = read_corpus(args.corpus)
    except OSError as exc:
        raise InputError(f"{args.corpus}: {exc.strerror or exc}") from None
    except TriageError as exc:
        raise _fail(args.corpus, exc) from None
    if not entries:
        raise InputError(f"{args.corpus}: corpus is empty")
    model = load_model_arg(args.model)
    stats = run_calibration(entries, model, _config(args), seed=args.seed)
    js = calibration_json(stats, model.model_id)
    if args.out:
        try:
            Path(args.out).write_text(js)
        except OSError as exc:
            raise InputError(f"{args.out}: {exc.strerror or exc}") from None
    return js if args.json else render_calibration(stats, model.model_id)


def _add_model(p):
    p.add_argument("--model", metavar="PATH",
                   help="model file, or the name of a shipped model (default: pastheld-default)")


def _add_thresholds(p):
    d = EvidenceConfig()
    p.add_argument("--close-threshold", type=int, default=d.close_threshold, metavar="N")
    p.add_argument("--neg-threshold", type=int, default=d.neg_threshold, metavar="N")
    p.add_argument("--near-end-window", type=int, default=d.near_end_window, metavar="N")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dumptriage", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="rank the feasible fault paths of a dump")
    p.add_argument("dump")
    _add_model(p)
    _add_thresholds(p)
    p.add_argument("--path-cap", type=int, default=DEFAULT_PATH_CAP, metavar="N")
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.add_argument("--expand-all", action="store_true", help="show details for every path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("dot", help="control-flow graph as DOT, top-ranked paths highlighted")
    p.add_argument("dump")
    p.add_argument("--highlight-top", type=int, default=0, metavar="K")
    _add_model(p)
    _add_thresholds(p)
    p.add_argument("--path-cap", type=int, default=DEFAULT_PATH_CAP, metavar="N")
    p.set_defaults(func=cmd_dot)

    p = sub.add_parser("gen", help="write a fault-injected corpus")
    p.add_argument("--seed", type=int, default=0, metavar="N")
    p.add_argument("--n", type=int, default=200, metavar="N")
    p.add_argument("--size", type=int, default=DEFAULT_SIZE, metavar="N")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("calibrate", help="localization accuracy and reliability on a corpus")
    p.add_argument("corpus", metavar="DIR")
    _add_model(p)
    _add_thresholds(p)
    p.add_argument("--seed", type=int, default=0, metavar="N", help="seed for random tie-breaking")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", metavar="FILE", help="also write the JSON stats here")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = args.func(args)
    except InputError as exc:
        print(f"dumptriage: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except (NoRootVariable, AllPathsExcluded) as exc:
        print(f"dumptriage: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNDIAGNOSABLE
    sys.stdout.write(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

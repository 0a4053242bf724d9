"""Text and JSON renderings of an analysis, plus the calibration table."""
from __future__ import annotations

import dataclasses
import json

from .diagnosis import ErrorClass
from .harness import CalibrationStats
from .pipeline import Analysis

EXPAND_THRESHOLD = 0.10

_FINDING_TITLES = (
    ("structure", "SYNTACTIC STRUCTURE"),
    ("close_regs", "CLOSE REGS"),
    ("neg_regs", "NEG REGS"),
    ("border_proximity", "BORDER PROXIMITY"),
)


def _p(x: float) -> str:
    return f"{x:.2f}"


def _overshoot(x: int | None) -> str:
    return "" if x is None else f" (overshoot {x:+d})"


def _config_dict(analysis: Analysis) -> dict:
    d = dataclasses.asdict(analysis.config)
    d["path_cap"] = analysis.path_cap
    return d


def expanded_ids(analysis: Analysis, expand_all: bool = False) -> list[int]:
    """Path ids that get a detail section, in ranking order."""
    ranked = analysis.diagnosis.ranked()
    if expand_all:
        return [p.id for p in ranked]
    return [p.id for k, p in enumerate(ranked) if k == 0 or p.posterior >= EXPAND_THRESHOLD]


def render_text(analysis: Analysis, *, expand_all: bool = False) -> str:
    diag = analysis.diagnosis
    root = analysis.paths.root
    lines = [
        f"MODEL {diag.model_id}",
        f"ROOT VARIABLE {root.name} = {root.value}{_overshoot(root.overshoot)}",
        f"FEASIBLE PATHS {diag.n_paths}",
    ]
    if diag.truncated:
        lines.append(f"WARNING: path enumeration truncated at {analysis.path_cap} paths; "
                     "ranking covers the enumerated paths only")
    lines.append("")
    lines.append("RANKED PATHS")
    for p in diag.ranked():
        lines.append(f"  PATH {p.id + 1}: p (ERROR) = {_p(p.posterior)}")

    for pid in expanded_ids(analysis, expand_all):
        score = diag.paths[pid]
        path = analysis.paths.paths[pid]
        findings = score.findings.as_dict()
        lines += ["", f"PATH {pid + 1}", f"  BLOCKS {path.describe()}"]
        lines.append("  PATH FINDINGS")
        for key, title in _FINDING_TITLES:
            value = findings[key]
            shown = str(value) if isinstance(value, bool) else value
            lines.append(f"    {title}: {shown}")
        lines.append("  PATH FAILURE PROBABILITY")
        lines.append(f"    p (ERROR ON PATH {pid + 1}): {_p(score.posterior)}")
        lines.append("  ERROR BREAKDOWN")
        shown = [(c, x) for c, x in score.breakdown.items() if x > 0.0]
        shown.sort(key=lambda cx: -cx[1])
        for c, x in shown:
            lines.append(f"    {c.label}: {_p(x)}")
        if not shown:
            lines.append("    (excluded by structure)")
    return "\n".join(lines) + "\n"


def report_dict(analysis: Analysis) -> dict:
    diag = analysis.diagnosis
    return {
        "n_paths": diag.n_paths,
        "truncated": diag.truncated,
        "paths": [
            {
                "id": p.id + 1,
                "posterior": p.posterior,
                "findings": p.findings.as_dict(),
                "breakdown": {c.value: p.breakdown[c] for c in ErrorClass},
            }
            for p in diag.paths
        ],
        "model_id": diag.model_id,
        "config": _config_dict(analysis),
    }


def render_json(analysis: Analysis) -> str:
    return json.dumps(report_dict(analysis), indent=2) + "\n"


def _num(x: float | None, width: int = 9) -> str:
    return f"{'-':>{width}}" if x is None else f"{x:{width}.4f}"


def render_calibration(stats: CalibrationStats, model_id: str) -> str:
    lines = [
        f"model          {model_id}",
        f"entries        {stats.n}  (failed {stats.n_failed}, true path missing {stats.n_missing})",
        f"top1           {stats.top1:.4f}",
        f"top3           {stats.top3:.4f}",
        f"mrr            {stats.mrr:.4f}",
        f"class top1     {stats.class_top1:.4f}",
        f"sampled        top1 {stats.sampled_top1:.4f}  top3 {stats.sampled_top3:.4f}  "
        f"mrr {stats.sampled_mrr:.4f}",
        f"uniform mrr    {stats.mrr_uniform:.4f} (sigma {stats.mrr_uniform_sigma:.4f})",
        "",
        "bin            count  predicted   observed",
    ]
    for b in stats.reliability:
        close = "]" if b.hi >= 1.0 else ")"
        lines.append(
            f"[{b.lo:.1f}, {b.hi:.1f}{close}    {b.count:6d}  {_num(b.mean_predicted)}  {_num(b.frequency)}"
        )
    for f in stats.failures:
        lines.append(f"failure: {f}")
    return "\n".join(lines) + "\n"


def calibration_json(stats: CalibrationStats, model_id: str) -> str:
    d = stats.as_dict()
    d["model_id"] = model_id
    return json.dumps(d, indent=2) + "\n"

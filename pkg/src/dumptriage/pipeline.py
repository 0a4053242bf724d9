"""Dump in, ranked diagnosis out."""
from __future__ import annotations

from dataclasses import dataclass

from .cfg import Cfg, program_cfg
from .diagnosis import Diagnosis, PastheldModel, default_model, score_paths
from .errors import AllPathsExcluded
from .evidence import EvidenceConfig, PathFindings, extract_findings
from .isa import DumpSnapshot
from .pathfinder import DEFAULT_PATH_CAP, PathSet, find_paths


@dataclass(frozen=True)
class Analysis:
    dump: DumpSnapshot
    cfg: Cfg
    paths: PathSet
    findings: tuple[PathFindings, ...]
    diagnosis: Diagnosis
    config: EvidenceConfig
    path_cap: int = DEFAULT_PATH_CAP


def analyze(dump: DumpSnapshot, model: PastheldModel | None = None,
            config: EvidenceConfig | None = None, path_cap: int = DEFAULT_PATH_CAP) -> Analysis:
    model = model or default_model()
    config = config or EvidenceConfig()
    cfg = program_cfg(dump.program)
    paths = find_paths(dump, path_cap, cfg)
    if not len(paths):
        # every enumerated route contradicted the dump
        raise AllPathsExcluded("no feasible path reaches the fault")
    findings = tuple(extract_findings(paths, dump, config, cfg))
    diagnosis = score_paths(findings, model, paths.truncated)
    return Analysis(dump, cfg, paths, findings, diagnosis, config, path_cap)

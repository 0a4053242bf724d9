"""The PASTHELD belief network and single-fault scoring across paths."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from .bayesnet import DiscreteNetwork
from .errors import AllPathsExcluded, ModelError
from .evidence import BorderProximity, PathFindings, StructureClass


class ErrorClass(Enum):
    BAD_SET = "BAD_SET"
    BAD_ADJUST = "BAD_ADJUST"
    ENTERED_BAD = "ENTERED_BAD"
    BAD_LOOP = "BAD_LOOP"

    @property
    def label(self) -> str:
        return self.value.replace("_", " ")


NO_ERROR = "NO_ERROR"
HYPOTHESES = tuple(c.value for c in ErrorClass) + (NO_ERROR,)

EVIDENCE_STATES: dict[str, tuple[str, ...]] = {
    "structure": tuple(s.value for s in StructureClass),
    "close_regs": ("TRUE", "FALSE"),
    "neg_regs": ("TRUE", "FALSE"),
    "border_proximity": tuple(b.value for b in BorderProximity),
}
NODES = tuple(EVIDENCE_STATES)

_S = StructureClass
# Structures under which each error class is logically impossible.
INCOMPATIBLE: dict[ErrorClass, frozenset] = {
    ErrorClass.BAD_SET: frozenset({_S.NO_MODIFY_FAIL, _S.ADJUST_FAIL, _S.ADJUST_IN_LOOP_FAIL}),
    ErrorClass.BAD_ADJUST: frozenset({_S.NO_MODIFY_FAIL, _S.SET_FAIL}),
    ErrorClass.ENTERED_BAD: frozenset(set(_S) - {_S.NO_MODIFY_FAIL}),
    ErrorClass.BAD_LOOP: frozenset(set(_S) - {_S.ADJUST_IN_LOOP_FAIL, _S.SET_ADJUST_IN_LOOP_FAIL}),
}

SUM_TOLERANCE = 1e-9


def finding_states(f: PathFindings) -> dict[str, str]:
    return {
        "structure": f.structure.value,
        "close_regs": "TRUE" if f.close_regs else "FALSE",
        "neg_regs": "TRUE" if f.neg_regs else "FALSE",
        "border_proximity": f.border_proximity.value,
    }


def _check_row(where: str, row: Sequence[float]) -> None:
    if any(x < 0 for x in row):
        raise ModelError(where, "negative probability")
    if abs(math.fsum(row) - 1.0) > SUM_TOLERANCE:
        raise ModelError(where, f"row sums to {math.fsum(row):.12g}, not 1")


@dataclass(frozen=True)
class PastheldModel:
    """Class priors plus p(finding | hypothesis) for the four evidence nodes.

    ``cpts[node][hypothesis]`` is a row aligned with ``EVIDENCE_STATES[node]``.
    The constructor checks sums and signs only; ``audit`` checks the
    structural zeros.
    """

    priors: Mapping[ErrorClass, float]
    cpts: Mapping[str, Mapping[str, tuple[float, ...]]]
    model_id: str = "custom"

    def __post_init__(self):
        if set(self.priors) != set(ErrorClass):
            raise ModelError("priors", "need exactly one prior per error class")
        _check_row("priors", [self.priors[c] for c in ErrorClass])
        if set(self.cpts) != set(NODES):
            raise ModelError("cpt", f"need tables for {', '.join(NODES)}")
        for node, table in self.cpts.items():
            if set(table) != set(HYPOTHESES):
                raise ModelError(f"cpt.{node}", "need one row per hypothesis")
            for hyp, row in table.items():
                if len(row) != len(EVIDENCE_STATES[node]):
                    raise ModelError(f"cpt.{node} {hyp}", "wrong number of states")
                _check_row(f"cpt.{node} {hyp}", row)

    def p(self, node: str, state: str, hypothesis: str) -> float:
        return self.cpts[node][hypothesis][EVIDENCE_STATES[node].index(state)]

    def likelihood(self, findings: PathFindings, hypothesis: str) -> float:
        return math.prod(self.p(n, s, hypothesis) for n, s in finding_states(findings).items())

    def log_likelihood(self, findings: PathFindings, hypothesis: str) -> float:
        total = 0.0
        for n, s in finding_states(findings).items():
            x = self.p(n, s, hypothesis)
            if x == 0.0:
                return -math.inf
            total += math.log(x)
        return total

    def audit(self) -> None:
        """Raise ModelError unless every incompatible structure has probability 0."""
        states = EVIDENCE_STATES["structure"]
        for cls, bad in INCOMPATIBLE.items():
            row = self.cpts["structure"][cls.value]
            for s in sorted(bad, key=lambda s: states.index(s.value)):
                if row[states.index(s.value)] != 0.0:
                    raise ModelError(
                        f"p({s.value}|{cls.value})",
                        "missing structural zero: structure is incompatible with class",
                    )

    def network(self) -> DiscreteNetwork:
        """Naive-Bayes network conditioned on an error lying on the path."""
        states = {"H": tuple(c.value for c in ErrorClass)}
        states.update(EVIDENCE_STATES)
        parents = {n: ("H",) for n in NODES}
        cpts = {"H": {(): tuple(self.priors[c] for c in ErrorClass)}}
        for n in NODES:
            cpts[n] = {(c.value,): self.cpts[n][c.value] for c in ErrorClass}
        return DiscreteNetwork(states, parents, cpts)


# -- model files ---------------------------------------------------------------

_SECTION_RE = re.compile(r"^\[\s*([A-Za-z_.]+)\s*\]$")
_ROW_RE = re.compile(r"^p\(\s*([A-Za-z_]+)\s*\|\s*([A-Za-z_]+)\s*\)\s*=\s*(\S+)$")
_PRIOR_RE = re.compile(r"^([A-Za-z_]+)\s*=\s*(\S+)$")


def _number(tok: str, where: str) -> float:
    try:
        return float(Fraction(tok))
    except (ValueError, ZeroDivisionError):
        raise ModelError(where, f"not a probability: {tok!r}") from None


def load_model(text: str, model_id: str = "custom", *, defaults: PastheldModel | None = None,
               audit: bool = True) -> PastheldModel:
    """Parse a model file.

    A hypothesis row that is absent from a table falls back to ``defaults``
    (the shipped default model); states omitted within a given row are 0.
    """
    priors: dict[ErrorClass, float] = {}
    rows: dict[str, dict[str, dict[str, float]]] = {n: {} for n in NODES}
    section = None
    seen_sections = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"line {lineno}"
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1)
            if section != "priors" and not (section.startswith("cpt.") and section[4:] in rows):
                raise ModelError(where, f"unknown section [{section}]")
            if section in seen_sections:
                raise ModelError(where, f"duplicate section [{section}]")
            seen_sections.add(section)
            continue
        if section is None:
            raise ModelError(where, "entry outside any section")
        if section == "priors":
            m = _PRIOR_RE.match(line)
            if not m or m.group(1) not in ErrorClass.__members__:
                raise ModelError(where, f"unknown prior key: {line}")
            cls = ErrorClass[m.group(1)]
            if cls in priors:
                raise ModelError(where, f"duplicate prior for {cls.value}")
            priors[cls] = _number(m.group(2), where)
            continue
        node = section[4:]
        m = _ROW_RE.match(line)
        if not m:
            raise ModelError(where, f"expected p(<state>|<class>) = <value>: {line}")
        state, hyp, value = m.groups()
        if state not in EVIDENCE_STATES[node]:
            raise ModelError(where, f"unknown state {state!r} for {node}")
        if hyp not in HYPOTHESES:
            raise ModelError(where, f"unknown class {hyp!r}")
        row = rows[node].setdefault(hyp, {})
        if state in row:
            raise ModelError(where, f"duplicate entry p({state}|{hyp})")
        row[state] = _number(value, where)

    if priors and set(priors) != set(ErrorClass):
        raise ModelError("priors", "priors must list every error class or none")
    if defaults is None and (not priors or any(len(rows[n]) < len(HYPOTHESES) for n in NODES)):
        defaults = default_model()
    final_priors = priors or dict(defaults.priors)
    cpts = {}
    for node in NODES:
        table = {}
        for hyp in HYPOTHESES:
            given = rows[node].get(hyp)
            if given is None:
                table[hyp] = defaults.cpts[node][hyp]
            else:
                table[hyp] = tuple(given.get(s, 0.0) for s in EVIDENCE_STATES[node])
        cpts[node] = table
    model = PastheldModel(final_priors, cpts, model_id)
    if audit:
        model.audit()
    return model


def read_model(path: str | Path) -> PastheldModel:
    path = Path(path)
    return load_model(path.read_text(), path.stem)


def render_model(model: PastheldModel) -> str:
    """Serialize ``model``; zero entries are written out so rows read complete."""
    out = ["[priors]"]
    out += [f"{c.value} = {model.priors[c]!r}" for c in ErrorClass]
    for node in NODES:
        out += ["", f"[cpt.{node}]"]
        for hyp in HYPOTHESES:
            for s, x in zip(EVIDENCE_STATES[node], model.cpts[node][hyp]):
                out.append(f"p({s}|{hyp}) = {x!r}")
    return "\n".join(out) + "\n"


class _NoDefaults:
    """Stands in for defaults while loading the default model itself."""

    @property
    def priors(self):
        raise ModelError("priors", "default model must list every prior")

    @property
    def cpts(self):
        raise ModelError("cpt", "default model must list every row")


MODEL_DIR = Path(__file__).parent / "models"
DEFAULT_MODEL_NAME = "pastheld-default"
_builtin_cache: dict[str, PastheldModel] = {}


def builtin_model(name: str) -> PastheldModel:
    """One of the models shipped with the package, by file stem."""
    if name not in _builtin_cache:
        text = (MODEL_DIR / f"{name}.model").read_text()
        defaults = _NoDefaults() if name == DEFAULT_MODEL_NAME else None
        _builtin_cache[name] = load_model(text, name, defaults=defaults)
    return _builtin_cache[name]


def default_model() -> PastheldModel:
    return builtin_model(DEFAULT_MODEL_NAME)


# -- scoring ---------------------------------------------------------------------

@dataclass(frozen=True)
class PathScore:
    id: int
    posterior: float
    breakdown: Mapping[ErrorClass, float]
    findings: PathFindings
    excluded: bool = False


@dataclass(frozen=True)
class Diagnosis:
    paths: tuple[PathScore, ...]
    ranking: tuple[int, ...]
    truncated: bool = False
    model_id: str = "custom"
    extra: Mapping = field(default_factory=dict, compare=False)

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    def ranked(self) -> list[PathScore]:
        return [self.paths[i] for i in self.ranking]


def score_paths(findings: Sequence[PathFindings], model: PastheldModel,
                truncated: bool = False) -> Diagnosis:
    """Posterior that the root error lies on each path, under a single fault.

    Hypothesis (i, c) has prior (1/n)·prior(c) and likelihood
    p(F_i | c)·prod_{j != i} p(F_j | NO_ERROR). Computed in log space so that
    long path lists do not underflow.
    """
    n = len(findings)
    if n == 0:
        raise ValueError("no paths to score")
    classes = list(ErrorClass)
    background = [model.log_likelihood(f, NO_ERROR) for f in findings]
    zero_bg = [i for i, b in enumerate(background) if b == -math.inf]
    finite_bg = math.fsum(b for b in background if b != -math.inf)

    logw = []
    for i, f in enumerate(findings):
        if len(zero_bg) > 1 or (zero_bg and zero_bg[0] != i):
            rest = -math.inf
        elif zero_bg:
            rest = finite_bg
        else:
            rest = finite_bg - background[i]
        row = []
        for c in classes:
            prior = model.priors[c]
            lik = model.log_likelihood(f, c.value)
            if prior == 0.0 or lik == -math.inf or rest == -math.inf:
                row.append(-math.inf)
            else:
                row.append(math.log(prior) + lik + rest)
        logw.append(row)

    top = max(max(r) for r in logw)
    if top == -math.inf:
        raise AllPathsExcluded("every (path, class) hypothesis has zero likelihood")
    weights = [[math.exp(x - top) if x != -math.inf else 0.0 for x in r] for r in logw]
    z = math.fsum(x for r in weights for x in r)

    scores = []
    for i, (f, r) in enumerate(zip(findings, weights)):
        breakdown = {c: x / z for c, x in zip(classes, r)}
        posterior = math.fsum(r) / z
        scores.append(PathScore(i, posterior, breakdown, f, excluded=not any(r)))
    ranking = tuple(sorted(range(n), key=lambda i: (-scores[i].posterior, i)))
    return Diagnosis(tuple(scores), ranking, truncated, model.model_id)

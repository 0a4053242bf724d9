"""Discrete belief networks with exact inference by joint enumeration."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import ZeroEvidence

ROW_TOLERANCE = 1e-12


@dataclass(frozen=True)
class DiscreteNetwork:
    """Nodes with ordered states; each CPT maps a parent-state tuple to a row.

    ``cpts[node][parent_states]`` is a tuple of probabilities aligned with
    ``states[node]``; ``parent_states`` follows the order of ``parents[node]``.
    """

    states: Mapping[str, tuple[str, ...]]
    parents: Mapping[str, tuple[str, ...]]
    cpts: Mapping[str, Mapping[tuple[str, ...], tuple[float, ...]]]

    def __post_init__(self):
        for node, ps in self.parents.items():
            if node not in self.states:
                raise ValueError(f"parents given for unknown node {node!r}")
            for p in ps:
                if p not in self.states:
                    raise ValueError(f"{node!r} has unknown parent {p!r}")
        self.order  # raises on cycles
        for node in self.states:
            table = self.cpts.get(node)
            if table is None:
                raise ValueError(f"missing CPT for {node!r}")
            ps = self.parents.get(node, ())
            for combo in itertools.product(*(self.states[p] for p in ps)):
                row = table.get(combo)
                if row is None:
                    raise ValueError(f"{node!r}: missing row for parents {combo}")
                if len(row) != len(self.states[node]):
                    raise ValueError(f"{node!r}: row {combo} has wrong length")
                if any(x < 0 for x in row):
                    raise ValueError(f"{node!r}: negative entry in row {combo}")
                if abs(math.fsum(row) - 1.0) > ROW_TOLERANCE:
                    raise ValueError(f"{node!r}: row {combo} does not sum to 1")

    @property
    def order(self) -> tuple[str, ...]:
        """Topological order, ties broken by declaration order."""
        pending = list(self.states)
        done: list[str] = []
        placed: set[str] = set()
        while pending:
            for node in pending:
                if all(p in placed for p in self.parents.get(node, ())):
                    done.append(node)
                    placed.add(node)
                    pending.remove(node)
                    break
            else:
                raise ValueError(f"cycle among {pending}")
        return tuple(done)

    def prob(self, node: str, value: str, assignment: Mapping[str, str]) -> float:
        combo = tuple(assignment[p] for p in self.parents.get(node, ()))
        return self.cpts[node][combo][self.states[node].index(value)]


def infer_enumerate(net: DiscreteNetwork, observations: Mapping[str, str]) -> dict[str, dict[str, float]]:
    """Exact posterior marginals of every node given ``observations``."""
    for node, value in observations.items():
        if node not in net.states:
            raise KeyError(f"unknown node {node!r}")
        if value not in net.states[node]:
            raise KeyError(f"{node!r} has no state {value!r}")
    order = net.order
    free = [n for n in order if n not in observations]
    totals = {n: dict.fromkeys(net.states[n], 0.0) for n in order}
    z = 0.0
    for values in itertools.product(*(net.states[n] for n in free)):
        assignment = dict(observations)
        assignment.update(zip(free, values))
        p = 1.0
        for n in order:
            p *= net.prob(n, assignment[n], assignment)
            if p == 0.0:
                break
        if p == 0.0:
            continue
        z += p
        for n in order:
            totals[n][assignment[n]] += p
    if z <= 0.0:
        raise ZeroEvidence(dict(observations))
    return {n: {s: v / z for s, v in dist.items()} for n, dist in totals.items()}


def joint_probability(net: DiscreteNetwork, assignment: Mapping[str, str]) -> float:
    return math.prod(net.prob(n, assignment[n], assignment) for n in net.order)


def network_from_rows(states: Mapping[str, Sequence[str]], parents: Mapping[str, Sequence[str]],
                      rows: Mapping[str, Sequence[Sequence[float]]]) -> DiscreteNetwork:
    """Build a network from CPT rows listed in parent-state product order."""
    cpts = {}
    for node, node_rows in rows.items():
        ps = tuple(parents.get(node, ()))
        combos = list(itertools.product(*(states[p] for p in ps)))
        if len(combos) != len(node_rows):
            raise ValueError(f"{node!r}: expected {len(combos)} rows, got {len(node_rows)}")
        cpts[node] = {c: tuple(r) for c, r in zip(combos, node_rows)}
    return DiscreteNetwork(
        {n: tuple(s) for n, s in states.items()},
        {n: tuple(parents.get(n, ())) for n in states},
        cpts,
    )

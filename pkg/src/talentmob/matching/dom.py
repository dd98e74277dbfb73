"""Distance-based optimal matching: k nearest candidates, then a minimum-cost assignment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

DIVISOR = 12.0


@dataclass
class DOMSolution:
    pairs: list[tuple[str, str, float]]
    unmatched_treated: list[str] = field(default_factory=list)

    @property
    def total_distance(self) -> float:
        return float(sum(d for _, _, d in self.pairs))


def dom_distance(a, b, divisor: float = DIVISOR) -> float:
    """Log-count distance between two pre-move profiles.

    ``a`` and ``b`` are (2, T) arrays: publications in row 0, citations in
    row 1, over t = -4..0. Counts enter as ``log(1 + x)``; the squared
    differences are summed and divided by ``divisor``.
    """
    la = np.log1p(np.asarray(a, dtype=float))
    lb = np.log1p(np.asarray(b, dtype=float))
    if la.shape != lb.shape:
        raise ValueError("profiles differ in shape")
    return float(np.sum((la - lb) ** 2) / divisor)


def nearest_candidates(distances: dict[str, float], k: int = 40) -> dict[str, float]:
    """The ``k`` closest candidates, ties broken by id."""
    ranked = sorted(distances.items(), key=lambda kv: (kv[1], kv[0]))
    return dict(ranked[:k])


def dom_match(candidates: dict[str, dict[str, float]], k: int = 40) -> DOMSolution:
    """One-to-one matching of treated units to controls.

    ``candidates`` maps treated id to ``{control_id: distance}`` over its
    exact-step pool. Each treated keeps its ``k`` nearest controls; the
    assignment first maximises the number of matched treated units and then
    minimises total distance. Treated units left without a partner are
    reported in ``unmatched_treated``.
    """
    reduced = {t: nearest_candidates(c, k) for t, c in sorted(candidates.items())}
    t_ids = list(reduced)
    c_ids = sorted({c for cs in reduced.values() for c in cs})
    if not t_ids or not c_ids:
        return DOMSolution([], t_ids)
    c_index = {c: j for j, c in enumerate(c_ids)}
    finite = [d for cs in reduced.values() for d in cs.values()]
    # a missing edge costs more than any complete set of real edges
    big = 2.0 * (sum(finite) + 1.0)
    cost = np.full((len(t_ids), len(c_ids)), big)
    for i, t in enumerate(t_ids):
        for c, d in reduced[t].items():
            cost[i, c_index[c]] = d
    rows, cols = linear_sum_assignment(cost)
    pairs = []
    matched = set()
    for i, j in zip(rows, cols):
        c = c_ids[j]
        if c in reduced[t_ids[i]]:
            pairs.append((t_ids[i], c, reduced[t_ids[i]][c]))
            matched.add(t_ids[i])
    return DOMSolution(pairs, [t for t in t_ids if t not in matched])

"""Coarsened exact matching over pre-move yearly counts."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass
class CEMSolution:
    strata: dict[tuple, tuple[list[str], list[str]]]
    retained: set[str]
    weights: dict[str, float]
    pruned_strata: int = 0
    flags: list[str] = field(default_factory=list)

    @property
    def n_treated(self) -> int:
        return sum(len(t) for t, _ in self.strata.values())


def log2_coarsen(values: np.ndarray) -> tuple[int, ...]:
    return tuple(int(b) for b in np.floor(np.log2(1.0 + np.asarray(values, dtype=float))))


def cutpoint_coarsener(cutpoints: Sequence[float]) -> Callable[[np.ndarray], tuple[int, ...]]:
    """Coarsener assigning each value the index of the first cutpoint above it."""
    cuts = np.asarray(sorted(cutpoints), dtype=float)

    def coarsen(values):
        return tuple(int(i) for i in np.searchsorted(cuts, np.asarray(values, float), side="right"))

    return coarsen


def cem_match(
    treated: dict[str, Sequence[float]],
    controls: dict[str, Sequence[float]],
    coarsen: Callable[[np.ndarray], tuple[int, ...]] = log2_coarsen,
) -> CEMSolution:
    """Stratify units on coarsened covariates and keep strata holding both groups.

    Treated units get weight 1. A control in stratum s gets
    ``(m_T / m_C) * (m_T^s / m_C^s)`` with ``m_T``, ``m_C`` the numbers of
    retained treated and control units and ``m_T^s``, ``m_C^s`` the counts
    inside s.
    """
    overlap = set(treated) & set(controls)
    if overlap:
        raise ValueError(f"units listed as both treated and control: {sorted(overlap)[:3]}")
    cells: dict[tuple, tuple[list[str], list[str]]] = defaultdict(lambda: ([], []))
    for uid in sorted(treated):
        cells[coarsen(treated[uid])][0].append(uid)
    for uid in sorted(controls):
        cells[coarsen(controls[uid])][1].append(uid)

    strata = {sig: tc for sig, tc in sorted(cells.items()) if tc[0] and tc[1]}
    pruned = len(cells) - len(strata)
    m_t = sum(len(t) for t, _ in strata.values())
    m_c = sum(len(c) for _, c in strata.values())
    weights: dict[str, float] = {}
    for t_ids, c_ids in strata.values():
        for uid in t_ids:
            weights[uid] = 1.0
        w = (m_t / m_c) * (len(t_ids) / len(c_ids))
        for uid in c_ids:
            weights[uid] = w
    sol = CEMSolution(strata, set(weights), weights, pruned)
    if not strata:
        sol.flags.append("all_strata_pruned")
    return sol

"""Exact pre-filter: discipline, career start, coarsened pre-move totals, capped pools."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from talentmob.corpus import AuthorYearPanel

MOVED, UNMOVED = "moved", "unmoved"
DEFAULT_CAPS = {MOVED: 200, UNMOVED: 300}


@dataclass
class Tolerances:
    y0: int = 1
    y_w: int = 1
    pre_years: int = 5


@dataclass
class CandidatePool:
    treated_id: str
    y_w: int
    contenders: list[str]
    pool_kind: str
    caps_applied: bool = False
    n_survivors: int = 0
    flags: list[str] = field(default_factory=list)


def log2_bin(x: float) -> int:
    """Coarsening bin ``floor(log2(1 + x))`` for a non-negative count."""
    return int(math.floor(math.log2(1.0 + x)))


def pre_totals(panel: AuthorYearPanel, y_w: int, years: int = 5) -> tuple[int, int]:
    window = range(y_w - years, y_w)
    return sum(panel.pubs(y) for y in window), sum(panel.cites(y) for y in window)


def unit_rng(seed: int, treated_id: str) -> np.random.Generator:
    """Generator keyed by (run seed, treated id), independent of processing order."""
    key = int.from_bytes(hashlib.blake2b(treated_id.encode(), digest_size=8).digest(), "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), key]))


def exact_match(
    treated: AuthorYearPanel,
    y_w: int,
    pool: dict[str, AuthorYearPanel],
    pool_kind: str,
    pool_y_w: dict[str, int] | None = None,
    cap: int | None = None,
    tol: Tolerances | None = None,
    seed: int = 0,
) -> CandidatePool:
    """Candidate contenders for one treated unit.

    Contenders must share the discipline, start their career within
    ``tol.y0`` years, and fall in the same ``log2`` bins of publications and
    citations summed over the ``tol.pre_years`` years before the treated
    unit's move. Moved contenders also need a move year within ``tol.y_w``;
    unmoved ones must still publish after ``y_w``. Above ``cap`` survivors, a
    seeded uniform sample is kept: survivors are put in a random order and the
    first ``cap`` retained, so a larger cap only adds contenders.
    """
    tol = tol or Tolerances()
    if pool_kind not in DEFAULT_CAPS:
        raise ValueError(f"unknown pool kind {pool_kind!r}")
    cap = DEFAULT_CAPS[pool_kind] if cap is None else cap
    tp, tc = pre_totals(treated, y_w, tol.pre_years)
    bins = (log2_bin(tp), log2_bin(tc))

    survivors = []
    for cid in sorted(pool):
        if cid == treated.author_id:
            continue
        c = pool[cid]
        if c.discipline is None or c.discipline != treated.discipline:
            continue
        if abs(c.y0 - treated.y0) > tol.y0:
            continue
        if pool_kind == MOVED:
            cy = (pool_y_w or {}).get(cid)
            if cy is None or abs(cy - y_w) > tol.y_w:
                continue
        elif c.last_year <= y_w:
            continue
        cp, cc = pre_totals(c, y_w, tol.pre_years)
        if (log2_bin(cp), log2_bin(cc)) != bins:
            continue
        survivors.append(cid)

    out = CandidatePool(treated.author_id, y_w, survivors, pool_kind, n_survivors=len(survivors))
    if len(survivors) > cap:
        order = unit_rng(seed, treated.author_id).permutation(len(survivors))
        out.contenders = sorted(survivors[i] for i in order[:cap])
        out.caps_applied = True
    if not out.contenders:
        out.flags.append("empty_pool")
    return out

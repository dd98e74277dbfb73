"""Refining step: turn exact-step pools into matched sets by SCM, CEM or DOM."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from talentmob.corpus import AuthorYearPanel
from talentmob.matching.cem import cem_match, log2_coarsen
from talentmob.matching.dom import dom_distance, dom_match
from talentmob.matching.exact import CandidatePool
from talentmob.matching.scm import SCMError, scm_fit

logger = logging.getLogger(__name__)

OUTCOMES = ("publications", "citations")
PRE_T = tuple(range(-4, 1))


@dataclass
class MatchedEntry:
    treated_id: str
    y_w: int
    controls: list[tuple[str, float]]
    pre_rmspe: float | None = None
    flags: list[str] = field(default_factory=list)


@dataclass
class MatchedSet:
    method: str
    outcome_kind: str
    pool_kind: str
    entries: list[MatchedEntry]
    failures: Counter = field(default_factory=Counter)

    @property
    def n_pairs(self) -> int:
        return len(self.entries)

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(json.dumps({
                    "method": self.method,
                    "outcome": self.outcome_kind,
                    "pool": self.pool_kind,
                    "treated_id": e.treated_id,
                    "y_w": e.y_w,
                    "donors": [c for c, _ in e.controls],
                    "weights": [w for _, w in e.controls],
                    "rmspe": e.pre_rmspe,
                    "flags": e.flags,
                }, sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "MatchedSet":
        entries, meta = [], {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                d = json.loads(line)
                meta = d
                entries.append(MatchedEntry(d["treated_id"], d["y_w"],
                                            list(zip(d["donors"], d["weights"])),
                                            d["rmspe"], d["flags"]))
        return cls(meta.get("method", ""), meta.get("outcome", ""), meta.get("pool", ""), entries)


def yearly_counts(panel: AuthorYearPanel, y_w: int, ts=PRE_T) -> tuple[np.ndarray, np.ndarray]:
    """Publications and citations at relative years ``ts`` around ``y_w``."""
    p = np.array([panel.pubs(y_w + t) for t in ts], dtype=float)
    c = np.array([panel.cites(y_w + t) for t in ts], dtype=float)
    return p, c


def scm_inputs(panel: AuthorYearPanel, y_w: int, outcome_kind: str):
    """Outcome series and predictor vector for one unit aligned on ``y_w``.

    Citations are handled on the ``log(1 + C)`` scale used by the DID
    outcome. Publications: yearly counts plus mean log citations;
    citations: yearly log citations plus mean publications.
    """
    p, c = yearly_counts(panel, y_w)
    lc = np.log1p(c)
    if outcome_kind == "publications":
        return p, np.concatenate([p, [lc.mean()]])
    if outcome_kind == "citations":
        return lc, np.concatenate([lc, [p.mean()]])
    raise ValueError(f"unknown outcome kind {outcome_kind!r}")


def exact_stage(pools: list[CandidatePool], outcome_kind: str) -> MatchedSet:
    """Exact-step pools as a matched set with equal weights summing to one per treated."""
    entries = [
        MatchedEntry(p.treated_id, p.y_w, [(c, 1.0 / len(p.contenders)) for c in p.contenders])
        for p in sorted(pools, key=lambda p: p.treated_id)
        if p.contenders
    ]
    pool_kind = pools[0].pool_kind if pools else ""
    return MatchedSet("exact", outcome_kind, pool_kind, entries)


def refine_scm(
    pools: list[CandidatePool],
    panels: dict[str, AuthorYearPanel],
    outcome_kind: str,
    gate_factor: float = 0.5,
    gate_floor: float = 1e-6,
    weight_floor: float = 1e-10,
) -> MatchedSet:
    """Fit synthetic-control weights per treated unit and drop poor pre-period fits.

    A fit is kept when ``pre_rmspe <= max(gate_factor * sd, gate_floor)``,
    ``sd`` being the standard deviation of the treated pre-period outcome.
    Donors with weight below ``weight_floor`` are not listed.
    """
    entries, failures = [], Counter()
    pool_kind = pools[0].pool_kind if pools else ""
    for pool in sorted(pools, key=lambda p: p.treated_id):
        if not pool.contenders:
            failures["empty_pool"] += 1
            continue
        y, x = scm_inputs(panels[pool.treated_id], pool.y_w, outcome_kind)
        cols = [scm_inputs(panels[c], pool.y_w, outcome_kind) for c in pool.contenders]
        Y = np.column_stack([s for s, _ in cols])
        X = np.column_stack([v for _, v in cols])
        try:
            fit = scm_fit(y, Y, (x, X), pool.treated_id, pool.contenders, outcome_kind)
        except SCMError as exc:
            logger.warning("SCM failed for %s: %s", pool.treated_id, exc)
            failures["fit_error"] += 1
            continue
        gate = max(gate_factor * float(np.std(y)), gate_floor)
        if fit.pre_rmspe > gate:
            failures["quality_gate"] += 1
            continue
        flags = list(fit.flags)
        if not fit.converged:
            failures["not_converged"] += 1
        controls = [(d, float(w)) for d, w in zip(fit.donor_ids, fit.weights) if w > weight_floor]
        total = sum(w for _, w in controls)
        controls = [(d, w / total) for d, w in controls]
        entries.append(MatchedEntry(pool.treated_id, pool.y_w, controls, fit.pre_rmspe, flags))
    return MatchedSet("scm", outcome_kind, pool_kind, entries, failures)


def _profile(panel, y_w):
    p, c = yearly_counts(panel, y_w)
    return np.vstack([p, c])


def refine_cem(
    pools: list[CandidatePool],
    panels: dict[str, AuthorYearPanel],
    outcome_kind: str,
    coarsen=log2_coarsen,
) -> MatchedSet:
    """CEM on (P_t, C_t), t = -4..0, with the move year matched exactly.

    Each contender enters once per treated unit whose pool holds it, aligned
    on that unit's move year (unit key ``"contender@treated"``). A treated unit
    is matched to every control in its stratum; since strata share the move
    year, all of them are aligned on it. A control's CEM weight is split
    evenly over the treated units of its stratum and then rescaled so each
    treated unit's controls sum to one, as with the other refiners.
    """
    pools = sorted(pools, key=lambda p: p.treated_id)
    treated = {
        p.treated_id: np.append(_profile(panels[p.treated_id], p.y_w).ravel(), p.y_w)
        for p in pools
    }
    controls = {
        f"{c}@{p.treated_id}": np.append(_profile(panels[c], p.y_w).ravel(), p.y_w)
        for p in pools for c in p.contenders
    }

    def signature(v):
        return tuple(coarsen(v[:-1])) + (int(v[-1]),)

    sol = cem_match(treated, controls, signature)
    stratum_of = {t: sig for sig, (ts, _) in sol.strata.items() for t in ts}
    entries, failures = [], Counter()
    for p in pools:
        if p.treated_id not in sol.retained:
            failures["pruned" if p.contenders else "empty_pool"] += 1
            continue
        t_ids, c_ids = sol.strata[stratum_of[p.treated_id]]
        agg: dict[str, float] = {}
        for key in c_ids:
            cid = key.rsplit("@", 1)[0]
            agg[cid] = agg.get(cid, 0.0) + sol.weights[key] / len(t_ids)
        total = sum(agg.values())
        agg = {cid: w / total for cid, w in agg.items()}
        own = set(p.contenders)
        flags = [] if own & set(agg) else ["controls_from_other_units"]
        entries.append(MatchedEntry(p.treated_id, p.y_w, sorted(agg.items()), None, flags))
    pool_kind = pools[0].pool_kind if pools else ""
    return MatchedSet("cem", outcome_kind, pool_kind, entries, failures)


def refine_dom(
    pools: list[CandidatePool],
    panels: dict[str, AuthorYearPanel],
    outcome_kind: str,
    k: int = 40,
) -> MatchedSet:
    pools = sorted(pools, key=lambda p: p.treated_id)
    cand = {}
    failures = Counter()
    for p in pools:
        if not p.contenders:
            failures["empty_pool"] += 1
            continue
        tp = _profile(panels[p.treated_id], p.y_w)
        cand[p.treated_id] = {c: dom_distance(tp, _profile(panels[c], p.y_w)) for c in p.contenders}
    sol = dom_match(cand, k)
    by_t = {t: (c, d) for t, c, d in sol.pairs}
    entries = []
    for p in pools:
        if p.treated_id in by_t:
            c, d = by_t[p.treated_id]
            entries.append(MatchedEntry(p.treated_id, p.y_w, [(c, 1.0)], d))
    failures["unmatched"] += len(sol.unmatched_treated)
    pool_kind = pools[0].pool_kind if pools else ""
    return MatchedSet("dom", outcome_kind, pool_kind, entries, failures)

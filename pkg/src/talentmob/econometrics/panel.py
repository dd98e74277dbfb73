"""Long-format DID panels built from matched sets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from talentmob.corpus import AuthorYearPanel
from talentmob.matching.refine import MatchedSet

T_RANGE = (-4, 9)


@dataclass
class PanelObservation:
    scientist_id: str
    t: int
    y: float
    treat: int
    post: int
    weight: float = 1.0
    cluster: str = ""
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.cluster:
            self.cluster = self.scientist_id


@dataclass
class DIDPanel:
    rows: list[PanelObservation]
    n_pairs: int
    flags: dict[str, list[str]] = field(default_factory=dict)


def outcome_value(panel: AuthorYearPanel, year: int, outcome_kind: str) -> float:
    if outcome_kind == "publications":
        return float(panel.pubs(year))
    if outcome_kind == "citations":
        return math.log1p(panel.cites(year))
    raise ValueError(f"unknown outcome kind {outcome_kind!r}")


def build_did_panel(
    matched: MatchedSet,
    panels: dict[str, AuthorYearPanel],
    outcome_kind: str | None = None,
    horizon: int = 2020,
    t_range: tuple[int, int] = T_RANGE,
    min_weight: float = 1e-12,
) -> DIDPanel:
    """Rows for every matched treated unit and its weighted controls.

    Relative year ``t`` runs over ``t_range`` around the treated unit's move
    year and stops at ``horizon``. Control rows carry the match weight and a
    scientist key ``"control@treated"``, since the same contender aligned on a
    different move year is a different series. Citations enter as
    ``log(1 + C)``.
    """
    outcome_kind = outcome_kind or matched.outcome_kind
    rows: list[PanelObservation] = []
    flags: dict[str, list[str]] = {}
    lo, hi = t_range
    for e in matched.entries:
        last_t = min(hi, horizon - e.y_w)
        f = []
        if last_t < hi:
            f.append(f"truncated_at_t{last_t}")
        if last_t < 2:
            f.append("short_post")
        if f:
            flags[e.treated_id] = f
        ts = range(lo, last_t + 1)
        units = [(e.treated_id, e.treated_id, 1, 1.0)]
        units += [(f"{c}@{e.treated_id}", c, 0, w) for c, w in e.controls if w > min_weight]
        for key, pid, treat, w in units:
            p = panels[pid]
            for t in ts:
                rows.append(PanelObservation(
                    key, t, outcome_value(p, e.y_w + t, outcome_kind), treat, int(t >= 1), w,
                    flags=tuple(f),
                ))
    return DIDPanel(rows, matched.n_pairs, flags)

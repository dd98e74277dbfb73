"""Pre-period balance: per-year group differences before and after refining."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from talentmob.corpus import AuthorYearPanel
from talentmob.matching.refine import PRE_T, MatchedSet
from talentmob.tables import stars


@dataclass
class BalanceCell:
    t: int
    coef: float | None
    se: float | None
    p: float | None
    n: int
    flags: list[str] = field(default_factory=list)

    @property
    def stars(self) -> str:
        return stars(self.p)


def group_difference(y: np.ndarray, group: np.ndarray, w: np.ndarray) -> tuple[float, float, float]:
    """WLS of ``y`` on an intercept and a 0/1 group dummy; returns (coef, se, p)."""
    X = np.column_stack([np.ones_like(y), group])
    XtWX = X.T @ (X * w[:, None])
    beta = np.linalg.solve(XtWX, X.T @ (w * y))
    e = y - X @ beta
    dof = y.size - 2
    s2 = float(np.sum(w * e * e) / dof)
    se = math.sqrt(max(s2 * np.linalg.inv(XtWX)[1, 1], 0.0))
    if se == 0.0:
        p = 0.0 if abs(beta[1]) > 1e-12 else 1.0
    else:
        p = float(2.0 * stats.t.sf(abs(beta[1]) / se, dof))
    return float(beta[1]), se, p


def _outcome(panel: AuthorYearPanel, year: int, outcome_kind: str) -> float:
    if outcome_kind == "publications":
        return float(panel.pubs(year))
    return math.log1p(panel.cites(year))


def balance_table(
    matched: MatchedSet,
    panels: dict[str, AuthorYearPanel],
    outcome_kind: str | None = None,
    ts=PRE_T,
) -> list[BalanceCell]:
    """Per relative year, the weighted treated-minus-control coefficient.

    Treated units carry weight 1, controls their match weights. A year where
    the outcome does not vary at all gets coefficient 0 and a
    ``zero_variance`` flag; too few rows leave it blank as ``degenerate``.
    """
    outcome_kind = outcome_kind or matched.outcome_kind
    if not matched.entries:
        raise ValueError("balance table needs a non-empty matched set")
    cells = []
    for t in ts:
        ys, gs, ws = [], [], []
        for e in matched.entries:
            ys.append(_outcome(panels[e.treated_id], e.y_w + t, outcome_kind))
            gs.append(1.0)
            ws.append(1.0)
            for cid, w in e.controls:
                ys.append(_outcome(panels[cid], e.y_w + t, outcome_kind))
                gs.append(0.0)
                ws.append(w)
        y, g, w = np.array(ys), np.array(gs), np.array(ws)
        if y.size < 3 or g.min() == g.max():
            cells.append(BalanceCell(t, None, None, None, y.size, ["degenerate"]))
            continue
        if np.ptp(y) == 0:
            # identical outcomes everywhere: perfectly balanced
            cells.append(BalanceCell(t, 0.0, 0.0, 1.0, y.size, ["zero_variance"]))
            continue
        coef, se, p = group_difference(y, g, w)
        cells.append(BalanceCell(t, coef, se, p, y.size))
    return cells


def write_balance_csv(
    path: str | Path,
    exact: list[BalanceCell],
    refined: list[BalanceCell],
) -> None:
    def fmt(v):
        return "" if v is None else repr(float(v))

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "coef_exact", "se_exact", "stars_exact",
                    "coef_refined", "se_refined", "stars_refined", "n_exact", "n_refined", "flags"])
        for a, b in zip(exact, refined):
            flags = [f"exact:{f}" for f in a.flags] + [f"refined:{f}" for f in b.flags]
            w.writerow([a.t, fmt(a.coef), fmt(a.se), a.stars, fmt(b.coef), fmt(b.se), b.stars,
                        a.n, b.n, ";".join(flags)])

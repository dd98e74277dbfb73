"""Logistic model of post-move success, fitted by IRLS, with margins."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import expit

logger = logging.getLogger(__name__)

CONTINUOUS = ("d_a", "d_i", "d_c", "d_size")
CATEGORICAL = ("y0", "y_w", "discipline", "group")
OTHER = "other"


class SeparationError(RuntimeError):
    def __init__(self, predictor: str, detail: str = ""):
        super().__init__(f"separation detected on {predictor}{': ' + detail if detail else ''}")
        self.predictor = predictor


@dataclass
class LogitDesignRow:
    label: int
    d_a: float
    d_i: float
    d_c: float
    d_size: float
    y0: int | str
    y_w: int | str
    discipline: str
    group: str


@dataclass
class Design:
    X: np.ndarray
    y: np.ndarray
    names: list[str]
    continuous: dict[str, tuple[float, float, float]]  # name -> (mean, min, max)
    categorical: dict[str, tuple[list[str], str]]      # var -> (levels, modal level)
    collapsed: dict[str, list[str]] = field(default_factory=dict)
    dropped: list[str] = field(default_factory=list)


@dataclass
class LogitEstimate:
    names: list[str]
    beta: np.ndarray
    vcov: np.ndarray
    loglik: float
    loglik_null: float
    n_obs: int
    converged: bool = True
    n_iter: int = 0
    loglik_path: list[float] = field(default_factory=list)
    continuous: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    categorical: dict[str, tuple[list[str], str]] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    @property
    def pvalues(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return 2.0 * stats.norm.sf(np.abs(self.beta / self.se))

    @property
    def pseudo_r2(self) -> float:
        """McFadden's 1 - l / l0."""
        if self.loglik_null == 0:
            return float("nan")
        return 1.0 - self.loglik / self.loglik_null

    def coef(self, name: str) -> float:
        return float(self.beta[self.names.index(name)])


def _level(v) -> str:
    return str(v)


def build_design(rows: Sequence[LogitDesignRow], min_level_rows: int = 2) -> Design:
    """Intercept, the four continuous predictors and reference-coded categoricals.

    Levels seen in fewer than ``min_level_rows`` rows are merged into
    ``"other"``; the first level in sort order is the reference. Columns that
    are linear combinations of earlier ones are dropped and listed.
    """
    n = len(rows)
    cols = [np.ones(n)]
    names = ["const"]
    continuous = {}
    for c in CONTINUOUS:
        v = np.array([float(getattr(r, c)) for r in rows])
        cols.append(v)
        names.append(c)
        continuous[c] = (float(v.mean()), float(v.min()), float(v.max())) if n else (0.0, 0.0, 0.0)
    categorical, collapsed = {}, {}
    for var in CATEGORICAL:
        raw = [_level(getattr(r, var)) for r in rows]
        counts = Counter(raw)
        rare = sorted(k for k, m in counts.items() if m < min_level_rows)
        if rare and len(counts) > 1:
            collapsed[var] = rare
            logger.info("collapsing %s levels %s into %r", var, rare, OTHER)
            raw = [OTHER if v in rare else v for v in raw]
        counts = Counter(raw)
        levels = sorted(counts)
        best = max(counts.values())
        mode = min(k for k, m in counts.items() if m == best)
        categorical[var] = (levels, mode)
        arr = np.array(raw, dtype=object)
        for lvl in levels[1:]:
            cols.append((arr == lvl).astype(float))
            names.append(f"{var}[{lvl}]")
    X = np.column_stack(cols) if n else np.zeros((0, len(cols)))
    y = np.array([int(r.label) for r in rows], dtype=float)

    keep, dropped = [], []
    for j in range(X.shape[1]):
        trial = keep + [j]
        if np.linalg.matrix_rank(X[:, trial]) == len(trial):
            keep.append(j)
        else:
            dropped.append(names[j])
    if dropped:
        logger.info("dropping collinear columns %s", dropped)
    return Design(X[:, keep], y, [names[j] for j in keep], continuous, categorical,
                  collapsed, dropped)


def loglik(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    eta = X @ beta
    # log(1 + e^eta) evaluated stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def irls(
    X: np.ndarray,
    y: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 100,
    max_halvings: int = 30,
) -> tuple[np.ndarray, list[float], bool, int]:
    """Newton-IRLS with step halving. Returns ``(beta, loglik_path, converged, n_iter)``."""
    beta = np.zeros(X.shape[1])
    ll = loglik(X, y, beta)
    path = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = X @ beta
        p = expit(eta)
        W = np.clip(p * (1.0 - p), 1e-300, None)
        z = eta + (y - p) / W
        XtW = X.T * W
        try:
            new = np.linalg.solve(XtW @ X, XtW @ z)
        except np.linalg.LinAlgError:
            # rank-deficient design: take the minimum-norm step
            new = np.linalg.lstsq(XtW @ X, XtW @ z, rcond=None)[0]
        step = new - beta
        ll_new = loglik(X, y, new)
        halvings = 0
        while ll_new < ll and halvings < max_halvings:
            step *= 0.5
            new = beta + step
            ll_new = loglik(X, y, new)
            halvings += 1
        if ll_new < ll:
            new, ll_new = beta, ll
        delta = ll_new - ll
        beta, ll = new, ll_new
        path.append(ll)
        if np.max(np.abs(beta)) > 1e3:
            break
        if abs(delta) < tol:
            converged = True
            break
    return beta, path, converged, it


def fit_matrix(X: np.ndarray, y: np.ndarray, names: Sequence[str], tol=1e-10, max_iter=100):
    """Fit on a prepared design matrix; raises :class:`SeparationError` on divergence."""
    names = list(names)
    if y.size == 0 or y.min() == y.max():
        raise ValueError("logit needs at least one row in each outcome class")
    beta, path, converged, n_iter = irls(X, y, tol, max_iter)
    j = int(np.argmax(np.abs(beta)))
    if abs(beta[j]) > 1e3:
        raise SeparationError(names[j], f"|beta| = {abs(beta[j]):.3g}")
    p = expit(X @ beta)
    info = (X.T * (p * (1.0 - p))) @ X
    vcov = np.linalg.pinv(info)
    se = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
    # quasi-separation: the coefficient drifts without bound but the step shrinks
    bad = np.nonzero(se > 1e3 * (1.0 + np.abs(beta)))[0]
    if bad.size:
        j = int(bad[np.argmax(se[bad])])
        raise SeparationError(names[j], f"standard error {se[j]:.3g}")
    ybar = float(y.mean())
    ll0 = float(y.sum() * math.log(ybar) + (y.size - y.sum()) * math.log(1.0 - ybar))
    return LogitEstimate(names, beta, vcov, path[-1], ll0, int(y.size), converged, n_iter, path,
                         flags=[] if converged else ["not_converged"])


def logit_fit(rows: Sequence[LogitDesignRow], tol: float = 1e-10, max_iter: int = 100) -> LogitEstimate:
    d = build_design(rows)
    try:
        est = fit_matrix(d.X, d.y, d.names, tol, max_iter)
    except SeparationError as exc:
        if exc.predictor != "const":
            raise
        # the intercept carries the reference levels; blame one that is all one class
        for var, (levels, _) in d.categorical.items():
            idx = [j for j, n in enumerate(d.names) if n.startswith(f"{var}[")]
            ref = ~d.X[:, idx].any(axis=1) if idx else np.ones(len(d.y), dtype=bool)
            if len(levels) > 1 and ref.any() and np.ptp(d.y[ref]) == 0:
                raise SeparationError(f"{var}[{levels[0]}]", "reference level in one outcome class") from None
        raise
    est.continuous = d.continuous
    est.categorical = d.categorical
    est.flags += [f"collapsed:{k}={','.join(v)}" for k, v in d.collapsed.items()]
    est.flags += [f"dropped:{c}" for c in d.dropped]
    return est


@dataclass
class MarginPoint:
    value: float | str
    probability: float
    ci_lo: float
    ci_hi: float
    extrapolated: bool = False


def _profile(est: LogitEstimate) -> dict[str, float]:
    x = {n: 0.0 for n in est.names}
    if "const" in x:
        x["const"] = 1.0
    for c, (mean, _, _) in est.continuous.items():
        if c in x:
            x[c] = mean
    for var, (levels, mode) in est.categorical.items():
        key = f"{var}[{mode}]"
        if key in x:
            x[key] = 1.0
    return x


def margins(est: LogitEstimate, predictor: str, grid: Sequence) -> list[MarginPoint]:
    """Predicted probability along ``grid`` with delta-method 95% intervals.

    Other continuous predictors sit at their sample means and categoricals at
    their modal levels. ``predictor`` may be a continuous column or a
    categorical variable (grid values are then levels).
    """
    is_cat = predictor in est.categorical
    if not is_cat and predictor not in est.names:
        raise KeyError(f"{predictor!r} is not in the fitted model")
    out = []
    for value in grid:
        x = _profile(est)
        extrap = False
        if is_cat:
            levels, mode = est.categorical[predictor]
            for lvl in levels:
                if f"{predictor}[{lvl}]" in x:
                    x[f"{predictor}[{lvl}]"] = 0.0
            lvl = _level(value)
            if lvl not in levels:
                extrap = True
                lvl = OTHER
            if f"{predictor}[{lvl}]" in x:
                x[f"{predictor}[{lvl}]"] = 1.0
        else:
            x[predictor] = float(value)
            if predictor in est.continuous:
                _, lo, hi = est.continuous[predictor]
                extrap = not (lo <= float(value) <= hi)
        xv = np.array([x[n] for n in est.names])
        p = float(expit(xv @ est.beta))
        g = p * (1.0 - p) * xv
        se = math.sqrt(max(float(g @ est.vcov @ g), 0.0))
        out.append(MarginPoint(value, p, max(0.0, p - 1.96 * se), min(1.0, p + 1.96 * se), extrap))
    return out

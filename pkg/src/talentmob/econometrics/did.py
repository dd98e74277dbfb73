"""Two-way fixed-effects DID and event-study estimation with clustered errors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from talentmob.econometrics.panel import PanelObservation

SE_TYPES = ("classical", "robust", "clustered")
Z95 = 1.96


class DegenerateFitError(ValueError):
    pass


@dataclass
class FEFit:
    beta: np.ndarray
    vcov: np.ndarray
    resid: np.ndarray
    r2: float
    n_obs: int
    n_units: int
    n_periods: int
    n_clusters: int
    flags: list[str] = field(default_factory=list)


@dataclass
class DIDEstimate:
    beta1: float
    se: float
    p: float
    n_obs: int
    n_pairs: int
    r2: float
    outcome_kind: str = ""
    comparison: str = ""
    se_type: str = "clustered"
    flags: list[str] = field(default_factory=list)

    @property
    def ci(self) -> tuple[float, float]:
        return self.beta1 - Z95 * self.se, self.beta1 + Z95 * self.se


@dataclass
class HorizonEffect:
    horizon: int
    beta: float | None
    se: float | None
    p: float | None

    @property
    def ci(self) -> tuple[float | None, float | None]:
        if self.beta is None:
            return None, None
        return self.beta - Z95 * self.se, self.beta + Z95 * self.se


@dataclass
class EventStudyEstimate:
    effects: list[HorizonEffect]
    n_obs: int
    n_pairs: int
    r2: float
    flags: list[str] = field(default_factory=list)

    def betas(self) -> dict[int, float | None]:
        return {e.horizon: e.beta for e in self.effects}


def _codes(values: Sequence) -> tuple[np.ndarray, int]:
    _, inv = np.unique(np.asarray(values, dtype=object).astype(str), return_inverse=True)
    return inv, int(inv.max()) + 1


def _demean(Z: np.ndarray, unit: np.ndarray, n_units: int, w: np.ndarray) -> np.ndarray:
    wsum = np.bincount(unit, weights=w, minlength=n_units)
    if Z.ndim == 1:
        return Z - (np.bincount(unit, weights=w * Z, minlength=n_units) / wsum)[unit]
    means = np.column_stack(
        [np.bincount(unit, weights=w * Z[:, j], minlength=n_units) for j in range(Z.shape[1])]
    ) / wsum[:, None]
    return Z - means[unit]


def _sandwich(X, e, w, cluster, se_type, k_df, n_full_params):
    n = X.shape[0]
    bread = np.linalg.pinv(X.T @ (X * w[:, None]))
    if se_type == "classical":
        s2 = float(np.sum(w * e * e)) / max(n - n_full_params, 1)
        return s2 * bread, 0
    if se_type == "robust":
        scores = X * (w * e)[:, None]
        meat = scores.T @ scores
        return bread @ meat @ bread * (n / max(n - n_full_params, 1)), 0
    if se_type != "clustered":
        raise ValueError(f"unknown se type {se_type!r}; expected one of {SE_TYPES}")
    g, n_g = _codes(cluster)
    scores = X * (w * e)[:, None]
    S = np.zeros((n_g, X.shape[1]))
    np.add.at(S, g, scores)
    meat = S.T @ S
    if n_g < 2:
        return np.full_like(bread, np.nan), n_g
    adj = (n_g / (n_g - 1)) * ((n - 1) / max(n - k_df, 1))
    return bread @ meat @ bread * adj, n_g


def fe_wls(
    y,
    D,
    unit,
    time,
    w=None,
    cluster=None,
    se_type: str = "clustered",
    method: str = "within",
    names: Sequence[str] | None = None,
) -> FEFit:
    """Weighted LS of ``y`` on regressors ``D`` with unit and period fixed effects.

    ``method="within"`` sweeps out unit effects by weighted demeaning and
    keeps explicit period dummies; ``method="dummy"`` fits the full dummy
    regression. Both return the same coefficients on ``D``. Clustered errors
    use the CR1 correction with fixed effects nested in clusters.
    """
    y = np.asarray(y, dtype=float)
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        D = D[:, None]
    n, k = D.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise DegenerateFitError("weights must be positive")
    u, n_u = _codes(unit)
    tcode, n_t = _codes(time)
    if n_u < 2:
        raise DegenerateFitError("need at least two scientists (unit dimension)")
    if n_t < 2:
        raise DegenerateFitError("need at least two periods (time dimension)")
    cluster = unit if cluster is None else cluster

    T = np.zeros((n, n_t - 1))
    mask = tcode > 0
    T[np.nonzero(mask)[0], tcode[mask] - 1] = 1.0

    # collinearity of D with the fixed effects
    Dt, Tt = _demean(D, u, n_u, w), _demean(T, u, n_u, w)
    sw = np.sqrt(w)
    if Tt.shape[1]:
        coefT, *_ = np.linalg.lstsq(Tt * sw[:, None], Dt * sw[:, None], rcond=None)
        Dr = Dt - Tt @ coefT
    else:
        Dr = Dt
    for j in range(k):
        scale = max(float(np.sqrt(np.sum(w * D[:, j] ** 2))), 1e-300)
        if float(np.sqrt(np.sum(w * Dr[:, j] ** 2))) <= 1e-10 * scale:
            raise DegenerateFitError(
                f"{names[j]} is collinear with the scientist/period fixed effects"
            )
    if np.linalg.matrix_rank(Dr * sw[:, None], tol=1e-10 * max(1.0, np.abs(Dr).max())) < k:
        raise DegenerateFitError("interaction regressors are jointly collinear")

    if method == "within":
        X = np.hstack([Dt, Tt])
        yt = _demean(y, u, n_u, w)
        coef, *_ = np.linalg.lstsq(X * sw[:, None], yt * sw, rcond=None)
        e = yt - X @ coef
    elif method == "dummy":
        U = np.zeros((n, n_u))
        U[np.arange(n), u] = 1.0
        X = np.hstack([D, T, U])
        coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
        e = y - X @ coef
    else:
        raise ValueError(f"unknown method {method!r}")

    n_full = k + (n_t - 1) + n_u
    vcov, n_g = _sandwich(X, e, w, cluster, se_type, k + (n_t - 1) + 1, n_full)
    ybar = float(np.sum(w * y) / np.sum(w))
    sst = float(np.sum(w * (y - ybar) ** 2))
    ssr = float(np.sum(w * e * e))
    flags = []
    if sst == 0.0:
        flags.append("zero_variance")
        r2 = float("nan")
    else:
        r2 = 1.0 - ssr / sst
    return FEFit(coef[:k], vcov[:k, :k], e, r2, n, n_u, n_t, n_g, flags)


def _pvalue(beta: float, se: float) -> float:
    if not (se > 0 and math.isfinite(se)):
        return float("nan")
    return float(2.0 * stats.norm.sf(abs(beta) / se))


def _arrays(obs: Sequence[PanelObservation]):
    y = np.array([o.y for o in obs], dtype=float)
    unit = [o.scientist_id for o in obs]
    time = np.array([o.t for o in obs])
    treat = np.array([o.treat for o in obs], dtype=float)
    post = np.array([o.post for o in obs], dtype=float)
    w = np.array([o.weight for o in obs], dtype=float)
    cluster = [o.cluster for o in obs]
    return y, unit, time, treat, post, w, cluster


def twfe_did(
    obs: Sequence[PanelObservation],
    se_type: str = "clustered",
    method: str = "within",
    n_pairs: int | None = None,
    outcome_kind: str = "",
    comparison: str = "",
) -> DIDEstimate:
    """beta_1 on Treat x Post with scientist and relative-year fixed effects."""
    if not obs:
        raise DegenerateFitError("empty panel")
    y, unit, time, treat, post, w, cluster = _arrays(obs)
    if n_pairs is None:
        n_pairs = len({o.scientist_id for o in obs if o.treat})
    flags = []
    if np.ptp(y) == 0:
        flags.append("zero_variance")
        return DIDEstimate(0.0, 0.0, float("nan"), len(obs), n_pairs, float("nan"),
                           outcome_kind, comparison, se_type, flags)
    fit = fe_wls(y, treat * post, unit, time, w, cluster, se_type, method, ["treat_x_post"])
    se = float(math.sqrt(fit.vcov[0, 0])) if fit.vcov[0, 0] >= 0 else float("nan")
    beta = float(fit.beta[0])
    return DIDEstimate(beta, se, _pvalue(beta, se), fit.n_obs, n_pairs, fit.r2,
                       outcome_kind, comparison, se_type, flags + fit.flags)


def event_study(
    obs: Sequence[PanelObservation],
    horizons: Sequence[int] = tuple(range(1, 10)),
    se_type: str = "clustered",
    method: str = "within",
    n_pairs: int | None = None,
) -> EventStudyEstimate:
    """One Treat x 1[t = T] coefficient per post-move horizon T."""
    if not obs:
        raise DegenerateFitError("empty panel")
    y, unit, time, treat, post, w, cluster = _arrays(obs)
    if n_pairs is None:
        n_pairs = len({o.scientist_id for o in obs if o.treat})
    present, cols, flags = [], [], []
    for T in horizons:
        col = treat * (time == T)
        if col.any():
            present.append(T)
            cols.append(col)
        else:
            flags.append(f"gap:{T}")
    if not cols:
        raise DegenerateFitError("no treated observations at any horizon")
    fit = fe_wls(y, np.column_stack(cols), unit, time, w, cluster, se_type, method,
                 [f"treat_x_post{T}" for T in present])
    by_T = {}
    for j, T in enumerate(present):
        se = float(math.sqrt(max(fit.vcov[j, j], 0.0)))
        b = float(fit.beta[j])
        by_T[T] = HorizonEffect(T, b, se, _pvalue(b, se))
    effects = [by_T.get(T, HorizonEffect(T, None, None, None)) for T in horizons]
    return EventStudyEstimate(effects, fit.n_obs, n_pairs, fit.r2, flags + fit.flags)

"""Synthetic-control weights: least squares over the probability simplex."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SCMError(ValueError):
    pass


@dataclass
class SCMWeights:
    treated_id: str
    donor_ids: list[str]
    weights: np.ndarray
    pre_rmspe: float
    outcome_kind: str = "publications"
    converged: bool = True
    n_iter: int = 0
    objective: float = 0.0
    flags: list[str] = field(default_factory=list)

    def counterfactual(self, donor_series: np.ndarray) -> np.ndarray:
        """Weighted donor average; ``donor_series`` is (periods, donors)."""
        return np.asarray(donor_series, dtype=float) @ self.weights


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} (sort-based)."""
    v = np.asarray(v, dtype=float)
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, n + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _objective(X, x, w):
    r = x - X @ w
    return float(r @ r)


def _polish(X, x, w, support_tol=1e-9):
    """Re-solve the equality-constrained problem on the current support exactly."""
    S = np.nonzero(w > support_tol)[0]
    if S.size == 0:
        return None
    XS = X[:, S]
    k = S.size
    # KKT system for min |x - XS a|^2 s.t. 1'a = 1
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = 2.0 * XS.T @ XS
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.concatenate([2.0 * XS.T @ x, [1.0]])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    a = sol[:k]
    if np.any(a < -1e-12) or not np.isfinite(a).all():
        return None
    a = np.clip(a, 0.0, None)
    a /= a.sum()
    out = np.zeros_like(w)
    out[S] = a
    return out


def simplex_lsq(
    X: np.ndarray, x: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000
) -> tuple[np.ndarray, bool, int]:
    """Minimise ``|x - X w|^2`` over the simplex.

    Monotone accelerated projected gradient, stopped when the objective
    improves by less than ``tol`` or after ``max_iter`` steps, followed by an
    exact solve on the identified support. Returns ``(w, converged, n_iter)``.
    """
    X = np.asarray(X, dtype=float)
    x = np.asarray(x, dtype=float)
    J = X.shape[1]
    if J == 1:
        return np.ones(1), True, 0
    G = X.T @ X
    b = X.T @ x
    L = 2.0 * np.linalg.eigvalsh(G)[-1]
    if L <= 0:
        return np.full(J, 1.0 / J), True, 0
    step = 1.0 / L

    def f(w):
        return float(w @ G @ w - 2.0 * b @ w)  # objective minus the constant |x|^2

    w = np.full(J, 1.0 / J)
    fw = f(w)
    z, t = w.copy(), 1.0
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        cand = project_simplex(z - step * 2.0 * (G @ z - b))
        fc = f(cand)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if fc <= fw:
            improvement = fw - fc
            z = cand + ((t - 1.0) / t_next) * (cand - w)
            w, fw = cand, fc
        else:
            # keep the iterate, restart momentum
            improvement = 0.0
            z, t_next = w.copy(), 1.0
        t = t_next
        if 0.0 <= improvement < tol and n_iter > 1 and fc <= fw:
            converged = True
            break

    polished = _polish(X, x, w)
    if polished is not None and _objective(X, x, polished) <= _objective(X, x, w):
        w = polished
    return w, converged, n_iter


def scm_fit(
    treated_series,
    donor_series,
    predictors: tuple | None = None,
    treated_id: str = "",
    donor_ids: list[str] | None = None,
    outcome_kind: str = "publications",
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> SCMWeights:
    """Fit donor weights for one treated unit.

    Parameters
    ----------
    treated_series : array (T,)
        Treated unit's pre-period outcome series.
    donor_series : array (T, J)
        Donor outcome series, one column per donor.
    predictors : (x_treated (K,), X_donors (K, J)), optional
        Matching predictors with uniform importance. Defaults to the outcome
        series themselves.

    ``pre_rmspe`` is always measured on the outcome series.
    """
    y = np.asarray(treated_series, dtype=float).ravel()
    Y = np.asarray(donor_series, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    if Y.shape[1] == 0:
        raise SCMError("scm_fit needs at least one donor")
    if Y.shape[0] != y.size:
        raise SCMError("treated and donor series differ in length")
    if predictors is None:
        x, X = y, Y
    else:
        x = np.asarray(predictors[0], dtype=float).ravel()
        X = np.asarray(predictors[1], dtype=float)
        if X.shape != (x.size, Y.shape[1]):
            raise SCMError("predictor matrix shape does not match donors")
    if not (np.isfinite(X).all() and np.isfinite(x).all()):
        raise SCMError("non-finite predictor values")

    w, converged, n_iter = simplex_lsq(X, x, tol=tol, max_iter=max_iter)
    resid = y - Y @ w
    flags = [] if converged else ["not_converged"]
    return SCMWeights(
        treated_id=treated_id,
        donor_ids=list(donor_ids) if donor_ids is not None else [str(j) for j in range(Y.shape[1])],
        weights=w,
        pre_rmspe=float(np.sqrt(np.mean(resid ** 2))),
        outcome_kind=outcome_kind,
        converged=converged,
        n_iter=n_iter,
        objective=_objective(X, x, w),
        flags=flags,
    )

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from talentmob.econometrics.did import DegenerateFitError, event_study, twfe_did
from talentmob.econometrics.logit import (
    LogitDesignRow,
    SeparationError,
    build_design,
    fit_matrix,
    irls,
    logit_fit,
    margins,
)
from talentmob.econometrics.panel import PanelObservation, build_did_panel
from talentmob.matching.refine import MatchedEntry, MatchedSet
from talentmob.synthgen import did_panel
from conftest import make_panel


def arrays(obs):
    return (np.array([o.y for o in obs]), np.array([o.treat * o.post for o in obs], dtype=float),
            [o.scientist_id for o in obs], [o.t for o in obs], np.array([o.weight for o in obs]))


# -- DID -----------------------------------------------------------------------

@pytest.mark.parametrize("weighted", [False, True])
def test_noiseless_did_recovers_planted_effect(weighted):
    obs = did_panel(effect=2.0, weighted=weighted, seed=1)
    within = twfe_did(obs, method="within")
    dummy = twfe_did(obs, method="dummy")
    assert abs(within.beta1 - 2.0) < 1e-8
    assert abs(within.beta1 - dummy.beta1) < 1e-8


def test_clustered_se_matches_direct_sandwich():
    obs = did_panel(effect=1.0, sigma=1.0, seed=4, weighted=True, n_treated=8, n_controls=9)
    y, d, unit, time, w = arrays(obs)
    # explicit dummies, intercept via unit dummies
    units, u = np.unique(unit, return_inverse=True)
    times, t = np.unique(time, return_inverse=True)
    X = np.column_stack([d, np.eye(len(times))[t][:, 1:], np.eye(len(units))[u]])
    W = np.diag(w)
    bread = np.linalg.inv(X.T @ W @ X)
    beta = bread @ X.T @ W @ y
    e = y - X @ beta
    meat = np.zeros_like(bread)
    for g in range(len(units)):
        s = (X[u == g] * (w[u == g] * e[u == g])[:, None]).sum(axis=0)
        meat += np.outer(s, s)
    G, N = len(units), len(y)
    K = 1 + len(times)  # unit effects are nested in the clusters
    V = bread @ meat @ bread * G / (G - 1) * (N - 1) / (N - K)
    for method in ("within", "dummy"):
        est = twfe_did(obs, method=method)
        assert est.beta1 == pytest.approx(beta[0], abs=1e-10)
        assert est.se == pytest.approx(math.sqrt(V[0, 0]), rel=1e-8)


def test_classical_and_robust_routes_agree_between_methods():
    obs = did_panel(effect=0.5, sigma=1.0, seed=9)
    for se in ("classical", "robust", "clustered"):
        a, b = twfe_did(obs, se, "within"), twfe_did(obs, se, "dummy")
        assert a.se == pytest.approx(b.se, rel=1e-8)


def test_r2_is_full_dummy_fit():
    obs = did_panel(effect=1.0, sigma=1.0, seed=2)
    y, d, unit, time, w = arrays(obs)
    units, u = np.unique(unit, return_inverse=True)
    times, t = np.unique(time, return_inverse=True)
    X = np.column_stack([d, np.eye(len(times))[t][:, 1:], np.eye(len(units))[u]])
    e = y - X @ np.linalg.lstsq(X, y, rcond=None)[0]
    r2 = 1 - e @ e / np.sum((y - y.mean()) ** 2)
    assert twfe_did(obs).r2 == pytest.approx(r2, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.floats(-50, 50), st.floats(-50, 50))
def test_fixed_effect_shifts_are_absorbed(seed, unit_shift, year_shift):
    obs = did_panel(effect=1.3, sigma=1.0, seed=seed, n_treated=5, n_controls=6)
    base = twfe_did(obs).beta1
    shifted = [PanelObservation(o.scientist_id, o.t,
                                o.y + (unit_shift if o.scientist_id.endswith("1") else 0.0) + year_shift * o.t,
                                o.treat, o.post, o.weight) for o in obs]
    assert twfe_did(shifted).beta1 == pytest.approx(base, abs=1e-8)


def test_clustered_exceeds_classical_with_serial_correlation():
    obs = did_panel(effect=1.0, sigma=1.0, seed=0, ar=0.8)
    assert twfe_did(obs, "clustered").se > twfe_did(obs, "classical").se


def test_zero_outcomes_flagged():
    obs = [PanelObservation(o.scientist_id, o.t, 0.0, o.treat, o.post) for o in did_panel(n_treated=2, n_controls=2)]
    est = twfe_did(obs)
    assert est.beta1 == 0.0 and est.flags == ["zero_variance"]


def test_degenerate_designs_name_the_dimension():
    obs = did_panel(n_treated=1, n_controls=0)
    with pytest.raises(DegenerateFitError, match="scientist"):
        twfe_did(obs)
    # everyone treated: Treat x Post is a period effect
    obs = did_panel(n_treated=3, n_controls=0)
    with pytest.raises(DegenerateFitError, match="collinear"):
        twfe_did(obs)
    one_period = [o for o in did_panel() if o.t == 2]
    with pytest.raises(DegenerateFitError, match="period"):
        twfe_did(one_period)


def test_event_study_ramp_and_constant():
    ramp = {T: 0.5 * T for T in range(1, 10)}
    es = event_study(did_panel(effect=ramp, seed=5, weighted=True))
    assert all(abs(es.betas()[T] - 0.5 * T) < 1e-8 for T in range(1, 10))
    es = event_study(did_panel(effect=1.0, seed=6))
    assert all(abs(b - 1) < 1e-8 for b in es.betas().values())


def test_event_study_gap_is_flagged():
    obs = [o for o in did_panel(effect=1.0, seed=7) if not (o.treat and o.t == 5)]
    es = event_study(obs)
    assert "gap:5" in es.flags and es.betas()[5] is None
    assert abs(es.betas()[4] - 1) < 1e-8


def test_panel_rows_pass_weights_through():
    years = range(2000, 2021)
    panels = {a: make_panel(a, {y: i + 1 for y in years}) for i, a in enumerate(["T", "A", "B"])}
    ms = MatchedSet("scm", "publications", "unmoved", [MatchedEntry("T", 2010, [("A", 0.4), ("B", 0.6)])])
    dp = build_did_panel(ms, panels)
    for t in range(-4, 10):
        rows = sorted((o.scientist_id, o.weight) for o in dp.rows if o.t == t)
        assert rows == [("A@T", 0.4), ("B@T", 0.6), ("T", 1.0)]
    short = build_did_panel(ms, panels, horizon=2015)
    assert max(o.t for o in short.rows) == 5 and short.flags["T"] == ["truncated_at_t5"]


def test_citations_enter_as_log1p():
    p = make_panel("T", {2010: 1}, cites={2006: 0, 2007: 9})
    q = make_panel("A", {2010: 1})
    ms = MatchedSet("scm", "citations", "unmoved", [MatchedEntry("T", 2010, [("A", 1.0)])])
    dp = build_did_panel(ms, {"T": p, "A": q})
    ys = {o.t: o.y for o in dp.rows if o.scientist_id == "T"}
    assert ys[-3] == pytest.approx(math.log(10)) and ys[-4] == 0.0


# -- logit ---------------------------------------------------------------------

def newton_oracle(X, y, iters=200):
    """Plain Newton-Raphson on the log-likelihood with the full dense Hessian."""
    b = np.zeros(X.shape[1])
    for _ in range(iters):
        p = 1.0 / (1.0 + np.exp(-(X @ b)))
        grad = X.T @ (y - p)
        hess = -(X.T * (p * (1 - p))) @ X
        step = np.linalg.solve(hess, grad)
        b = b - step
        if np.max(np.abs(step)) < 1e-14:
            break
    return b


def noisy_design(seed, n=None, k=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(40, 200))
    k = k or int(rng.integers(1, 5))
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k))])
    true = rng.normal(scale=0.8, size=k + 1)
    y = (rng.random(n) < 1 / (1 + np.exp(-(X @ true)))).astype(float)
    return X, y


def test_eight_row_fixture_against_newton():
    X = np.column_stack([np.ones(8), [0.1, 0.4, 0.2, 0.9, 0.5, 0.3, 0.8, 0.7], [1, 0, 1, 0, 1, 1, 0, 0]])
    y = np.array([0, 0, 1, 1, 0, 1, 1, 0], dtype=float)
    est = fit_matrix(X, y, ["const", "x", "z"])
    assert np.allclose(est.beta, newton_oracle(X, y), atol=1e-8, rtol=0)


@pytest.mark.parametrize("seed", range(20))
def test_irls_matches_newton_and_is_monotone(seed):
    X, y = noisy_design(seed)
    beta, path, converged, _ = irls(X, y)
    assert converged
    assert np.allclose(beta, newton_oracle(X, y), atol=1e-8, rtol=0)
    assert all(b >= a for a, b in zip(path, path[1:]))


def test_zero_predictors_give_half():
    X = np.column_stack([np.ones(6), np.zeros(6)])
    y = np.array([0, 1, 0, 1, 0, 1], dtype=float)
    beta, *_ = irls(X, y)
    assert np.allclose(beta, 0) and np.allclose(1 / (1 + np.exp(-(X @ beta))), 0.5)


def rows_from(seed, n=120, separate=False):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        d = rng.random(4)
        eta = 2 * d[0] - 1 + 0.3 * rng.normal()
        label = int(d[0] > 0.5) if separate else int(rng.random() < 1 / (1 + math.exp(-eta)))
        out.append(LogitDesignRow(label, *d, y0=2000 + i % 5, y_w=2011 + i % 2,
                                  discipline="bio" if i % 4 else "chem", group=("G_w", "G_1", "G_2")[i % 3]))
    return out


def test_separation_names_predictor():
    with pytest.raises(SeparationError) as info:
        logit_fit(rows_from(0, separate=True))
    assert info.value.predictor == "d_a"


def test_one_class_rejected():
    rows = rows_from(1)
    for r in rows:
        r.label = 1
    with pytest.raises(ValueError, match="outcome class"):
        logit_fit(rows)


def test_rare_levels_collapse_and_reference_coding():
    rows = rows_from(2)
    rows[0].discipline = "math"
    d = build_design(rows)
    assert d.collapsed == {"discipline": ["math"]}
    assert "discipline[other]" in d.names and "discipline[bio]" not in d.names
    assert [n for n in d.names if n.startswith("group")] == ["group[G_2]", "group[G_w]"]
    # a single-row level cannot be estimated; the fit reports it by name
    with pytest.raises(SeparationError, match="discipline"):
        logit_fit(rows)
    est = logit_fit(rows_from(2))
    assert "discipline[chem]" in est.names and "group[G_w]" in est.names
    assert est.coef("d_a") > 0
    assert 0 < est.pseudo_r2 < 1


def test_margins_examples():
    X = np.column_stack([np.ones(4)])
    est = fit_matrix(X, np.array([0, 1, 0, 1.0]), ["const"])
    assert all(m.probability == pytest.approx(0.5) for m in margins(est, "const", [0, 1]))
    est = logit_fit(rows_from(3))
    grid = np.linspace(0, 1, 11)
    probs = [m.probability for m in margins(est, "d_a", grid)]
    assert all(b >= a for a, b in zip(probs, probs[1:]))
    pts = margins(est, "d_a", [-1.0, 0.5, 2.0])
    assert [p.extrapolated for p in pts] == [True, False, True]
    assert all(p.ci_lo <= p.probability <= p.ci_hi for p in pts)
    with pytest.raises(KeyError):
        margins(est, "nope", [0])


def test_margins_single_predictor_at_zero():
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    y = (rng.random(200) < 1 / (1 + np.exp(-x))).astype(float)
    est = fit_matrix(np.column_stack([np.ones(200), x]), y, ["const", "x"])
    est.beta = np.array([0.0, 1.0])
    (m,) = margins(est, "x", [0.0])
    assert m.probability == 0.5


def test_categorical_margins():
    est = logit_fit(rows_from(4))
    pts = margins(est, "group", ["G_1", "G_2", "G_w", "G_9"])
    assert [p.extrapolated for p in pts] == [False, False, False, True]

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_panel
from talentmob.matching.balance import balance_table, group_difference, write_balance_csv
from talentmob.matching.cem import cem_match, cutpoint_coarsener, log2_coarsen
from talentmob.matching.dom import dom_distance, dom_match, nearest_candidates
from talentmob.matching.exact import MOVED, UNMOVED, Tolerances, exact_match, log2_bin, pre_totals
from talentmob.matching.refine import (
    MatchedEntry,
    MatchedSet,
    exact_stage,
    refine_cem,
    refine_dom,
    refine_scm,
)
from talentmob.matching.scm import SCMError, project_simplex, scm_fit, simplex_lsq


# -- SCM -----------------------------------------------------------------------

def support_enumeration(X, x):
    """Global minimum of |x - Xw|^2 on the simplex by trying every support."""
    J = X.shape[1]
    best = math.inf
    for k in range(1, J + 1):
        for S in itertools.combinations(range(J), k):
            XS = X[:, S]
            kkt = np.zeros((k + 1, k + 1))
            kkt[:k, :k] = 2 * XS.T @ XS
            kkt[:k, k] = kkt[k, :k] = 1
            sol, *_ = np.linalg.lstsq(kkt, np.r_[2 * XS.T @ x, 1.0], rcond=None)
            a = sol[:k]
            if np.all(a >= -1e-12):
                r = x - XS @ a
                best = min(best, float(r @ r))
    return best


def test_projection_examples():
    assert np.allclose(project_simplex([0.2, 0.3, 0.5]), [0.2, 0.3, 0.5])
    assert np.allclose(project_simplex([2.0, 0.0]), [1.0, 0.0])
    assert np.allclose(project_simplex([1.0, 1.0, 1.0, 1.0]), [0.25] * 4)


def test_single_series_prefers_closer_donor():
    fit = scm_fit([3, 3, 3], [[0, 9]] * 3)
    assert np.allclose(fit.weights, [2 / 3, 1 / 3])
    fit = scm_fit([10, 10], [[0, 4], [0, 4]])
    assert np.allclose(fit.weights, [0, 1])
    assert fit.pre_rmspe == pytest.approx(6.0)


def test_rmspe_recomputed_from_donors():
    rng = np.random.default_rng(0)
    Y = rng.normal(size=(5, 4))
    y = rng.normal(size=5)
    fit = scm_fit(y, Y)
    assert fit.pre_rmspe == pytest.approx(float(np.sqrt(np.mean((y - fit.counterfactual(Y)) ** 2))), abs=1e-14)


def test_scm_errors():
    with pytest.raises(SCMError):
        scm_fit([1, 2], np.zeros((2, 0)))
    with pytest.raises(SCMError):
        scm_fit([1, 2], np.zeros((3, 2)))
    with pytest.raises(SCMError):
        scm_fit([1, 2], [[np.nan, 1], [1, 1]])


@pytest.mark.parametrize("seed", range(25))
def test_simplex_lsq_matches_support_enumeration(seed):
    rng = np.random.default_rng(seed)
    T, J = rng.integers(2, 7), rng.integers(2, 7)
    X = rng.normal(size=(T, J))
    x = rng.normal(size=T) * 2
    w, _, _ = simplex_lsq(X, x)
    r = x - X @ w
    assert float(r @ r) <= support_enumeration(X, x) + 1e-9


def test_predictors_drive_the_fit():
    y = np.array([1.0, 2.0, 3.0])
    Y = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
    fit = scm_fit(y, Y, predictors=(np.array([5.0]), np.array([[0.0, 5.0]])))
    assert np.allclose(fit.weights, [0, 1])
    assert fit.pre_rmspe > 1


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_weights_on_simplex(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(rng.integers(1, 8), rng.integers(1, 12)))
    w, _, _ = simplex_lsq(X, rng.normal(size=X.shape[0]))
    assert w.min() >= -1e-12 and abs(w.sum() - 1) < 1e-9


# -- exact step ------------------------------------------------------------------

def test_log2_bins():
    assert [log2_bin(v) for v in (0, 1, 2, 3, 6, 7, 14, 15)] == [0, 1, 1, 2, 2, 3, 3, 4]


def counts_panel(aid, y0, per_year, cites_per_year=0, last=2020, discipline="D"):
    pubs = {y: per_year for y in range(y0, last + 1)}
    cites = {y: cites_per_year for y in range(y0, last + 1)}
    return make_panel(aid, pubs, cites, discipline=discipline)


def test_exact_filters():
    t = counts_panel("T", 2003, 3, 10)
    pool = {
        "ok": counts_panel("ok", 2004, 3, 10),
        "other_field": counts_panel("other_field", 2003, 3, 10, discipline="E"),
        "too_early": counts_panel("too_early", 2001, 3, 10),
        "more_pubs": counts_panel("more_pubs", 2003, 7, 10),
        "short": counts_panel("short", 2003, 3, 10, last=2012),
        "T": t,
    }
    out = exact_match(t, 2012, pool, UNMOVED)
    assert out.contenders == ["ok"]
    assert pre_totals(t, 2012) == (15, 50)
    moved = exact_match(t, 2012, pool, MOVED, pool_y_w={"ok": 2014, "more_pubs": 2012})
    assert moved.contenders == [] and moved.flags == ["empty_pool"]
    moved = exact_match(t, 2012, pool, MOVED, pool_y_w={"ok": 2013})
    assert moved.contenders == ["ok"]


def test_pre_totals_use_treated_move_year():
    t = counts_panel("T", 2003, 2)
    c = make_panel("c", {y: (2 if y < 2010 else 40) for y in range(2003, 2021)}, discipline="D")
    # contender moved in 2010 but is compared on the talent's window 2007..2011
    assert pre_totals(c, 2012) == (2 + 2 + 2 + 40 + 40, 0)
    assert exact_match(t, 2012, {"c": c}, MOVED, {"c": 2011}).contenders == []


def test_cap_sampling_is_seeded_and_nested():
    t = counts_panel("T", 2003, 3)
    pool = {f"c{i:03d}": counts_panel(f"c{i:03d}", 2003, 3) for i in range(50)}
    a = exact_match(t, 2012, pool, UNMOVED, cap=10, seed=5)
    b = exact_match(t, 2012, pool, UNMOVED, cap=10, seed=5)
    c = exact_match(t, 2012, pool, UNMOVED, cap=20, seed=5)
    assert a.contenders == b.contenders and len(a.contenders) == 10 and a.caps_applied
    assert set(a.contenders) <= set(c.contenders)
    assert a.n_survivors == 50
    assert exact_match(t, 2012, pool, UNMOVED, cap=10, seed=6).contenders != a.contenders
    assert len(exact_match(t, 2012, pool, UNMOVED).contenders) == 50


def test_default_caps():
    t = counts_panel("T", 2003, 3)
    pool = {f"c{i:03d}": counts_panel(f"c{i:03d}", 2003, 3) for i in range(320)}
    assert len(exact_match(t, 2012, pool, UNMOVED).contenders) == 300
    ys = {k: 2012 for k in pool}
    assert len(exact_match(t, 2012, pool, MOVED, ys).contenders) == 200


def test_tolerances_configurable():
    t = counts_panel("T", 2003, 3)
    pool = {"c": counts_panel("c", 2005, 3)}
    assert exact_match(t, 2012, pool, UNMOVED).contenders == []
    assert exact_match(t, 2012, pool, UNMOVED, tol=Tolerances(y0=2)).contenders == ["c"]


# -- CEM -------------------------------------------------------------------------

def test_cem_six_unit_fixture():
    # m_T = 2, m_C = 4; strata (T1; C1, C2, C3) and (T2; C4)
    coarsen = cutpoint_coarsener([10, 20])
    sol = cem_match({"T1": [5], "T2": [15]}, {"C1": [1], "C2": [9], "C3": [3], "C4": [12]}, coarsen)
    assert sol.strata == {(0,): (["T1"], ["C1", "C2", "C3"]), (1,): (["T2"], ["C4"])}
    assert sol.pruned_strata == 0 and sol.retained == {"T1", "T2", "C1", "C2", "C3", "C4"}
    # (2/4)(1/3) and (2/4)(1/1)
    assert sol.weights == pytest.approx({"T1": 1.0, "T2": 1.0, "C1": 1 / 6, "C2": 1 / 6, "C3": 1 / 6, "C4": 0.5},
                                        abs=1e-15)


def test_cem_prunes_treated_only_strata():
    coarsen = cutpoint_coarsener([10, 20])
    treated = {"T1": [5], "T2": [15], "T3": [25]}
    controls = {"C1": [1], "C2": [9], "C3": [12]}
    sol = cem_match(treated, controls, coarsen)
    assert sol.strata == {(0,): (["T1"], ["C1", "C2"]), (1,): (["T2"], ["C3"])}
    assert sol.pruned_strata == 1 and "T3" not in sol.retained
    # m_T = 2, m_C = 3 after pruning
    assert sol.weights == pytest.approx({"T1": 1.0, "T2": 1.0, "C1": 1 / 3, "C2": 1 / 3, "C3": 2 / 3}, abs=1e-15)


def test_cem_prunes_control_only_strata():
    sol = cem_match({"T": [1]}, {"A": [1], "B": [100]}, log2_coarsen)
    assert sol.retained == {"T", "A"} and sol.pruned_strata == 1
    assert sol.weights["A"] == 1.0 and "B" not in sol.weights


def test_cem_overlap_and_empty():
    with pytest.raises(ValueError):
        cem_match({"x": [1]}, {"x": [1]})
    sol = cem_match({"T": [1]}, {"A": [100]})
    assert sol.flags == ["all_strata_pruned"] and not sol.retained


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.text("TU", min_size=2, max_size=3), st.lists(st.integers(0, 40), min_size=2, max_size=2),
                       max_size=8),
       st.dictionaries(st.text("CD", min_size=2, max_size=3), st.lists(st.integers(0, 40), min_size=2, max_size=2),
                       max_size=12))
def test_cem_strata_properties(treated, controls):
    sol = cem_match(treated, controls, log2_coarsen)
    for sig, (ts, cs) in sol.strata.items():
        assert ts and cs
        assert all(log2_coarsen(treated[u]) == sig for u in ts)
        assert all(log2_coarsen(controls[u]) == sig for u in cs)
    # every pruned unit sits in a stratum lacking the other group
    t_sigs = {log2_coarsen(v) for v in treated.values()}
    c_sigs = {log2_coarsen(v) for v in controls.values()}
    for u, v in treated.items():
        assert (u in sol.retained) == (log2_coarsen(v) in c_sigs)
    for u, v in controls.items():
        assert (u in sol.retained) == (log2_coarsen(v) in t_sigs)
    if sol.strata:
        m_t = sum(len(t) for t, _ in sol.strata.values())
        m_c = sum(len(c) for _, c in sol.strata.values())
        assert sum(w for u, w in sol.weights.items() if u in controls) == pytest.approx(m_t * m_t / m_c)
        assert sol.n_treated == m_t


# -- DOM -------------------------------------------------------------------------

def dom_bruteforce(cost):
    """Max-cardinality then min-cost matching by enumerating injective assignments."""
    n_t, n_c = cost.shape
    best = (-1, math.inf)
    options = list(range(n_c)) + [None] * n_t
    for perm in itertools.permutations(options, n_t):
        used = [j for j in perm if j is not None]
        if len(used) != len(set(used)):
            continue
        if any(j is not None and not np.isfinite(cost[i, j]) for i, j in enumerate(perm)):
            continue
        card = len(used)
        total = sum(cost[i, j] for i, j in enumerate(perm) if j is not None)
        if card > best[0] or (card == best[0] and total < best[1]):
            best = (card, total)
    return best


def to_candidates(cost):
    return {f"t{i}": {f"c{j}": float(cost[i, j]) for j in range(cost.shape[1]) if np.isfinite(cost[i, j])}
            for i in range(cost.shape[0])}


@pytest.mark.parametrize("seed", range(40))
def test_dom_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    n_t, n_c = rng.integers(1, 6), rng.integers(1, 6)
    cost = rng.integers(0, 50, size=(n_t, n_c)).astype(float)
    cost[rng.random((n_t, n_c)) < 0.3] = np.inf
    sol = dom_match(to_candidates(cost))
    card, total = dom_bruteforce(cost)
    assert len(sol.pairs) == card
    assert sol.total_distance == total
    assert len({c for _, c, _ in sol.pairs}) == len(sol.pairs)


def test_dom_distance_hand_values():
    zero = np.zeros((2, 5))
    one = np.ones((2, 5))
    assert dom_distance(zero, zero) == 0.0
    assert dom_distance(zero, one) == pytest.approx(10 * math.log(2) ** 2 / 12, abs=1e-12)
    a = np.array([[1, 2, 3, 4, 5], [0, 0, 10, 0, 3]])
    b = np.array([[1, 2, 3, 4, 6], [0, 1, 10, 0, 3]])
    hand = (math.log(7) - math.log(6)) ** 2 + (math.log(2) - math.log(1)) ** 2
    assert dom_distance(a, b) == pytest.approx(hand / 12, abs=1e-12)
    assert dom_distance(a, b) == dom_distance(b, a)
    with pytest.raises(ValueError):
        dom_distance(zero, np.zeros((2, 4)))


def test_nearest_candidates_ties_by_id():
    d = {"b": 1.0, "a": 1.0, "c": 0.5, "d": 3.0}
    assert list(nearest_candidates(d, 3)) == ["c", "a", "b"]


def test_dom_prefers_more_pairs_over_cheaper_total():
    # t0 can take c0 (cost 0) or c1 (cost 10); t1 can only take c0
    cand = {"t0": {"c0": 0.0, "c1": 10.0}, "t1": {"c0": 5.0}}
    sol = dom_match(cand)
    assert sorted((t, c) for t, c, _ in sol.pairs) == [("t0", "c1"), ("t1", "c0")]


def test_dom_reports_unmatched():
    sol = dom_match({"t0": {"c0": 1.0}, "t1": {"c0": 2.0}})
    assert sol.unmatched_treated == ["t1"] and sol.pairs == [("t0", "c0", 1.0)]


def test_dom_pool_of_k():
    cand = {"t0": {f"c{i}": float(i) for i in range(50)}}
    assert dom_match(cand, k=40).pairs == [("t0", "c0", 0.0)]
    # the k nearest limit is what makes a shared favourite unavailable
    cand = {"t0": {"c0": 0.0, "c1": 1.0}, "t1": {"c0": 0.0, "c2": 5.0}}
    assert len(dom_match(cand, k=1).pairs) == 1


# -- refiners and balance -----------------------------------------------------------

def world():
    """Talent T (move 2012) plus four contenders; D1/D2 average exactly to T."""
    years = range(2003, 2021)
    t_p = {y: 4 + (y % 3) for y in years}
    t_c = {y: 20 + (y % 4) for y in years}
    bump = {2008: 1, 2009: -1, 2010: 1, 2011: -1}
    panels = {
        "T": make_panel("T", t_p, t_c),
        "D1": make_panel("D1", {y: t_p[y] + bump.get(y, 0) for y in years}, t_c),
        "D2": make_panel("D2", {y: t_p[y] - bump.get(y, 0) for y in years}, t_c),
        "F": make_panel("F", {y: t_p[y] + 1 for y in years}, {y: 2 * t_c[y] for y in years}),
        "G": make_panel("G", {y: t_p[y] + 2 for y in years}, {y: t_c[y] + 9 for y in years}),
    }
    return panels


def test_refine_scm_recovers_planted_pair():
    from talentmob.matching.exact import CandidatePool

    panels = world()
    pool = CandidatePool("T", 2012, ["D1", "D2", "F", "G"], UNMOVED)
    ms = refine_scm([pool], panels, "publications")
    (e,) = ms.entries
    w = dict(e.controls)
    assert set(w) == {"D1", "D2"}
    assert w["D1"] == pytest.approx(0.5, abs=1e-6) and e.pre_rmspe < 1e-9


def test_scm_quality_gate_drops_bad_fits():
    from talentmob.matching.exact import CandidatePool

    panels = world()
    pool = CandidatePool("T", 2012, ["G"], UNMOVED)
    ms = refine_scm([pool], panels, "publications")
    assert ms.entries == [] and ms.failures["quality_gate"] == 1
    ms = refine_scm([CandidatePool("T", 2012, [], UNMOVED)], panels, "publications")
    assert ms.failures["empty_pool"] == 1


def test_refine_dom_and_cem_use_real_ids():
    from talentmob.matching.exact import CandidatePool

    panels = world()
    pool = CandidatePool("T", 2012, ["D1", "D2", "F", "G"], UNMOVED)
    dom = refine_dom([pool], panels, "citations")
    (e,) = dom.entries
    assert e.controls[0][0] in {"D1", "D2"} and e.controls[0][1] == 1.0
    cem = refine_cem([pool], panels, "publications")
    (e,) = cem.entries
    assert {c for c, _ in e.controls} <= {"D1", "D2", "F", "G"}
    assert sum(w for _, w in e.controls) == pytest.approx(1.0)


def test_exact_stage_weights_and_roundtrip(tmp_path):
    from talentmob.matching.exact import CandidatePool

    pools = [CandidatePool("T", 2012, ["a", "b", "c", "d"], MOVED), CandidatePool("U", 2013, [], MOVED)]
    ms = exact_stage(pools, "publications")
    assert [(e.treated_id, e.controls) for e in ms.entries] == [
        ("T", [("a", 0.25), ("b", 0.25), ("c", 0.25), ("d", 0.25)])]
    ms.to_jsonl(tmp_path / "m.jsonl")
    back = MatchedSet.from_jsonl(tmp_path / "m.jsonl")
    assert (back.method, back.outcome_kind, back.pool_kind) == ("exact", "publications", MOVED)
    assert back.entries[0].controls == ms.entries[0].controls


def test_group_difference_matches_weighted_means():
    rng = np.random.default_rng(4)
    y = rng.normal(size=30)
    g = (np.arange(30) < 10).astype(float)
    w = np.where(g == 1, 1.0, rng.uniform(0.1, 2, 30))
    coef, se, p = group_difference(y, g, w)
    direct = np.average(y[g == 1], weights=w[g == 1]) - np.average(y[g == 0], weights=w[g == 0])
    assert coef == pytest.approx(direct, abs=1e-12)
    assert se > 0 and 0 <= p <= 1


def test_balance_table_perfect_refinement(tmp_path):
    panels = world()
    refined = MatchedSet("scm", "publications", UNMOVED,
                         [MatchedEntry("T", 2012, [("D1", 0.5), ("D2", 0.5)])])
    exact = MatchedSet("exact", "publications", UNMOVED,
                       [MatchedEntry("T", 2012, [("F", 0.5), ("G", 0.5)])])
    cells = balance_table(refined, panels)
    assert [c.t for c in cells] == [-4, -3, -2, -1, 0]
    assert all(abs(c.coef) < 1e-12 for c in cells)
    assert cells[4].flags == ["zero_variance"] and cells[4].stars == ""
    ex = balance_table(exact, panels)
    assert all(c.coef == pytest.approx(-1.5) for c in ex)
    write_balance_csv(tmp_path / "b.csv", ex, cells)
    header = (tmp_path / "b.csv").read_text().splitlines()[0]
    assert header.startswith("year,coef_exact,se_exact,stars_exact,coef_refined,se_refined,stars_refined")
    with pytest.raises(ValueError):
        balance_table(MatchedSet("scm", "publications", UNMOVED, []), panels)


def test_balance_flags_planted_offset_only_where_planted():
    years = range(2003, 2021)
    rng = np.random.default_rng(12)
    panels, entries = {}, []
    for i in range(25):
        base = {y: int(rng.integers(3, 9)) for y in years}
        tid, cid = f"T{i}", f"C{i}"
        panels[tid] = make_panel(tid, {y: base[y] + (6 if y == 2012 else 0) for y in years})
        panels[cid] = make_panel(cid, base)
        entries.append(MatchedEntry(tid, 2012, [(cid, 1.0)]))
    cells = balance_table(MatchedSet("exact", "publications", UNMOVED, entries), panels)
    assert [c.stars != "" for c in cells] == [False, False, False, False, True]
    assert cells[4].coef == pytest.approx(6.0)

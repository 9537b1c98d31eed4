import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from teamsd import causal
from teamsd.pipeline import BASELINE_CONTROLS
from teamsd.synth import SynthConfig, generate_rows


def brute_greedy(ts, cs, caliper=None):
    used, pairs, unmatched = set(), [], []
    for i in sorted(range(len(ts)), key=lambda i: (-ts[i], i)):
        free = [j for j in range(len(cs)) if j not in used]
        if not free:
            unmatched.append(i)
            continue
        j = min(free, key=lambda j: (abs(ts[i] - cs[j]), cs[j], j))
        if caliper is not None and abs(special.logit(ts[i]) - special.logit(cs[j])) > caliper:
            unmatched.append(i)
            continue
        used.add(j)
        pairs.append((i, j))
    return pairs, unmatched


# -- quantiles --------------------------------------------------------------


def test_quartiles_of_eight():
    g = causal.quantile_groups(range(1, 9), 4)
    assert list(g) == [1, 1, 2, 2, 3, 3, 4, 4]


def test_deciles_equal_size():
    g = causal.quantile_groups(np.random.default_rng(0).random(100), 10)
    assert np.bincount(g)[1:].tolist() == [10] * 10


def test_tied_split_matches_stable_sort():
    values = [0.5] * 6 + [0.1, 0.9]
    ids = ["f", "e", "d", "c", "b", "a", "z", "y"]
    g = causal.quantile_groups(values, 4, ids)
    order = sorted(range(8), key=lambda i: (values[i], ids[i]))
    expect = np.empty(8, dtype=int)
    for rank, i in enumerate(order):
        expect[i] = rank * 4 // 8 + 1
    assert list(g) == list(expect)


def test_quantile_errors():
    with pytest.raises(ValueError):
        causal.quantile_groups([1.0, 2.0], 3)
    with pytest.raises(ValueError):
        causal.quantile_groups([1.0, np.nan], 2)


# -- propensity -------------------------------------------------------------


def test_scores_null_model():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((4000, 3))
    z = (rng.random(4000) < 0.3).astype(float)
    s, fit = causal.propensity_scores(X, z)
    assert fit.converged
    assert np.all((s > 0) & (s < 1))
    assert np.max(np.abs(s - 0.3)) < 0.1


def test_scores_monotone_in_confounder():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((3000, 2))
    z = (rng.random(3000) < special.expit(1.5 * X[:, 0])).astype(float)
    s, _ = causal.propensity_scores(X, z)
    order = np.argsort(X[:, 0])
    fit_on_x0 = causal.propensity_scores(X[:, :1], z)[0]
    assert np.all(np.diff(fit_on_x0[order]) >= 0)
    assert np.corrcoef(s, X[:, 0])[0, 1] > 0.9


# -- matching ---------------------------------------------------------------


def test_nearest():
    m = causal.nn_match([0.8], [0.7, 0.3])
    assert list(m.treated) == [0] and list(m.control) == [0]


def test_without_replacement():
    m = causal.nn_match([0.8, 0.6], [0.7])
    assert len(m.treated) == 1 and len(m.unmatched) == 1


def test_empty_controls():
    with pytest.raises(ValueError):
        causal.nn_match([0.5], [])


def test_matching_equals_brute_force():
    rng = np.random.default_rng(3)
    for caliper in (None, 0.05):
        ts, cs = rng.random(1000), rng.random(1000)
        m = causal.nn_match(ts, cs, caliper)
        pairs, unmatched = brute_greedy(ts, cs, caliper)
        assert list(zip(m.treated.tolist(), m.control.tolist())) == pairs
        assert sorted(m.unmatched.tolist()) == sorted(unmatched)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=25), st.lists(st.floats(0.01, 0.99), min_size=1, max_size=25))
def test_matching_properties(ts, cs):
    m = causal.nn_match(ts, cs)
    assert len(set(m.control.tolist())) == len(m.control)
    assert len(m.treated) == min(len(ts), len(cs))
    assert len(m.treated) + len(m.unmatched) == len(ts)
    assert np.allclose(m.gaps, np.abs(np.asarray(ts)[m.treated] - np.asarray(cs)[m.control]))


# -- balance and ATT --------------------------------------------------------


def test_smd_examples():
    assert causal.smd([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    # mean gap 1, both variances 4
    t = np.array([-1.0, 3.0]) + 1
    c = np.array([-1.0, 3.0])
    assert causal.smd(t, c) == pytest.approx(1 / np.sqrt(8), abs=1e-12)
    a = np.array([0.0, 2 * np.sqrt(2)])
    assert causal.smd(a + 1, a) == pytest.approx(0.5)
    assert causal.smd([1.0, 1.0], [1.0, 1.0]) is None


def test_att_zero():
    est = causal.att_estimate(np.zeros(100), n_bootstrap=200)
    assert est.att == 0 and est.ci_low <= 0 <= est.ci_high


def test_att_constant_gap():
    est = causal.att_estimate(np.full(500, 0.12), n_bootstrap=200)
    assert est.att == pytest.approx(0.12)
    assert est.ci_high - est.ci_low < 1e-12


def test_att_no_pairs():
    with pytest.raises(ValueError):
        causal.att_estimate([])


def test_bootstrap_deterministic_across_workers():
    d = np.random.default_rng(4).standard_normal(300)
    a = causal.att_estimate(d, n_bootstrap=300, seed=9, workers=1)
    b = causal.att_estimate(d, n_bootstrap=300, seed=9, workers=1)
    c = causal.att_estimate(d, n_bootstrap=300, seed=9, workers=4)
    assert a == b
    assert round(a.ci_low, 3) == round(c.ci_low, 3) and round(a.ci_high, 3) == round(c.ci_high, 3)


def psm_rows(seed, n=6000, **kw):
    cfg = SynthConfig(
        seed=seed, n_papers=n, team_size_min=6, team_size_lambda=10, team_size_max=40, fresh_prob=0.03,
        split_prob=0.5, confounder_strength=0.5, confounder_effect=0.5, noise_cd=0.3, **kw,
    )
    return generate_rows(cfg)[0]


def test_psm_pipeline_small():
    df = psm_rows(1, att_step=0.5)
    rep = causal.psm_by_quantile(df, "sd", "cd_norm", BASELINE_CONTROLS, fixed_effects=["year"], caliper_sd=0.05, n_bootstrap=200)
    assert rep.pairs["control_id"].is_unique
    assert rep.n_matched + rep.n_unmatched == rep.n_treated
    assert rep.balanced
    b = rep.balance.set_index("covariate")
    assert abs(b.loc["career_age", "smd_after"]) <= abs(b.loc["career_age", "smd_before"])
    assert abs(rep.att.att - 0.5) < 0.1
    s = rep.summary()
    assert s["label"] == "q4_vs_q1" and s["balanced"]


def test_null_sweep_covers_zero():
    df = psm_rows(2)
    reports = causal.psm_decile_sweep(df, "sd", "cd_norm", BASELINE_CONTROLS, fixed_effects=["year"], caliper_sd=0.05, n_bootstrap=300)
    assert [r.label for r in reports] == ["d1", "d2", "d3", "d4", "d5"]
    covered = sum(r.att.ci_low <= 0 <= r.att.ci_high for r in reports)
    assert covered >= 4


# -- pre/post ---------------------------------------------------------------


def prepost_frame(seed, shift=0.0):
    rng = np.random.default_rng(seed)
    n = 4000
    year = rng.integers(2010, 2014, n)
    cc = rng.poisson(2, n) + 1
    cd = rng.standard_normal(n) + shift * (year >= 2012)
    return pd.DataFrame({"year": year, "cc_count": cc, "sd": cc / (cc + rng.integers(0, 3, n)), "cd_norm": cd})


def test_prepost_identical_periods():
    df = prepost_frame(5)
    both = pd.concat([df.assign(year=2010), df.assign(year=2012)], ignore_index=True)
    rep = causal.prepost_report(both)
    s = rep.summary
    assert s["mwu_cc"]["p"] == pytest.approx(1.0)
    assert s["ttest_outcome"]["p"] == pytest.approx(1.0)
    assert s["mwu_sd"]["p"] == pytest.approx(1.0)
    assert np.allclose(rep.kde["pre"], rep.kde["post"])
    pre = rep.cc_distribution[rep.cc_distribution.period == "pre"]
    assert pre["pct"].sum() == pytest.approx(100.0)


def test_prepost_detects_shift():
    s = causal.prepost_report(prepost_frame(6, shift=0.5)).summary
    assert s["ttest_outcome"]["p"] < 0.001


def test_prepost_empty_period():
    with pytest.raises(ValueError, match="post"):
        causal.prepost_report(prepost_frame(7).query("year < 2012"))


# -- mediation --------------------------------------------------------------


def mediation_frame(seed, n=3000, a=0.5):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    c1 = rng.standard_normal(n)
    m = a * x + 0.3 * c1 + rng.standard_normal(n)
    y = 0.3 * x + 0.4 * m - 0.2 * c1 + rng.standard_normal(n)
    return pd.DataFrame({"x": x, "m": m, "y": y, "c1": c1, "g": rng.integers(0, 5, n)})


def test_mediation_identity():
    r = causal.mediation_analysis(mediation_frame(8), "x", "m", "y", ["c1"], ["g"], n_bootstrap=50)
    assert abs(r.total - (r.direct + r.a * r.b)) < 1e-6
    assert r.indirect == pytest.approx(r.a * r.b)
    assert r.a > 0 and r.b > 0 and r.indirect_ci[0] > 0


def test_mediation_null_path():
    r = causal.mediation_analysis(mediation_frame(9, a=0.0), "x", "m", "y", ["c1"], n_bootstrap=400)
    assert r.indirect_ci[0] <= 0 <= r.indirect_ci[1]
    assert r.indirect_p > 0.05


def test_mediation_zero_total_guard():
    rng = np.random.default_rng(10)
    n = 500
    x = rng.standard_normal(n)
    m = x + 0.1 * rng.standard_normal(n)
    # residual of m on x: exactly zero total effect up to rounding
    A = np.column_stack([np.ones(n), x])
    y = m - A @ np.linalg.lstsq(A, m, rcond=None)[0]
    df = pd.DataFrame({"x": x, "m": m, "y": y})
    r = causal.mediation_analysis(df, "x", "m", "y", n_bootstrap=20)
    assert r.proportion is None


def test_mediation_deterministic():
    df = mediation_frame(11)
    a = causal.mediation_analysis(df, "x", "m", "y", ["c1"], n_bootstrap=200, seed=3)
    b = causal.mediation_analysis(df, "x", "m", "y", ["c1"], n_bootstrap=200, seed=3)
    c = causal.mediation_analysis(df, "x", "m", "y", ["c1"], n_bootstrap=200, seed=3, workers=3)
    assert a.to_dict() == b.to_dict()
    assert np.round(a.indirect_ci, 3).tolist() == np.round(c.indirect_ci, 3).tolist()


def test_separated_groups_explain_failure():
    rng = np.random.default_rng(12)
    t = pd.DataFrame({"x": rng.uniform(2, 3, 50), "y": rng.standard_normal(50)})
    c = pd.DataFrame({"x": rng.uniform(0, 1, 50), "y": rng.standard_normal(50)})
    with pytest.warns(UserWarning), pytest.raises(ValueError, match="did not converge"):
        causal.psm(t, c, "y", ["x"], caliper_sd=0.05, n_bootstrap=10)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from ghicopula.errors import DimensionMismatch, HorizonMismatch
from ghicopula.scoring import (
    RULES,
    TAU_GRID,
    EvalConfig,
    ModelLosses,
    build_report,
    correlation_weights,
    crps,
    crps_weighted,
    dm_test,
    energy_score,
    energy_scores_daily,
    ensemble_quantiles,
    kappa1,
    kappa2,
    score_model,
    variogram_score,
    variogram_scores_daily,
    weekly_sums,
)


def _crps_energy_form(x, y):
    x = np.asarray(x, dtype=float)
    return np.mean(np.abs(x - y)) - 0.5 * np.mean(np.abs(x[:, None] - x[None, :]))


def test_type7_quantiles_match_numpy(rng):
    x = rng.normal(size=(57, 3))
    np.testing.assert_allclose(ensemble_quantiles(x, TAU_GRID), np.quantile(x, TAU_GRID, axis=0), atol=1e-12)


@pytest.mark.parametrize("y,x", [(5.0, 2.0), (-3.0, 10.0), (100.0, 99.0)])
def test_degenerate_ensemble(y, x):
    assert crps(np.full(50, y), x) == pytest.approx(abs(y - x), rel=0.005)


def test_observation_equal_to_members():
    assert crps(np.full(20, 3.3), 3.3) == pytest.approx(0.0, abs=1e-12)


def test_uniform_closed_form():
    u = (np.arange(100_000) + 0.5) / 100_000
    assert crps(u, 0.5) == pytest.approx(1 / 12, abs=0.002)


def test_unit_weight_recovers_crps(rng):
    x = rng.gamma(2.0, size=300)
    assert crps_weighted(x, 1.7, weight=lambda t: np.ones_like(t)) == crps(x, 1.7)


@given(seed=st.integers(0, 10_000), obs=st.floats(-3, 3))
def test_tail_weights_bounded_by_crps(seed, obs):
    x = np.random.default_rng(seed).normal(size=200)
    assert crps_weighted(x, obs, "v2") + crps_weighted(x, obs, "v3") <= crps(x, obs) + 1e-12


def test_v1_direct_summation():
    x = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    obs = 0.0
    total = 0.0
    for k in range(1, 1000):
        tau = k / 1000
        pos = tau * 4
        lo = int(np.floor(pos))
        q = x[lo] + (pos - lo) * (x[min(lo + 1, 4)] - x[lo])
        total += 2 * ((obs < q) - tau) * (q - obs) * (2 * tau - 1) ** 2 * 0.001
    assert crps_weighted(x, obs, "v1") == pytest.approx(total, rel=1e-12)


@given(seed=st.integers(0, 10_000), c=st.floats(0.01, 100))
def test_crps_homogeneity(seed, c):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=100), r.normal()
    assert crps(c * x, c * y) == pytest.approx(c * crps(x, y), rel=1e-9, abs=1e-12)


def test_crps_close_to_energy_form(rng):
    x = rng.normal(size=5000)
    assert crps(x, 0.3) == pytest.approx(_crps_energy_form(x, 0.3), rel=0.01)


def test_es_trivial_cases(rng):
    x = rng.normal(size=4)
    assert energy_score(np.tile(x, (10, 1)), x) == pytest.approx(0.0, abs=1e-12)
    member = rng.normal(size=4)
    assert energy_score(member[None, :], x) == pytest.approx(np.linalg.norm(member - x))
    with pytest.raises(DimensionMismatch):
        energy_score(rng.normal(size=(5, 3)), x)


def test_es_reduces_to_crps(rng):
    x = rng.normal(size=10_000)
    es = energy_score(x[:, None], np.array([0.4]))
    assert es == pytest.approx(crps(x, 0.4), rel=0.01)
    assert es == pytest.approx(_crps_energy_form(x, 0.4), rel=1e-9)


def test_es_shift_estimator_close_to_exact(rng):
    X = rng.normal(size=(3000, 7))
    obs = rng.normal(size=7)
    exact = energy_score(X, obs, exact_limit=10_000)
    approx = energy_score(X, obs, exact_limit=100)
    assert approx == pytest.approx(exact, rel=0.01)


def test_es_daily_matches_single(rng):
    members = rng.normal(size=(40, 5, 3))
    obs = rng.normal(size=(2, 5, 3))
    daily = energy_scores_daily(members, obs)
    for y in range(2):
        for d in range(5):
            assert daily[y, d] == pytest.approx(energy_score(members[:, d], obs[y, d]), rel=1e-12)


def test_vs_trivial_cases(rng):
    x = rng.normal(size=5)
    assert variogram_score(x[None, :], x) == pytest.approx(0.0, abs=1e-12)
    assert variogram_score(rng.normal(size=(8, 5)), x, np.zeros((5, 5))) == 0.0
    with pytest.raises(DimensionMismatch):
        variogram_score(rng.normal(size=(8, 4)), x)


def test_vs_hand_expansion():
    m1, m2 = np.array([1.0, 4.0, 2.0]), np.array([3.0, 0.0, 5.0])
    obs = np.array([2.0, 2.5, 1.0])
    w = np.array([[0.0, 0.5, 0.2], [0.5, 0.0, 0.9], [0.2, 0.9, 0.0]])
    total = 0.0
    for i in range(3):
        for j in range(3):
            if i != j:
                ev = 0.5 * (abs(m1[i] - m1[j]) + abs(m2[i] - m2[j]))
                total += w[i, j] * (abs(obs[i] - obs[j]) - ev) ** 2
    assert variogram_score(np.stack([m1, m2]), obs, w) == pytest.approx(total, rel=1e-12)


def test_vs_daily_matches_single(rng):
    members = rng.normal(size=(30, 4, 3))
    obs = rng.normal(size=(2, 4, 3))
    w = correlation_weights(rng.normal(size=(100, 24)), hours=(10, 11, 12))
    daily = variogram_scores_daily(members, obs, w)
    for y in range(2):
        for d in range(4):
            assert daily[y, d] == pytest.approx(variogram_score(members[:, d], obs[y, d], w), rel=1e-12)


def test_vs_detects_correlation():
    r = np.random.default_rng(11)
    wins = 0
    trials = 1000
    cov_true = np.array([[1, 0.8], [0.8, 1]])
    cov_wrong = np.array([[1, -0.2], [-0.2, 1]])
    for _ in range(trials):
        obs = r.multivariate_normal([0, 0], cov_true)
        good = r.multivariate_normal([0, 0], cov_true, 200)
        bad = r.multivariate_normal([0, 0], cov_wrong, 200)
        wins += variogram_score(good, obs) < variogram_score(bad, obs)
    assert stats.binomtest(wins, trials, 0.5, alternative="greater").pvalue < 0.01


def test_propriety_smoke():
    r = np.random.default_rng(12)
    cov = np.array([[1, 0.6, 0.3], [0.6, 1, 0.6], [0.3, 0.6, 1]])
    true_ens = r.multivariate_normal(np.zeros(3), cov, 500)
    shifted = true_ens + 0.7
    obs = r.multivariate_normal(np.zeros(3), cov, 200)
    assert np.mean([crps(true_ens[:, 0], o[0]) for o in obs]) < np.mean([crps(shifted[:, 0], o[0]) for o in obs])
    assert np.mean([energy_score(true_ens, o) for o in obs]) < np.mean([energy_score(shifted, o) for o in obs])
    scaled = true_ens * np.array([1.0, 2.0, 0.5])
    assert np.mean([variogram_score(true_ens, o) for o in obs]) < np.mean([variogram_score(scaled, o) for o in obs])


def test_kappa1_cases():
    upper = np.full(24, 1000.0)
    day = np.zeros(24)
    day[10:16] = 900.0
    assert kappa1(day, upper) == pytest.approx(5400.0)
    day[13] = 800.0
    assert kappa1(day, upper) == 0.0


def test_kappa2_and_weekly_sums(rng):
    week = np.zeros((7, 24))
    week[:, 8:16] = 100.0
    assert kappa2(week) == 5600.0
    ghi = rng.uniform(0, 500, (2, 365, 24))
    w = weekly_sums(ghi)
    assert w.shape == (2, 359)
    for y in range(2):
        for d in (0, 100, 358):
            assert w[y, d] == pytest.approx(kappa2(ghi[y, d:d + 7]), rel=1e-12)


def test_dm_trivial_and_antisymmetric(rng):
    a = rng.normal(size=100)
    assert dm_test(a, a) == (0.0, 1.0)
    b = rng.normal(size=100)
    s1, p1 = dm_test(a, b)
    s2, p2 = dm_test(b, a)
    assert s1 == pytest.approx(-s2) and p1 == pytest.approx(p2)
    assert 0 <= p1 <= 1


def test_dm_hac_oracle(rng):
    d = np.convolve(rng.normal(size=400), [1, 0.5], mode="same")
    n = d.size
    lag = int(np.floor(n ** (1 / 3)))
    x = d - d.mean()
    gamma = [np.sum(x[k:] * x[:n - k]) / n for k in range(lag + 1)]
    var = gamma[0] + 2 * sum((1 - k / (lag + 1)) * gamma[k] for k in range(1, lag + 1))
    stat = d.mean() / np.sqrt(var / n)
    s, p = dm_test(d, np.zeros(n))
    assert s == pytest.approx(stat, rel=1e-12)
    assert p == pytest.approx(2 * stats.norm.sf(abs(stat)), rel=1e-12)


def test_dm_power():
    rejections = 0
    for seed in range(20):
        r = np.random.default_rng(seed)
        rejections += dm_test(r.normal(0, 1, 1000), r.normal(0.5, 1, 1000))[1] < 0.05
    assert rejections >= 19


def test_dm_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        dm_test(np.zeros(3), np.zeros(4))


@pytest.fixture(scope="module")
def scored(panel7, fitted7):
    from ghicopula.scenarios import benchmark_hs
    learn, test = panel7.ghi[:5], panel7.ghi[5:]
    b = fitted7.bounds
    w = correlation_weights(learn)
    hs = benchmark_hs(learn, 60, seed=1)
    other = benchmark_hs(learn[:2], 60, seed=2)
    return [score_model(n, s.ghi, test, b.upper, b.daylight, w) for n, s in (("HS", hs), ("HS2", other))]


def test_report_schema_and_normalization(scored, tmp_path):
    report = build_report(scored)
    assert all(report.normalized["HS"][r] == 1.0 for r in RULES)
    rows = list(report.rows())
    assert {(m, r) for m, r, _, _ in rows} == {(m, r) for m in ("HS", "HS2") for r in RULES}
    assert all(0 <= p <= 1 for *_, p in rows)
    report.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "model,rule,score_normalized,dm_vs_best_p"
    assert "HS2" in report.table()


def test_self_reference_is_one(scored):
    hs = scored[0]
    report = build_report([hs, ModelLosses("copy", dict(hs.losses))])
    assert all(report.normalized["copy"][r] == 1.0 for r in RULES)
    assert all(report.dm_vs_best[r]["copy"] == (0.0, 1.0) for r in RULES)


def test_loss_series_lengths(scored):
    hs = scored[0].losses
    assert hs["CRPS-H"].size == 2 * 365 and hs["ES"].size == 2 * 365
    assert hs["CRPS-W"].size == 2 * 359


def test_horizon_mismatch(scored, fitted7):
    bad = ModelLosses("short", {k: v[:-1] for k, v in scored[1].losses.items()})
    with pytest.raises(HorizonMismatch):
        build_report([scored[0], bad])
    b = fitted7.bounds
    with pytest.raises(HorizonMismatch):
        score_model("x", np.zeros((3, 364, 24)), np.zeros((1, 365, 24)), b.upper, b.daylight, np.eye(7))


def test_score_model_crps_h_matches_direct(panel7, fitted7, rng):
    b = fitted7.bounds
    ens = panel7.ghi[:5]
    test = panel7.ghi[5:6]
    cfg = EvalConfig()
    ml = score_model("x", ens, test, b.upper, b.daylight, correlation_weights(ens), cfg)
    d = 171
    hours = np.flatnonzero(b.daylight[d])
    direct = np.mean([crps(ens[:, d, h], test[0, d, h]) for h in hours])
    assert ml.losses["CRPS-H"][d] == pytest.approx(direct, rel=1e-12)
    k_ens = kappa1(ens[:, d], b.upper[d])
    assert ml.losses["CRPS-U"][d] == pytest.approx(crps(k_ens, kappa1(test[0, d], b.upper[d])), rel=1e-12, abs=1e-12)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from ghicopula.calendar_io import DAYS
from ghicopula.daily import (
    DailyModel,
    Link,
    SkewNormal,
    _skewnorm_moment_start,
    arma_acf1,
    arma_filter,
    arma_innovations,
    daily_bounds,
    fit_arma11,
    fit_daily,
    fit_skewnormal,
    ljung_box,
    regime_link,
    simulate_daily,
    simulate_residuals,
)
from ghicopula.errors import LinkDomain, NonStationaryFit
from ghicopula.seasonal import ANNUAL, FourierModel


@pytest.fixture(scope="module")
def envelope(truth):
    lo, hi = daily_bounds(truth.bounds)
    return lo, hi, truth.bounds.toa.sum(axis=1)


def _m3_model(envelope, phi, theta, innov=SkewNormal(0.0, 0.5, 3.0), bounds=None):
    lo, hi, toa = envelope
    seasonal = FourierModel(ANNUAL, 2, 2, [0.3, -0.2, 0.05, 0.1, 0.0])
    return DailyModel("M3", regime_link("M3", toa, lo, hi), seasonal, phi, theta, innov, toa, lo, hi)


def test_m1_link_arithmetic():
    assert Link().forward(np.e) - 1.0 == pytest.approx(0.0, abs=1e-15)


@given(x=st.floats(0.001, 0.999), lo=st.floats(0, 5000), width=st.floats(10, 5000))
def test_scaled_logit_round_trip(x, lo, width):
    lo_a, hi_a = np.full(DAYS, lo), np.full(DAYS, lo + width)
    link = Link(lo_a, hi_a)
    v = lo_a + x * width
    assert np.max(np.abs(link.inverse(link.forward(v)) - v)) < 1e-10 * max(1.0, lo + width)


@given(x=st.floats(1e-3, 1e5))
def test_log_round_trip(x):
    assert Link().inverse(Link().forward(np.array([x])))[0] == pytest.approx(x, rel=1e-12)


def test_link_domain(envelope):
    lo, hi, toa = envelope
    with pytest.raises(LinkDomain):
        Link().forward(np.array([1.0, 0.0]))
    with pytest.raises(LinkDomain):
        regime_link("M2", toa).forward(toa)
    with pytest.raises(LinkDomain):
        regime_link("M3", toa, lo, hi).forward(lo)


def test_arma_filters_invert(rng):
    e = rng.normal(size=500)
    r = arma_filter(e, 0.6, -0.3)
    np.testing.assert_allclose(arma_innovations(r, 0.6, -0.3), e, atol=1e-12)
    # direct recursion oracle
    rr = np.zeros_like(e)
    for t in range(e.size):
        rr[t] = (0.6 * rr[t - 1] if t else 0.0) + e[t] + (-0.3 * e[t - 1] if t else 0.0)
    np.testing.assert_allclose(r, rr, atol=1e-12)


def test_arma_acf1_special_cases():
    assert arma_acf1(0.5, 0.0) == pytest.approx(0.5)
    assert arma_acf1(0.0, 0.5) == pytest.approx(0.5 / 1.25)


def test_recovery_of_arma(envelope, truth):
    hits = 0
    for seed in range(20):
        model = _m3_model(envelope, 0.5, -0.2)
        paths = simulate_daily(model, 10, seed)
        fit = fit_daily(paths.values.reshape(10, DAYS), "M3", envelope[2], truth.bounds)
        hits += abs(fit.phi - 0.5) < 0.1 and abs(fit.theta + 0.2) < 0.1
    assert hits >= 17


def test_null_arma_identified_part():
    # under white noise only phi + theta is identified; the fitted process is white
    for seed in range(20):
        e = np.random.default_rng(seed).normal(size=3650)
        phi, theta = fit_arma11(e)
        assert abs(phi + theta) < 0.05
        assert abs(arma_acf1(phi, theta)) < 0.05


@pytest.mark.xfail(strict=True, reason="phi and theta are not separately identified when phi = -theta; "
                                       "CLS estimates wander along that ridge (see the decisions ledger)")
def test_null_arma_each_coefficient():
    hits = 0
    for seed in range(20):
        phi, theta = fit_arma11(np.random.default_rng(seed).normal(size=3650))
        hits += abs(phi) < 0.05 and abs(theta) < 0.05
    assert hits == 20


def test_nonstationary_model_rejected(envelope):
    with pytest.raises(NonStationaryFit):
        _m3_model(envelope, 1.0, 0.0)


def test_zero_innovations_follow_seasonal(envelope):
    model = _m3_model(envelope, 0.5, 0.2, SkewNormal(0.0, 1e-300, 0.0))
    paths = simulate_daily(model, 2, seed=1)
    d = np.tile(np.arange(1, DAYS + 1), 2)
    np.testing.assert_array_equal(paths.values[0], model.link.inverse(model.seasonal(d)))


def test_m3_no_envelope_violations(envelope):
    model = _m3_model(envelope, 0.7, 0.1, SkewNormal(0.0, 2.0, -4.0))
    paths = simulate_daily(model, 1, seed=2, m=10_000)
    assert paths.envelope_violations == 0
    assert paths.toa_exceedances == 0


def test_regime_contrast(panel7, truth):
    totals = panel7.daily_sums()
    toa = truth.bounds.toa.sum(axis=1)
    m1 = fit_daily(totals, "M1", toa)
    m3 = fit_daily(totals, "M3", toa, truth.bounds)
    assert simulate_daily(m1, 1, seed=3, m=1000).toa_exceedances > 0
    s3 = simulate_daily(m3, 1, seed=3, m=1000)
    assert s3.toa_exceedances == 0 and s3.envelope_violations == 0
    assert np.isfinite(m3.ljung_box[0]) and 0 <= m3.ljung_box[1] <= 1


def test_simulated_acf_matches_closed_form(envelope):
    model = _m3_model(envelope, 0.6, -0.25)
    r = simulate_residuals(model, 100_000, np.random.default_rng(4))[0]
    r = r - r.mean()
    assert r[1:] @ r[:-1] / (r @ r) == pytest.approx(arma_acf1(0.6, -0.25), abs=0.03)


@pytest.mark.parametrize("shape", [-5.0, 5.0])
def test_skewnormal_fit_sign_and_likelihood(shape):
    x = stats.skewnorm.rvs(shape, 1.0, 2.0, size=5000, random_state=7)
    fit = fit_skewnormal(x)
    assert np.sign(fit.shape) == np.sign(shape) == np.sign(stats.skew(x))
    assert abs(fit.shape) <= 20
    xi, omega, alpha = _skewnorm_moment_start(x)
    assert fit.logpdf(x).sum() >= stats.skewnorm.logpdf(x, alpha, xi, omega).sum() - 1e-9
    draws = fit.rvs(np.random.default_rng(1), 20_000)
    assert np.sign(stats.skew(draws)) == np.sign(fit.shape)


def test_ljung_box_formula():
    e = np.array([0.5, -1.2, 0.3, 2.0, -0.7, 0.1, -0.4, 1.1, -0.9, 0.6, 0.2, -1.5])
    x = e - e.mean()
    n = x.size
    q = 0.0
    for k in range(1, 4):
        rk = np.sum(x[k:] * x[:-k]) / np.sum(x * x)
        q += rk * rk / (n - k)
    q *= n * (n + 2)
    stat, p = ljung_box(e, lags=3, fitted=2)
    assert stat == pytest.approx(q, rel=1e-12)
    assert p == pytest.approx(stats.chi2.sf(q, 1), rel=1e-12)


def test_model_serialization(envelope, truth, panel7):
    m = fit_daily(panel7.daily_sums(), "M3", envelope[2], truth.bounds)
    again = DailyModel.from_dict(m.to_dict())
    a = simulate_daily(m, 1, seed=5, m=3).values
    b = simulate_daily(again, 1, seed=5, m=3).values
    np.testing.assert_array_equal(a, b)

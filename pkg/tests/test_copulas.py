import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from ghicopula.copulas import (
    CopulaSpec,
    _corner_counts,
    _lambda_hat,
    bb1_from_tails,
    copula_cdf,
    copula_pdf,
    empirical_dependence,
    fit_bb1_tail_inversion,
    fit_mpl,
    h_function,
    h_inverse,
    kendall_tau,
    pseudo_observations,
    quantile_dependence,
    sample_pair,
    spearman_rho,
    tail_coefficients,
)
from ghicopula.errors import BoundaryParameter, DomainError, TailOutOfRange

SPECS = [
    CopulaSpec("gaussian", (-0.5,)), CopulaSpec("gaussian", (0.3,)), CopulaSpec("gaussian", (0.9,)),
    CopulaSpec("gumbel", (1.2,)), CopulaSpec("gumbel", (2.0,)), CopulaSpec("gumbel", (4.0,)),
    CopulaSpec("bb1", (0.5, 1.5)), CopulaSpec("bb1", (1.0, 2.0)), CopulaSpec("bb1", (0.2, 3.0)),
    CopulaSpec("independence"),
]
GRID21 = np.linspace(0.025, 0.975, 21)


def test_cdf_closed_forms():
    u, v = 0.37, 0.81
    assert copula_cdf(CopulaSpec("gumbel", (1.0,)), u, v) == pytest.approx(u * v, abs=1e-14)
    assert copula_cdf(CopulaSpec("gaussian", (0.0,)), 0.3, 0.7) == pytest.approx(0.21, abs=1e-12)
    th = 2.5
    gum = np.exp(-((-np.log(u)) ** th + (-np.log(v)) ** th) ** (1 / th))
    assert copula_cdf(CopulaSpec("gumbel", (th,)), u, v) == pytest.approx(gum, rel=1e-12)
    t, d = 0.7, 1.8
    bb1 = (1 + ((u ** -t - 1) ** d + (v ** -t - 1) ** d) ** (1 / d)) ** (-1 / t)
    assert copula_cdf(CopulaSpec("bb1", (t, d)), u, v) == pytest.approx(bb1, rel=1e-12)
    rho = 0.6
    mvn = stats.multivariate_normal([0, 0], [[1, rho], [rho, 1]])
    ref = mvn.cdf([stats.norm.ppf(u), stats.norm.ppf(v)])
    assert copula_cdf(CopulaSpec("gaussian", (rho,)), u, v) == pytest.approx(ref, abs=1e-6)


def test_gumbel_cdf_monte_carlo():
    spec = CopulaSpec("gumbel", (2.0,))
    x = sample_pair(spec, 10**6, 11)
    p_hat = np.mean((x[:, 0] <= 0.5) & (x[:, 1] <= 0.5))
    se = np.sqrt(p_hat * (1 - p_hat) / x.shape[0])
    assert abs(p_hat - copula_cdf(spec, 0.5, 0.5)) < 3 * se


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.family}{s.params}")
def test_frechet_and_two_increasing(spec):
    g = np.linspace(0.01, 0.99, 50)
    U, V = np.meshgrid(g, g, indexing="ij")
    C = copula_cdf(spec, U, V)
    assert np.all(C >= np.maximum(U + V - 1, 0) - 1e-12)
    assert np.all(C <= np.minimum(U, V) + 1e-12)
    rect = C[1:, 1:] - C[1:, :-1] - C[:-1, 1:] + C[:-1, :-1]
    assert rect.min() >= -1e-12


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.family}{s.params}")
def test_uniform_margins(spec):
    # at v = 1 - eps the Frechet bounds pin C(u, v) to [u - eps, u]
    eps = 1e-9
    u = np.linspace(0.01, 0.99, 99)
    for c in (copula_cdf(spec, u, 1 - eps), copula_cdf(spec, 1 - eps, u)):
        assert np.all(c <= u + 1e-12) and np.all(c >= u - eps - 1e-12)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.family}{s.params}")
def test_h_function_finite_difference(spec):
    step = 1e-6
    U, V = np.meshgrid(GRID21, GRID21, indexing="ij")
    fd = (copula_cdf(spec, U + step, V) - copula_cdf(spec, U - step, V)) / (2 * step)
    assert np.max(np.abs(h_function(spec, U, V) - fd)) < 1e-5


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.family}{s.params}")
def test_h_inverse_round_trip(spec):
    U, W = np.meshgrid(np.linspace(0.001, 0.999, 41), np.linspace(0.001, 0.999, 41), indexing="ij")
    V = h_inverse(spec, U, W)
    assert np.max(np.abs(h_function(spec, U, V) - W)) < 1e-9
    # monotone in v
    h = h_function(spec, U, np.broadcast_to(np.linspace(0.001, 0.999, 41), U.shape))
    assert np.all(np.diff(h, axis=1) >= -1e-12)


def test_h_trivial_cases():
    ind = CopulaSpec("independence")
    assert h_function(ind, 0.3, 0.8) == pytest.approx(0.8)
    assert h_inverse(ind, 0.3, 0.8) == pytest.approx(0.8)
    assert h_inverse(CopulaSpec("gaussian", (0.9999,)), 0.5, 0.5) == pytest.approx(0.5, abs=1e-3)
    rho, u, v = 0.4, 0.2, 0.7
    closed = stats.norm.cdf((stats.norm.ppf(v) - rho * stats.norm.ppf(u)) / np.sqrt(1 - rho**2))
    assert h_function(CopulaSpec("gaussian", (rho,)), u, v) == pytest.approx(closed, abs=1e-12)


def test_domain_error():
    with pytest.raises(DomainError):
        copula_cdf(CopulaSpec("gumbel", (2.0,)), 0.0, 0.5)
    with pytest.raises(DomainError):
        h_function(CopulaSpec("bb1", (1.0, 2.0)), 0.5, 1.0)


def test_gumbel_density_integrates_to_one():
    spec = CopulaSpec("gumbel", (2.0,))
    total, _ = integrate.dblquad(lambda v, u: float(copula_pdf(spec, u, v)), 1e-10, 1 - 1e-10,
                                 1e-10, 1 - 1e-10, epsabs=1e-7, epsrel=1e-7)
    assert total == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("spec", [SPECS[1], SPECS[4], SPECS[6], SPECS[9]], ids=lambda s: s.family)
def test_sample_spearman(spec):
    x = sample_pair(spec, 100_000, 5)
    rho_hat = stats.spearmanr(x[:, 0], x[:, 1])[0]
    assert abs(rho_hat - spearman_rho(spec)) < 3 / np.sqrt(x.shape[0])
    if spec.family == "independence":
        assert abs(rho_hat) < 0.01


def test_spearman_closed_form_gaussian():
    rho = 0.6
    assert spearman_rho(CopulaSpec("gaussian", (rho,))) == pytest.approx(6 / np.pi * np.arcsin(rho / 2), abs=1e-6)


def test_gumbel_upper_quantile_dependence():
    spec = CopulaSpec("gumbel", (2.0,))
    x = sample_pair(spec, 10**6, 8)
    q = np.array([0.99])
    assert abs(_corner_counts(x[:, 0], x[:, 1], q)[0] - quantile_dependence(spec, 0.99)) < 0.03


def test_bb1_monte_carlo_cdf():
    spec = CopulaSpec("bb1", (0.5, 1.5))
    x = sample_pair(spec, 10**6, 9)
    p_hat = np.mean((x[:, 0] <= 0.3) & (x[:, 1] <= 0.3))
    se = np.sqrt(p_hat * (1 - p_hat) / x.shape[0])
    assert abs(p_hat - copula_cdf(spec, 0.3, 0.3)) < 3 * se


def test_gaussian_tail_independence():
    x = sample_pair(CopulaSpec("gaussian", (0.9,)), 10**7, 4)
    lam = _corner_counts(x[:, 0], x[:, 1], np.array([0.99, 0.995, 0.999]))
    assert lam[1] < 0.55
    assert lam[0] > lam[1] > lam[2]


def test_fit_mpl_gumbel_recovery():
    hits = 0
    for seed in range(20):
        x = sample_pair(CopulaSpec("gumbel", (2.0,)), 10_000, 100 + seed)
        pairs = pseudo_observations(x[:, 0], x[:, 1])
        hits += 1.9 <= fit_mpl(pairs, "gumbel").params[0] <= 2.1
    assert hits >= 18


def test_fit_mpl_beats_tau_start(rng):
    x = sample_pair(CopulaSpec("gaussian", (0.5,)), 2000, rng)
    pairs = pseudo_observations(x[:, 0], x[:, 1])
    from ghicopula.copulas import loglik
    for fam in ("gaussian", "gumbel"):
        fit = fit_mpl(pairs, fam)
        tau = stats.kendalltau(pairs[:, 0], pairs[:, 1])[0]
        start = CopulaSpec("gaussian", (np.sin(np.pi * tau / 2),)) if fam == "gaussian" \
            else CopulaSpec("gumbel", (1 / (1 - tau),))
        assert loglik(fit, pairs) >= loglik(start, pairs) - 1e-9


def test_fit_mpl_null():
    x = np.random.default_rng(0).random((10_000, 2))
    pairs = pseudo_observations(x[:, 0], x[:, 1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryParameter)
        assert fit_mpl(pairs, "gumbel").params[0] < 1.05


def test_fit_mpl_comonotone_flagged():
    u = np.arange(1, 501) / 501
    with pytest.warns(BoundaryParameter):
        fit_mpl(np.column_stack([u, u]), "gaussian")


def test_bb1_tail_inversion_cases():
    noon = bb1_from_tails(0.808, 0.681)
    lam_l, lam_u = tail_coefficients(noon)
    assert lam_u == pytest.approx(0.808, abs=1e-10) and lam_l == pytest.approx(0.681, abs=1e-10)
    spec = bb1_from_tails(2 - np.sqrt(2), 2 ** -0.5)
    assert spec.params[0] == pytest.approx(1.0, abs=1e-12)
    assert spec.params[1] == pytest.approx(2.0, abs=1e-12)
    for bad in [(1.0, 0.5), (0.5, 0.0), (0.5, 1.0)]:
        with pytest.raises(TailOutOfRange):
            bb1_from_tails(*bad)


@given(lu=st.floats(0.01, 0.99), ll=st.floats(0.01, 0.99))
def test_bb1_round_trip(lu, ll):
    lam_l, lam_u = tail_coefficients(bb1_from_tails(lu, ll))
    assert abs(lam_u - lu) < 1e-10 and abs(lam_l - ll) < 1e-10


def test_bb1_via_diagnostics():
    x = sample_pair(CopulaSpec("bb1", (1.0, 2.0)), 20_000, 2)
    diag = empirical_dependence(pseudo_observations(x[:, 0], x[:, 1]), n_boot=0)
    spec = fit_bb1_tail_inversion(diag, "h12")
    assert spec.family == "bb1" and spec.role == "h12"


def test_kendall_tau_matches_sampling():
    for spec in (SPECS[4], SPECS[7]):
        x = sample_pair(spec, 20_000, 3)
        assert stats.kendalltau(x[:, 0], x[:, 1])[0] == pytest.approx(kendall_tau(spec), abs=0.02)


def test_empirical_dependence_comonotone():
    u = np.arange(1, 1001) / 1001
    diag = empirical_dependence(np.column_stack([u, u]), n_boot=0)
    np.testing.assert_allclose(diag.lambda_q, 1.0, atol=2e-3)


def test_empirical_dependence_independent():
    x = np.random.default_rng(1).random((100_000, 2))
    pairs = pseudo_observations(x[:, 0], x[:, 1])
    lam = _corner_counts(pairs[:, 0], pairs[:, 1], np.array([0.05, 0.5]))
    assert lam[0] == pytest.approx(0.05, abs=0.01) and lam[1] == pytest.approx(0.5, abs=0.01)


def test_empirical_dependence_gumbel_upper_tail():
    x = sample_pair(CopulaSpec("gumbel", (2.0,)), 10**6, 21)
    diag = empirical_dependence(pseudo_observations(x[:, 0], x[:, 1]), n_boot=0)
    assert abs(diag.lambda_u - (2 - np.sqrt(2))) < 0.03


def test_bootstrap_band_brackets_point(rng):
    x = sample_pair(CopulaSpec("gumbel", (1.5,)), 2000, rng)
    diag = empirical_dependence(pseudo_observations(x[:, 0], x[:, 1]), n_boot=100, rng=1)
    assert np.all(diag.band_lo <= diag.lambda_q) and np.all(diag.lambda_q <= diag.band_hi)
    assert np.all((diag.lambda_q >= 0) & (diag.lambda_q <= 1))
    assert list(diag.to_frame().columns) == ["q", "lambda_hat", "band_lo", "band_hi"]


@given(seed=st.integers(0, 10_000), n=st.integers(100, 400))
def test_corner_counts_match_direct_count(seed, n):
    r = np.random.default_rng(seed)
    x = r.random((n, 2))
    x[:, 1] = 0.5 * x[:, 0] + 0.5 * x[:, 1]
    pairs = pseudo_observations(x[:, 0], x[:, 1])
    q = np.round(np.arange(0.01, 1.0, 0.01), 6)
    np.testing.assert_allclose(_corner_counts(pairs[:, 0], pairs[:, 1], q), _lambda_hat(pairs[:, 0], pairs[:, 1], q))


def test_spec_serialization():
    for spec in SPECS:
        assert CopulaSpec.from_dict(spec.to_dict()) == spec

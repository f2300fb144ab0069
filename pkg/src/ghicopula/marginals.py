"""Beta marginals for the sun intensity ``M`` with the hourly mean as covariate.

Mean and precision follow ``logit(mu) = zeta1 + zeta2 * Lambda`` and
``log(phi) = theta1 + theta2 * Lambda`` with ``Lambda`` the seasonal mean GHI
of the hour in Wh/m^2.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import betainc, betaincinv, digamma, expit, gammaln, logit

from .bounds import BoundsModel
from .calendar_io import DAYS, HOURS
from .errors import BoundaryMass, DomainError, NonConvergence, RankDeficient, TooFewObservations
from .seasonal import FourierModel, hourly_mean_grid

CLIP = 1e-6
MIN_OBS = 100
BOUNDARY_SHARE = 0.05


@dataclass(frozen=True)
class BetaParams:
    mu: float
    phi: float

    def __post_init__(self):
        if not 0 < self.mu < 1:
            raise ValueError("mu must lie in (0, 1)")
        if not self.phi > 0:
            raise ValueError("phi must be positive")

    @property
    def shapes(self) -> tuple[float, float]:
        return self.mu * self.phi, (1 - self.mu) * self.phi

    @property
    def variance(self) -> float:
        return self.mu * (1 - self.mu) / (1 + self.phi)

    def pdf(self, x):
        a, b = self.shapes
        x = np.asarray(x, dtype=float)
        return np.exp(beta_logpdf(x, a, b))

    def cdf(self, x):
        a, b = self.shapes
        return betainc(a, b, x)


def beta_logpdf(x, a, b):
    return gammaln(a + b) - gammaln(a) - gammaln(b) + (a - 1) * np.log(x) + (b - 1) * np.log1p(-x)



@dataclass(frozen=True, eq=False)
class Intensities:
    """``values`` has the panel shape with NaN outside daylight."""

    values: np.ndarray
    clipped_low: int
    clipped_high: int
    daylight: np.ndarray

    def clipped_share(self, h: int) -> float:
        v = self.values[:, :, h]
        sel = ~np.isnan(v)
        if not sel.any():
            return 0.0
        return float(np.mean((v[sel] <= CLIP) | (v[sel] >= 1 - CLIP)))


def intensity(ghi: np.ndarray, bounds: BoundsModel, clip: float = CLIP) -> Intensities:
    """Rescale GHI between the bounds; ``ghi`` shaped (years, 365, 24) or (365, 24)."""
    ghi = np.asarray(ghi, dtype=float)
    lo, hi = bounds.lower, bounds.upper
    day = bounds.daylight & (hi > lo)
    with np.errstate(invalid="ignore", divide="ignore"):
        raw = (ghi - lo) / (hi - lo)
    raw = np.where(day, raw, np.nan)
    low = day & (raw < clip)
    high = day & (raw > 1 - clip)
    m = np.where(day, np.clip(raw, clip, 1 - clip), np.nan)
    return Intensities(m, int(np.sum(np.broadcast_to(low, m.shape))), int(np.sum(np.broadcast_to(high, m.shape))), day)


# --------------------------------------------------------------------------
# Beta regression

@dataclass(frozen=True)
class BetaCoefficients:
    zeta1: float
    zeta2: float
    theta1: float
    theta2: float

    def mu(self, lam):
        return expit(self.zeta1 + self.zeta2 * np.asarray(lam, dtype=float))

    def phi(self, lam):
        return np.exp(self.theta1 + self.theta2 * np.asarray(lam, dtype=float))

    def as_array(self) -> np.ndarray:
        return np.array([self.zeta1, self.zeta2, self.theta1, self.theta2])

    def to_dict(self) -> dict:
        return {"zeta1": self.zeta1, "zeta2": self.zeta2, "theta1": self.theta1, "theta2": self.theta2}


@dataclass(frozen=True, eq=False)
class BetaRegressionFit:
    coefficients: BetaCoefficients
    loglik: float
    start_loglik: float
    n: int
    iterations: int


def _negloglik(beta, z, y, ly, l1y):
    eta_m = beta[0] + beta[1] * z
    eta_p = beta[2] + beta[3] * z
    mu = expit(eta_m)
    phi = np.exp(eta_p)
    a, b = mu * phi, (1 - mu) * phi
    ll = gammaln(phi) - gammaln(a) - gammaln(b) + (a - 1) * ly + (b - 1) * l1y
    ystar = ly - l1y
    dga, dgb = digamma(a), digamma(b)
    resid = ystar - (dga - dgb)
    g_m = phi * resid * mu * (1 - mu)
    g_p = phi * (mu * resid + l1y - dgb + digamma(phi))
    grad = np.array([g_m.sum(), (g_m * z).sum(), g_p.sum(), (g_p * z).sum()])
    return -ll.sum(), -grad


def _fit_standardized(z, y, max_iter):
    ly, l1y = np.log(y), np.log1p(-y)
    mean = y.mean()
    var = y.var()
    phi0 = max(mean * (1 - mean) / var - 1, 0.1) if var > 0 else 10.0
    start = np.array([logit(mean), 0.0, np.log(phi0), 0.0])
    f0 = _negloglik(start, z, y, ly, l1y)[0]
    res = minimize(_negloglik, start, args=(z, y, ly, l1y), jac=True, method="BFGS",
                   options={"maxiter": max_iter, "gtol": 1e-8 * max(1.0, y.size)})
    beta = res.x
    if not res.success and res.nit >= max_iter:
        raise NonConvergence(f"beta regression hit the iteration cap ({max_iter})")
    if not np.all(np.isfinite(beta)) or res.fun > f0 + 1e-9:
        raise NonConvergence("beta regression did not improve on the constant start")
    return beta, -res.fun, -f0, res.nit


def fit_beta_regression(m, lam, max_iter: int = 5000, min_obs: int = MIN_OBS) -> BetaRegressionFit:
    """Maximum-likelihood beta regression of intensities on the hourly mean.

    The covariate is standardised internally for conditioning and the
    coefficients are mapped back to raw Wh/m^2 units.
    """
    y = np.asarray(m, dtype=float).ravel()
    x = np.asarray(lam, dtype=float).ravel()
    keep = ~(np.isnan(y) | np.isnan(x))
    y, x = y[keep], x[keep]
    if y.size < min_obs:
        raise TooFewObservations(f"{y.size} observations, need {min_obs}")
    if np.any((y <= 0) | (y >= 1)):
        raise DomainError("intensities must lie in the open unit interval")
    at_edge = np.mean((y <= CLIP) | (y >= 1 - CLIP))
    if at_edge >= BOUNDARY_SHARE:
        raise BoundaryMass(f"{at_edge:.1%} of intensities sit at the clipping boundary")
    loc, scale = x.mean(), x.std()
    if not scale > 0:
        raise RankDeficient("covariate is constant")
    z = (x - loc) / scale
    beta, ll, ll0, nit = _fit_standardized(z, y, max_iter)
    zeta2 = beta[1] / scale
    theta2 = beta[3] / scale
    coef = BetaCoefficients(float(beta[0] - zeta2 * loc), float(zeta2), float(beta[2] - theta2 * loc), float(theta2))
    return BetaRegressionFit(coef, float(ll), float(ll0), int(y.size), int(nit))


def bootstrap_se(m, lam, n_boot: int = 200, rng=None, max_iter: int = 5000, block: int = 1) -> np.ndarray:
    """Bootstrap standard errors of ``(zeta1, zeta2, theta1, theta2)``.

    ``block = 1`` is the pairs bootstrap.  For serially dependent input in
    time order, ``block > 1`` resamples moving blocks of that many
    consecutive observations.
    """
    y = np.asarray(m, dtype=float).ravel()
    x = np.asarray(lam, dtype=float).ravel()
    keep = ~(np.isnan(y) | np.isnan(x))
    y, x = y[keep], x[keep]
    n = y.size
    block = max(1, min(int(block), n))
    n_blocks = -(-n // block)
    rng = np.random.default_rng(rng)
    draws = np.empty((n_boot, 4))
    for b in range(n_boot):
        starts = rng.integers(0, n - block + 1, n_blocks)
        idx = (starts[:, None] + np.arange(block)).ravel()[:n]
        draws[b] = fit_beta_regression(y[idx], x[idx], max_iter).coefficients.as_array()
    return draws.std(axis=0, ddof=1)


# --------------------------------------------------------------------------
# Fitted marginal model

@dataclass(eq=False)
class MarginalModel:
    """Per-hour beta coefficients together with the hourly mean models."""

    coefficients: dict[int, BetaCoefficients]
    mean_models: list[FourierModel]
    daylight: np.ndarray
    borrowed: dict[int, int] = field(default_factory=dict)
    mean_grid: np.ndarray = field(init=False, repr=False)
    mu: np.ndarray = field(init=False, repr=False)
    phi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.daylight = np.asarray(self.daylight, dtype=bool)
        self.mean_grid = hourly_mean_grid(self.mean_models)
        self.mu = np.full((DAYS, HOURS), np.nan)
        self.phi = np.full((DAYS, HOURS), np.nan)
        for h, coef in self.coefficients.items():
            rows = self.daylight[:, h]
            lam = self.mean_grid[rows, h]
            self.mu[rows, h] = coef.mu(lam)
            self.phi[rows, h] = coef.phi(lam)
        missing = self.daylight & np.isnan(self.mu)
        if missing.any():
            raise ValueError(f"no coefficients for daylight hours {sorted(set(np.nonzero(missing)[1]))}")
        if np.any((self.mu[self.daylight] <= 0) | (self.mu[self.daylight] >= 1)):
            raise NonConvergence("fitted mean left the unit interval (link saturated)")
        self.mu.setflags(write=False)
        self.phi.setflags(write=False)
        self.mean_grid.setflags(write=False)

    def params(self, d: int, h: int) -> BetaParams:
        if not self.daylight[d - 1, h]:
            raise DomainError(f"(d={d}, h={h}) is not a daylight cell")
        return BetaParams(float(self.mu[d - 1, h]), float(self.phi[d - 1, h]))

    def shapes(self, d=None, h=None):
        """Shape grids ``(a, b)``; with ``d``/``h`` given, values at those cells."""
        a = self.mu * self.phi
        b = (1 - self.mu) * self.phi
        if d is None:
            return a, b
        di = np.asarray(d) - 1
        return a[di, h], b[di, h]

    def pit(self, m, d, h):
        m = np.asarray(m, dtype=float)
        if np.any((m <= 0) | (m >= 1)):
            raise DomainError("intensity must lie in (0, 1)")
        a, b = self.shapes(d, h)
        out = betainc(a, b, m)
        return float(out) if np.ndim(out) == 0 else out

    def pit_inverse(self, u, d, h):
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)):
            raise DomainError("probability must lie in (0, 1)")
        a, b = self.shapes(d, h)
        out = betaincinv(a, b, u)
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> dict:
        return {
            "coefficients": {str(h): c.to_dict() for h, c in sorted(self.coefficients.items())},
            "mean_models": [m.to_dict() for m in self.mean_models],
            "daylight": self.daylight.astype(int).tolist(),
            "borrowed": {str(k): v for k, v in sorted(self.borrowed.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MarginalModel":
        coefs = {int(h): BetaCoefficients(**c) for h, c in data["coefficients"].items()}
        means = [FourierModel.from_dict(m) for m in data["mean_models"]]
        borrowed = {int(k): int(v) for k, v in data.get("borrowed", {}).items()}
        return cls(coefs, means, np.array(data["daylight"], dtype=bool), borrowed)


def fit_marginals(
    ghi: np.ndarray,
    bounds: BoundsModel,
    mean_models: list[FourierModel],
    min_obs: int = MIN_OBS,
    max_iter: int = 5000,
) -> tuple[MarginalModel, dict]:
    """Fit one beta regression per daylight hour.

    Hours with fewer than ``min_obs`` observations take the coefficients of
    the nearest fitted hour.  Returns the model and a diagnostics dict.
    """
    inten = intensity(ghi, bounds)
    lam_grid = hourly_mean_grid(mean_models)
    coefs: dict[int, BetaCoefficients] = {}
    diag = {"clipped_low": inten.clipped_low, "clipped_high": inten.clipped_high, "loglik": {}, "n": {}}
    hours = [h for h in range(HOURS) if bounds.daylight[:, h].any()]
    for h in hours:
        m_h = inten.values[:, :, h]
        lam_h = np.broadcast_to(lam_grid[:, h], m_h.shape)
        sel = ~np.isnan(m_h)
        if sel.sum() < min_obs:
            continue
        fit = fit_beta_regression(m_h[sel], lam_h[sel], max_iter, min_obs)
        coefs[h] = fit.coefficients
        diag["loglik"][h] = fit.loglik
        diag["n"][h] = fit.n
    if not coefs:
        raise TooFewObservations("no daylight hour has enough observations for a beta regression")
    borrowed = {}
    fitted = np.array(sorted(coefs))
    for h in hours:
        if h not in coefs:
            src = int(fitted[np.argmin(np.abs(fitted - h))])
            coefs[h] = coefs[src]
            borrowed[h] = src
    if borrowed:
        warnings.warn(f"hours {sorted(borrowed)} borrow beta coefficients from neighbours", UserWarning, stacklevel=2)
    diag["borrowed"] = borrowed
    return MarginalModel(coefs, list(mean_models), bounds.daylight, borrowed), diag

"""Daily-total baseline ``h(I_d) = Lambda_d + R_d`` under three bound regimes.

M1 uses the log link, M2 the logit scaled to ``(0, TOA_d)`` and M3 the logit
scaled to the daily sums of the estimated hourly bounds.  ``R_d`` is an
ARMA(1,1) with skew-normal innovations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, signal, stats
from scipy.special import expit, logit

from .calendar_io import DAYS
from .errors import LinkDomain, NonStationaryFit
from .seasonal import ANNUAL, FourierModel, fit_ols

REGIMES = ("M1", "M2", "M3")
MAX_SHAPE = 20.0
BURN_IN = 200
# largest |phi| or |theta| accepted as an interior optimum
_UNIT_ROOT = 0.999


# --------------------------------------------------------------------------
# links

@dataclass(frozen=True, eq=False)
class Link:
    """``log`` when both limits are None, otherwise logit scaled to ``(lo, hi)`` per day."""

    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    @property
    def bounded(self) -> bool:
        return self.hi is not None

    def _limits(self, n):
        idx = np.arange(n) % DAYS
        return self.lo[idx], self.hi[idx]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Link of a daily series starting on day 1."""
        x = np.asarray(x, dtype=float)
        if not self.bounded:
            if np.any(x <= 0):
                raise LinkDomain("log link needs strictly positive daily totals")
            return np.log(x)
        lo, hi = self._limits(x.shape[-1])
        if np.any(x <= lo) or np.any(x >= hi):
            raise LinkDomain("daily totals must lie strictly inside the regime's bounds")
        return logit((x - lo) / (hi - lo))

    def inverse(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if not self.bounded:
            return np.exp(y)
        lo, hi = self._limits(y.shape[-1])
        return lo + (hi - lo) * expit(y)


# --------------------------------------------------------------------------
# skew-normal innovations (Azzalini form)

@dataclass(frozen=True)
class SkewNormal:
    loc: float
    scale: float
    shape: float

    def logpdf(self, x):
        return stats.skewnorm.logpdf(x, self.shape, self.loc, self.scale)

    def rvs(self, rng: np.random.Generator, size) -> np.ndarray:
        return stats.skewnorm.rvs(self.shape, self.loc, self.scale, size=size, random_state=rng)

    def mean(self) -> float:
        return float(stats.skewnorm.mean(self.shape, self.loc, self.scale))

    def to_dict(self) -> dict:
        return {"loc": self.loc, "scale": self.scale, "shape": self.shape}


def _skewnorm_moment_start(x: np.ndarray) -> tuple[float, float, float]:
    """Method-of-moments start, with the sample skewness pulled inside the admissible range."""
    m, s = x.mean(), x.std()
    g = float(np.clip(stats.skew(x), -0.99, 0.99))
    c = (2 * abs(g) / (4 - np.pi)) ** (1 / 3)
    delta = np.sign(g) * np.sqrt(np.pi / 2 * c**2 / (1 + c**2))
    delta = float(np.clip(delta, -0.99, 0.99))
    alpha = delta / np.sqrt(1 - delta**2)
    omega = s / np.sqrt(1 - 2 * delta**2 / np.pi)
    xi = m - omega * delta * np.sqrt(2 / np.pi)
    return xi, omega, float(np.clip(alpha, -MAX_SHAPE, MAX_SHAPE))


def fit_skewnormal(x) -> SkewNormal:
    """Maximum likelihood with the shape confined to ``|alpha| <= 20``."""
    x = np.asarray(x, dtype=float)
    xi, omega, alpha = _skewnorm_moment_start(x)

    def nll(p):
        return -np.sum(stats.skewnorm.logpdf(x, p[2], p[0], np.exp(p[1])))

    res = optimize.minimize(nll, [xi, np.log(omega), alpha], method="L-BFGS-B",
                            bounds=[(None, None), (None, None), (-MAX_SHAPE, MAX_SHAPE)])
    return SkewNormal(float(res.x[0]), float(np.exp(res.x[1])), float(res.x[2]))


# --------------------------------------------------------------------------
# ARMA(1,1)

def arma_innovations(r: np.ndarray, phi: float, theta: float) -> np.ndarray:
    """``e_t = r_t - phi r_{t-1} - theta e_{t-1}`` with zero pre-sample values."""
    return signal.lfilter([1.0, -phi], [1.0, theta], r)


def arma_filter(e: np.ndarray, phi: float, theta: float, axis: int = -1) -> np.ndarray:
    """``r_t = phi r_{t-1} + e_t + theta e_{t-1}``."""
    return signal.lfilter([1.0, theta], [1.0, -phi], e, axis=axis)


def arma_acf1(phi: float, theta: float) -> float:
    """Lag-one autocorrelation of a stationary ARMA(1,1)."""
    return (1 + phi * theta) * (phi + theta) / (1 + 2 * phi * theta + theta**2)


def fit_arma11(r) -> tuple[float, float]:
    """Conditional least squares over the open square ``(-1, 1)^2``."""
    r = np.asarray(r, dtype=float)
    r = r - r.mean()

    def sse(z):
        e = arma_innovations(r, np.tanh(z[0]), np.tanh(z[1]))
        return float(e @ e)

    rho = float(np.clip(r[1:] @ r[:-1] / (r @ r), -0.9, 0.9))
    best = None
    for start in ([np.arctanh(rho), 0.0], [0.0, 0.0], [np.arctanh(0.5), np.arctanh(-0.3)]):
        res = optimize.minimize(sse, start, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        if best is None or res.fun < best.fun:
            best = res
    phi, theta = float(np.tanh(best.x[0])), float(np.tanh(best.x[1]))
    if abs(phi) > _UNIT_ROOT or abs(theta) > _UNIT_ROOT:
        raise NonStationaryFit(f"ARMA(1,1) fit on the unit circle (phi={phi:.4f}, theta={theta:.4f})")
    return phi, theta


def ljung_box(e, lags: int = 10, fitted: int = 2) -> tuple[float, float]:
    e = np.asarray(e, dtype=float) - np.mean(e)
    n = e.size
    denom = e @ e
    acf = np.array([e[k:] @ e[:-k] / denom for k in range(1, lags + 1)])
    q = n * (n + 2) * np.sum(acf**2 / (n - np.arange(1, lags + 1)))
    return float(q), float(stats.chi2.sf(q, max(lags - fitted, 1)))


# --------------------------------------------------------------------------
# model

@dataclass(eq=False)
class DailyModel:
    regime: str
    link: Link
    seasonal: FourierModel
    phi: float
    theta: float
    innovation: SkewNormal
    toa_daily: np.ndarray
    lower_daily: np.ndarray | None = None
    upper_daily: np.ndarray | None = None
    ljung_box: tuple[float, float] = (np.nan, np.nan)

    def __post_init__(self):
        if not (abs(self.phi) < 1 and abs(self.theta) < 1):
            raise NonStationaryFit("ARMA(1,1) needs |phi| < 1 and |theta| < 1")

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "seasonal": self.seasonal.to_dict(),
            "phi": self.phi, "theta": self.theta,
            "innovation": self.innovation.to_dict(),
            "ljung_box": {"statistic": self.ljung_box[0], "p_value": self.ljung_box[1]},
            "toa_daily": self.toa_daily.tolist(),
            "lower_daily": None if self.lower_daily is None else np.asarray(self.lower_daily).tolist(),
            "upper_daily": None if self.upper_daily is None else np.asarray(self.upper_daily).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DailyModel":
        toa = np.asarray(data["toa_daily"], dtype=float)
        lo = None if data.get("lower_daily") is None else np.asarray(data["lower_daily"], dtype=float)
        hi = None if data.get("upper_daily") is None else np.asarray(data["upper_daily"], dtype=float)
        lb = data.get("ljung_box", {})
        return cls(data["regime"], regime_link(data["regime"], toa, lo, hi), FourierModel.from_dict(data["seasonal"]),
                   float(data["phi"]), float(data["theta"]), SkewNormal(**data["innovation"]), toa, lo, hi,
                   (lb.get("statistic", np.nan), lb.get("p_value", np.nan)))


def regime_link(regime: str, toa_daily, lower_daily=None, upper_daily=None) -> Link:
    regime = regime.upper()
    if regime == "M1":
        return Link()
    if regime == "M2":
        return Link(np.zeros(DAYS), np.asarray(toa_daily, dtype=float))
    if regime == "M3":
        if lower_daily is None or upper_daily is None:
            raise ValueError("regime M3 needs the daily bound sums")
        return Link(np.asarray(lower_daily, dtype=float), np.asarray(upper_daily, dtype=float))
    raise ValueError(f"regime must be one of {REGIMES}")


def daily_bounds(bounds) -> tuple[np.ndarray, np.ndarray]:
    """Daily sums of the hourly lower and upper bounds."""
    return np.asarray(bounds.lower).sum(axis=1), np.asarray(bounds.upper).sum(axis=1)


def fit_daily(daily_totals: np.ndarray, regime: str, toa_daily: np.ndarray, bounds=None) -> DailyModel:
    """Fit one regime to daily totals shaped (years, 365)."""
    totals = np.asarray(daily_totals, dtype=float)
    lo = hi = None
    if bounds is not None:
        lo, hi = daily_bounds(bounds)
    link = regime_link(regime, toa_daily, lo, hi)
    y = link.forward(totals.ravel())
    d = np.tile(np.arange(1, DAYS + 1), totals.shape[0])
    seasonal = fit_ols(d, y, None, 2, 2, ANNUAL)
    r = y - seasonal(d)
    phi, theta = fit_arma11(r)
    e = arma_innovations(r - r.mean(), phi, theta)
    innov = fit_skewnormal(e)
    return DailyModel(regime.upper(), link, seasonal, phi, theta, innov, np.asarray(toa_daily, dtype=float),
                      lo, hi, ljung_box(e))


@dataclass(eq=False)
class DailyScenarios:
    """``values`` has shape (m, 365 * years)."""

    values: np.ndarray
    regime: str
    toa_exceedances: int
    envelope_violations: int | None

    def to_rows(self):
        m, n = self.values.shape
        for k in range(m):
            for d in range(n):
                yield k, d + 1, self.values[k, d]


def simulate_residuals(model: DailyModel, n_days: int, rng: np.random.Generator, m: int = 1) -> np.ndarray:
    """ARMA paths on the link scale after a burn-in, centred like the fitted residuals."""
    e = model.innovation.rvs(rng, (m, n_days + BURN_IN)) - model.innovation.mean()
    return arma_filter(e, model.phi, model.theta)[:, BURN_IN:]


def simulate_daily(model: DailyModel, years: int, seed: int, m: int = 1, upper_daily=None) -> DailyScenarios:
    """``m`` independent paths of ``years`` consecutive years.

    Path ``k`` uses its own Philox stream keyed by ``(seed, k)``.  The TOA
    exceedance count is always reported; envelope violations are counted
    against ``upper_daily`` (or the model's own upper bound when it has one).
    """
    n_days = DAYS * years
    d = np.tile(np.arange(1, DAYS + 1), years)
    lam = model.seasonal(d)
    out = np.empty((m, n_days))
    for k in range(m):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k,))))
        out[k] = model.link.inverse(lam + simulate_residuals(model, n_days, rng)[0])
    toa = np.tile(model.toa_daily, years)
    toa_exc = int(np.sum(out > toa))
    upper = upper_daily if upper_daily is not None else model.upper_daily
    env = None
    if upper is not None:
        lower = model.lower_daily if model.lower_daily is not None else np.zeros(DAYS)
        env = int(np.sum((out > np.tile(upper, years)) | (out < np.tile(lower, years))))
    return DailyScenarios(out, model.regime, toa_exc, env)

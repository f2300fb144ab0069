"""Sharp time-varying bounds for hourly GHI.

The upper bound shifts an upper-quantile curve of the historical hourly
maxima by the endpoint of a generalised Pareto fit to the (hour-scaled)
threshold excesses, pooled over the interior daylight cells.  The lower
bound applies the same idea to the logit-transformed relative distance of
the historical minima below the upper bound.  Sunrise and sunset cells take
TOA as upper and zero as lower bound.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.special import expit, logit

from .calendar_io import DAYS, HOURS, HourlyPanel
from .errors import (
    IncompleteYears,
    LogitDomain,
    NonConvergence,
    PositiveShapeEndpointRequested,
    RankDeficient,
    ShapeNotNegative,
    TooFewExceedances,
    TooFewObservations,
)
from .seasonal import (
    ANNUAL,
    DIURNAL,
    FourierModel,
    fit_hourly_means,
    fit_ols,
    fit_quantile,
    hourly_mean_grid,
    select_order_bic,
)

DAYLIGHT_THRESHOLD = 1.0  # Wh/m^2 on the fitted hourly mean
MIN_DAYS_FULL_ORDER = 30
MIN_DAYS = 5
_ZERO_TOL = 1e-9


@dataclass(frozen=True)
class GpdFit:
    sigma: float
    xi: float
    n_exceed: int
    loglik: float = float("nan")

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("GPD scale must be positive")

    @property
    def endpoint(self) -> float:
        if self.xi >= 0:
            raise PositiveShapeEndpointRequested(f"shape {self.xi:.4g} >= 0 has no finite endpoint")
        return -self.sigma / self.xi

    def to_dict(self) -> dict:
        out = {"sigma": self.sigma, "xi": self.xi, "n_exceed": self.n_exceed, "loglik": self.loglik}
        if self.xi < 0:
            out["endpoint"] = self.endpoint
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GpdFit":
        return cls(float(data["sigma"]), float(data["xi"]), int(data["n_exceed"]), float(data.get("loglik", "nan")))


def gpd_loglik(x: np.ndarray, sigma: float, xi: float) -> float:
    if sigma <= 0:
        return -np.inf
    z = 1 + xi * x / sigma
    if np.any(z <= 0):
        return -np.inf
    n = x.size
    if abs(xi) < 1e-12:
        return float(-n * np.log(sigma) - x.sum() / sigma)
    return float(-n * np.log(sigma) - (1 + 1 / xi) * np.log(z).sum())


def fit_gpd(excesses, min_count: int = 30) -> GpdFit:
    """Maximum-likelihood GPD fit (shape restricted to xi > -1)."""
    x = np.asarray(excesses, dtype=float).ravel()
    if x.size < min_count:
        raise TooFewExceedances(f"{x.size} exceedances, need at least {min_count}")
    if np.any(x <= 0):
        raise ValueError("excesses must be strictly positive")
    mean, var = x.mean(), x.var(ddof=1)
    if var <= 1e-14 * mean**2:
        raise NonConvergence("excesses are (numerically) constant; GPD fit is degenerate")
    xi0 = 0.5 * (1 - mean**2 / var)
    sigma0 = mean * (1 - xi0)
    xmax = x.max()
    if xi0 < 0 and -sigma0 / xi0 <= xmax:
        sigma0 = -1.05 * xmax * xi0
    start_ll = gpd_loglik(x, sigma0, xi0)

    def nll(theta):
        sigma, xi = np.exp(theta[0]), theta[1]
        if xi <= -1:
            return np.inf
        ll = gpd_loglik(x, sigma, xi)
        return -ll if np.isfinite(ll) else np.inf

    best = None
    starts = [(np.log(sigma0), xi0), (np.log(mean), 0.0), (np.log(1.5 * xmax * 0.5), -0.5)]
    for s in starts:
        if not np.isfinite(nll(np.array(s))):
            continue
        res = minimize(nll, np.array(s), method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000, "maxfev": 8000})
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun):
        raise NonConvergence("GPD likelihood could not be evaluated at any start")
    sigma, xi = float(np.exp(best.x[0])), float(best.x[1])
    ll = -float(best.fun)
    if np.isfinite(start_ll) and ll < start_ll:
        sigma, xi, ll = sigma0, xi0, start_ll
    return GpdFit(sigma, xi, int(x.size), ll)


def historical_extrema(panel: HourlyPanel, kind: str = "max") -> np.ndarray:
    if panel.n_years < 2:
        raise IncompleteYears("at least two whole years are required")
    if kind == "max":
        return panel.ghi.max(axis=0)
    if kind == "min":
        return panel.ghi.min(axis=0)
    raise ValueError("kind must be 'max' or 'min'")


def mean_excess_curve(values, thresholds) -> pd.DataFrame:
    """Mean residual life table; rows without exceedances carry NaN and count 0."""
    x = np.asarray(values, dtype=float).ravel()
    u = np.asarray(thresholds, dtype=float).ravel()
    if np.any(np.diff(u) <= 0):
        raise ValueError("thresholds must be increasing")
    means, counts = [], []
    for level in u:
        exc = x[x > level] - level
        counts.append(exc.size)
        means.append(exc.mean() if exc.size else np.nan)
    return pd.DataFrame({"threshold": u, "mean_excess": means, "count": counts})


def _daylight_edges(daylight: np.ndarray):
    """First/last daylight hour per day (-1 where a day has no daylight)."""
    any_light = daylight.any(axis=1)
    first = np.where(any_light, daylight.argmax(axis=1), -1)
    last = np.where(any_light, HOURS - 1 - daylight[:, ::-1].argmax(axis=1), -1)
    return first, last


@dataclass(eq=False)
class BoundsModel:
    """Fitted bound envelope; ``upper`` and ``lower`` are (365, 24) grids in Wh/m^2."""

    daylight: np.ndarray
    toa: np.ndarray
    upper_fits: dict[int, FourierModel]
    excess_model: FourierModel
    upper_gpd: GpdFit
    tau_upper: float = 0.75
    lower_fits: dict[int, FourierModel] | None = None
    lower_gpd: GpdFit | None = None
    tau_lower: float = 0.75
    link: str = "logit"
    cap_at_toa: bool = True
    upper: np.ndarray = field(init=False, repr=False)
    lower: np.ndarray = field(init=False, repr=False)
    upper_quantile: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.daylight = np.asarray(self.daylight, dtype=bool)
        self.toa = np.asarray(self.toa, dtype=float)
        d = np.arange(1, DAYS + 1)
        q_curve = np.zeros((DAYS, HOURS))
        for h, model in self.upper_fits.items():
            q_curve[:, h] = model(d, self.toa[:, h])
        q_curve[~self.daylight] = 0.0
        e_h = self.excess_by_hour()
        upper = np.where(self.daylight, q_curve + e_h[None, :] * self.upper_gpd.endpoint, 0.0)
        if self.cap_at_toa:
            upper = np.minimum(upper, self.toa)
        edge = self.daylight & ~self.interior
        upper[edge] = self.toa[edge]
        self.upper_quantile = q_curve
        self.upper = upper
        self.lower = np.zeros((DAYS, HOURS))
        if self.lower_fits is not None and self.lower_gpd is not None:
            r_l = self.lower_gpd.endpoint
            interior = self.interior
            for h, model in self.lower_fits.items():
                rows = interior[:, h]
                self.lower[rows, h] = upper[rows, h] * (1 - expit(model(d[rows]) + r_l))
        self.upper.setflags(write=False)
        self.lower.setflags(write=False)

    def excess_by_hour(self) -> np.ndarray:
        return np.asarray(self.excess_model(np.arange(HOURS)), dtype=float)

    @property
    def edges(self):
        return _daylight_edges(self.daylight)

    @property
    def interior(self) -> np.ndarray:
        """Daylight cells that are neither the sunrise nor the sunset hour."""
        first, last = self.edges
        hours = np.arange(HOURS)[None, :]
        return self.daylight & (hours > first[:, None]) & (hours < last[:, None])

    def to_dict(self) -> dict:
        return {
            "daylight": self.daylight.astype(int).tolist(),
            "toa": self.toa.tolist(),
            "tau_upper": self.tau_upper,
            "upper_fits": {str(h): m.to_dict() for h, m in self.upper_fits.items()},
            "excess_model": self.excess_model.to_dict(),
            "upper_gpd": self.upper_gpd.to_dict(),
            "tau_lower": self.tau_lower,
            "lower_fits": None if self.lower_fits is None else {str(h): m.to_dict() for h, m in self.lower_fits.items()},
            "lower_gpd": None if self.lower_gpd is None else self.lower_gpd.to_dict(),
            "link": self.link,
            "cap_at_toa": self.cap_at_toa,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BoundsModel":
        lower_fits = data.get("lower_fits")
        return cls(
            daylight=np.array(data["daylight"], dtype=bool),
            toa=np.array(data["toa"], dtype=float),
            upper_fits={int(h): FourierModel.from_dict(m) for h, m in data["upper_fits"].items()},
            excess_model=FourierModel.from_dict(data["excess_model"]),
            upper_gpd=GpdFit.from_dict(data["upper_gpd"]),
            tau_upper=float(data["tau_upper"]),
            lower_fits=None if lower_fits is None else {int(h): FourierModel.from_dict(m) for h, m in lower_fits.items()},
            lower_gpd=None if data.get("lower_gpd") is None else GpdFit.from_dict(data["lower_gpd"]),
            tau_lower=float(data["tau_lower"]),
            link=data.get("link", "logit"),
            cap_at_toa=bool(data.get("cap_at_toa", True)),
        )


def daylight_mask(panel: HourlyPanel, mean_models=None) -> np.ndarray:
    """Cells with fitted mean irradiation above 1 Wh/m^2 and positive TOA."""
    if mean_models is None:
        mean_models = fit_hourly_means(panel.ghi)
    lam = hourly_mean_grid(mean_models)
    mask = (lam > DAYLIGHT_THRESHOLD) & (panel.toa.min(axis=0) > 0)
    # hours that are light on too few days cannot carry a seasonal regression
    mask[:, mask.sum(axis=0) < MIN_DAYS] = False
    return mask


def _orders_for(n_days: int, p: int, q: int):
    return (p, q) if n_days >= MIN_DAYS_FULL_ORDER else (0, 0)


def _positive_excess_model(hrs, u, p: int, q: int) -> FourierModel:
    """Diurnal Fourier fit of the excesses, positive at every pooled hour.

    The requested order is tried first; if it dips to zero or below at a
    pooled hour the remaining orders up to (4, 4) are tried in BIC order.
    """
    light = np.unique(hrs)
    n_hours = light.size
    top = max(0, min(4, (n_hours - 1) // 2))
    if n_hours <= 2 * max(p, q) + 1:
        p = q = min(p, q, top)
    _, table = select_order_bic(hrs, u, None, top, top, DIURNAL)
    candidates = [(p, q)] + sorted((pq for pq in table if pq != (p, q)), key=lambda pq: (table[pq], sum(pq)))
    for pp, qq in candidates:
        try:
            model = fit_ols(hrs, u, None, pp, qq, DIURNAL)
        except (RankDeficient, TooFewObservations):
            continue
        if np.all(np.asarray(model(light)) > 0):
            return model
    raise NonConvergence(f"no diurnal excess model is positive at hours {light.tolist()}")


def fit_upper_bound(
    panel: HourlyPanel,
    tau: float = 0.75,
    p: int = 2,
    q: int = 2,
    mean_models=None,
    min_exceedances: int = 30,
    cap_at_toa: bool = True,
) -> BoundsModel:
    """Quantile curve of hourly maxima + hour-scaled GPD endpoint shift."""
    g_max = historical_extrema(panel, "max")
    daylight = daylight_mask(panel, mean_models)
    toa = panel.toa.max(axis=0)
    d_all = np.arange(1, DAYS + 1)
    first, last = _daylight_edges(daylight)
    hours = np.arange(HOURS)[None, :]
    inner = daylight & (hours > first[:, None]) & (hours < last[:, None])
    fits: dict[int, FourierModel] = {}
    excess, excess_hour = [], []
    for h in range(HOURS):
        rows = daylight[:, h]
        if not rows.any():
            continue
        pp, qq = _orders_for(int(rows.sum()), p, q)
        fit = fit_quantile(d_all[rows], g_max[rows, h], toa[rows, h], pp, qq, tau, ANNUAL)
        fits[h] = fit.model
        # sunrise/sunset cells do not enter the excess pool; points the curve
        # interpolates carry rounding-level residuals and are not exceedances
        u = g_max[:, h] - fit.model(d_all, toa[:, h])
        pos = inner[:, h] & (u > _ZERO_TOL * np.abs(g_max[rows, h]).max())
        excess.append(u[pos])
        excess_hour.append(np.full(pos.sum(), h))
    u = np.concatenate(excess)
    hrs = np.concatenate(excess_hour)
    if u.size < min_exceedances:
        raise TooFewExceedances(f"{u.size} upper exceedances, need {min_exceedances}")
    excess_model = _positive_excess_model(hrs, u, p, q)
    e_h = np.asarray(excess_model(np.arange(HOURS)), dtype=float)
    gpd = fit_gpd(u / e_h[hrs], min_exceedances)
    if gpd.xi >= 0:
        raise ShapeNotNegative(f"upper GPD shape {gpd.xi:.4f} >= 0: no finite endpoint")
    return BoundsModel(daylight, toa, fits, excess_model, gpd, tau_upper=tau, cap_at_toa=cap_at_toa)


def fit_lower_bound(
    panel: HourlyPanel,
    upper: BoundsModel,
    tau: float = 0.75,
    p: int = 2,
    q: int = 2,
    min_exceedances: int = 30,
) -> BoundsModel:
    """Logit-scale quantile curve of the relative cloud deviation + raw GPD endpoint."""
    g_min = historical_extrema(panel, "min")
    interior = upper.interior
    g_up = upper.upper
    d_all = np.arange(1, DAYS + 1)
    fits: dict[int, FourierModel] = {}
    excess = []
    for h in range(HOURS):
        rows = interior[:, h]
        if rows.sum() < MIN_DAYS:
            continue
        ratio = (g_up[rows, h] - g_min[rows, h]) / g_up[rows, h]
        if np.any(ratio <= 0) or np.any(ratio >= 1):
            bad = np.flatnonzero((ratio <= 0) | (ratio >= 1))
            raise LogitDomain(f"hour {h}: deviation ratio outside (0,1) on days {(d_all[rows][bad]).tolist()[:10]}")
        c = logit(ratio)
        pp, qq = _orders_for(int(rows.sum()), p, q)
        fit = fit_quantile(d_all[rows], c, None, pp, qq, tau, ANNUAL)
        fits[h] = fit.model
        exc = c - fit.model(d_all[rows])
        excess.append(exc[exc > _ZERO_TOL * np.abs(c).max()])
    exc = np.concatenate(excess) if excess else np.array([])
    gpd = fit_gpd(exc, min_exceedances)
    if gpd.xi >= 0:
        raise ShapeNotNegative(f"lower GPD shape {gpd.xi:.4f} >= 0: no finite endpoint")
    return BoundsModel(
        upper.daylight,
        upper.toa,
        upper.upper_fits,
        upper.excess_model,
        upper.upper_gpd,
        tau_upper=upper.tau_upper,
        lower_fits=fits,
        lower_gpd=gpd,
        tau_lower=tau,
        cap_at_toa=upper.cap_at_toa,
    )


def fit_bounds(panel: HourlyPanel, tau_upper: float = 0.75, tau_lower: float = 0.75, mean_models=None) -> BoundsModel:
    upper = fit_upper_bound(panel, tau_upper, mean_models=mean_models)
    return fit_lower_bound(panel, upper, tau_lower)


def bounds_eval(model: BoundsModel, d, h, validate: bool = False):
    """``(g_lower, g_upper)`` at day ``d`` (1..365) and hour ``h``; (0, 0) at night."""
    d = np.asarray(d, dtype=int)
    h = np.asarray(h, dtype=int)
    lo = model.lower[d - 1, h]
    up = model.upper[d - 1, h]
    if validate:
        light = model.daylight[d - 1, h]
        if np.any(up > model.toa[d - 1, h] + 1e-9):
            raise AssertionError("upper bound exceeds TOA")
        if np.any(light & ~(lo < up)) or np.any(lo < 0):
            raise AssertionError("bounds not ordered 0 <= lower < upper")
    if lo.ndim == 0:
        return float(lo), float(up)
    return lo, up


def envelope_violations(model: BoundsModel, panel: HourlyPanel) -> dict:
    """Count daylight observations outside [lower, upper] and bounds above TOA."""
    light = model.daylight[None, :, :]
    g = panel.ghi
    below = light & (g < model.lower[None] - 1e-9)
    above = light & (g > model.upper[None] + 1e-9)
    over_toa = model.daylight & (model.upper > model.toa + 1e-9)
    return {
        "below_lower": int(below.sum()),
        "above_upper": int(above.sum()),
        "upper_above_toa": int(over_toa.sum()),
        "daylight_cells": int(light.sum() * g.shape[0]),
    }

"""Truncated Fourier seasonality: least squares, BIC order search, quantile regression."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import (
    DegenerateDesign,
    ExogenousMissing,
    NoConvergence,
    RankDeficient,
    TooFewObservations,
)

ANNUAL = 365.25
DIURNAL = 24.0


@dataclass(frozen=True, eq=False)
class FourierModel:
    """``b0 + sum_i b_i cos(2 pi t i / P) + sum_j b_{p+j} sin(2 pi t j / P) [+ b_{p+q+1} x]``."""

    period: float
    p: int
    q: int
    coeffs: np.ndarray
    exogenous: bool = False

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        object.__setattr__(self, "coeffs", coeffs)
        if self.p < 0 or self.q < 0:
            raise ValueError("orders must be non-negative")
        expected = 1 + self.p + self.q + int(self.exogenous)
        if coeffs.shape != (expected,):
            raise ValueError(f"expected {expected} coefficients, got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")

    @property
    def n_coeffs(self) -> int:
        return self.coeffs.size

    def __call__(self, t, exog=None):
        return fourier_eval(self, t, exog)

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "p": self.p,
            "q": self.q,
            "coeffs": [float(c) for c in self.coeffs],
            "exogenous": self.exogenous,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FourierModel":
        return cls(float(data["period"]), int(data["p"]), int(data["q"]), np.array(data["coeffs"], dtype=float), bool(data["exogenous"]))


@dataclass(frozen=True, eq=False)
class QuantileFit:
    tau: float
    model: FourierModel
    residuals: np.ndarray = field(repr=False)
    loss: float = float("nan")

    @property
    def coverage(self) -> float:
        """Fraction of observations strictly below the fitted curve."""
        return float(np.mean(self.residuals < 0))


def fourier_design(t, period: float, p: int, q: int, exog=None) -> np.ndarray:
    t = np.asarray(t, dtype=float).ravel()
    cols = [np.ones_like(t)]
    cols += [np.cos(2 * np.pi * t * i / period) for i in range(1, p + 1)]
    cols += [np.sin(2 * np.pi * t * j / period) for j in range(1, q + 1)]
    if exog is not None:
        cols.append(np.broadcast_to(np.asarray(exog, dtype=float).ravel(), t.shape))
    return np.column_stack(cols)


def fourier_eval(model: FourierModel, t, exog=None):
    if model.exogenous and exog is None:
        raise ExogenousMissing("model has an exogenous term but no value was supplied")
    if model.exogenous:
        t_b, x_b = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(exog, dtype=float))
    else:
        t_b, x_b = np.asarray(t, dtype=float), None
    out = fourier_design(t_b, model.period, model.p, model.q, x_b) @ model.coeffs
    return float(out[0]) if t_b.ndim == 0 else out.reshape(t_b.shape)


def _check_design(X: np.ndarray, n_min: int | None = None) -> None:
    n, k = X.shape
    if n <= (n_min if n_min is not None else k):
        raise TooFewObservations(f"{n} observations for {k} coefficients")
    if np.linalg.matrix_rank(X) < k:
        raise RankDeficient("design matrix is rank deficient")


def fit_ols(t, y, exog=None, p: int = 2, q: int = 2, period: float = ANNUAL) -> FourierModel:
    X = fourier_design(t, period, p, q, exog)
    y = np.asarray(y, dtype=float).ravel()
    _check_design(X)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return FourierModel(period, p, q, beta, exogenous=exog is not None)


def ols_covariance(t, y, model: FourierModel, exog=None) -> np.ndarray:
    """Classical ``s^2 (X'X)^{-1}`` covariance of an OLS Fourier fit."""
    X = fourier_design(t, model.period, model.p, model.q, exog)
    r = np.asarray(y, dtype=float).ravel() - X @ model.coeffs
    n, k = X.shape
    s2 = r @ r / (n - k)
    return s2 * np.linalg.inv(X.T @ X)


def bic(rss: float, n: int, k: int) -> float:
    return n * np.log(max(rss, np.finfo(float).tiny) / n) + k * np.log(n)


def select_order_bic(t, y, exog=None, max_p: int = 4, max_q: int = 4, period: float = ANNUAL):
    """Return ``((p, q), table)`` minimising the Gaussian BIC over the order grid.

    Ties go to fewer coefficients, then smaller ``p``.
    """
    if max_p < 0 or max_q < 0:
        raise ValueError("max orders must be non-negative")
    y = np.asarray(y, dtype=float).ravel()
    table = {}
    for p in range(max_p + 1):
        for q in range(max_q + 1):
            model = fit_ols(t, y, exog, p, q, period)
            X = fourier_design(t, period, p, q, exog)
            r = y - X @ model.coeffs
            table[(p, q)] = bic(float(r @ r), y.size, model.n_coeffs)
    best = min(table, key=lambda pq: (round(table[pq], 9), pq[0] + pq[1], pq[0]))
    return best, table


def pinball_loss(residuals, tau: float) -> float:
    r = np.asarray(residuals, dtype=float)
    return float(np.sum(r * (tau - (r < 0))))


def fit_quantile(
    t,
    y,
    exog=None,
    p: int = 2,
    q: int = 2,
    tau: float = 0.75,
    period: float = ANNUAL,
    max_iter: int = 10_000,
    method: str = "lp",
) -> QuantileFit:
    """Linear quantile regression on a Fourier design.

    ``method="lp"`` solves the pinball problem exactly as a linear programme
    (HiGHS); ``method="irls"`` uses iteratively reweighted least squares on an
    epsilon-smoothed loss followed by a vertex polish.  The LP falls back to
    IRLS if the solver reports failure.
    """
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    X = fourier_design(t, period, p, q, exog)
    y = np.asarray(y, dtype=float).ravel()
    try:
        _check_design(X)
    except RankDeficient as exc:
        raise DegenerateDesign(str(exc)) from exc
    beta = None
    if method == "lp":
        beta = _quantile_lp(X, y, tau, max_iter)
    elif method != "irls":
        raise ValueError(f"unknown method {method!r}")
    if beta is None:
        beta = _quantile_irls(X, y, tau, max_iter)
    model = FourierModel(period, p, q, beta, exogenous=exog is not None)
    r = y - X @ beta
    return QuantileFit(tau, model, r, pinball_loss(r, tau))


def _quantile_lp(X, y, tau, max_iter):
    n, k = X.shape
    # columns scaled to unit max so HiGHS tolerances are scale free
    col_scale = np.maximum(np.abs(X).max(axis=0), 1e-300)
    y_scale = max(float(np.abs(y).max()), 1e-300)
    Xs = X / col_scale
    A = sparse.hstack([sparse.csr_matrix(Xs), sparse.eye(n), -sparse.eye(n)], format="csr")
    c = np.concatenate([np.zeros(k), np.full(n, tau), np.full(n, 1 - tau)])
    bounds = [(None, None)] * k + [(0, None)] * (2 * n)
    res = linprog(c, A_eq=A, b_eq=y / y_scale, bounds=bounds, method="highs",
                  options={"maxiter": max_iter, "primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        return None
    beta = res.x[:k] * y_scale / col_scale
    return _vertex_polish(X, y, tau, beta)


def _quantile_irls(X, y, tau, max_iter):
    scale = max(float(np.max(np.abs(y - np.median(y)))), float(np.max(np.abs(y))) * 1e-12, 1e-300)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    rhs_shift = (tau - 0.5) * X.sum(axis=0)
    iters = 0
    for eps in (1e-2, 1e-4, 1e-6, 1e-8):
        floor = eps * scale
        while iters < max_iter:
            iters += 1
            r = y - X @ beta
            w = 0.5 / np.maximum(np.abs(r), floor)
            XtW = X.T * w
            try:
                new = np.linalg.solve(XtW @ X, XtW @ y + rhs_shift)
            except np.linalg.LinAlgError:
                iters = max_iter
                break
            step = np.max(np.abs(new - beta))
            beta = new
            if step <= 1e-9 * (1 + np.max(np.abs(beta))):
                break
    if iters >= max_iter:
        beta = _subgradient(X, y, tau, beta, max_iter)
    return _vertex_polish(X, y, tau, beta)


def _vertex_polish(X, y, tau, beta):
    """Snap to the basic solution through the k points nearest the fit, if better."""
    k = X.shape[1]
    r = y - X @ beta
    idx = np.argsort(np.abs(r))[:k]
    A = X[idx]
    if np.linalg.matrix_rank(A) < k:
        return beta
    cand = np.linalg.solve(A, y[idx])
    if pinball_loss(y - X @ cand, tau) <= pinball_loss(r, tau):
        return cand
    return beta


def _subgradient(X, y, tau, beta, max_iter):
    best, best_loss = beta.copy(), pinball_loss(y - X @ beta, tau)
    norm = np.linalg.norm(X, axis=0).max()
    for it in range(1, max_iter + 1):
        r = y - X @ beta
        g = -X.T @ (tau - (r < 0))
        gn = np.linalg.norm(g)
        if gn == 0:
            return beta
        beta = beta - (best_loss / (norm * np.sqrt(it))) * g / gn / max(len(y), 1)
        loss = pinball_loss(y - X @ beta, tau)
        if loss < best_loss:
            best, best_loss = beta.copy(), loss
    if not np.isfinite(best_loss):
        raise NoConvergence("quantile regression did not converge")
    return best


def fit_hourly_means(ghi: np.ndarray, p: int = 2, q: int = 2) -> list[FourierModel]:
    """Per-hour least-squares seasonal mean of GHI, ``ghi`` shaped (years, 365, 24)."""
    n_years = ghi.shape[0]
    d = np.tile(np.arange(1, ghi.shape[1] + 1), n_years)
    return [fit_ols(d, ghi[:, :, h].ravel(), None, p, q, ANNUAL) for h in range(ghi.shape[2])]


def hourly_mean_grid(models: list[FourierModel], days: int = 365) -> np.ndarray:
    d = np.arange(1, days + 1)
    return np.column_stack([m(d) for m in models])

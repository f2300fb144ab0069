"""Ensemble scoring: quantile-decomposition CRPS, weighted CRPS, energy and
variogram scores, the kappa functionals and the Diebold-Mariano test.

Ensembles are arrays whose first axis indexes members.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .calendar_io import DAYS, HOURS
from .errors import DimensionMismatch, HorizonMismatch

TAU_GRID = np.arange(1, 1000) / 1000.0
TAU_STEP = 0.001
KAPPA1_HOURS = tuple(range(10, 16))
MAIN_HOURS = tuple(range(10, 17))
KAPPA1_SHARE = 0.8
WEEK = 7
RULES = ("CRPS-H", "CRPS-W", "ES", "VS", "CRPS-U")


# --------------------------------------------------------------------------
# CRPS through quantiles

def _weights(weight, tau: np.ndarray) -> np.ndarray:
    if weight is None:
        return np.ones_like(tau)
    if callable(weight):
        return np.asarray(weight(tau), dtype=float) * np.ones_like(tau)
    table = {
        "v1": lambda t: (2 * t - 1) ** 2,
        "v2": lambda t: (t <= 0.05).astype(float),
        "v3": lambda t: (t >= 0.95).astype(float),
    }
    try:
        return table[weight](tau)
    except KeyError:
        raise ValueError(f"unknown weight {weight!r}") from None


def ensemble_quantiles(members, tau=TAU_GRID, presorted: bool = False) -> np.ndarray:
    """Type-7 quantiles along axis 0; the result has ``len(tau)`` as first axis."""
    x = np.asarray(members, dtype=float)
    s = x if presorted else np.sort(x, axis=0)
    m = s.shape[0]
    pos = np.asarray(tau) * (m - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, m - 1)
    frac = (pos - lo).reshape((-1,) + (1,) * (s.ndim - 1))
    return s[lo] * (1 - frac) + s[hi] * frac


def crps_from_quantiles(q: np.ndarray, x, tau=TAU_GRID, weight=None, step: float = TAU_STEP) -> np.ndarray:
    """Riemann sum of ``2 (1{x < q} - tau) (q - x) v(tau)`` over the grid."""
    tau = np.asarray(tau, dtype=float)
    w = (2 * _weights(weight, tau)).reshape((-1,) + (1,) * (q.ndim - 1))
    t = tau.reshape(w.shape)
    x = np.asarray(x, dtype=float)
    diff = q - x
    return step * np.sum(w * ((diff > 0) - t) * diff, axis=0)


def crps(members, x, tau=TAU_GRID, step: float = TAU_STEP) -> np.ndarray | float:
    """CRPS of an ensemble (members along axis 0) at observation ``x``."""
    out = crps_from_quantiles(ensemble_quantiles(members, tau), x, tau, None, step)
    return float(out) if np.ndim(out) == 0 else out


def crps_weighted(members, x, weight="v1", tau=TAU_GRID, step: float = TAU_STEP):
    """Quantile-weighted CRPS; ``weight`` is ``v1``, ``v2``, ``v3`` or a callable on tau."""
    out = crps_from_quantiles(ensemble_quantiles(members, tau), x, tau, weight, step)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# multivariate scores

def _mean_pairwise_1d(x: np.ndarray) -> np.ndarray:
    """``(1/m^2) sum_{k,j} |x_k - x_j|`` along axis 0 via order statistics."""
    s = np.sort(x, axis=0)
    m = s.shape[0]
    c = (2 * np.arange(1, m + 1) - m - 1).reshape((-1,) + (1,) * (s.ndim - 1))
    return 2 * np.sum(c * s, axis=0) / m**2


def _es_spread(X: np.ndarray, exact_limit: int, shifts: int) -> float:
    """``(1/m^2) sum_{k,j} ||x_k - x_j||`` for members ``X`` (m, n)."""
    m = X.shape[0]
    if m == 1:
        return 0.0
    if X.shape[1] == 1:
        return float(_mean_pairwise_1d(X[:, 0]))
    if m <= exact_limit:
        total = 0.0
        for start in range(0, m, 256):
            blk = X[start:start + 256]
            total += np.sqrt(((blk[:, None, :] - X[None, :, :]) ** 2).sum(-1)).sum()
        return total / m**2
    s = min(shifts, m - 1)
    acc = sum(np.linalg.norm(X - np.roll(X, -k, axis=0), axis=1).mean() for k in range(1, s + 1))
    return acc / s * (m - 1) / m


def energy_score(members, x, exact_limit: int = 2000, shifts: int = 64) -> float:
    """Energy score of an ensemble ``(m, n)`` at the vector ``x`` (n,).

    The spread term is the full double sum when ``n == 1`` or ``m <=
    exact_limit``.  Larger ensembles use cyclic shifts: member ``k`` is paired
    with members ``k + s`` for ``s = 1..shifts``, an unbiased deterministic
    estimate of ``E||X - X'||`` rescaled by ``(m - 1)/m`` to match the double
    sum that includes the zero diagonal.
    """
    X = np.asarray(members, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if X.shape[1] != x.shape[0]:
        raise DimensionMismatch(f"members have dimension {X.shape[1]}, observation {x.shape[0]}")
    first = np.mean(np.linalg.norm(X - x, axis=1))
    return float(first - 0.5 * _es_spread(X, exact_limit, shifts))


def energy_scores_daily(members: np.ndarray, obs: np.ndarray, shifts: int = 64, exact_limit: int = 2000) -> np.ndarray:
    """Energy scores for many days at once: ``members`` (m, D, n), ``obs`` (Y, D, n) -> (Y, D)."""
    m, n_days = members.shape[:2]
    if m <= exact_limit or members.shape[2] == 1:
        spread = np.array([_es_spread(members[:, d], exact_limit, shifts) for d in range(n_days)])
    else:
        s = min(shifts, m - 1)
        spread = np.zeros(n_days)
        for k in range(1, s + 1):
            spread += np.linalg.norm(members - np.roll(members, -k, axis=0), axis=2).mean(axis=0)
        spread *= (m - 1) / (m * s)
    first = np.stack([np.linalg.norm(members - obs[y], axis=2).mean(axis=0) for y in range(obs.shape[0])])
    return first - 0.5 * spread


def forecast_variogram(members: np.ndarray) -> np.ndarray:
    """``E_F |X_i - X_j|`` from an ensemble ``(m, ..., n)``, result ``(..., n, n)``."""
    X = np.asarray(members, dtype=float)
    return np.abs(X[..., :, None] - X[..., None, :]).mean(axis=0)


def variogram_score(members, x, weights=None) -> float:
    """Order-one variogram score summed over ordered pairs ``i != j``."""
    X = np.asarray(members, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if X.shape[1] != n:
        raise DimensionMismatch(f"members have dimension {X.shape[1]}, observation {n}")
    w = np.ones((n, n)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n, n):
        raise DimensionMismatch("weights must be n x n")
    w = w * (1 - np.eye(n))
    obs = np.abs(x[:, None] - x[None, :])
    return float(np.sum(w * (obs - forecast_variogram(X)) ** 2))


def variogram_scores_daily(members: np.ndarray, obs: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Variogram scores for ``members`` (m, D, n) against ``obs`` (Y, D, n) -> (Y, D)."""
    n = obs.shape[-1]
    w = np.asarray(weights, dtype=float) * (1 - np.eye(n))
    fv = forecast_variogram(members)
    ov = np.abs(obs[..., :, None] - obs[..., None, :])
    return np.sum(w * (ov - fv) ** 2, axis=(-2, -1))


def correlation_weights(ghi: np.ndarray, hours=MAIN_HOURS) -> np.ndarray:
    """Pearson correlations between the given hours over all days of a panel."""
    x = np.asarray(ghi, dtype=float)[..., list(hours)].reshape(-1, len(hours))
    return np.corrcoef(x, rowvar=False)


# --------------------------------------------------------------------------
# functionals

def kappa1(day, upper, hours=KAPPA1_HOURS, share: float = KAPPA1_SHARE):
    """Sum over ``hours`` if every one of them is strictly above ``share * upper``, else 0.

    Works on any leading shape; the last axis is the 24 hours.
    """
    g = np.asarray(day, dtype=float)[..., list(hours)]
    u = np.asarray(upper, dtype=float)[..., list(hours)]
    hit = np.all(g > share * u, axis=-1)
    out = np.where(hit, g.sum(axis=-1), 0.0)
    return float(out) if out.ndim == 0 else out


def kappa2(week):
    """Total over a (..., 7, 24) block."""
    out = np.asarray(week, dtype=float).sum(axis=(-2, -1))
    return float(out) if np.ndim(out) == 0 else out


def weekly_sums(ghi: np.ndarray) -> np.ndarray:
    """Rolling seven-day totals within each year: (..., 365, 24) -> (..., 359)."""
    daily = np.asarray(ghi, dtype=float).sum(axis=-1)
    c = np.cumsum(daily, axis=-1)
    c = np.concatenate([np.zeros(c.shape[:-1] + (1,)), c], axis=-1)
    return c[..., WEEK:] - c[..., :-WEEK]


# --------------------------------------------------------------------------
# Diebold-Mariano

def dm_test(loss_a, loss_b, lag: int | None = None) -> tuple[float, float]:
    """Two-sided DM test with a Bartlett HAC variance, lag ``floor(n^(1/3))``.

    A zero-variance differential returns ``(0.0, 1.0)``.
    """
    a = np.asarray(loss_a, dtype=float).ravel()
    b = np.asarray(loss_b, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch("loss series must have equal length")
    d = a - b
    n = d.size
    lag = int(math.floor(n ** (1 / 3))) if lag is None else lag
    dc = d - d.mean()
    var = dc @ dc / n
    for k in range(1, min(lag, n - 1) + 1):
        var += 2 * (1 - k / (lag + 1)) * (dc[k:] @ dc[:-k]) / n
    if not var > 0 or not np.isfinite(var):
        return 0.0, 1.0
    stat = d.mean() / math.sqrt(var / n)
    return float(stat), float(2 * norm.sf(abs(stat)))


# --------------------------------------------------------------------------
# evaluation

@dataclass
class EvalConfig:
    main_hours: tuple[int, ...] = MAIN_HOURS
    kappa_hours: tuple[int, ...] = KAPPA1_HOURS
    kappa_share: float = KAPPA1_SHARE
    day_chunk: int = 16
    es_shifts: int = 64
    es_exact_limit: int = 500


@dataclass
class ModelLosses:
    """Per-period loss series of one model, one array per rule."""

    name: str
    losses: dict[str, np.ndarray]

    def means(self) -> dict[str, float]:
        return {r: float(np.mean(v)) for r, v in self.losses.items()}


def _crps_cells(ens: np.ndarray, obs: np.ndarray, chunk: int, weight=None) -> np.ndarray:
    """CRPS per cell: ``ens`` (m, C...), ``obs`` (Y, C...) -> (Y, C...), chunked along axis 1."""
    out = np.empty(obs.shape)
    for s in range(0, ens.shape[1], chunk):
        q = ensemble_quantiles(ens[:, s:s + chunk])
        for y in range(obs.shape[0]):
            out[y, s:s + chunk] = crps_from_quantiles(q, obs[y, s:s + chunk], weight=weight)
    return out


def score_model(name: str, ghi: np.ndarray, test: np.ndarray, upper: np.ndarray, daylight: np.ndarray,
                vs_weights: np.ndarray, cfg: EvalConfig | None = None) -> ModelLosses:
    """Loss series of one scenario ensemble ``ghi`` (m, 365, 24) against ``test`` (Y, 365, 24).

    CRPS-H is averaged over daylight hours per day; CRPS-W is scored on every
    rolling week of each test year; ES, VS and CRPS-U are daily.
    """
    cfg = cfg or EvalConfig()
    ghi = np.asarray(ghi, dtype=float)
    test = np.asarray(test, dtype=float)
    if ghi.shape[1:] != (DAYS, HOURS) or test.shape[1:] != (DAYS, HOURS):
        raise HorizonMismatch("scenarios and test panel must both be (years, 365, 24)")
    hourly = _crps_cells(ghi, test, cfg.day_chunk)
    n_light = daylight.sum(axis=1)
    crps_h = np.where(daylight, hourly, 0.0).sum(axis=2) / n_light
    crps_w = _crps_cells(weekly_sums(ghi)[:, :, None], weekly_sums(test)[:, :, None], 400)[..., 0]
    cols = list(cfg.main_hours)
    es = np.concatenate([energy_scores_daily(ghi[:, s:s + cfg.day_chunk][..., cols], test[:, s:s + cfg.day_chunk][..., cols],
                                             cfg.es_shifts, cfg.es_exact_limit) for s in range(0, DAYS, cfg.day_chunk)], axis=1)
    vs = np.concatenate([variogram_scores_daily(ghi[:, s:s + cfg.day_chunk][..., cols], test[:, s:s + cfg.day_chunk][..., cols],
                                                vs_weights) for s in range(0, DAYS, cfg.day_chunk)], axis=1)
    k_ens = kappa1(ghi, upper, cfg.kappa_hours, cfg.kappa_share)
    k_obs = kappa1(test, upper, cfg.kappa_hours, cfg.kappa_share)
    crps_u = _crps_cells(k_ens[:, :, None], k_obs[:, :, None], 400)[..., 0]
    losses = {"CRPS-H": crps_h, "CRPS-W": crps_w, "ES": es, "VS": vs, "CRPS-U": crps_u}
    return ModelLosses(name, {k: v.ravel() for k, v in losses.items()})


@dataclass
class ScoreReport:
    raw: dict[str, dict[str, float]]
    normalized: dict[str, dict[str, float]]
    dm_vs_best: dict[str, dict[str, tuple[float, float]]]
    best: dict[str, str]
    significant_best: dict[str, list[str]]
    reference: str
    meta: dict = field(default_factory=dict)

    @property
    def models(self) -> list[str]:
        return list(self.raw)

    def rows(self):
        for model in self.raw:
            for rule in RULES:
                if rule in self.raw[model]:
                    stat, p = self.dm_vs_best[rule][model]
                    yield model, rule, self.normalized[model][rule], p

    def to_csv(self, path, header_comment: str | None = None) -> None:
        with open(path, "w") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write("model,rule,score_normalized,dm_vs_best_p\n")
            for model, rule, val, p in self.rows():
                fh.write(f"{model},{rule},{val:.6f},{p:.6g}\n")

    def table(self) -> str:
        rules = [r for r in RULES if any(r in v for v in self.normalized.values())]
        width = max(8, max(len(m) for m in self.raw) + 2)
        lines = ["model".ljust(width) + "".join(r.rjust(10) for r in rules)]
        for model in self.raw:
            cells = []
            for r in rules:
                mark = "*" if model in self.significant_best[r] else " "
                cells.append(f"{self.normalized[model][r]:9.4f}{mark}")
            lines.append(model.ljust(width) + "".join(cells))
        lines.append("* not significantly worse than the best model (DM, 5%)")
        return "\n".join(lines)


def build_report(losses: list[ModelLosses], reference: str = "HS", level: float = 0.05) -> ScoreReport:
    """Normalize by the reference model and run DM tests of every model against the best one."""
    by_name = {ml.name: ml for ml in losses}
    if reference not in by_name:
        raise ValueError(f"reference model {reference!r} is missing")
    raw = {ml.name: ml.means() for ml in losses}
    rules = [r for r in RULES if all(r in ml.losses for ml in losses)]
    lengths = {r: {ml.losses[r].size for ml in losses} for r in rules}
    if any(len(v) != 1 for v in lengths.values()):
        raise HorizonMismatch("models were scored on different horizons")
    normalized = {m: {r: raw[m][r] / raw[reference][r] for r in rules} for m in raw}
    dm, best, sig = {}, {}, {}
    for r in rules:
        b = min(raw, key=lambda m: raw[m][r])
        best[r] = b
        dm[r] = {m: (0.0, 1.0) if m == b else dm_test(by_name[m].losses[r], by_name[b].losses[r]) for m in raw}
        sig[r] = [m for m in raw if dm[r][m][1] >= level]
    return ScoreReport(raw, normalized, dm, best, sig, reference)

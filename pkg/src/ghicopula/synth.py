"""Synthetic GHI with a known envelope, known beta marginals and Gumbel dependence.

The generator is a :class:`~ghicopula.scenarios.ModelBundle` whose bounds are
given directly instead of estimated.  Simulating one scenario of ``n_years``
consecutive years from it gives a panel with exactly known structure, which
is what the recovery experiments fit against.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calendar_io import DAYS, HOURS, HourlyPanel, Site, toa_grid
from .copulas import CopulaSpec
from .marginals import BetaCoefficients, MarginalModel
from .scenarios import ModelBundle, simulate
from .seasonal import ANNUAL, fit_ols

# Upper-tail dependence of consecutive hours around noon; pair (j, j + 1) keyed by j.
DEFAULT_LAMBDA_U = {9: 0.674, 10: 0.782, 11: 0.827, 12: 0.808, 13: 0.732, 14: 0.670}
EDGE_DECAY = 0.93


def gumbel_theta(lambda_u: float) -> float:
    """Gumbel parameter with upper tail coefficient ``lambda_u``."""
    return float(np.log(2) / np.log(2 - lambda_u))


@dataclass(eq=False)
class KnownEnvelope:
    """Fixed bound grids standing in for a fitted bounds model."""

    daylight: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    toa: np.ndarray

    def to_dict(self) -> dict:
        return {
            "daylight": np.asarray(self.daylight, dtype=int).tolist(),
            "lower": np.asarray(self.lower).tolist(),
            "upper": np.asarray(self.upper).tolist(),
            "toa": np.asarray(self.toa).tolist(),
        }


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic truth.

    ``upper_share`` scales TOA into the true upper bound and ``lower_share``
    scales the upper bound into the true lower bound (zero at the first and
    last light hour of each day).  Beta coefficients are shared by all hours;
    the defaults give intensities piling up towards the upper bound (shape
    ``b`` just below one), as clear-sky hours do in measured data.
    """

    latitude: float = 50.9
    longitude: float = -7.5
    upper_share: float = 0.78
    lower_share: float = 0.20
    zeta: tuple[float, float] = (0.2, 0.001)
    theta: tuple[float, float] = (0.6, 0.0008)
    lambda_u: dict = field(default_factory=lambda: dict(DEFAULT_LAMBDA_U))
    edge_decay: float = EDGE_DECAY
    noon_lambda_u: float = 0.4
    first_year: int = 2005


def intraday_thetas(cfg: SynthConfig) -> dict[int, float]:
    """Gumbel theta for every pair (j, j + 1); tail dependence decays away from noon."""
    lam = dict(cfg.lambda_u)
    lo, hi = min(lam), max(lam)
    for j in range(lo - 1, -1, -1):
        lam[j] = lam[j + 1] * cfg.edge_decay
    for j in range(hi + 1, HOURS - 1):
        lam[j] = lam[j - 1] * cfg.edge_decay
    return {j: gumbel_theta(v) for j, v in sorted(lam.items())}


def _first_last(daylight: np.ndarray):
    hours = np.arange(HOURS)
    first = np.where(daylight, hours, HOURS).min(axis=1)
    last = np.where(daylight, hours, -1).max(axis=1)
    return first, last


def true_envelope(cfg: SynthConfig) -> KnownEnvelope:
    toa = toa_grid(Site(cfg.latitude, cfg.longitude))
    daylight = toa > 0
    upper = np.where(daylight, cfg.upper_share * toa, 0.0)
    first, last = _first_last(daylight)
    hours = np.arange(HOURS)[None, :]
    interior = daylight & (hours > first[:, None]) & (hours < last[:, None])
    lower = np.where(interior, cfg.lower_share * upper, 0.0)
    return KnownEnvelope(daylight, lower, upper, toa)


def true_marginals(cfg: SynthConfig, env: KnownEnvelope, n_iter: int = 200) -> MarginalModel:
    """Beta marginals whose covariate is the model's own expected GHI.

    ``Lambda`` is the per-hour Fourier projection of ``E[G]`` and ``E[G]``
    depends on ``Lambda`` through the mean link; the pair is solved as a
    fixed point so that a fitted hourly mean estimates the true covariate.
    """
    coef = BetaCoefficients(cfg.zeta[0], cfg.zeta[1], cfg.theta[0], cfg.theta[1])
    d = np.arange(1, DAYS + 1)
    span = env.upper - env.lower
    lam = np.where(env.daylight, env.lower + 0.5 * span, 0.0)
    models = None
    for _ in range(n_iter):
        expected = np.where(env.daylight, env.lower + coef.mu(lam) * span, 0.0)
        models = [fit_ols(d, expected[:, h], None, 2, 2, ANNUAL) for h in range(HOURS)]
        new = np.column_stack([m(d) for m in models])
        if np.max(np.abs(new - lam)) < 1e-10:
            break
        lam = new
    coefs = {h: coef for h in range(HOURS) if env.daylight[:, h].any()}
    return MarginalModel(coefs, models, env.daylight)


def true_bundle(cfg: SynthConfig | None = None) -> ModelBundle:
    cfg = cfg or SynthConfig()
    env = true_envelope(cfg)
    marg = true_marginals(cfg, env)
    thetas = intraday_thetas(cfg)
    intraday = {j: CopulaSpec("gumbel", (thetas[j],), f"h{j}") for j in range(HOURS - 1)
                if (env.daylight[:, j] & env.daylight[:, j + 1]).any()}
    noon = CopulaSpec("gumbel", (gumbel_theta(cfg.noon_lambda_u),), "noon")
    return ModelBundle(env, marg, intraday, noon, "C2", "truth")


def synth_panel(n_years: int, seed: int, cfg: SynthConfig | None = None, bundle: ModelBundle | None = None) -> HourlyPanel:
    """``n_years`` consecutive synthetic years as an :class:`HourlyPanel`."""
    cfg = cfg or SynthConfig()
    bundle = bundle or true_bundle(cfg)
    sims = simulate(bundle, 1, seed, years=n_years)
    ghi = sims.ghi[0].reshape(n_years, DAYS, HOURS)
    toa = np.broadcast_to(bundle.bounds.toa, ghi.shape).copy()
    years = tuple(range(cfg.first_year, cfg.first_year + n_years))
    return HourlyPanel(Site(cfg.latitude, cfg.longitude, "synthetic"), years, ghi, toa)

"""Synthetic experiments: parameter recovery, hourly model comparison, daily regimes."""
from __future__ import annotations

import gc
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .calendar_io import DAYS
from .daily import REGIMES, daily_bounds, fit_daily, simulate_daily
from .marginals import bootstrap_se, intensity
from .pipeline import FitConfig, fit_model
from .scenarios import benchmark_da, benchmark_hs, simulate
from .scoring import (
    ModelLosses,
    build_report,
    correlation_weights,
    crps_from_quantiles,
    dm_test,
    ensemble_quantiles,
    score_model,
)
from .seasonal import hourly_mean_grid
from .synth import SynthConfig, gumbel_theta, intraday_thetas, synth_panel, true_bundle

# --------------------------------------------------------------------------
# parameter recovery


@dataclass
class RecoveryResult:
    seed: int
    theta_rel_error: dict[int, float]
    noon_rel_error: float
    beta_z: dict[int, np.ndarray]
    theta_ok: bool
    beta_ok: bool


def recovery_replication(seed: int, n_years: int = 7, cfg: SynthConfig | None = None, n_boot: int = 200,
                         theta_tol: float = 0.10, z_max: float = 3.0, bundle=None) -> RecoveryResult:
    """Fit one synthetic panel with the true envelope and compare with the truth.

    Every intraday Gumbel theta and the noon theta must be within
    ``theta_tol`` (relative); every beta coefficient of every fitted hour
    within ``z_max`` moving-block bootstrap standard errors.
    """
    cfg = cfg or SynthConfig()
    bundle = bundle or true_bundle(cfg)
    panel = synth_panel(n_years, seed, cfg, bundle)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fm = fit_model(panel, FitConfig(families=("gumbel",)), bounds=bundle.bounds)
    truth_theta = intraday_thetas(cfg)
    rel = {j: s.params[0] / truth_theta[j] - 1 for j, s in fm.intraday["gumbel"].items()}
    noon_rel = fm.noon["gumbel"].params[0] / gumbel_theta(cfg.noon_lambda_u) - 1
    truth = np.array([cfg.zeta[0], cfg.zeta[1], cfg.theta[0], cfg.theta[1]])
    values = intensity(panel.ghi, bundle.bounds).values
    lam = hourly_mean_grid(fm.marginals.mean_models)
    z = {}
    for h, coef in sorted(fm.marginals.coefficients.items()):
        if h in fm.marginals.borrowed:
            continue
        m_h = values[:, :, h]
        keep = ~np.isnan(m_h)
        lam_h = np.broadcast_to(lam[:, h], m_h.shape)[keep]
        # days are serially dependent through the noon chain: moving blocks of ~n^(1/3) days
        block = max(1, round(keep.sum() ** (1 / 3)))
        se = bootstrap_se(m_h[keep], lam_h, n_boot=n_boot, rng=np.random.SeedSequence(seed, spawn_key=(h,)),
                          block=block)
        z[h] = (coef.as_array() - truth) / se
    theta_ok = max(abs(v) for v in rel.values()) <= theta_tol and abs(noon_rel) <= theta_tol
    beta_ok = all(np.all(np.abs(v) <= z_max) for v in z.values())
    return RecoveryResult(seed, rel, noon_rel, z, theta_ok, beta_ok)


# --------------------------------------------------------------------------
# hourly model comparison on a synthetic truth


@dataclass
class HourlyExperiment:
    report: object
    losses: dict[str, ModelLosses]
    timings: dict[str, float] = field(default_factory=dict)


def run_hourly_comparison(m: int = 10_000, seed: int = 2024, learn_years: int = 7, test_years: int = 3,
                          families=("gaussian", "gumbel", "bb1"), variants=("C1", "C2"), include_da: bool = True,
                          cfg: SynthConfig | None = None, log=print) -> HourlyExperiment:
    """Fit copula models on synthetic learn years, simulate ``m`` years each and score on the test years.

    Scenario sets are simulated, scored and dropped one model at a time.
    """
    cfg = cfg or SynthConfig()
    t0 = time.perf_counter()
    panel = synth_panel(learn_years + test_years, seed, cfg)
    learn, test = panel.subset(panel.years[:learn_years]), panel.subset(panel.years[learn_years:])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fitted = fit_model(learn, FitConfig(families=tuple(families)))
    upper, daylight = fitted.bounds.upper, fitted.marginals.daylight
    weights = correlation_weights(learn.ghi)
    timings = {"fit": time.perf_counter() - t0}
    losses: dict[str, ModelLosses] = {}

    def score(name, scen):
        t = time.perf_counter()
        losses[name] = score_model(name, scen.ghi, test.ghi, upper, daylight, weights)
        timings[f"score {name}"] = time.perf_counter() - t
        log(f"  {name}: " + ", ".join(f"{k}={v:.4g}" for k, v in losses[name].means().items()))

    score("HS", benchmark_hs(learn.ghi, m, seed + 1))
    gc.collect()
    da_source = None
    for fam in families:
        for var in variants:
            bundle = fitted.bundle(fam, var)
            t = time.perf_counter()
            scen = simulate(bundle, m, seed + 2)
            timings[f"simulate {bundle.name}"] = time.perf_counter() - t
            score(bundle.name, scen)
            if include_da and fam == "gumbel" and var == "C2":
                da_source = scen.daily_totals()
            del scen
            gc.collect()
    if include_da and da_source is not None:
        score("DA", benchmark_da(da_source, fitted.bounds))
        del da_source
    order = ["HS", "DA"] + [fitted.bundle(f, v).name for v in variants for f in families]
    report = build_report([losses[n] for n in order if n in losses])
    timings["total"] = time.perf_counter() - t0
    return HourlyExperiment(report, losses, timings)


# --------------------------------------------------------------------------
# daily regimes


@dataclass
class DailyExperiment:
    scores: dict[str, dict[str, float]]
    normalized: dict[str, dict[str, float]]
    dm: dict[str, dict[str, tuple[float, float]]]
    toa_exceedances: dict[str, int]
    envelope_violations: dict[str, int]
    models: dict


def run_daily_comparison(m: int = 10_000, seed: int = 7, learn_years: int = 7, test_years: int = 3,
                         cfg: SynthConfig | None = None) -> DailyExperiment:
    """M1/M2/M3 fitted on synthetic daily totals and scored with the weighted CRPS on the test years."""
    from .bounds import fit_bounds
    from .seasonal import fit_hourly_means

    cfg = cfg or SynthConfig()
    panel = synth_panel(learn_years + test_years, seed, cfg)
    learn, test = panel.subset(panel.years[:learn_years]), panel.subset(panel.years[learn_years:])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bounds = fit_bounds(learn, 0.75, 0.75, fit_hourly_means(learn.ghi, 2, 2))
    toa_daily = learn.toa_climatology().sum(axis=1)
    _, upper_daily = daily_bounds(bounds)
    obs = test.daily_sums()
    scores, losses, exc, env, models = {}, {}, {}, {}, {}
    for r in REGIMES:
        model = fit_daily(learn.daily_sums(), r, toa_daily, bounds)
        sims = simulate_daily(model, 1, seed + 1, m=m, upper_daily=upper_daily)
        q = ensemble_quantiles(sims.values)
        losses[r] = {w: np.stack([crps_from_quantiles(q, obs[y], weight=w) for y in range(obs.shape[0])]).ravel()
                     for w in ("v1", "v2", "v3")}
        scores[r] = {w: float(v.mean()) for w, v in losses[r].items()}
        exc[r], env[r], models[r] = sims.toa_exceedances, sims.envelope_violations, model
    normalized = {r: {w: scores[r][w] / scores["M1"][w] for w in scores[r]} for r in REGIMES}
    dm = {w: {f"{a} vs {b}": dm_test(losses[a][w], losses[b][w]) for a, b in (("M3", "M2"), ("M2", "M1"), ("M3", "M1"))}
          for w in ("v1", "v2", "v3")}
    return DailyExperiment(scores, normalized, dm, exc, env, models)


__all__ = [
    "DAYS",
    "RecoveryResult",
    "recovery_replication",
    "HourlyExperiment",
    "run_hourly_comparison",
    "DailyExperiment",
    "run_daily_comparison",
]

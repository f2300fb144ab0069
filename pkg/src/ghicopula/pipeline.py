"""Model fitting from an hourly panel: bounds, marginals, PIT, copulas."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundsModel, fit_bounds
from .calendar_io import HOURS, HourlyPanel
from .copulas import (
    CopulaSpec,
    empirical_dependence,
    fit_bb1_tail_inversion,
    fit_mpl,
    pseudo_observations,
)
from .errors import BoundaryParameter, TailOutOfRange
from .marginals import MarginalModel, fit_marginals, intensity
from .scenarios import NOON, ModelBundle
from .seasonal import fit_hourly_means

COPULA_FAMILIES = ("gaussian", "gumbel", "bb1")
MIN_PAIRS = 100


@dataclass(frozen=True)
class FitConfig:
    tau_upper: float = 0.75
    tau_lower: float = 0.75
    fourier_p: int = 2
    fourier_q: int = 2
    families: tuple[str, ...] = COPULA_FAMILIES
    min_pairs: int = MIN_PAIRS
    tail_q: float = 0.05


@dataclass(eq=False)
class FittedModel:
    """Everything estimated from a learn panel.

    ``intraday[family][j]`` couples hours ``j`` and ``j + 1``;
    ``noon[family]`` couples consecutive noon hours.
    """

    bounds: BoundsModel
    marginals: MarginalModel
    intraday: dict[str, dict[int, CopulaSpec]]
    noon: dict[str, CopulaSpec]
    diagnostics: dict = field(default_factory=dict)

    def bundle(self, family: str, variant: str = "C2") -> ModelBundle:
        family = family.lower()
        noon = self.noon[family] if variant.upper() == "C2" else None
        name = f"{variant.upper()}-{ {'gaussian': 'Gaussian', 'gumbel': 'Gumbel', 'bb1': 'BB1'}[family]}"
        return ModelBundle(self.bounds, self.marginals, dict(self.intraday[family]), noon, variant, name)


def pit_panel(ghi: np.ndarray, bounds, marginals: MarginalModel) -> np.ndarray:
    """PIT values ``U = F(M)`` with NaN outside daylight; ``ghi`` shaped (years, 365, 24)."""
    m = intensity(ghi, bounds).values
    a, b = marginals.shapes()
    from scipy.special import betainc

    with np.errstate(invalid="ignore"):
        return betainc(a, b, m)


def intraday_pairs(u: np.ndarray, j: int) -> np.ndarray:
    """Scaled-rank pairs of hours (j, j + 1) over all days light in both."""
    x, y = u[:, :, j].ravel(), u[:, :, j + 1].ravel()
    keep = ~(np.isnan(x) | np.isnan(y))
    if not keep.any():
        return np.empty((0, 2))
    return pseudo_observations(x[keep], y[keep])


def noon_pairs(u: np.ndarray) -> np.ndarray:
    """Scaled-rank pairs of consecutive noon values along the whole learn record."""
    series = u[:, :, NOON].ravel()
    x, y = series[:-1], series[1:]
    keep = ~(np.isnan(x) | np.isnan(y))
    return pseudo_observations(x[keep], y[keep])


def fit_copula(pairs: np.ndarray, family: str, role: str | None = None, tail_q: float = 0.05) -> tuple[CopulaSpec, dict]:
    """Fit one family; BB1 goes through tail-dependence inversion with a Gumbel fallback."""
    family = family.lower()
    info: dict = {"n": int(pairs.shape[0])}
    if family == "independence":
        return CopulaSpec.independence(role), info
    if family == "bb1":
        diag = empirical_dependence(pairs, tail_q=tail_q, n_boot=0)
        info.update(lambda_l=diag.lambda_l, lambda_u=diag.lambda_u)
        try:
            return fit_bb1_tail_inversion(diag, role), info
        except TailOutOfRange as exc:
            info["fallback"] = f"gumbel ({exc})"
            family = "gumbel"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BoundaryParameter)
        spec = fit_mpl(pairs, family, role)
    if any(issubclass(w.category, BoundaryParameter) for w in caught):
        info["boundary"] = True
    return spec, info


def fit_dependence(u: np.ndarray, daylight: np.ndarray, families=COPULA_FAMILIES, min_pairs: int = MIN_PAIRS, tail_q: float = 0.05):
    """Intraday and noon copulas for every requested family."""
    intraday = {f: {} for f in families}
    noon = {}
    log: dict = {"intraday": {}, "noon": {}}
    for j in range(HOURS - 1):
        if not (daylight[:, j] & daylight[:, j + 1]).any():
            continue
        pairs = intraday_pairs(u, j)
        for fam in families:
            if pairs.shape[0] < min_pairs:
                intraday[fam][j] = CopulaSpec.independence(f"h{j}")
                log["intraday"].setdefault(fam, {})[j] = {"n": int(pairs.shape[0]), "fallback": "independence"}
                continue
            spec, info = fit_copula(pairs, fam, f"h{j}", tail_q)
            intraday[fam][j] = spec
            log["intraday"].setdefault(fam, {})[j] = {**info, "params": list(spec.params), "family": spec.family}
    pairs = noon_pairs(u)
    for fam in families:
        spec, info = fit_copula(pairs, fam, "noon", tail_q)
        noon[fam] = spec
        log["noon"][fam] = {**info, "params": list(spec.params), "family": spec.family}
    return intraday, noon, log


def fit_model(panel: HourlyPanel, cfg: FitConfig | None = None, bounds=None) -> FittedModel:
    """Fit the full hourly model on a learn panel.

    ``bounds`` may be supplied (for example a known envelope) to skip the
    bound estimation step.
    """
    cfg = cfg or FitConfig()
    mean_models = fit_hourly_means(panel.ghi, cfg.fourier_p, cfg.fourier_q)
    if bounds is None:
        bounds = fit_bounds(panel, cfg.tau_upper, cfg.tau_lower, mean_models)
    marginals, mdiag = fit_marginals(panel.ghi, bounds, mean_models)
    u = pit_panel(panel.ghi, bounds, marginals)
    intraday, noon, cdiag = fit_dependence(u, marginals.daylight, cfg.families, cfg.min_pairs, cfg.tail_q)
    diagnostics = {"marginals": mdiag, "copulas": cdiag}
    if isinstance(bounds, BoundsModel):
        diagnostics["bounds"] = {"upper_gpd": bounds.upper_gpd.to_dict(),
                                 "lower_gpd": None if bounds.lower_gpd is None else bounds.lower_gpd.to_dict()}
    return FittedModel(bounds, marginals, intraday, noon, diagnostics)

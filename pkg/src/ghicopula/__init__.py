"""Copula-based stochastic model for hourly global horizontal irradiation."""
from .bounds import BoundsModel, fit_bounds
from .calendar_io import HourlyPanel, Site, ingest_csv
from .copulas import CopulaSpec, h_function, h_inverse
from .marginals import MarginalModel, fit_marginals
from .pipeline import FitConfig, FittedModel, fit_model
from .scenarios import ModelBundle, ScenarioSet, simulate

__version__ = "0.1.0"

__all__ = [
    "BoundsModel",
    "CopulaSpec",
    "FitConfig",
    "FittedModel",
    "HourlyPanel",
    "MarginalModel",
    "ModelBundle",
    "ScenarioSet",
    "Site",
    "fit_bounds",
    "fit_marginals",
    "fit_model",
    "h_function",
    "h_inverse",
    "ingest_csv",
    "simulate",
]

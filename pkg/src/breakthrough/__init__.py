"""Test whether waning immunity or a new strain drives breakthrough infections.

A Cox model on the landmark time scale carries the vaccination offset
``z_delta`` (days from vaccination to the landmark date) as a covariate; a
nonzero coefficient on it points to waning immunity.
"""

from importlib.metadata import PackageNotFoundError, version

from ._normal import normal_cdf, normal_quantile
from .exceptions import (ConfigError, NoEventsError, NonIdentifiableError,
                         NotConvergedError, SeparationError, SurvivalError)
from .survival import (CoxFit, CoxPHRegression, FitOptions, KaplanMeier, KMCurve,
                       SurvivalDataset, TestResult, cox_fit, km_estimate, wald_test)

try:
    __version__ = version("breakthrough")
except PackageNotFoundError:  # running from a source checkout
    __version__ = "0.1.0"

__all__ = [
    "normal_cdf", "normal_quantile", "SurvivalDataset", "FitOptions", "CoxFit",
    "TestResult", "KMCurve", "CoxPHRegression", "KaplanMeier", "cox_fit",
    "wald_test", "km_estimate", "SurvivalError", "NoEventsError",
    "NonIdentifiableError", "SeparationError", "NotConvergedError", "ConfigError",
]

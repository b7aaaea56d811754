"""Semiparametric survival estimation: Cox regression and Kaplan-Meier."""

from .cox import (CoxFit, CoxPHRegression, FitOptions, StepFunction, TestResult,
                  breslow_baseline, cox_fit, log_partial_likelihood,
                  score_and_information, wald_test)
from .data import SurvivalDataset, SurvivalRow
from .kaplan_meier import KaplanMeier, KMCurve, km_estimate

__all__ = [
    "SurvivalDataset", "SurvivalRow", "FitOptions", "CoxFit", "TestResult",
    "StepFunction", "CoxPHRegression", "KaplanMeier", "KMCurve",
    "log_partial_likelihood", "score_and_information", "cox_fit", "wald_test",
    "breslow_baseline", "km_estimate",
]

"""Kaplan-Meier product-limit estimator with Greenwood standard errors."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._normal import normal_quantile
from ..validation import check_probability, check_survival_y
from .data import SurvivalDataset

__all__ = ["KMCurve", "km_estimate", "KaplanMeier"]


@dataclass(frozen=True, eq=False)
class KMCurve:
    """Survival estimate at each distinct event time of one stratum.

    ``greenwood_se`` is the standard error of ``survival`` itself; the
    confidence band is built on the log scale,
    ``exp(log S +/- q * se(log S))``, and clipped to [0, 1].
    """

    stratum_label: str
    times: np.ndarray
    survival: np.ndarray
    greenwood_se: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    at_risk: np.ndarray
    n_events: np.ndarray
    n_subjects: int = 0

    def __call__(self, t):
        """Evaluate the right-continuous survival step function at ``t``."""
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="right")
        out = np.concatenate([[1.0], self.survival])[idx]
        return float(out) if out.ndim == 0 else out

    def band_at(self, t):
        idx = int(np.searchsorted(self.times, t, side="right"))
        if idx == 0:
            return 1.0, 1.0
        return float(self.ci_lower[idx - 1]), float(self.ci_upper[idx - 1])

    def rows(self):
        """Plot-ready records (stratum, time, survival, ci_lower, ci_upper, at_risk)."""
        for j in range(self.times.shape[0]):
            yield (self.stratum_label, float(self.times[j]), float(self.survival[j]),
                   float(self.ci_lower[j]), float(self.ci_upper[j]), int(self.at_risk[j]))


def _product_limit(time, event, confidence_level, label):
    n = time.shape[0]
    order = np.argsort(time, kind="stable")
    t_sorted = time[order]
    ev_sorted = event[order].astype(bool)
    times = np.unique(t_sorted[ev_sorted])
    at_risk = n - np.searchsorted(t_sorted, times, side="left")
    n_events = np.searchsorted(t_sorted[ev_sorted], times, side="right") - \
        np.searchsorted(t_sorted[ev_sorted], times, side="left")

    with np.errstate(divide="ignore", invalid="ignore"):
        surv = np.cumprod(1.0 - n_events / at_risk)
        var_log = np.cumsum(n_events / (at_risk * (at_risk - n_events)))
    se_log = np.sqrt(var_log)
    q = normal_quantile((1.0 + confidence_level) / 2.0)
    alive = surv > 0
    lower = np.zeros_like(surv)
    upper = np.zeros_like(surv)
    lower[alive] = np.exp(np.log(surv[alive]) - q * se_log[alive])
    upper[alive] = np.minimum(np.exp(np.log(surv[alive]) + q * se_log[alive]), 1.0)
    se = np.zeros_like(surv)
    se[alive] = surv[alive] * se_log[alive]
    return KMCurve(stratum_label=label, times=times, survival=surv, greenwood_se=se,
                   ci_lower=lower, ci_upper=upper, at_risk=at_risk.astype(np.int64),
                   n_events=n_events.astype(np.int64), n_subjects=n)


def km_estimate(data: SurvivalDataset, stratum_label="all", confidence_level=0.95) -> KMCurve:
    """Kaplan-Meier curve for a dataset without delayed entry.

    When the last at-risk subjects all fail, survival drops to zero and the
    band there collapses to [0, 0].
    """
    if data.has_delayed_entry:
        raise ValueError("delayed-entry Kaplan-Meier is not supported")
    check_probability(confidence_level, "confidence_level")
    return _product_limit(data.time, data.event, confidence_level, stratum_label)


class KaplanMeier(BaseEstimator):
    """Product-limit survival estimator.

    Parameters
    ----------
    confidence_level : float
        Level of the pointwise log-transformed confidence band.
    """

    def __init__(self, confidence_level=0.95):
        self.confidence_level = confidence_level

    def fit(self, y, label="all"):
        time, event = check_survival_y(y)
        if time.shape[0] == 0:
            raise ValueError("Kaplan-Meier requires at least one observation")
        if np.any(time <= 0):
            raise ValueError("times must be positive")
        check_probability(self.confidence_level, "confidence_level")
        self.curve_ = _product_limit(time, event, self.confidence_level, label)
        self.event_times_ = self.curve_.times
        self.survival_ = self.curve_.survival
        return self

    def predict(self, t):
        """Survival probability at the requested times."""
        check_is_fitted(self, "curve_")
        return self.curve_(t)

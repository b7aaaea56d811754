"""Cox proportional-hazards regression by maximum partial likelihood.

Risk sets follow the counting-process convention: subject ``k`` is at risk
at event time ``t`` when ``entry_k < t <= time_k``.  Tied event times are
handled with either the Breslow or the Efron approximation.
"""

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .._normal import normal_quantile, two_sided_p
from ..exceptions import (NoEventsError, NonIdentifiableError, NotConvergedError,
                          SeparationError)
from ..validation import check_entry, check_probability, check_survival_y
from .data import SurvivalDataset

__all__ = [
    "FitOptions", "CoxFit", "TestResult", "StepFunction", "CoxPHRegression",
    "log_partial_likelihood", "score_and_information", "cox_fit", "wald_test",
    "breslow_baseline",
]

Ties = Literal["breslow", "efron"]

SCORE_TOLERANCE = 1e-5
MAX_HALVINGS = 10
SEPARATION_THRESHOLD = 50.0
# Summation noise in the log likelihood; smaller apparent decreases count as ties.
LL_ROUNDING = 1e-12
# Smallest information eigenvalue, relative to its value at beta = 0, below
# which the likelihood is treated as flat in some direction (separation).
INFORMATION_COLLAPSE = 1e-8


def _suffix_sums(values, order, positions):
    """Sum of ``values`` over rows whose sort key is >= each query key."""
    s = values[order]
    tail = np.cumsum(s[::-1], axis=0)[::-1]
    tail = np.concatenate([tail, np.zeros((1,) + s.shape[1:])], axis=0)
    return tail[positions]


class _PartialLikelihood:
    """Precomputed risk-set bookkeeping for one dataset.

    ``X`` is centred on construction; centring leaves the log partial
    likelihood and its derivatives unchanged and keeps ``exp(X @ beta)``
    well scaled.
    """

    def __init__(self, X, time, event, entry, ties="efron", center=True):
        if ties not in ("breslow", "efron"):
            raise ValueError(f"ties must be 'breslow' or 'efron', got {ties!r}")
        X = np.asarray(X, dtype=np.float64)
        self.X = X - X.mean(axis=0) if center else X
        self.n, self.p = self.X.shape
        self.ties = ties

        is_event = np.asarray(event).astype(bool)
        if not is_event.any():
            raise NoEventsError()
        ev_idx = np.flatnonzero(is_event)
        ev_idx = ev_idx[np.argsort(time[ev_idx], kind="stable")]
        self.ev_idx = ev_idx
        self.event_times, starts, counts = np.unique(
            time[ev_idx], return_index=True, return_counts=True)
        self.group_starts = starts
        self.d = counts

        self.time_order = np.argsort(time, kind="stable")
        self.time_pos = np.searchsorted(time[self.time_order], self.event_times, side="left")
        self.delayed = bool(np.any(entry > 0))
        if self.delayed:
            self.entry_order = np.argsort(entry, kind="stable")
            self.entry_pos = np.searchsorted(entry[self.entry_order], self.event_times,
                                             side="left")

        self.pairs = np.triu_indices(self.p)
        if ties == "efron" and np.any(counts > 1):
            n_ev = ev_idx.shape[0]
            self.rep = np.repeat(np.arange(counts.shape[0]), counts)
            self.phi = (np.arange(n_ev) - starts[self.rep]) / counts[self.rep]
        else:
            self.rep = None
            self.phi = None

    def _risk_sums(self, M):
        R = _suffix_sums(M, self.time_order, self.time_pos)
        if self.delayed:
            R = R - _suffix_sums(M, self.entry_order, self.entry_pos)
        return R

    def _event_sums(self, M):
        return np.add.reduceat(M[self.ev_idx], self.group_starts, axis=0)

    def risk_denominators(self, eta):
        """Sum of ``exp(eta)`` over each distinct event time's risk set."""
        w = np.exp(eta)
        return self._risk_sums(w[:, None])[:, 0]

    def evaluate(self, beta, derivatives=True):
        X, p = self.X, self.p
        eta = X @ beta
        shift = eta.max()
        w = np.exp(eta - shift)
        if derivatives:
            XX = X[:, self.pairs[0]] * X[:, self.pairs[1]]
            M = np.column_stack([w, w[:, None] * X, w[:, None] * XX])
        else:
            M = w[:, None]
        R = self._risk_sums(M)
        eta_ev = eta[self.ev_idx].sum() - shift * self.ev_idx.shape[0]

        if self.rep is None:
            S0 = R[:, 0]
            ll = eta_ev - np.dot(self.d, np.log(S0))
            if not derivatives:
                return ll
            mult = self.d.astype(np.float64)
        else:
            D = self._event_sums(M)
            R = R[self.rep] - self.phi[:, None] * D[self.rep]
            S0 = R[:, 0]
            ll = eta_ev - np.log(S0).sum()
            if not derivatives:
                return ll
            mult = np.ones(S0.shape[0])

        S1 = R[:, 1:1 + p] / S0[:, None]
        S2 = R[:, 1 + p:] / S0[:, None]
        score = X[self.ev_idx].sum(axis=0) - mult @ S1
        second = mult @ S2
        info = np.empty((p, p))
        info[self.pairs] = second
        info[self.pairs[1], self.pairs[0]] = second
        info -= (S1 * mult[:, None]).T @ S1
        return ll, score, info


def _check_beta(data, beta):
    beta = np.asarray(beta, dtype=np.float64).ravel()
    if beta.shape[0] != data.covariates.shape[1]:
        raise ValueError(
            f"dimension mismatch: beta has {beta.shape[0]} entries, "
            f"data has {data.covariates.shape[1]} covariates")
    if not np.all(np.isfinite(beta)):
        raise ValueError("beta must be finite")
    return beta


def _evaluator(data, ties, center=True):
    return _PartialLikelihood(data.covariates, data.time, data.event, data.entry_time,
                              ties=ties, center=center)


def log_partial_likelihood(data: SurvivalDataset, beta, ties: Ties = "efron") -> float:
    """Log partial likelihood of ``beta`` on ``data``."""
    beta = _check_beta(data, beta)
    return float(_evaluator(data, ties).evaluate(beta, derivatives=False))


def score_and_information(data: SurvivalDataset, beta, ties: Ties = "efron"):
    """Gradient of the log partial likelihood and the observed information."""
    beta = _check_beta(data, beta)
    _, score, info = _evaluator(data, ties).evaluate(beta)
    return score, info


@dataclass(frozen=True)
class FitOptions:
    ties: Ties = "efron"
    max_iterations: int = 25
    tolerance: float = 1e-9
    confidence_level: float = 0.95

    def __post_init__(self):
        if self.ties not in ("breslow", "efron"):
            raise ValueError(f"ties must be 'breslow' or 'efron', got {self.ties!r}")
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        check_probability(self.confidence_level, "confidence_level")


@dataclass(frozen=True)
class TestResult:
    """Wald inference for one coefficient; CI is on the hazard-ratio scale."""

    estimate: float
    std_error: float
    z_value: float
    p_value: float
    hazard_ratio: float
    ci_lower: float
    ci_upper: float
    term: Optional[str] = None

    __test__ = False  # keep pytest from collecting this class


@dataclass(frozen=True, eq=False)
class CoxFit:
    beta: np.ndarray
    covariance: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    ties: Ties
    n_events: int
    n_rows: int
    covariate_names: tuple = ()
    log_likelihood_null: float = float("nan")
    max_abs_score: float = float("nan")
    log_likelihood_path: tuple = field(default=())

    @property
    def std_errors(self):
        return np.sqrt(np.diag(self.covariance))

    @property
    def hazard_ratios(self):
        return np.exp(self.beta)

    def index(self, term):
        if isinstance(term, str):
            return self.covariate_names.index(term)
        return int(term)

    def test(self, term, confidence_level=0.95):
        return wald_test(self, self.index(term), confidence_level)

    def summary(self, confidence_level=0.95):
        return [wald_test(self, j, confidence_level) for j in range(self.beta.shape[0])]


def _raise_if_separated(beta, info, info0_min):
    eig_min = np.linalg.eigvalsh(info).min()
    if np.max(np.abs(beta)) > SEPARATION_THRESHOLD or eig_min <= INFORMATION_COLLAPSE * info0_min:
        raise SeparationError(f"|beta| = {np.max(np.abs(beta)):.3g}")


def cox_fit(data: SurvivalDataset, options: Optional[FitOptions] = None) -> CoxFit:
    """Fit a Cox model by Newton-Raphson with step-halving.

    Covariates are centred and scaled to unit standard deviation for the
    iterations; coefficients and covariance are reported on the original
    scale.

    Raises
    ------
    NoEventsError
        The dataset has no events.
    NonIdentifiableError
        A covariate is constant or the information matrix is singular.
    SeparationError
        The partial likelihood increases without bound (monotone likelihood).
    """
    options = options or FitOptions()
    X = data.covariates
    n, p = X.shape
    if p == 0:
        raise ValueError("cox_fit requires at least one covariate")
    if data.n_events == 0:
        raise NoEventsError()

    center = X.mean(axis=0)
    scale = X.std(axis=0)
    constant = scale <= 1e-12 * np.maximum(np.abs(center), 1.0)
    if np.any(constant):
        names = [data.covariate_names[j] for j in np.flatnonzero(constant)]
        raise NonIdentifiableError(f"constant covariate(s) {names}")
    Xs = (X - center) / scale
    lik = _PartialLikelihood(Xs, data.time, data.event, data.entry_time,
                             ties=options.ties, center=False)

    beta = np.zeros(p)
    ll, score, info = lik.evaluate(beta)
    ll_null = ll
    eig0 = np.linalg.eigvalsh(info)
    if eig0.min() <= 1e-10 * max(eig0.max(), 1e-300):
        raise NonIdentifiableError("information matrix is singular at beta = 0")
    path = [ll]
    converged = False
    iterations = 0

    for iterations in range(1, options.max_iterations + 1):
        try:
            np.linalg.cholesky(info)
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            break
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + step
            ll_c, score_c, info_c = lik.evaluate(cand)
            if np.isfinite(ll_c) and ll_c >= ll - LL_ROUNDING * max(abs(ll), 1.0):
                accepted = True
                break
            step = step / 2
        if not accepted:
            # No ascent left at working precision.
            converged = np.max(np.abs(score)) <= SCORE_TOLERANCE
            break
        delta = ll_c - ll
        beta, ll, score, info = cand, ll_c, score_c, info_c
        path.append(ll)
        if delta <= options.tolerance * abs(ll) and np.max(np.abs(score)) <= SCORE_TOLERANCE:
            converged = True
            break

    # The divergence threshold is checked on the standardized scale so that
    # rescaling a covariate cannot turn a regular fit into a separation error.
    if not converged or np.max(np.abs(beta)) > SEPARATION_THRESHOLD:
        _raise_if_separated(beta, info, eig0.min())
    beta_orig = beta / scale
    try:
        cov_s = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise SeparationError("information matrix singular at the estimate") from None
    cov = cov_s / np.outer(scale, scale)
    cov = (cov + cov.T) / 2

    return CoxFit(beta=beta_orig, covariance=cov, log_likelihood=float(ll),
                  iterations=iterations, converged=bool(converged), ties=options.ties,
                  n_events=data.n_events, n_rows=n, covariate_names=data.covariate_names,
                  log_likelihood_null=float(ll_null),
                  max_abs_score=float(np.max(np.abs(score))),
                  log_likelihood_path=tuple(float(v) for v in path))


def wald_test(fit: CoxFit, index, confidence_level=0.95) -> TestResult:
    """Two-sided Wald test of ``beta[index] = 0`` with a hazard-ratio CI."""
    if not fit.converged:
        raise NotConvergedError("Wald test requires a converged fit")
    check_probability(confidence_level, "confidence_level")
    j = fit.index(index)
    if not 0 <= j < fit.beta.shape[0]:
        raise IndexError(f"coefficient index {j} out of range")
    var = float(fit.covariance[j, j])
    if not var > 0:
        raise ValueError(f"zero variance for coefficient {j}")
    est = float(fit.beta[j])
    se = var ** 0.5
    z = est / se
    q = normal_quantile((1.0 + confidence_level) / 2.0)
    term = fit.covariate_names[j] if j < len(fit.covariate_names) else None
    # Coefficients on tiny covariate units can exceed exp's range; inf is the honest HR.
    with np.errstate(over="ignore"):
        hr, lo, hi = np.exp([est, est - q * se, est + q * se])
    return TestResult(estimate=est, std_error=se, z_value=z, p_value=two_sided_p(z),
                      hazard_ratio=float(hr), ci_lower=float(lo), ci_upper=float(hi),
                      term=term)


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function, zero before the first jump."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="right")
        out = np.concatenate([[0.0], self.values])[idx]
        return float(out) if out.ndim == 0 else out


def breslow_baseline(fit: CoxFit, data: SurvivalDataset) -> StepFunction:
    """Breslow estimate of the cumulative baseline hazard at covariates = 0."""
    if not fit.converged:
        raise NotConvergedError("baseline hazard requires a converged fit")
    beta = _check_beta(data, fit.beta)
    lik = _evaluator(data, "breslow", center=False)
    eta = data.covariates @ beta
    shift = eta.max()
    denom = lik.risk_denominators(eta - shift)
    jumps = lik.d * np.exp(-shift) / denom
    return StepFunction(times=lik.event_times, values=np.cumsum(jumps))


class CoxPHRegression(BaseEstimator):
    """Cox proportional-hazards regression with a scikit-learn interface.

    Parameters
    ----------
    ties : {'efron', 'breslow'}
        Approximation used for tied event times.
    max_iter : int
        Maximum Newton-Raphson iterations.
    tol : float
        Convergence threshold on the relative change in log partial likelihood.
    confidence_level : float
        Level of the hazard-ratio intervals returned by :meth:`summary`.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    covariance_ : ndarray of shape (n_features, n_features)
    log_likelihood_ : float
    n_iter_ : int
    fit_ : CoxFit
    """

    def __init__(self, ties="efron", max_iter=25, tol=1e-9, confidence_level=0.95):
        self.ties = ties
        self.max_iter = max_iter
        self.tol = tol
        self.confidence_level = confidence_level

    def fit(self, X, y, entry=None):
        """Fit the model.

        ``y`` is a structured array with ``time``/``event`` fields, a
        ``(time, event)`` tuple, or an ``(n, 2)`` array. ``entry`` gives
        optional delayed-entry times.
        """
        names = getattr(X, "columns", None)
        X = check_array(X, dtype=np.float64)
        time, event = check_survival_y(y, n_samples=X.shape[0])
        entry = check_entry(entry, time)
        if names is not None:
            self.feature_names_in_ = np.asarray([str(c) for c in names], dtype=object)
            labels = tuple(self.feature_names_in_)
        else:
            labels = tuple(f"x{j}" for j in range(X.shape[1]))
        self.n_features_in_ = X.shape[1]

        data = SurvivalDataset(time, event, X, labels, entry)
        options = FitOptions(ties=self.ties, max_iterations=self.max_iter,
                             tolerance=self.tol, confidence_level=self.confidence_level)
        self.fit_ = cox_fit(data, options)
        self.coef_ = self.fit_.beta
        self.covariance_ = self.fit_.covariance
        self.log_likelihood_ = self.fit_.log_likelihood
        self.n_iter_ = self.fit_.iterations
        self.converged_ = self.fit_.converged
        self._data = data
        return self

    def predict(self, X):
        """Linear predictor ``X @ coef_`` (log relative hazard)."""
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_

    def predict_partial_hazard(self, X):
        return np.exp(self.predict(X))

    def summary(self):
        check_is_fitted(self, "fit_")
        return self.fit_.summary(self.confidence_level)

    def baseline_cumulative_hazard(self):
        check_is_fitted(self, "fit_")
        return breslow_baseline(self.fit_, self._data)

"""Cox partial likelihood, Newton fitting, Wald tests and the Breslow baseline."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from breakthrough import (CoxPHRegression, FitOptions, NoEventsError, NonIdentifiableError,
                          NotConvergedError, SeparationError, SurvivalDataset, cox_fit,
                          wald_test)
from breakthrough.survival import (breslow_baseline, log_partial_likelihood,
                                   score_and_information)
from breakthrough.survival.cox import CoxFit

from _oracles import brute_log_partial_likelihood, grid_argmax, random_survival_data

# three subjects, all events, alternating binary covariate
D1 = SurvivalDataset(time=[1, 2, 3], event=[1, 1, 1], covariates=[[1.0], [0.0], [1.0]],
                     covariate_names=("x",))
D1_BETA_HAT = -0.5 * math.log(2.0)


def _dataset(time, event, X, entry=None):
    X = np.asarray(X, dtype=float).reshape(len(time), -1)
    names = tuple(f"x{j}" for j in range(X.shape[1]))
    return SurvivalDataset(time, event, X, names, entry)


def _random_cases(count, seed, ties=None, entry=False):
    rng = np.random.default_rng(seed)
    for i in range(count):
        n = int(rng.integers(12, 31))
        p = int(rng.integers(1, 4))
        tie_prone = bool(i % 2) if ties is None else ties
        yield _dataset(*random_survival_data(rng, n, p, tie_prone, entry))


class TestLogPartialLikelihood:
    def test_d1_at_zero(self):
        for ties in ("breslow", "efron"):
            assert log_partial_likelihood(D1, [0.0], ties) == pytest.approx(-math.log(6), abs=1e-12)

    def test_d1_by_hand(self):
        b = D1_BETA_HAT
        y = math.exp(b)
        # event terms: x_j * b - log(sum over risk set of exp(x_k * b))
        expected = (b - math.log(2 * y + 1)) + (0 - math.log(y + 1)) + (b - math.log(y))
        assert log_partial_likelihood(D1, [b]) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("ties", ["breslow", "efron"])
    def test_matches_brute_force(self, ties):
        rng = np.random.default_rng(4)
        for data in _random_cases(25, 11, entry=True):
            beta = rng.normal(scale=0.5, size=data.covariates.shape[1])
            ours = log_partial_likelihood(data, beta, ties)
            ref = brute_log_partial_likelihood(data.time, data.event, data.covariates,
                                               beta[None, :], ties, data.entry_time)[0]
            assert ours == pytest.approx(ref, rel=1e-11, abs=1e-11)

    def test_breslow_equals_efron_without_ties(self):
        for data in _random_cases(10, 3, ties=False):
            beta = np.full(data.covariates.shape[1], 0.3)
            assert log_partial_likelihood(data, beta, "breslow") == \
                log_partial_likelihood(data, beta, "efron")

    def test_no_events(self):
        data = _dataset([1, 2], [0, 0], [[0.0], [1.0]])
        with pytest.raises(NoEventsError, match="no events"):
            log_partial_likelihood(data, [0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            log_partial_likelihood(D1, [0.0, 1.0])


class TestScoreAndInformation:
    def test_d1_score_at_zero(self):
        score, info = score_and_information(D1, [0.0])
        assert score[0] == pytest.approx(-1.0 / 6.0, abs=1e-12)
        assert info.shape == (1, 1)

    def test_stationary_at_estimate(self):
        score, _ = score_and_information(D1, [D1_BETA_HAT])
        assert abs(score[0]) <= 1e-8

    @pytest.mark.parametrize("ties", ["breslow", "efron"])
    def test_finite_differences(self, ties):
        rng = np.random.default_rng(2)
        h = 1e-5
        for data in _random_cases(100, 5, entry=False):
            p = data.covariates.shape[1]
            beta = rng.normal(scale=0.4, size=p)
            score, info = score_and_information(data, beta, ties)
            fd_score = np.empty(p)
            fd_info = np.empty((p, p))
            for j in range(p):
                e = np.zeros(p)
                e[j] = h
                fd_score[j] = (log_partial_likelihood(data, beta + e, ties)
                               - log_partial_likelihood(data, beta - e, ties)) / (2 * h)
                fd_info[:, j] = -(score_and_information(data, beta + e, ties)[0]
                                  - score_and_information(data, beta - e, ties)[0]) / (2 * h)
            scale = max(1.0, np.abs(score).max())
            assert np.abs(score - fd_score).max() <= 1e-6 * scale
            assert np.abs(info - fd_info).max() <= 1e-4 * max(1.0, np.abs(info).max())
            assert_allclose(info, info.T, atol=1e-12)
            assert np.linalg.eigvalsh(info).min() >= -1e-10


class TestCoxFit:
    def test_d1_closed_form(self):
        fit = cox_fit(D1)
        assert fit.converged
        assert fit.beta[0] == pytest.approx(D1_BETA_HAT, abs=1e-8)
        assert fit.max_abs_score <= 1e-8

    def test_d1_grid_search(self):
        f = lambda B: brute_log_partial_likelihood(D1.time, D1.event, D1.covariates, B)
        assert grid_argmax(f, 1)[0] == pytest.approx(cox_fit(D1).beta[0], abs=1e-6)

    def test_likelihood_path_nondecreasing(self):
        for data in _random_cases(20, 8):
            fit = cox_fit(data)
            path = np.asarray(fit.log_likelihood_path)
            assert np.all(np.diff(path) >= -1e-12 * np.abs(path[:-1]).max())
            assert fit.log_likelihood >= fit.log_likelihood_null

    def test_constant_column(self):
        data = _dataset([1, 2, 3, 4], [1, 0, 1, 1], [[1.0, 0.2], [1.0, 0.5], [1.0, -1.0], [1.0, 0.0]])
        with pytest.raises(NonIdentifiableError, match="non-identifiable"):
            cox_fit(data)

    def test_collinear_columns(self):
        x = np.array([0.1, 0.7, -0.3, 1.2, 0.4])
        data = _dataset([1, 2, 3, 4, 5], [1, 1, 0, 1, 1], np.column_stack([x, 2 * x]))
        with pytest.raises(NonIdentifiableError):
            cox_fit(data)

    def test_two_subject_separation(self):
        data = _dataset([1, 2], [1, 1], [[1.0], [0.0]])
        grid = np.linspace(-20, 20, 401)[:, None]
        ll = brute_log_partial_likelihood(data.time, data.event, data.covariates, grid)
        assert np.all(np.diff(ll) > 0)  # monotone: no finite maximizer
        with pytest.raises(SeparationError, match="monotone likelihood / separation"):
            cox_fit(data)

    def test_no_events(self):
        with pytest.raises(NoEventsError):
            cox_fit(_dataset([1, 2, 3], [0, 0, 0], [[0.0], [1.0], [2.0]]))

    def test_breslow_equals_efron_without_ties(self):
        for data in _random_cases(10, 21, ties=False):
            a = cox_fit(data, FitOptions(ties="breslow"))
            b = cox_fit(data, FitOptions(ties="efron"))
            assert_allclose(a.beta, b.beta, rtol=0, atol=1e-12)
            assert_allclose(a.covariance, b.covariance, rtol=1e-10, atol=0)

    def test_location_invariance(self):
        for data in _random_cases(10, 31):
            fit = cox_fit(data)
            shifted = SurvivalDataset(data.time, data.event, data.covariates + 17.5,
                                      data.covariate_names)
            other = cox_fit(shifted)
            assert_allclose(other.beta, fit.beta, atol=1e-10)
            assert_allclose(other.covariance, fit.covariance, atol=1e-10)
            assert other.log_likelihood - other.log_likelihood_null == pytest.approx(
                fit.log_likelihood - fit.log_likelihood_null, abs=1e-10)
            for t1, t2 in zip(fit.summary(), other.summary()):
                assert t1.p_value == pytest.approx(t2.p_value, abs=1e-10)

    @pytest.mark.parametrize("s", [1e-3, -2.5, 40.0])
    def test_scale_equivariance(self, s):
        for data in _random_cases(10, 41):
            fit = cox_fit(data)
            X = data.covariates.copy()
            X[:, 0] *= s
            other = cox_fit(SurvivalDataset(data.time, data.event, X, data.covariate_names))
            assert other.beta[0] == pytest.approx(fit.beta[0] / s, rel=1e-9)
            assert other.std_errors[0] == pytest.approx(fit.std_errors[0] / abs(s), rel=1e-9)
            t1, t2 = wald_test(fit, 0), wald_test(other, 0)
            assert t2.z_value == pytest.approx(math.copysign(1, s) * t1.z_value, abs=1e-10)
            assert t2.p_value == pytest.approx(t1.p_value, abs=1e-10)

    def test_delayed_entry_shrinks_risk_sets(self):
        data = _dataset([2, 3, 4, 5], [1, 1, 0, 1], [[0.0], [1.0], [0.5], [2.0]],
                        entry=[0, 0, 2.5, 0])
        ref = brute_log_partial_likelihood(data.time, data.event, data.covariates,
                                           np.array([[0.4]]), "efron", data.entry_time)[0]
        assert log_partial_likelihood(data, [0.4]) == pytest.approx(ref, abs=1e-12)

    def test_covariance_is_inverse_information(self):
        for data in _random_cases(5, 51):
            fit = cox_fit(data)
            _, info = score_and_information(data, fit.beta)
            assert_allclose(fit.covariance @ info, np.eye(len(fit.beta)), atol=1e-8)


def _manual_fit(beta, se):
    return CoxFit(beta=np.array([beta]), covariance=np.array([[se ** 2]]), log_likelihood=0.0,
                  iterations=1, converged=True, ties="efron", n_events=1, n_rows=1,
                  covariate_names=("z",))


class TestWaldTest:
    def test_null_point(self):
        t = wald_test(_manual_fit(0.0, 1.0), 0)
        assert (t.z_value, t.p_value, t.hazard_ratio) == (0.0, 1.0, 1.0)
        assert t.ci_lower == pytest.approx(math.exp(-1.959964), rel=1e-6)
        assert t.ci_upper == pytest.approx(math.exp(1.959964), rel=1e-6)

    def test_reported_rounding(self):
        t = wald_test(_manual_fit(0.002994, 0.001459), "z")
        assert round(t.hazard_ratio, 3) == 1.003
        assert round(t.p_value, 3) == 0.040
        assert round(t.ci_lower, 3) == 1.000
        assert round(t.ci_upper, 3) == 1.006
        assert t.term == "z"

    def test_not_converged(self):
        fit = _manual_fit(0.1, 0.1)
        object.__setattr__(fit, "converged", False)
        with pytest.raises(NotConvergedError):
            wald_test(fit, 0)

    def test_zero_variance(self):
        with pytest.raises(ValueError, match="zero variance"):
            wald_test(_manual_fit(0.1, 0.0), 0)

    def test_bad_index(self):
        with pytest.raises(IndexError):
            wald_test(_manual_fit(0.1, 0.1), 3)


class TestBreslowBaseline:
    def test_forced_zero_beta(self):
        fit = _manual_fit(0.0, 1.0)
        base = breslow_baseline(fit, D1)
        assert_allclose(base.times, [1, 2, 3])
        assert_allclose(np.diff(np.concatenate([[0], base.values])), [1 / 3, 1 / 2, 1])
        assert base(0.5) == 0.0

    def test_single_subject(self):
        data = _dataset([5.0], [1], [[0.7]])
        fit = _manual_fit(0.3, 1.0)
        assert breslow_baseline(fit, data)(5.0) == pytest.approx(1 / math.exp(0.7 * 0.3))

    def test_nondecreasing(self):
        for data in _random_cases(10, 61):
            base = breslow_baseline(cox_fit(data), data)
            assert np.all(np.diff(base.values) >= 0)
            assert base(0.0) == 0.0


class TestCoxPHRegression:
    def test_sklearn_interface(self):
        rng = np.random.default_rng(0)
        time, event, X, _ = random_survival_data(rng, 60, 2)
        est = CoxPHRegression(ties="breslow").fit(X, (time, event))
        direct = cox_fit(_dataset(time, event, X), FitOptions(ties="breslow"))
        assert_allclose(est.coef_, direct.beta)
        assert_allclose(est.predict(X), X @ direct.beta)
        assert_allclose(est.predict_partial_hazard(X[:3]), np.exp(X[:3] @ direct.beta))
        assert est.get_params()["ties"] == "breslow"
        assert len(est.summary()) == 2

    def test_structured_y_and_entry(self):
        y = np.array([(True, 2.0), (True, 3.0), (False, 4.0), (True, 5.0)],
                     dtype=[("event", bool), ("time", float)])
        X = np.array([[0.0], [1.0], [0.5], [2.0]])
        est = CoxPHRegression().fit(X, y, entry=[0, 0, 2.5, 0])
        assert est.converged_
        assert est.baseline_cumulative_hazard()(10.0) > 0

    def test_predict_wrong_width(self):
        rng = np.random.default_rng(1)
        time, event, X, _ = random_survival_data(rng, 30, 2)
        est = CoxPHRegression().fit(X, (time, event))
        with pytest.raises(ValueError):
            est.predict(np.ones((2, 3)))

"""Landmark dataset construction, the offset test and stratified KM curves."""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import NoEventsError, SurvivalError
from ..survival.cox import FitOptions, TestResult, cox_fit
from ..survival.data import SurvivalDataset
from ..survival.kaplan_meier import KMCurve, km_estimate
from .ingest import RawCohort, RowError
from .schema import AnalysisWindow

__all__ = ["ExclusionReport", "MechanismReport", "DualModelRow", "DualModelTable",
           "build_analysis_dataset", "mechanism_test", "dual_model_comparison",
           "offset_strata", "km_by_offset_bins", "EmptyCohortError", "OFFSET"]

OFFSET = "z_delta"


class EmptyCohortError(NoEventsError):
    def __init__(self, message="no subjects remain after landmark exclusions"):
        super().__init__(message)


@dataclass
class ExclusionReport:
    n_input: int
    n_included: int = 0
    n_excluded_window: int = 0
    n_excluded_pre_landmark: int = 0
    n_rejected: int = 0
    errors: List[RowError] = field(default_factory=list)

    def balanced(self):
        return (self.n_included + self.n_excluded_window + self.n_excluded_pre_landmark
                + self.n_rejected) == self.n_input

    def to_dict(self):
        return {"n_input": self.n_input, "n_included": self.n_included,
                "n_excluded_window": self.n_excluded_window,
                "n_excluded_pre_landmark": self.n_excluded_pre_landmark,
                "n_rejected": self.n_rejected,
                "errors": [{"line": e.line, "id": e.id, "message": e.message}
                           for e in self.errors]}


def build_analysis_dataset(raw: RawCohort, window: AnalysisWindow):
    """Turn dated rows into landmark-time survival data.

    Subjects vaccinated in ``[vaccination_start, landmark)`` who are
    event-free through the landmark (an event dated on the landmark counts
    as before it) are kept.  Follow-up runs to the earlier of the event and
    the censor date.  ``z_delta`` is appended as the last covariate.

    Returns
    -------
    dataset : SurvivalDataset
    report : ExclusionReport
    """
    report = ExclusionReport(n_input=raw.n_input, n_rejected=len(raw.errors),
                             errors=list(raw.errors))
    L, start, censor = window.landmark, window.vaccination_start, window.censor
    keep, z, T, C = [], [], [], []
    for i, (vax, ev) in enumerate(zip(raw.vaccination_dates, raw.event_dates)):
        if ev is not None and ev < vax:
            report.n_rejected += 1
            report.errors.append(RowError(raw.lines[i], raw.ids[i],
                                          "event date precedes vaccination date"))
            continue
        if not start <= vax < L:
            report.n_excluded_window += 1
            continue
        if ev is not None and ev <= L:
            report.n_excluded_pre_landmark += 1
            continue
        event = ev is not None and ev <= censor
        end = ev if event else censor
        keep.append(i)
        z.append((L - vax).days)
        T.append((end - L).days)
        C.append(int(event))
    report.n_included = len(keep)
    if not keep:
        raise EmptyCohortError()
    X = np.column_stack([raw.covariates[keep], np.asarray(z, dtype=np.float64)])
    data = SurvivalDataset(np.asarray(T, dtype=np.float64), C, X,
                           raw.covariate_names + (OFFSET,))
    return data, report


@dataclass(frozen=True)
class MechanismReport:
    population: str
    n_events: int
    n_patients: int
    offset: TestResult
    covariates: Tuple[TestResult, ...]
    alpha: float = 0.05
    confidence_level: float = 0.95
    sensitivity: Optional["MechanismReport"] = None
    note: Optional[str] = None

    @property
    def waning_detected(self):
        return self.offset.p_value < self.alpha

    @property
    def interpretation(self):
        p = self.offset.p_value
        p_text = "p < 0.001" if p < 0.001 else f"p = {p:.3f}"
        if self.waning_detected:
            return (f"{self.population}: the vaccination offset is associated with the "
                    f"infection hazard ({p_text}, alpha = {self.alpha:g}), so waning "
                    f"immunity appears to contribute to infections after the landmark date.")
        return (f"{self.population}: no detectable offset effect ({p_text}, "
                f"alpha = {self.alpha:g}). This does not show that a new strain, rather "
                f"than waning immunity, drives the infections.")

    def to_dict(self):
        out = {"population": self.population, "n_events": self.n_events,
               "n_patients": self.n_patients, "alpha": self.alpha,
               "offset": _result_dict(self.offset),
               "covariates": [_result_dict(t) for t in self.covariates],
               "waning_detected": self.waning_detected,
               "interpretation": self.interpretation}
        if self.sensitivity is not None:
            out["sensitivity"] = self.sensitivity.to_dict()
        if self.note:
            out["note"] = self.note
        return out


def _result_dict(t: TestResult):
    return {"term": t.term, "estimate": t.estimate, "std_error": t.std_error,
            "z_value": t.z_value, "p_value": t.p_value, "hazard_ratio": t.hazard_ratio,
            "ci_lower": t.ci_lower, "ci_upper": t.ci_upper}


def _model_terms(dataset, covariate_names):
    if OFFSET not in dataset.covariate_names:
        raise ValueError(f"dataset has no {OFFSET!r} column")
    if covariate_names is None:
        covariate_names = [n for n in dataset.covariate_names if n != OFFSET]
    return [n for n in covariate_names if n != OFFSET]


def _fit_offset_model(dataset, terms, options, population, alpha):
    fit = cox_fit(dataset.select([OFFSET] + terms), options)
    summary = fit.summary(options.confidence_level)
    return MechanismReport(population=population, n_events=dataset.n_events,
                           n_patients=dataset.n_rows, offset=summary[0],
                           covariates=tuple(summary[1:]), alpha=alpha,
                           confidence_level=options.confidence_level)


def mechanism_test(dataset: SurvivalDataset, covariate_names: Optional[Sequence[str]] = None,
                   offset_cap: Optional[float] = 90, alpha=0.05,
                   options: Optional[FitOptions] = None) -> MechanismReport:
    """Fit the offset-adjusted Cox model and test the offset coefficient.

    With ``offset_cap`` set, the fit is repeated on subjects with
    ``z_delta <= offset_cap``; a failure there is recorded as a note rather
    than raised.
    """
    options = options or FitOptions()
    terms = _model_terms(dataset, covariate_names)
    report = _fit_offset_model(dataset, terms, options, "All patients", alpha)
    if offset_cap is None:
        return report
    mask = dataset.column(OFFSET) <= offset_cap
    label = f"Sensitivity: recently vaccinated (z_delta <= {offset_cap:g})"
    sensitivity, note = None, None
    if not mask.any():
        note = f"{label}: no patients"
    else:
        try:
            sensitivity = _fit_offset_model(dataset.subset(mask), terms, options, label, alpha)
        except SurvivalError as exc:
            note = f"{label}: {exc}"
    return MechanismReport(**{**report.__dict__, "sensitivity": sensitivity, "note": note})


@dataclass(frozen=True)
class DualModelRow:
    term: str
    proposed: TestResult
    naive: Optional[TestResult]


@dataclass(frozen=True)
class DualModelTable:
    rows: Tuple[DualModelRow, ...]
    n_events: int
    n_patients: int


def dual_model_comparison(dataset: SurvivalDataset,
                          covariate_names: Optional[Sequence[str]] = None,
                          options: Optional[FitOptions] = None) -> DualModelTable:
    """Side-by-side hazard ratios with and without the offset covariate.

    Both models are fitted to the same rows; the offset row carries no naive
    counterpart.
    """
    options = options or FitOptions()
    terms = _model_terms(dataset, covariate_names)
    level = options.confidence_level
    proposed = cox_fit(dataset.select([OFFSET] + terms), options).summary(level)
    naive = cox_fit(dataset.select(terms), options).summary(level) if terms else []
    rows = [DualModelRow(OFFSET, proposed[0], None)]
    rows += [DualModelRow(t, p, n) for t, p, n in zip(terms, proposed[1:], naive)]
    return DualModelTable(tuple(rows), dataset.n_events, dataset.n_rows)


def offset_strata(z_delta, bin_width=30, max_closed_bins=6):
    """Assign each offset to a stratum.

    Strata are ``(0, w], (w, 2w], ...`` up to ``max_closed_bins`` closed
    bins, then one open stratum ``> max_closed_bins * w``.

    Returns
    -------
    index : ndarray of int
    labels : list of str, one per possible stratum index
    """
    if bin_width <= 0 or max_closed_bins < 0:
        raise ValueError("bin_width must be positive and max_closed_bins nonnegative")
    z = np.asarray(z_delta, dtype=np.float64)
    idx = np.ceil(z / bin_width).astype(np.int64) - 1
    idx = np.clip(idx, 0, max_closed_bins)
    labels = [f"({j * bin_width:g},{(j + 1) * bin_width:g}]" for j in range(max_closed_bins)]
    labels.append(f"> {max_closed_bins * bin_width:g}")
    return idx, labels


def km_by_offset_bins(dataset: SurvivalDataset, bin_width=30, max_closed_bins=6,
                      time_zero="landmark", confidence_level=0.95) -> List[KMCurve]:
    """Kaplan-Meier curve per vaccination-offset stratum; empty strata are omitted.

    ``time_zero="vaccination"`` measures time from each subject's
    vaccination (``z_delta + T``) without delayed entry, the misspecified
    origin when a new strain drives infections.
    """
    if time_zero not in ("landmark", "vaccination"):
        raise ValueError("time_zero must be 'landmark' or 'vaccination'")
    z = dataset.column(OFFSET)
    idx, labels = offset_strata(z, bin_width, max_closed_bins)
    data = dataset if time_zero == "landmark" else dataset.with_times(z + dataset.time)
    curves = []
    for j, label in enumerate(labels):
        mask = idx == j
        if mask.any():
            curves.append(km_estimate(data.subset(mask), label, confidence_level))
    return curves


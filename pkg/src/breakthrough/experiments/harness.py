"""Replicated simulation experiments and their aggregation.

Each grid cell fixes a hazard mechanism, sample size and subgroup setting.
Replications are independent: one simulated cohort, up to four competing
Cox fits, Wald summaries.  Aggregation turns them into rejection rates,
mean bias and CI coverage with Monte Carlo standard errors.
"""

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .._normal import normal_quantile
from ..exceptions import ConfigError, SurvivalError
from ..simulation.cohort import AnalyticCohort, CohortConfig, generate_cohort
from ..simulation.hazards import HazardSpec, Mechanism
from ..survival.cox import FitOptions, cox_fit, wald_test
from ..survival.data import SurvivalDataset
from .seeding import derive_seed

__all__ = [
    "EstimatorKind", "GridCell", "ExperimentConfig", "EstimatorResult",
    "ReplicationResult", "MetricRow", "MetricsTable", "run_replication", "run_grid",
    "default_paper_grid", "estimator_dataset", "PAPER_GRID",
]


class EstimatorKind(str, enum.Enum):
    """Competing analyses of one simulated cohort.

    proposed_offset
        Landmark time zero, covariates ``z_delta`` (+ ``x1``).
    naive_calendar
        Landmark time zero, ``x1`` only.
    vaccination_time
        Time since vaccination (``z_delta + T``), ``x1`` only, no delayed entry.
    vaccination_time_delayed_entry
        As above but each subject enters the risk set at ``z_delta``.
    """

    PROPOSED_OFFSET = "proposed_offset"
    NAIVE_CALENDAR = "naive_calendar"
    VACCINATION_TIME = "vaccination_time"
    VACCINATION_TIME_DELAYED_ENTRY = "vaccination_time_delayed_entry"


ALL_ESTIMATORS = tuple(EstimatorKind)

PAPER_GRID = {
    "a": 1e-4,
    "b": 7e-4,
    "d": (90, 180, 240),
    "r": {"no_subgroup": (1e-6, 5e-6, 1e-5, 5e-5, 1e-4),
          "with_subgroup": (1e-8, 1e-7, 1e-6, 1e-5)},
    "c": (1e-4, 5e-4, 1e-3, 5e-3, 1e-2),
    "N": (500, 1000, 10000, 100000),
    "alphas": (0.01, 0.05, 0.10),
    "beta1": 0.15,
    "B": 1000,
}


@dataclass(frozen=True)
class GridCell:
    hazard: HazardSpec
    n_subjects: int
    subgroup: bool = False
    beta1: float = 0.15
    vaccination_window_days: int = 365
    followup_days: int = 365

    @property
    def cell_id(self):
        h = self.hazard
        if h.mechanism is Mechanism.WANING:
            core = f"MW_a{h.a:g}_b{h.b:g}_d{h.d:g}_r{h.r:g}"
        else:
            sd = "L" if h.strain_day is None else f"{h.strain_day:g}"
            core = f"MS_k{h.k:g}_c{h.c:g}_s{sd}"
        tail = f"_N{self.n_subjects}_sub{int(self.subgroup)}"
        if self.subgroup:
            tail += f"_b1{self.beta1:g}"
        if (self.vaccination_window_days, self.followup_days) != (365, 365):
            tail += f"_w{self.vaccination_window_days}_f{self.followup_days}"
        return core + tail

    def cohort_config(self, seed):
        return CohortConfig(n_subjects=self.n_subjects, hazard=self.hazard, seed=seed,
                            vaccination_window_days=self.vaccination_window_days,
                            followup_days=self.followup_days,
                            subgroup_enabled=self.subgroup, beta1=self.beta1)

    def to_dict(self):
        h = self.hazard
        out = {"mechanism": h.mechanism.value, **h.params(), "N": self.n_subjects,
               "subgroup": self.subgroup, "beta1": self.beta1}
        if (self.vaccination_window_days, self.followup_days) != (365, 365):
            out["vaccination_window_days"] = self.vaccination_window_days
            out["followup_days"] = self.followup_days
        return out

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw)
        try:
            mech = Mechanism(raw.pop("mechanism"))
            n = int(raw.pop("N"))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"grid cell needs a valid mechanism and N: {exc}") from None
        cell_keys = {"subgroup", "beta1", "vaccination_window_days", "followup_days"}
        cell_kw = {k: raw.pop(k) for k in list(raw) if k in cell_keys}
        hazard_keys = {"a", "b", "d", "r"} if mech is Mechanism.WANING else {"k", "c", "strain_day"}
        unknown = set(raw) - hazard_keys
        if unknown:
            raise ConfigError(f"unknown grid cell keys for {mech.value}: {sorted(unknown)}")
        try:
            hazard = HazardSpec(mech, **raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(hazard=hazard, n_subjects=n, **cell_kw)


@dataclass(frozen=True)
class ExperimentConfig:
    cells: Tuple[GridCell, ...]
    replications: int = 1000
    alphas: Tuple[float, ...] = (0.01, 0.05, 0.10)
    base_seed: int = 20240601
    estimators: Tuple[EstimatorKind, ...] = ALL_ESTIMATORS
    workers: int = 1
    ties: str = "efron"

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "estimators",
                           tuple(EstimatorKind(e) for e in self.estimators))
        if not self.cells:
            raise ConfigError("experiment grid is empty")
        if int(self.replications) < 1:
            raise ConfigError("replications (B) must be >= 1")
        if not all(0 < a < 1 for a in self.alphas):
            raise ConfigError("alphas must lie in (0, 1)")
        if EstimatorKind.PROPOSED_OFFSET not in self.estimators:
            raise ConfigError("the proposed_offset estimator is always required")
        ids = [c.cell_id for c in self.cells]
        if len(set(ids)) != len(ids):
            raise ConfigError("grid contains duplicate cells")

    def capped(self, max_n=10000, max_replications=500):
        """Desk-scale copy: drop cells above ``max_n`` and cap B."""
        cells = tuple(c for c in self.cells if c.n_subjects <= max_n)
        return replace(self, cells=cells,
                       replications=min(self.replications, max_replications))

    def to_dict(self):
        """Result-determining settings; ``workers`` is a hint and is left out."""
        return {"cells": [c.to_dict() for c in self.cells],
                "replications": self.replications, "alphas": list(self.alphas),
                "base_seed": self.base_seed,
                "estimators": [e.value for e in self.estimators], "ties": self.ties}

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw)
        if "cells" not in raw or not isinstance(raw["cells"], list):
            raise ConfigError("experiment config needs a 'cells' list")
        cells = tuple(GridCell.from_dict(c) for c in raw.pop("cells"))
        allowed = {"replications", "alphas", "base_seed", "estimators", "workers", "ties"}
        unknown = set(raw) - allowed
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
        try:
            return cls(cells=cells, **raw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def default_paper_grid(variant="no_subgroup") -> ExperimentConfig:
    """The full simulation grid, including ``N = 100000``.

    Use :meth:`ExperimentConfig.capped` for desk-scale runs.
    """
    if variant not in ("no_subgroup", "with_subgroup"):
        raise ConfigError(f"unknown grid variant {variant!r}")
    g = PAPER_GRID
    subgroup = variant == "with_subgroup"
    cells = []
    for n in g["N"]:
        for d in g["d"]:
            for r in g["r"][variant]:
                cells.append(GridCell(HazardSpec.waning(a=g["a"], b=g["b"], d=float(d), r=r),
                                      n, subgroup, g["beta1"]))
        for c in g["c"]:
            cells.append(GridCell(HazardSpec.new_strain(c=c), n, subgroup, g["beta1"]))
    return ExperimentConfig(cells=tuple(cells), replications=g["B"], alphas=g["alphas"])


def estimator_dataset(kind: EstimatorKind, cohort: AnalyticCohort) -> Optional[SurvivalDataset]:
    """Build the analysis table one estimator sees; None when it has no covariates."""
    kind = EstimatorKind(kind)
    if kind is EstimatorKind.PROPOSED_OFFSET:
        return cohort.landmark_dataset()
    if cohort.x1 is None:
        return None
    x = cohort.x1.reshape(-1, 1)
    if kind is EstimatorKind.NAIVE_CALENDAR:
        return SurvivalDataset(cohort.T, cohort.C, x, ("x1",))
    since_vax = cohort.z_delta + cohort.T
    if kind is EstimatorKind.VACCINATION_TIME:
        return SurvivalDataset(since_vax, cohort.C, x, ("x1",))
    return SurvivalDataset(since_vax, cohort.C, x, ("x1",), entry_time=cohort.z_delta)


@dataclass(frozen=True)
class EstimatorResult:
    converged: bool
    beta1_hat: Optional[float] = None
    se1: Optional[float] = None
    covered: Optional[bool] = None
    beta_delta_hat: Optional[float] = None
    se_delta: Optional[float] = None
    p_delta: Optional[float] = None
    error: Optional[str] = None


@dataclass(frozen=True)
class ReplicationResult:
    cell_id: str
    rep_index: int
    seed: int
    n_events: int
    estimates: Dict[EstimatorKind, EstimatorResult] = field(default_factory=dict)


_Z95 = normal_quantile(0.975)


def _fit_one(kind, data, beta1, options):
    try:
        fit = cox_fit(data, options)
    except SurvivalError as exc:
        return EstimatorResult(converged=False, error=str(exc))
    if not fit.converged:
        return EstimatorResult(converged=False, error="did not converge")
    out = {}
    if "x1" in data.covariate_names:
        t = wald_test(fit, "x1")
        out.update(beta1_hat=t.estimate, se1=t.std_error,
                   covered=abs(t.estimate - beta1) <= _Z95 * t.std_error)
    if kind is EstimatorKind.PROPOSED_OFFSET:
        t = wald_test(fit, "z_delta")
        out.update(beta_delta_hat=t.estimate, se_delta=t.std_error, p_delta=t.p_value)
    return EstimatorResult(converged=True, **out)


def run_replication(cell: GridCell, rep_index: int, base_seed: int,
                    estimators: Sequence[EstimatorKind] = ALL_ESTIMATORS,
                    options: Optional[FitOptions] = None) -> ReplicationResult:
    """Simulate one cohort for ``cell`` and fit each requested estimator.

    Fit failures are recorded per estimator and never raised.
    """
    options = options or FitOptions()
    seed = derive_seed(base_seed, cell.cell_id, rep_index)
    cohort = generate_cohort(cell.cohort_config(seed))
    estimates = {}
    for kind in estimators:
        kind = EstimatorKind(kind)
        data = estimator_dataset(kind, cohort)
        if data is None:
            continue
        estimates[kind] = _fit_one(kind, data, cell.beta1, options)
    return ReplicationResult(cell.cell_id, rep_index, seed, int(cohort.C.sum()), estimates)


METRIC_COLUMNS = ("cell_id", "mechanism", "a", "b", "d", "r", "k", "c", "N", "subgroup",
                  "beta1", "estimator", "metric", "alpha", "value", "mc_se", "B_effective")


@dataclass(frozen=True)
class MetricRow:
    cell_id: str
    mechanism: str
    a: Optional[float]
    b: Optional[float]
    d: Optional[float]
    r: Optional[float]
    k: Optional[float]
    c: Optional[float]
    N: int
    subgroup: bool
    beta1: Optional[float]
    estimator: str
    metric: str
    alpha: Optional[float]
    value: float
    mc_se: float
    B_effective: int

    def as_tuple(self):
        return tuple(getattr(self, k) for k in METRIC_COLUMNS)


class MetricsTable:
    """Long-format aggregate results, one row per (cell, estimator, metric, alpha)."""

    columns = METRIC_COLUMNS

    def __init__(self, rows=(), replications=None, failures=None):
        self.rows = list(rows)
        self.replications = replications
        self.failures = dict(failures or {})

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def extend(self, rows):
        self.rows.extend(rows)

    def select(self, **criteria):
        def ok(row):
            for key, want in criteria.items():
                have = getattr(row, key)
                if isinstance(want, float) and have is not None:
                    if not math.isclose(have, want, rel_tol=1e-12):
                        return False
                elif have != want:
                    return False
            return True
        return [r for r in self.rows if ok(r)]

    def value(self, **criteria):
        rows = self.select(**criteria)
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows match {criteria}")
        return rows[0]


def _binomial_se(p, n):
    return math.sqrt(p * (1 - p) / n) if n > 0 else float("nan")


def aggregate_cell(cell: GridCell, results: Sequence[ReplicationResult],
                   alphas, estimators) -> list:
    """Metric rows for one cell; replications are taken in rep order."""
    results = sorted(results, key=lambda r: r.rep_index)
    h = cell.hazard
    waning = h.mechanism is Mechanism.WANING
    base = dict(cell_id=cell.cell_id, mechanism=h.mechanism.value,
                a=h.a if waning else None, b=h.b if waning else None,
                d=h.d if waning else None, r=h.r if waning else None,
                k=None if waning else h.k, c=None if waning else h.c,
                N=cell.n_subjects, subgroup=cell.subgroup,
                beta1=cell.beta1 if cell.subgroup else None)
    rows = []
    for kind in estimators:
        kind = EstimatorKind(kind)
        fits = [r.estimates[kind] for r in results if kind in r.estimates]
        if not fits:
            continue
        ok = [f for f in fits if f.converged]
        n_ok = len(ok)
        if kind is EstimatorKind.PROPOSED_OFFSET:
            p = np.array([f.p_delta for f in ok])
            metric = "power" if waning else "type1"
            for alpha in alphas:
                rate = float(np.mean(p <= alpha)) if n_ok else float("nan")
                rows.append(MetricRow(**base, estimator=kind.value, metric=metric,
                                      alpha=alpha, value=rate,
                                      mc_se=_binomial_se(rate, n_ok), B_effective=n_ok))
        if cell.subgroup and n_ok:
            est = np.array([f.beta1_hat for f in ok])
            bias = float(est.mean() - cell.beta1)
            sd = float(est.std(ddof=1)) if n_ok > 1 else float("nan")
            rows.append(MetricRow(**base, estimator=kind.value, metric="mean_bias",
                                  alpha=None, value=bias, mc_se=sd / math.sqrt(n_ok),
                                  B_effective=n_ok))
            cov = float(np.mean([f.covered for f in ok]))
            rows.append(MetricRow(**base, estimator=kind.value, metric="coverage",
                                  alpha=None, value=cov, mc_se=_binomial_se(cov, n_ok),
                                  B_effective=n_ok))
    return rows


def _run_block(args):
    cell, reps, base_seed, estimators, ties = args
    options = FitOptions(ties=ties)
    return [run_replication(cell, i, base_seed, estimators, options) for i in reps]


def _blocks(config, block_size):
    for cell in config.cells:
        for start in range(0, config.replications, block_size):
            reps = range(start, min(start + block_size, config.replications))
            yield cell, reps


def run_grid(config: ExperimentConfig, workers: Optional[int] = None,
             on_cell_complete=None, keep_replications=False) -> MetricsTable:
    """Run every replication of every cell and aggregate.

    ``workers`` (default ``config.workers``) only changes wall-clock time:
    every replication is seeded from ``(base_seed, cell_id, rep_index)`` and
    aggregation is done in replication order.  ``on_cell_complete(cell,
    rows)`` is called as each cell finishes, in grid order.
    """
    workers = int(workers or config.workers or 1)
    block_size = max(1, min(50, config.replications))
    tasks = [(cell, reps, config.base_seed, config.estimators, config.ties)
             for cell, reps in _blocks(config, block_size)]
    per_cell = -(-config.replications // block_size)

    table = MetricsTable(replications=config.replications)
    stored = {} if keep_replications else None

    def consume(results_iter):
        pending = []
        for i, block in enumerate(results_iter):
            pending.extend(block)
            if (i + 1) % per_cell == 0:
                cell = tasks[i][0]
                rows = aggregate_cell(cell, pending, config.alphas, config.estimators)
                table.extend(rows)
                failures = sum(1 for r in pending for e in r.estimates.values()
                               if not e.converged)
                if failures:
                    table.failures[cell.cell_id] = failures
                if stored is not None:
                    stored[cell.cell_id] = pending
                if on_cell_complete is not None:
                    on_cell_complete(cell, rows)
                pending = []

    if workers <= 1:
        consume(_run_block(t) for t in tasks)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            consume(pool.map(_run_block, tasks))
    if stored is not None:
        table.replication_results = stored
    return table


def default_workers():
    """Worker-count hint from ``BREAKTHROUGH_WORKERS`` (results never depend on it)."""
    try:
        return max(1, int(os.environ.get("BREAKTHROUGH_WORKERS", "1")))
    except ValueError:
        return 1

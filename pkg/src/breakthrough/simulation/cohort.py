"""Simulated vaccinated cohorts analysed from a calendar landmark date.

Calendar day 0 opens the vaccination window and the landmark ``L`` closes
it.  Subjects are at risk from their vaccination day; anyone infected on or
before ``L`` is left-truncated.  Survivors are followed until
``L + followup_days``.
"""

import csv
import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..survival.data import SurvivalDataset
from .hazards import HazardSpec, draw_event_time

__all__ = ["CohortConfig", "AnalyticCohort", "generate_cohort", "cohort_config_from_dict"]


@dataclass(frozen=True)
class CohortConfig:
    n_subjects: int
    hazard: HazardSpec
    seed: int = 0
    vaccination_window_days: int = 365
    followup_days: int = 365
    subgroup_enabled: bool = False
    beta1: float = 0.15
    subgroup_fraction: float = 0.5
    pool_chunk_factor: int = 2
    integer_days: bool = False

    def __post_init__(self):
        if int(self.n_subjects) < 1:
            raise ValueError("n_subjects must be a positive integer")
        if not 0 < self.subgroup_fraction < 1:
            raise ValueError("subgroup_fraction must lie in (0, 1)")
        if self.vaccination_window_days <= 0 or self.followup_days <= 0:
            raise ValueError("vaccination window and follow-up must be positive")
        if int(self.pool_chunk_factor) < 1:
            raise ValueError("pool_chunk_factor must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def landmark_day(self):
        return float(self.vaccination_window_days)

    def to_dict(self):
        out = asdict(self)
        out["hazard"] = {"mechanism": self.hazard.mechanism.value,
                         **{k: v for k, v in asdict(self.hazard).items() if k != "mechanism"}}
        return out


def cohort_config_from_dict(raw: dict) -> CohortConfig:
    raw = dict(raw)
    hazard = dict(raw.pop("hazard"))
    unknown = set(raw) - set(CohortConfig.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown cohort config keys: {sorted(unknown)}")
    return CohortConfig(hazard=HazardSpec(**hazard), **raw)


@dataclass(frozen=True, eq=False)
class AnalyticCohort:
    """Landmark-analysis rows: offset ``z_delta``, time ``T``, event ``C``."""

    z_delta: np.ndarray
    T: np.ndarray
    C: np.ndarray
    x1: Optional[np.ndarray]
    landmark_day: float
    followup_days: float
    truncated_count: int
    config: Optional[CohortConfig] = field(default=None, repr=False)

    def __len__(self):
        return self.T.shape[0]

    @property
    def columns(self):
        return ["z_delta", "T", "C"] + (["x1"] if self.x1 is not None else [])

    def event_fraction(self):
        return float(self.C.mean())

    def to_csv(self, path):
        """Write ``z_delta,T,C[,x1]`` with round-trip float formatting."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for i in range(len(self)):
                row = [repr(float(self.z_delta[i])), repr(float(self.T[i])), int(self.C[i])]
                if self.x1 is not None:
                    row.append(int(self.x1[i]))
                w.writerow(row)

    def to_dated_csv(self, path, vaccination_start="2021-01-01"):
        """Write a real-world-style cohort file with ISO dates.

        Vaccination days are floored and event days ceiled onto whole
        calendar days, so integer-day cohorts round-trip exactly.
        """
        start = dt.date.fromisoformat(vaccination_start)
        L = self.landmark_day
        vax_day = np.floor(L - self.z_delta).astype(np.int64)
        event_day = np.ceil(L + self.T).astype(np.int64)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["patient_id", "vaccination_date", "event_date"]
                       + (["x1"] if self.x1 is not None else []))
            for i in range(len(self)):
                ev = (start + dt.timedelta(days=int(event_day[i]))).isoformat() if self.C[i] else ""
                row = [f"P{i + 1:07d}",
                       (start + dt.timedelta(days=int(vax_day[i]))).isoformat(), ev]
                if self.x1 is not None:
                    row.append(int(self.x1[i]))
                w.writerow(row)

    def analysis_config(self, vaccination_start="2021-01-01", offset_cap=90):
        """Schema and window JSON matching :meth:`to_dated_csv`."""
        start = dt.date.fromisoformat(vaccination_start)
        landmark = start + dt.timedelta(days=int(self.landmark_day))
        censor = landmark + dt.timedelta(days=int(self.followup_days))
        covs = [{"name": "x1", "kind": "binary"}] if self.x1 is not None else []
        return {
            "schema": {"id": "patient_id", "vaccination_date": "vaccination_date",
                       "event_date": "event_date", "covariates": covs},
            "window": {"vaccination_start": start.isoformat(),
                       "landmark": landmark.isoformat(), "censor": censor.isoformat(),
                       "offset_cap": offset_cap},
        }

    def write_analysis_config(self, path, **kwargs):
        with open(path, "w") as fh:
            json.dump(self.analysis_config(**kwargs), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def landmark_dataset(self):
        """Calendar time zero: time ``T``, covariates ``[x1,] z_delta``."""
        cols, names = [], []
        if self.x1 is not None:
            cols.append(self.x1)
            names.append("x1")
        cols.append(self.z_delta)
        names.append("z_delta")
        return SurvivalDataset(self.T, self.C, np.column_stack(cols), tuple(names))


def generate_cohort(config: CohortConfig) -> AnalyticCohort:
    """Simulate a left-truncated cohort of exactly ``config.n_subjects`` rows.

    Candidates are drawn in chunks of ``pool_chunk_factor * N``; within a
    chunk the stream order is vaccination days, subgroup flags (if
    enabled), then event uniforms.  Survivors past the landmark are kept in
    generation order until ``N`` exist.
    """
    rng = np.random.Generator(np.random.PCG64(int(config.seed)))
    N = int(config.n_subjects)
    L = config.landmark_day
    end = L + config.followup_days
    spec = config.hazard.anchored(L)
    chunk = int(config.pool_chunk_factor) * N

    kept_v, kept_x, kept_ev = [], [], []
    n_kept = 0
    truncated = 0
    while n_kept < N:
        v = rng.uniform(0.0, config.vaccination_window_days, chunk)
        if config.integer_days:
            v = np.floor(v)
        if config.subgroup_enabled:
            x1 = (rng.random(chunk) < config.subgroup_fraction).astype(np.int8)
            m = np.exp(config.beta1 * x1)
        else:
            x1 = None
            m = np.ones(chunk)
        ev = draw_event_time(spec, v, m, rng)
        if config.integer_days:
            ev = np.ceil(ev)
        survive = ev > L
        need = N - n_kept
        idx = np.flatnonzero(survive)
        if idx.shape[0] > need:
            # Truncation is counted only up to the last candidate consumed.
            last = idx[need - 1]
            truncated += int(np.count_nonzero(~survive[: last + 1]))
            idx = idx[:need]
        else:
            truncated += int(np.count_nonzero(~survive))
        kept_v.append(v[idx])
        kept_ev.append(ev[idx])
        if x1 is not None:
            kept_x.append(x1[idx])
        n_kept += idx.shape[0]

    v = np.concatenate(kept_v)
    ev = np.concatenate(kept_ev)
    C = (ev <= end).astype(np.int8)
    T = np.minimum(ev, end) - L
    return AnalyticCohort(z_delta=L - v, T=T, C=C,
                          x1=np.concatenate(kept_x) if kept_x else None,
                          landmark_day=L, followup_days=float(config.followup_days),
                          truncated_count=truncated, config=config)


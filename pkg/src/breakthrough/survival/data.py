"""Container for right-censored, possibly left-truncated survival data."""

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


class SurvivalRow(NamedTuple):
    time: float
    event: int
    covariates: tuple
    entry_time: float = 0.0


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Immutable analysis table.

    Parameters
    ----------
    time : array of shape (n,)
        Follow-up time in days (event or censoring).
    event : array of shape (n,)
        1 for an observed event, 0 for censoring.
    covariates : array of shape (n, p)
        Covariate matrix; ``p`` may be 0 for Kaplan-Meier-only use.
    covariate_names : sequence of str
        Column labels, length ``p``.
    entry_time : array of shape (n,), optional
        Delayed-entry times; a subject is at risk on ``(entry, time]``.
    """

    time: np.ndarray
    event: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple = ()
    entry_time: np.ndarray = field(default=None)

    def __post_init__(self):
        time = np.asarray(self.time, dtype=np.float64).ravel()
        n = time.shape[0]
        if n == 0:
            raise ValueError("dataset must contain at least one row")
        event = np.asarray(self.event).ravel()
        if event.shape != (n,) or not np.all(np.isin(event, (0, 1))):
            raise ValueError("event flags must be 0/1 with one per row")
        X = np.asarray(self.covariates, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(n, -1) if X.size else np.empty((n, 0))
        if X.shape[0] != n:
            raise ValueError("covariate matrix row count does not match time")
        names = tuple(self.covariate_names)
        if len(names) != X.shape[1]:
            raise ValueError(
                f"{len(names)} covariate names given for {X.shape[1]} columns")
        if len(set(names)) != len(names):
            raise ValueError("covariate names must be unique")
        if not np.all(np.isfinite(X)):
            raise ValueError("covariates must be finite")
        entry = (np.zeros(n) if self.entry_time is None
                 else np.asarray(self.entry_time, dtype=np.float64).ravel())
        if entry.shape != (n,):
            raise ValueError("entry_time must have one value per row")
        if not (np.all(np.isfinite(time)) and np.all(entry >= 0)
                and np.all(time > entry)):
            raise ValueError("every row needs finite time > entry_time >= 0")

        object.__setattr__(self, "time", _readonly(time))
        object.__setattr__(self, "event", _readonly(event.astype(np.int8)))
        object.__setattr__(self, "covariates", _readonly(X))
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "entry_time", _readonly(entry))

    @classmethod
    def from_rows(cls, rows: Sequence[SurvivalRow], covariate_names=()):
        rows = list(rows)
        p = len(covariate_names)
        X = np.array([r.covariates for r in rows], dtype=np.float64).reshape(len(rows), p)
        return cls(time=[r.time for r in rows], event=[r.event for r in rows],
                   covariates=X, covariate_names=covariate_names,
                   entry_time=[r.entry_time for r in rows])

    @property
    def rows(self):
        return [SurvivalRow(float(t), int(e), tuple(x), float(s))
                for t, e, x, s in zip(self.time, self.event, self.covariates,
                                      self.entry_time)]

    @property
    def n_rows(self):
        return self.time.shape[0]

    @property
    def n_events(self):
        return int(self.event.sum())

    @property
    def has_delayed_entry(self):
        return bool(np.any(self.entry_time > 0))

    def column(self, name):
        return self.covariates[:, self.covariate_names.index(name)]

    def subset(self, mask):
        mask = np.asarray(mask)
        return SurvivalDataset(self.time[mask], self.event[mask],
                               self.covariates[mask], self.covariate_names,
                               self.entry_time[mask])

    def select(self, names):
        """Keep only the named covariate columns, in the given order."""
        idx = [self.covariate_names.index(n) for n in names]
        return SurvivalDataset(self.time, self.event, self.covariates[:, idx],
                               tuple(names), self.entry_time)

    def drop(self, names):
        drop = set(names)
        return self.select([n for n in self.covariate_names if n not in drop])

    def with_times(self, time, entry_time=None):
        return SurvivalDataset(time, self.event, self.covariates,
                               self.covariate_names, entry_time)

    def __len__(self):
        return self.n_rows

    def __repr__(self):
        return (f"SurvivalDataset(n_rows={self.n_rows}, n_events={self.n_events}, "
                f"covariates={list(self.covariate_names)})")

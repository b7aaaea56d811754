"""Cohort CSV ingestion with per-row error collection."""

import csv
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ..exceptions import ConfigError
from .schema import CohortSchema, parse_date

__all__ = ["RowError", "RawCohort", "load_cohort"]

_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f"}


@dataclass(frozen=True)
class RowError:
    line: int
    id: str
    message: str


@dataclass(eq=False)
class RawCohort:
    """Parsed rows that passed field-level validation.

    ``n_input`` counts every data row in the file, including rejected ones.
    """

    ids: List[str]
    vaccination_dates: list
    event_dates: list
    covariates: np.ndarray
    covariate_names: Tuple[str, ...]
    lines: List[int]
    errors: List[RowError] = field(default_factory=list)
    n_input: int = 0

    def __len__(self):
        return len(self.ids)


def _parse_binary(text):
    t = text.strip().lower()
    if t in _TRUE:
        return 1.0
    if t in _FALSE:
        return 0.0
    raise ValueError(f"not a binary value: {text!r}")


def _parse_continuous(text):
    value = float(text)
    if not np.isfinite(value):
        raise ValueError(f"non-finite value: {text!r}")
    return value


def load_cohort(path, schema: CohortSchema) -> RawCohort:
    """Read a cohort file, expanding categorical columns into indicators.

    Missing header columns raise :class:`ConfigError`.  Rows with bad
    dates, unparseable values or undeclared category levels are skipped and
    reported in ``errors``.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in schema.required_columns if c not in header]
        if missing:
            raise ConfigError(f"{path}: missing columns {missing}")
        records = list(reader)

    cats = [c for c in schema.covariates if c.kind == "categorical"]
    errors = []
    parsed = []
    for i, rec in enumerate(records):
        line = i + 2  # header is line 1
        rid = (rec.get(schema.id_column) or "").strip()
        try:
            vax = parse_date(rec[schema.vaccination_date_column].strip())
            ev_text = (rec[schema.event_date_column] or "").strip()
            event = parse_date(ev_text) if ev_text else None
            values = {}
            for cov in schema.covariates:
                raw = (rec[cov.name] or "").strip()
                if raw == "":
                    raise ValueError(f"missing value for {cov.name!r}")
                if cov.kind == "binary":
                    values[cov.name] = _parse_binary(raw)
                elif cov.kind == "continuous":
                    values[cov.name] = _parse_continuous(raw)
                else:
                    if cov.levels is not None and raw not in cov.levels:
                        raise ValueError(f"unknown level {raw!r} for {cov.name!r}")
                    values[cov.name] = raw
        except (ValueError, TypeError) as exc:
            errors.append(RowError(line, rid, str(exc)))
            continue
        parsed.append((line, rid, vax, event, values))

    levels = {}
    for cov in cats:
        observed = {p[4][cov.name] for p in parsed}
        lv = list(cov.levels) if cov.levels is not None else sorted(observed)
        if parsed and cov.reference not in observed:
            raise ConfigError(
                f"reference level {cov.reference!r} of {cov.name!r} does not occur in the data")
        levels[cov.name] = [x for x in lv if x != cov.reference]

    names = []
    for cov in schema.covariates:
        if cov.kind == "categorical":
            names.extend(f"{lv} vs {cov.reference}" for lv in levels[cov.name])
        else:
            names.append(cov.display)
    if len(set(names)) != len(names):
        raise ConfigError(f"expanded covariate names collide: {names}")

    X = np.empty((len(parsed), len(names)))
    for r, p in enumerate(parsed):
        j = 0
        for cov in schema.covariates:
            v = p[4][cov.name]
            if cov.kind == "categorical":
                for lv in levels[cov.name]:
                    X[r, j] = 1.0 if v == lv else 0.0
                    j += 1
            else:
                X[r, j] = v
                j += 1

    return RawCohort(ids=[p[1] for p in parsed], vaccination_dates=[p[2] for p in parsed],
                     event_dates=[p[3] for p in parsed], covariates=X,
                     covariate_names=tuple(names), lines=[p[0] for p in parsed],
                     errors=errors, n_input=len(records))

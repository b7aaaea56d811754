"""Column roles and calendar window for real-world cohort files."""

import datetime as dt
import json
from dataclasses import dataclass, field
from typing import Optional, Tuple

from ..exceptions import ConfigError

__all__ = ["CovariateSpec", "CohortSchema", "AnalysisWindow", "AnalysisConfig",
           "load_analysis_config", "parse_date"]

COVARIATE_KINDS = ("binary", "categorical", "continuous")


def parse_date(text):
    """Strict ISO-8601 calendar date (YYYY-MM-DD)."""
    if not isinstance(text, str) or len(text) != 10:
        raise ValueError(f"not an ISO date: {text!r}")
    return dt.date.fromisoformat(text)


@dataclass(frozen=True)
class CovariateSpec:
    """One input column.

    ``categorical`` columns expand into ``"<level> vs <reference>"``
    indicators; ``levels`` fixes their order and rejects unseen values.
    ``label`` renames a binary or continuous column in reports.
    """

    name: str
    kind: str
    reference: Optional[str] = None
    levels: Optional[Tuple[str, ...]] = None
    label: Optional[str] = None

    def __post_init__(self):
        if self.kind not in COVARIATE_KINDS:
            raise ConfigError(f"covariate {self.name!r}: kind must be one of {COVARIATE_KINDS}")
        if self.kind == "categorical" and not self.reference:
            raise ConfigError(f"categorical covariate {self.name!r} needs a reference level")
        if self.levels is not None:
            object.__setattr__(self, "levels", tuple(self.levels))
            if self.reference not in self.levels:
                raise ConfigError(
                    f"reference level {self.reference!r} not among declared levels of {self.name!r}")

    @property
    def display(self):
        return self.label or self.name


@dataclass(frozen=True)
class CohortSchema:
    id_column: str
    vaccination_date_column: str
    event_date_column: str
    covariates: Tuple[CovariateSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        names = [self.id_column, self.vaccination_date_column, self.event_date_column]
        names += [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise ConfigError("schema columns must be distinct")

    @property
    def required_columns(self):
        return [self.id_column, self.vaccination_date_column, self.event_date_column] + \
            [c.name for c in self.covariates]


@dataclass(frozen=True)
class AnalysisWindow:
    vaccination_start: dt.date
    landmark: dt.date
    censor: dt.date
    offset_cap: Optional[int] = 90

    def __post_init__(self):
        if not self.vaccination_start < self.landmark < self.censor:
            raise ConfigError("window needs vaccination_start < landmark < censor")
        if self.offset_cap is not None and self.offset_cap <= 0:
            raise ConfigError("offset_cap must be a positive number of days")


@dataclass(frozen=True)
class AnalysisConfig:
    schema: CohortSchema
    window: AnalysisWindow
    raw: dict = field(default_factory=dict, compare=False, repr=False)


def _require(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return d[key]


def analysis_config_from_dict(raw) -> AnalysisConfig:
    if not isinstance(raw, dict):
        raise ConfigError("analysis config must be a JSON object")
    s = _require(raw, "schema", "config")
    w = _require(raw, "window", "config")
    covs = []
    for c in s.get("covariates", []):
        if not isinstance(c, dict):
            raise ConfigError("each covariate must be an object")
        unknown = set(c) - {"name", "kind", "reference", "levels", "label"}
        if unknown:
            raise ConfigError(f"unknown covariate keys {sorted(unknown)}")
        covs.append(CovariateSpec(name=_require(c, "name", "covariate"),
                                  kind=_require(c, "kind", "covariate"),
                                  reference=c.get("reference"), levels=c.get("levels"),
                                  label=c.get("label")))
    schema = CohortSchema(id_column=_require(s, "id", "schema"),
                          vaccination_date_column=_require(s, "vaccination_date", "schema"),
                          event_date_column=_require(s, "event_date", "schema"),
                          covariates=tuple(covs))
    try:
        window = AnalysisWindow(
            vaccination_start=parse_date(_require(w, "vaccination_start", "window")),
            landmark=parse_date(_require(w, "landmark", "window")),
            censor=parse_date(_require(w, "censor", "window")),
            offset_cap=w.get("offset_cap", 90))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"window: {exc}") from None
    return AnalysisConfig(schema=schema, window=window, raw=raw)


def load_analysis_config(path) -> AnalysisConfig:
    """Read the schema + window JSON file.

    Example::

        {"schema": {"id": "patient_id", "vaccination_date": "vax_date",
                    "event_date": "positive_test_date",
                    "covariates": [
                        {"name": "age", "kind": "continuous", "label": "Age"},
                        {"name": "race_ethnicity", "kind": "categorical",
                         "reference": "NH White"},
                        {"name": "copd", "kind": "binary", "label": "COPD"}]},
         "window": {"vaccination_start": "2021-01-01", "landmark": "2021-07-01",
                    "censor": "2021-12-01", "offset_cap": 90}}
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    return analysis_config_from_dict(raw)

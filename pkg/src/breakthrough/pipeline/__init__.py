"""Landmark analysis of dated cohort files."""

from .analysis import (OFFSET, DualModelRow, DualModelTable, EmptyCohortError,
                       ExclusionReport, MechanismReport, build_analysis_dataset,
                       dual_model_comparison, km_by_offset_bins, mechanism_test,
                       offset_strata)
from .ingest import RawCohort, RowError, load_cohort
from .report import (format_hr, format_p, render_report, write_dual_model_csv,
                     write_km_csv, write_report_json)
from .schema import (AnalysisConfig, AnalysisWindow, CohortSchema, CovariateSpec,
                     analysis_config_from_dict, load_analysis_config, parse_date)

__all__ = ["OFFSET", "DualModelRow", "DualModelTable", "EmptyCohortError",
           "ExclusionReport", "MechanismReport", "build_analysis_dataset",
           "dual_model_comparison", "km_by_offset_bins", "mechanism_test", "offset_strata",
           "RawCohort", "RowError", "load_cohort", "format_hr", "format_p", "render_report",
           "write_dual_model_csv", "write_km_csv", "write_report_json", "AnalysisConfig",
           "AnalysisWindow", "CohortSchema", "CovariateSpec", "analysis_config_from_dict",
           "load_analysis_config", "parse_date"]

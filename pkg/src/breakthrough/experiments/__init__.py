"""Monte Carlo evaluation of the offset test and the competing estimators."""

from .export import write_figure_data, write_metrics_csv, write_metrics_json
from .harness import (EstimatorKind, EstimatorResult, ExperimentConfig, GridCell,
                      MetricRow, MetricsTable, ReplicationResult, default_paper_grid,
                      default_workers, estimator_dataset, run_grid, run_replication)
from .seeding import derive_seed, splitmix64

__all__ = ["EstimatorKind", "EstimatorResult", "ExperimentConfig", "GridCell",
           "MetricRow", "MetricsTable", "ReplicationResult", "default_paper_grid",
           "default_workers", "estimator_dataset", "run_grid", "run_replication", "derive_seed",
           "splitmix64", "write_metrics_csv", "write_metrics_json", "write_figure_data"]

"""Hazard mechanisms, exact event-time sampling and cohort simulation."""

from .cohort import AnalyticCohort, CohortConfig, cohort_config_from_dict, generate_cohort
from .hazards import (HazardSpec, Mechanism, cumulative_hazard, draw_event_time,
                      hazard_at, invert_cumulative_hazard)

__all__ = ["HazardSpec", "Mechanism", "hazard_at", "cumulative_hazard",
           "invert_cumulative_hazard", "draw_event_time", "CohortConfig",
           "AnalyticCohort", "generate_cohort", "cohort_config_from_dict"]

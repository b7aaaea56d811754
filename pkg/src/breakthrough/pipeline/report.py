"""Text, JSON and CSV renderings of pipeline results.

Text reports print hazard ratios and p-values to three decimals; the CSV and
JSON outputs keep full precision.
"""

import csv
import json
import math

from ..survival.cox import TestResult
from .analysis import DualModelTable, MechanismReport

__all__ = ["format_hr", "format_p", "mechanism_table_text", "covariate_table_text",
           "dual_model_text", "render_report", "write_report_json", "write_dual_model_csv",
           "write_km_csv", "KM_COLUMNS", "DUAL_COLUMNS"]

KM_COLUMNS = ("stratum", "time", "survival", "ci_lower", "ci_upper", "at_risk", "n_events")
DUAL_COLUMNS = ("term", "proposed_hr", "proposed_ci_lower", "proposed_ci_upper",
                "proposed_p", "naive_hr", "naive_ci_lower", "naive_ci_upper", "naive_p")


def format_hr(t: TestResult):
    """``"1.869 (1.306, 2.674)"``."""
    return f"{t.hazard_ratio:.3f} ({t.ci_lower:.3f}, {t.ci_upper:.3f})"


def format_p(p):
    """Three decimals, or ``"<0.001"`` below that."""
    if p is None or math.isnan(p):
        return ""
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def _table(header, rows):
    widths = [max(len(str(r[j])) for r in [header] + rows) for j in range(len(header))]
    line = lambda r: " | ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(header), sep] + [line(r) for r in rows])


def _mechanism_row(rep: MechanismReport):
    return [rep.population, f"{rep.n_events} / {rep.n_patients}",
            format_hr(rep.offset), format_p(rep.offset.p_value)]


def mechanism_table_text(report: MechanismReport):
    """Offset test layout: population, events / patients, HR (95% CI), p."""
    level = f"{100 * report.confidence_level:g}"
    header = ["Population", "Events / Patients", f"HR per day ({level}% CI)", "p-value"]
    rows = [_mechanism_row(report)]
    if report.sensitivity is not None:
        rows.append(_mechanism_row(report.sensitivity))
    return _table(header, rows)


def covariate_table_text(report: MechanismReport):
    rows = [[t.term, format_hr(t), format_p(t.p_value)]
            for t in (report.offset,) + tuple(report.covariates)]
    return _table(["Term", "HR (95% CI)", "p-value"], rows)


def dual_model_text(table: DualModelTable):
    """Covariate | proposed HR (CI) | p | naive HR (CI) | p."""
    rows = []
    for row in table.rows:
        naive = row.naive
        rows.append([row.term, format_hr(row.proposed), format_p(row.proposed.p_value),
                     format_hr(naive) if naive else "", format_p(naive.p_value) if naive else ""])
    return _table(["Covariate", "Proposed HR (95% CI)", "p-value",
                   "Naive HR (95% CI)", "p-value"], rows)


def render_report(report: MechanismReport, dual: DualModelTable = None, exclusions=None):
    parts = ["Test for driving mechanism", "", mechanism_table_text(report), "",
             report.interpretation]
    if report.sensitivity is not None:
        parts += ["", report.sensitivity.interpretation]
    if report.note:
        parts += ["", f"Note: {report.note}"]
    if dual is not None:
        parts += ["", "Hazard ratios with and without the vaccination offset", "",
                  dual_model_text(dual)]
    if exclusions is not None:
        parts += ["", f"Rows read: {exclusions.n_input}; included: {exclusions.n_included}; "
                      f"outside vaccination window: {exclusions.n_excluded_window}; "
                      f"event on or before landmark: {exclusions.n_excluded_pre_landmark}; "
                      f"rejected: {exclusions.n_rejected}"]
    return "\n".join(parts) + "\n"


def _finite(v):
    return None if isinstance(v, float) and not math.isfinite(v) else v


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    return _finite(obj)


def write_report_json(path, report: MechanismReport, dual: DualModelTable = None,
                      exclusions=None):
    doc = {"mechanism_test": report.to_dict()}
    if dual is not None:
        doc["dual_model"] = [dict(zip(DUAL_COLUMNS, _dual_values(r))) for r in dual.rows]
    if exclusions is not None:
        doc["exclusions"] = exclusions.to_dict()
    with open(path, "w") as fh:
        json.dump(_clean(doc), fh, indent=2)
        fh.write("\n")


def _dual_values(row):
    p, n = row.proposed, row.naive
    vals = [row.term, p.hazard_ratio, p.ci_lower, p.ci_upper, p.p_value]
    vals += [n.hazard_ratio, n.ci_lower, n.ci_upper, n.p_value] if n else [None] * 4
    return vals


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return v


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_csv_value(v) for v in r])


def write_dual_model_csv(path, table: DualModelTable):
    _write_csv(path, DUAL_COLUMNS, (_dual_values(r) for r in table.rows))


def write_km_csv(path, curves):
    """One block per stratum, starting with a time-zero row at survival 1."""
    rows = []
    for c in curves:
        rows.append((c.stratum_label, 0.0, 1.0, 1.0, 1.0, int(c.n_subjects), 0))
        for j in range(c.times.shape[0]):
            rows.append((c.stratum_label, float(c.times[j]), float(c.survival[j]),
                         float(c.ci_lower[j]), float(c.ci_upper[j]), int(c.at_risk[j]),
                         int(c.n_events[j])))
    _write_csv(path, KM_COLUMNS, rows)

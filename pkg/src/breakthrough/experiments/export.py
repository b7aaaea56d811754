"""CSV/JSON writers for metrics tables and per-figure plot data."""

import csv
import json
import math
from pathlib import Path

from .harness import METRIC_COLUMNS, MetricsTable

FIGURE_FILES = ("fig4_power.csv", "figS2_power.csv", "fig5_bias_coverage.csv",
                "figS3_bias.csv", "tableS1_type1.csv")


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return value


def _json_value(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def write_metrics_csv(table: MetricsTable, path):
    _write(path, METRIC_COLUMNS, (r.as_tuple() for r in table))


def write_metrics_json(table: MetricsTable, path):
    doc = {"columns": list(METRIC_COLUMNS),
           "rows": [{k: _json_value(v) for k, v in zip(METRIC_COLUMNS, r.as_tuple())}
                    for r in table],
           "replications": table.replications,
           "failed_fits": dict(sorted(table.failures.items()))}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _power_rows(table, subgroup):
    rows = [r for r in table if r.metric == "power" and r.subgroup == subgroup]
    rows.sort(key=lambda r: (r.N, r.d, r.r, r.alpha))
    return [(r.d, r.r, r.N, r.alpha, r.value, r.mc_se, r.B_effective) for r in rows]


def _bias_coverage_rows(table, mechanism):
    paired = {}
    for r in table:
        if r.mechanism != mechanism or r.metric not in ("mean_bias", "coverage"):
            continue
        paired.setdefault((r.cell_id, r.estimator), {})[r.metric] = r
    out = []
    for (_, estimator), m in paired.items():
        bias, cov = m.get("mean_bias"), m.get("coverage")
        ref = bias or cov
        out.append((ref, estimator, bias, cov))
    return out


def write_figure_data(table: MetricsTable, out_dir):
    """Write every plot-data CSV; files for absent cells carry only a header."""
    out = Path(out_dir)
    header = ("d", "r", "N", "alpha", "power", "mc_se", "B_effective")
    _write(out / "fig4_power.csv", header, _power_rows(table, False))
    _write(out / "figS2_power.csv", header, _power_rows(table, True))

    rows = []
    for ref, est, bias, cov in _bias_coverage_rows(table, "waning"):
        rows.append((ref.d, ref.r, ref.N, est,
                     bias.value if bias else None, bias.mc_se if bias else None,
                     cov.value if cov else None, cov.mc_se if cov else None,
                     ref.B_effective))
    rows.sort(key=lambda t: (t[2], t[0], t[1], t[3]))
    _write(out / "fig5_bias_coverage.csv",
           ("d", "r", "N", "estimator", "mean_bias", "bias_mc_se", "coverage",
            "coverage_mc_se", "B_effective"), rows)

    rows = []
    for ref, est, bias, _ in _bias_coverage_rows(table, "new_strain"):
        if bias is not None:
            rows.append((ref.c, ref.N, est, bias.value, bias.mc_se, bias.B_effective))
    rows.sort(key=lambda t: (t[1], t[0], t[2]))
    _write(out / "figS3_bias.csv",
           ("c", "N", "estimator", "mean_bias", "mc_se", "B_effective"), rows)

    rows = [(r.N, r.c, int(r.subgroup), r.alpha, r.value, r.mc_se, r.B_effective)
            for r in table if r.metric == "type1"]
    rows.sort(key=lambda t: (t[2], t[0], t[1], t[3]))
    _write(out / "tableS1_type1.csv",
           ("N", "c", "subgroup", "alpha", "type1", "mc_se", "B_effective"), rows)
    return [str(out / f) for f in FIGURE_FILES]

"""Command-line entry point: ``breakthrough {simulate,experiment,analyze,km}``.

Exit codes
----------
0 success, 2 configuration error, 3 I/O error, 4 degenerate data.

Every command validates its inputs before touching the output location, so
a malformed configuration leaves nothing behind.  A ``manifest.json`` is
written next to every output set.
"""

import argparse
import datetime as dt
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional

from . import __version__
from .exceptions import ConfigError, NoEventsError, SurvivalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DEGENERATE = 4


class CommandError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(obj):
    """SHA-256 of the canonical JSON form of a configuration."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now():
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Reproducibility record: enough to regenerate every listed output.

    The timestamps are the only fields that vary between identical runs.
    """

    command: str
    config_hash: str
    base_seed: Optional[int]
    version: str
    started: str
    finished: str = ""
    outputs: List[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    status: str = "complete"
    notes: List[str] = field(default_factory=list)

    def write(self, path):
        self.finished = _now()
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _read_json(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CommandError(f"malformed {what} JSON in {path}: {exc}", EXIT_CONFIG) from None
    except OSError as exc:
        raise CommandError(f"cannot read {what} {path}: {exc.strerror}", EXIT_IO) from None


def _make_dir(path):
    try:
        Path(path).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CommandError(f"cannot create output directory {path}: {exc.strerror}",
                           EXIT_IO) from None
    return Path(path)


# -- simulate ---------------------------------------------------------------

def cmd_simulate(args):
    from .simulation.cohort import cohort_config_from_dict, generate_cohort

    raw = _read_json(args.config, "cohort config")
    try:
        if not isinstance(raw, dict):
            raise ConfigError("cohort config must be a JSON object")
        config = cohort_config_from_dict(raw)
        if args.dated:
            dt.date.fromisoformat(args.dated)
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        raise CommandError(f"invalid cohort config: {exc}", EXIT_CONFIG) from None

    manifest = RunManifest("simulate", config_hash(config.to_dict()), int(config.seed),
                           __version__, _now(), config=config.to_dict())
    cohort = generate_cohort(config)
    out = Path(args.out)
    try:
        if out.parent != Path(""):
            out.parent.mkdir(parents=True, exist_ok=True)
        if args.dated:
            cohort.to_dated_csv(out, vaccination_start=args.dated)
            cfg_path = out.with_name(out.stem + ".analysis.json")
            cohort.write_analysis_config(cfg_path, vaccination_start=args.dated)
            manifest.outputs = [str(out), str(cfg_path)]
        else:
            cohort.to_csv(out)
            manifest.outputs = [str(out)]
        manifest.notes.append(f"{cohort.truncated_count} candidates removed by left truncation")
        manifest.write(out.with_name(out.name + ".manifest.json"))
    except OSError as exc:
        raise CommandError(f"cannot write {out}: {exc.strerror}", EXIT_IO) from None
    print(f"wrote {len(cohort)} rows to {out}")
    return EXIT_OK


# -- experiment -------------------------------------------------------------

def _experiment_config(args):
    from .experiments.harness import ExperimentConfig, default_paper_grid

    if bool(args.config) == bool(args.paper_grid):
        raise CommandError("give either a config file or --paper-grid", EXIT_CONFIG)
    try:
        if args.config:
            raw = _read_json(args.config, "experiment config")
            if not isinstance(raw, dict):
                raise ConfigError("experiment config must be a JSON object")
            config = ExperimentConfig.from_dict(raw)
        else:
            config = default_paper_grid(args.paper_grid)
            if args.desk_scale:
                config = config.capped(max_n=10000, max_replications=500)
            elif not args.full_scale:
                config = config.capped(max_n=10000, max_replications=config.replications)
        if args.replications is not None:
            config = replace(config, replications=args.replications)
        if args.base_seed is not None:
            config = replace(config, base_seed=args.base_seed)
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        raise CommandError(f"invalid experiment config: {exc}", EXIT_CONFIG) from None
    return config


def cmd_experiment(args):
    from .experiments.export import write_figure_data, write_metrics_csv, write_metrics_json
    from .experiments.harness import MetricsTable, default_workers, run_grid

    config = _experiment_config(args)
    workers = args.workers or default_workers()
    out = _make_dir(args.out)
    manifest = RunManifest("experiment", config_hash(config.to_dict()), config.base_seed,
                           __version__, _now(), config=config.to_dict())
    metrics_csv, metrics_json = out / "metrics.csv", out / "metrics.json"
    partial = MetricsTable(replications=config.replications)

    def flush(cell, rows):
        partial.extend(rows)
        write_metrics_csv(partial, metrics_csv)

    try:
        try:
            table = run_grid(config, workers=workers, on_cell_complete=flush)
        except KeyboardInterrupt:
            write_metrics_csv(partial, metrics_csv)
            manifest.status = "interrupted"
            manifest.outputs = [str(metrics_csv)]
            manifest.notes.append(
                f"interrupted after {len({r.cell_id for r in partial})} of "
                f"{len(config.cells)} cells")
            manifest.write(out / "manifest.json")
            print("interrupted; partial metrics written", file=sys.stderr)
            return 130
        write_metrics_csv(table, metrics_csv)
        write_metrics_json(table, metrics_json)
        figures = write_figure_data(table, out)
        manifest.outputs = [str(metrics_csv), str(metrics_json)] + figures
        for cell_id, n in sorted(table.failures.items()):
            manifest.notes.append(f"{cell_id}: {n} fits did not converge")
        manifest.write(out / "manifest.json")
    except OSError as exc:
        raise CommandError(f"cannot write results to {out}: {exc.strerror}", EXIT_IO) from None
    print(f"{len(config.cells)} cells x {config.replications} replications -> {out}")
    return EXIT_OK


# -- analyze / km -----------------------------------------------------------

def _load_analysis_inputs(args):
    from .pipeline.analysis import build_analysis_dataset
    from .pipeline.ingest import load_cohort
    from .pipeline.schema import analysis_config_from_dict

    raw_cfg = _read_json(args.config, "analysis config")
    try:
        cfg = analysis_config_from_dict(raw_cfg)
    except (ConfigError, ValueError, TypeError) as exc:
        raise CommandError(f"invalid analysis config: {exc}", EXIT_CONFIG) from None
    try:
        raw = load_cohort(args.cohort, cfg.schema)
    except ConfigError as exc:
        raise CommandError(f"cohort does not match schema: {exc}", EXIT_CONFIG) from None
    except OSError as exc:
        raise CommandError(f"cannot read cohort {args.cohort}: {exc.strerror}", EXIT_IO) from None
    try:
        dataset, exclusions = build_analysis_dataset(raw, cfg.window)
    except NoEventsError:
        raise CommandError("no events after landmark", EXIT_DEGENERATE) from None
    if dataset.n_events == 0:
        raise CommandError("no events after landmark", EXIT_DEGENERATE)
    inputs = {"cohort": {"path": str(args.cohort), "sha256": file_sha256(args.cohort)}}
    return cfg, dataset, exclusions, inputs


def cmd_analyze(args):
    from .pipeline.analysis import dual_model_comparison, mechanism_test
    from .pipeline.report import render_report, write_dual_model_csv, write_report_json

    cfg, dataset, exclusions, inputs = _load_analysis_inputs(args)
    cap = args.sensitivity_cap if args.sensitivity_cap is not None else cfg.window.offset_cap
    try:
        report = mechanism_test(dataset, offset_cap=cap)
        dual = dual_model_comparison(dataset)
    except SurvivalError as exc:
        raise CommandError(f"degenerate data: {exc}", EXIT_DEGENERATE) from None
    text = render_report(report, dual, exclusions)

    out = _make_dir(args.out)
    settings = {"config": cfg.raw, "sensitivity_cap": cap}
    manifest = RunManifest("analyze", config_hash(settings), None, __version__, _now(),
                           config=settings, inputs=inputs)
    paths = [out / "report.json", out / "report.txt", out / "dual_model.csv"]
    try:
        write_report_json(paths[0], report, dual, exclusions)
        paths[1].write_text(text)
        write_dual_model_csv(paths[2], dual)
        manifest.outputs = [str(p) for p in paths]
        if report.note:
            manifest.notes.append(report.note)
        if exclusions.n_rejected:
            manifest.notes.append(f"{exclusions.n_rejected} rows rejected (see report.json)")
        manifest.write(out / "manifest.json")
    except OSError as exc:
        raise CommandError(f"cannot write results to {out}: {exc.strerror}", EXIT_IO) from None
    sys.stdout.write(text)
    return EXIT_OK


def cmd_km(args):
    from .pipeline.analysis import OFFSET, km_by_offset_bins, offset_strata
    from .pipeline.report import write_km_csv

    if args.bin_width <= 0:
        raise CommandError("--bin-width must be positive", EXIT_CONFIG)
    cfg, dataset, exclusions, inputs = _load_analysis_inputs(args)
    curves = km_by_offset_bins(dataset, bin_width=args.bin_width,
                               max_closed_bins=args.max_bins, time_zero=args.time_zero)
    _, labels = offset_strata(dataset.column(OFFSET), args.bin_width, args.max_bins)
    present = {c.stratum_label for c in curves}

    out = _make_dir(args.out)
    settings = {"config": cfg.raw, "bin_width": args.bin_width, "max_bins": args.max_bins,
                "time_zero": args.time_zero}
    manifest = RunManifest("km", config_hash(settings), None, __version__, _now(),
                           config=settings, inputs=inputs)
    manifest.notes += [f"stratum {lab} is empty and omitted" for lab in labels
                       if lab not in present]
    path = out / f"km_{args.time_zero}.csv"
    try:
        write_km_csv(path, curves)
        manifest.outputs = [str(path)]
        manifest.write(out / "manifest.json")
    except OSError as exc:
        raise CommandError(f"cannot write results to {out}: {exc.strerror}", EXIT_IO) from None
    print(f"{len(curves)} strata -> {path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="breakthrough",
        description="Landmark-time analysis of breakthrough infections: cohort "
                    "simulation, Monte Carlo experiments and cohort-file analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one analytic cohort")
    p.add_argument("config", help="cohort config JSON")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--dated", metavar="START",
                   help="write a dated cohort file (vaccination window starting at "
                        "START, ISO date) plus a matching analysis config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="run a replicated simulation grid")
    p.add_argument("config", nargs="?", help="experiment config JSON")
    p.add_argument("--paper-grid", choices=("no_subgroup", "with_subgroup"),
                   help="use the built-in grid instead of a config file")
    scale = p.add_mutually_exclusive_group()
    scale.add_argument("--desk-scale", action="store_true",
                       help="cap B at 500 and N at 10000")
    scale.add_argument("--full-scale", action="store_true",
                       help="include N = 100000 (default grid stops at N = 10000)")
    p.add_argument("--replications", type=int, help="override B")
    p.add_argument("--base-seed", type=int, help="override the base seed")
    p.add_argument("--workers", type=int, help="worker processes (does not affect results)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_experiment)

    for name, func, helptext in (("analyze", cmd_analyze, "test for the driving mechanism"),
                                 ("km", cmd_km, "Kaplan-Meier curves by offset bins")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("cohort", help="cohort CSV")
        p.add_argument("config", help="schema and window JSON")
        p.add_argument("--out", required=True, help="output directory")
        if name == "analyze":
            p.add_argument("--sensitivity-cap", type=float, default=None,
                           help="offset cap in days for the sensitivity subset "
                                "(default: config value, else 90)")
        else:
            p.add_argument("--bin-width", type=float, default=30)
            p.add_argument("--max-bins", type=int, default=6,
                           help="closed bins before the final open stratum")
            p.add_argument("--time-zero", choices=("landmark", "vaccination"),
                           default="landmark")
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())

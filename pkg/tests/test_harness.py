"""Replication seeding, estimator construction, aggregation and export."""

import csv
import json

import pytest
from numpy.testing import assert_array_equal

from breakthrough.exceptions import ConfigError
from breakthrough.experiments import (EstimatorKind, ExperimentConfig, GridCell,
                                      default_paper_grid, derive_seed, estimator_dataset,
                                      run_grid, run_replication, splitmix64,
                                      write_figure_data, write_metrics_csv,
                                      write_metrics_json)
from breakthrough.experiments.harness import METRIC_COLUMNS
from breakthrough.simulation import HazardSpec, generate_cohort

MW_CELL = GridCell(HazardSpec.waning(d=180, r=1e-4), 2000, subgroup=True)
MS_CELL = GridCell(HazardSpec.new_strain(c=5e-3), 1000, subgroup=False)


class TestSeeding:
    def test_splitmix_reference_value(self):
        # first output of the SplitMix64 generator started from state 0
        assert splitmix64(0) == 0xE220A8397B1DCDAF

    def test_derive_seed_stable(self):
        assert derive_seed(1, "cell", 0) == derive_seed(1, "cell", 0)
        seeds = {derive_seed(1, "cell", i) for i in range(1000)}
        assert len(seeds) == 1000
        assert derive_seed(1, "cell", 0) != derive_seed(2, "cell", 0)
        assert derive_seed(1, "cell", 0) != derive_seed(1, "cell2", 0)
        assert all(0 <= s < 2 ** 64 for s in seeds)


class TestGridCell:
    def test_cell_id(self):
        assert MW_CELL.cell_id == "MW_a0.0001_b0.0007_d180_r0.0001_N2000_sub1_b10.15"
        assert MS_CELL.cell_id == "MS_k0.0001_c0.005_sL_N1000_sub0"

    def test_dict_round_trip(self):
        for cell in (MW_CELL, MS_CELL):
            assert GridCell.from_dict(cell.to_dict()) == cell

    def test_bad_cell(self):
        with pytest.raises(ConfigError):
            GridCell.from_dict({"mechanism": "waning", "N": 10, "c": 0.1})
        with pytest.raises(ConfigError):
            GridCell.from_dict({"mechanism": "plague", "N": 10})


class TestEstimatorDatasets:
    def test_shapes(self):
        cohort = generate_cohort(MW_CELL.cohort_config(seed=1))
        prop = estimator_dataset(EstimatorKind.PROPOSED_OFFSET, cohort)
        assert prop.covariate_names == ("x1", "z_delta")
        naive = estimator_dataset(EstimatorKind.NAIVE_CALENDAR, cohort)
        assert naive.covariate_names == ("x1",)
        assert_array_equal(naive.time, cohort.T)
        vt = estimator_dataset(EstimatorKind.VACCINATION_TIME, cohort)
        assert_array_equal(vt.time, cohort.z_delta + cohort.T)
        assert not vt.has_delayed_entry
        de = estimator_dataset(EstimatorKind.VACCINATION_TIME_DELAYED_ENTRY, cohort)
        assert_array_equal(de.entry_time, cohort.z_delta)

    def test_no_subgroup(self):
        cohort = generate_cohort(MS_CELL.cohort_config(seed=1))
        assert estimator_dataset(EstimatorKind.PROPOSED_OFFSET, cohort).covariate_names == ("z_delta",)
        assert estimator_dataset(EstimatorKind.NAIVE_CALENDAR, cohort) is None


class TestRunReplication:
    def test_bit_identical(self):
        a = run_replication(MW_CELL, 3, 42)
        b = run_replication(MW_CELL, 3, 42)
        assert a == b
        assert a.seed == derive_seed(42, MW_CELL.cell_id, 3)

    def test_fields(self):
        rep = run_replication(MW_CELL, 0, 7)
        prop = rep.estimates[EstimatorKind.PROPOSED_OFFSET]
        assert prop.converged and 0 <= prop.p_delta <= 1
        assert prop.beta1_hat is not None and prop.covered in (True, False)
        naive = rep.estimates[EstimatorKind.NAIVE_CALENDAR]
        assert naive.p_delta is None and naive.beta1_hat is not None

    def test_subgroup_disabled(self):
        rep = run_replication(MS_CELL, 0, 7)
        assert set(rep.estimates) == {EstimatorKind.PROPOSED_OFFSET}
        assert rep.estimates[EstimatorKind.PROPOSED_OFFSET].beta1_hat is None


def _small_config(**kw):
    kw.setdefault("cells", (MW_CELL, MS_CELL))
    kw.setdefault("replications", 12)
    kw.setdefault("base_seed", 5)
    return ExperimentConfig(**kw)


class TestRunGrid:
    def test_worker_invariance(self, tmp_path):
        config = _small_config()
        one = run_grid(config, workers=1)
        two = run_grid(config, workers=2)
        write_metrics_csv(one, tmp_path / "a.csv")
        write_metrics_csv(two, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_cell_order_invariance(self):
        a = run_grid(_small_config())
        b = run_grid(_small_config(cells=(MS_CELL, MW_CELL)))
        key = lambda t: sorted(r.as_tuple() for r in t)
        assert key(a) == key(b)

    def test_single_replication_rates(self):
        table = run_grid(_small_config(replications=1))
        for row in table:
            if row.metric in ("power", "type1", "coverage"):
                assert row.value in (0.0, 1.0)

    def test_power_monotone_in_alpha(self):
        table = run_grid(_small_config())
        for cell in (MW_CELL, MS_CELL):
            metric = "power" if cell is MW_CELL else "type1"
            rates = [table.value(cell_id=cell.cell_id, metric=metric, alpha=a).value
                     for a in (0.01, 0.05, 0.10)]
            assert rates == sorted(rates)

    def test_metric_rows(self):
        table = run_grid(_small_config())
        rows = table.select(cell_id=MW_CELL.cell_id, metric="mean_bias")
        assert {r.estimator for r in rows} == {e.value for e in EstimatorKind}
        assert all(r.B_effective <= 12 for r in table)
        cov = table.select(metric="coverage")
        assert all(0 <= r.value <= 1 for r in cov)

    def test_callback_order(self):
        seen = []
        run_grid(_small_config(), on_cell_complete=lambda cell, rows: seen.append(cell.cell_id))
        assert seen == [MW_CELL.cell_id, MS_CELL.cell_id]


class TestExperimentConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(cells=())
        with pytest.raises(ConfigError):
            _small_config(replications=0)
        with pytest.raises(ConfigError):
            _small_config(alphas=(0.05, 1.5))
        with pytest.raises(ConfigError):
            _small_config(cells=(MW_CELL, MW_CELL))
        with pytest.raises(ConfigError):
            _small_config(estimators=("naive_calendar",))

    def test_dict_round_trip(self):
        config = _small_config()
        assert ExperimentConfig.from_dict(config.to_dict()) == config
        assert "workers" not in config.to_dict()

    def test_unknown_key(self):
        raw = _small_config().to_dict()
        raw["speed"] = "fast"
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)


class TestDefaultGrid:
    def test_no_subgroup(self):
        grid = default_paper_grid("no_subgroup")
        waning = [c for c in grid.cells if c.hazard.mechanism.value == "waning"]
        strain = [c for c in grid.cells if c.hazard.mechanism.value == "new_strain"]
        assert len(waning) == 15 * 4
        assert len(strain) == 5 * 4
        assert {c.hazard.d for c in waning} == {90, 180, 240}
        assert {c.hazard.r for c in waning} == {1e-6, 5e-6, 1e-5, 5e-5, 1e-4}
        assert {c.hazard.c for c in strain} == {1e-4, 5e-4, 1e-3, 5e-3, 1e-2}
        assert {c.n_subjects for c in grid.cells} == {500, 1000, 10000, 100000}
        assert grid.replications == 1000
        assert grid.alphas == (0.01, 0.05, 0.10)
        assert not any(c.subgroup for c in grid.cells)

    def test_with_subgroup(self):
        grid = default_paper_grid("with_subgroup")
        assert {c.hazard.r for c in grid.cells if c.hazard.r and c.hazard.mechanism.value == "waning"} \
            == {1e-8, 1e-7, 1e-6, 1e-5}
        assert all(c.subgroup and c.beta1 == 0.15 for c in grid.cells)
        assert all(c.hazard.a == 1e-4 and c.hazard.b == 7e-4 for c in grid.cells
                   if c.hazard.mechanism.value == "waning")

    def test_desk_scale(self):
        grid = default_paper_grid("no_subgroup").capped()
        assert grid.replications == 500
        assert max(c.n_subjects for c in grid.cells) == 10000

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            default_paper_grid("both")


class TestExport:
    def test_files(self, tmp_path):
        table = run_grid(_small_config(replications=3))
        write_metrics_csv(table, tmp_path / "m.csv")
        write_metrics_json(table, tmp_path / "m.json")
        paths = write_figure_data(table, tmp_path)
        with open(tmp_path / "m.csv") as fh:
            header = next(csv.reader(fh))
        assert tuple(header) == METRIC_COLUMNS
        doc = json.loads((tmp_path / "m.json").read_text())
        assert len(doc["rows"]) == len(table)
        assert len(paths) == 5
        with open(tmp_path / "fig5_bias_coverage.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["estimator"] for r in rows} == {e.value for e in EstimatorKind}
        with open(tmp_path / "tableS1_type1.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 3

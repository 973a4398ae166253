"""End-to-end analysis orchestration, reports, and the validation runner."""

import json

import numpy as np
import pytest

from sigpca import (
    AnalysisOptions,
    ConfigError,
    DataError,
    MaskedMatrix,
    SyntheticSpec,
    ValidationRun,
    analyze_dataset,
    analyze_matrix,
    analyze_numeric,
    build_report,
    format_p,
    generate,
    rank_table_to_csv,
    report_to_json,
    summarize_validation,
    validation_summary_to_csv,
)
from sigpca.ingest import ColumnSchema, Dataset
from sigpca.pipeline import RANK_TABLE_COLUMNS

FAST = dict(n_null_samples=150, seed=3)


@pytest.fixture(scope="module")
def small_result():
    data = generate(SyntheticSpec(n_rows=40, n_cols=12, n_significant=2, seed=11))
    options = AnalysisOptions(**FAST)
    return analyze_numeric(data, options), options


class TestAnalysisOptions:
    def test_defaults(self):
        options = AnalysisOptions()
        assert options.alpha == 0.05
        assert options.n_null_samples == 2000
        assert options.max_iters == 80
        assert options.conv_tol == 1e-6
        assert options.q_min == 2

    def test_validation_delegates_to_stage_configs(self):
        with pytest.raises(ConfigError):
            AnalysisOptions(alpha=2.0)
        with pytest.raises(ConfigError):
            AnalysisOptions(n_null_samples=50)
        with pytest.raises(ConfigError):
            AnalysisOptions(max_iters=0)
        with pytest.raises(ConfigError):
            AnalysisOptions(seed=-1)


class TestAnalyzeMatrix:
    def test_uncentered_input_rejected(self):
        data = MaskedMatrix.complete(np.random.default_rng(0).standard_normal((20, 6)) + 5.0)
        with pytest.raises(DataError, match="centered"):
            analyze_matrix(data, AnalysisOptions(**FAST))

    def test_result_fields_are_coherent(self, small_result):
        result, _ = small_result
        assert (result.n_rows, result.n_cols) == (40, 12)
        assert 2 <= result.n_components <= 11
        scanned = [q for q, _ in result.scan_costs]
        assert scanned == list(range(2, 12))
        assert result.n_components in scanned
        assert result.spectrum.n_ranks == result.n_components
        assert result.test.n_significant <= result.n_components
        assert result.recon.mean.shape == (40, 12)
        assert result.total_variance > 0.0

    def test_scan_range_override(self):
        data = generate(SyntheticSpec(n_rows=30, n_cols=10, n_significant=2, seed=12))
        result = analyze_numeric(data, AnalysisOptions(q_min=3, q_max=5, **FAST))
        assert [q for q, _ in result.scan_costs] == [3, 4, 5]
        assert 3 <= result.n_components <= 5

    def test_wide_matrix_keeps_one_dimension_for_noise(self):
        data = generate(SyntheticSpec(n_rows=414, n_cols=9, n_significant=1, seed=13))
        result = analyze_numeric(data, AnalysisOptions(n_null_samples=100, seed=1))
        assert result.n_components <= 8


class TestFormatP:
    def test_zero_is_reported_as_below_resolution(self):
        assert format_p(0.0, 2000) == "<0.0005"
        assert format_p(0.0, 500) == "<0.002"

    def test_nonzero_values_formatted_plainly(self):
        assert format_p(0.025, 2000) == "0.025"
        assert format_p(1.0, 2000) == "1"


class TestReport:
    def test_report_structure(self, small_result):
        result, options = small_result
        report = build_report(result, "demo", options)
        assert report["dataset"] == "demo"
        assert report["rows"] == 40 and report["cols"] == 12
        assert report["n_components"] == result.n_components
        assert report["n_significant"] == result.test.n_significant
        assert report["config"]["alpha"] == options.alpha
        assert report["config"]["n_null_samples"] == options.n_null_samples
        assert report["config"]["seed"] == options.seed
        assert len(report["component_scan"]) == len(result.scan_costs)
        assert len(report["ranks"]) == result.n_components

    def test_rank_rows(self, small_result):
        result, options = small_result
        report = build_report(result, "demo", options)
        tested = len(result.test.raw_p)
        for idx, row in enumerate(report["ranks"]):
            assert row["rank"] == idx + 1
            if idx < tested:
                assert row["raw_p"] is not None
                assert row["adjusted_p"] >= row["raw_p"] or row["raw_p"] == 0.0
            else:
                assert row["raw_p"] is None
                assert row["adjusted_p"] is None
                assert row["raw_p_display"] is None

    def test_variance_fractions_and_cumulative_values(self, small_result):
        result, options = small_result
        report = build_report(result, "demo", options)
        fractions = [row["variance_fraction"] for row in report["ranks"]]
        assert all(f >= 0.0 for f in fractions)
        assert sum(fractions) <= 1.0 + 1e-9
        cumulative = report["cumulative_variance"]
        assert 0.0 <= cumulative["at_significant"] <= cumulative["after_next"] <= 1.0 + 1e-9

    def test_json_round_trip_and_stable_bytes(self, small_result):
        result, options = small_result
        report = build_report(result, "demo", options)
        text = report_to_json(report)
        assert text.endswith("\n")
        assert json.loads(text) == report
        assert report_to_json(build_report(result, "demo", options)) == text

    def test_rank_csv_table(self, small_result):
        import csv as csv_mod
        import io

        result, options = small_result
        report = build_report(result, "demo", options)
        text = rank_table_to_csv(report)
        rows = list(csv_mod.reader(io.StringIO(text)))
        assert rows[0] == list(RANK_TABLE_COLUMNS)
        assert len(rows) == 1 + result.n_components
        raw_p_col = rows[0].index("raw_p")
        tested = len(result.test.raw_p)
        for idx, row in enumerate(rows[1:]):
            assert int(row[0]) == idx + 1
            if idx >= tested:
                assert row[raw_p_col] == ""
            else:
                assert row[raw_p_col] != ""


class TestDeterminism:
    def test_repeated_runs_byte_identical(self):
        data = generate(SyntheticSpec(n_rows=30, n_cols=10, n_significant=2, seed=14))
        options = AnalysisOptions(**FAST)
        first = report_to_json(build_report(analyze_numeric(data, options), "x", options))
        second = report_to_json(build_report(analyze_numeric(data, options), "x", options))
        assert first == second

    def test_worker_count_does_not_change_report(self):
        data = generate(SyntheticSpec(n_rows=30, n_cols=10, n_significant=2, seed=15))
        serial_options = AnalysisOptions(workers=1, **FAST)
        threaded_options = AnalysisOptions(workers=3, **FAST)
        serial = report_to_json(build_report(analyze_numeric(data, serial_options), "x", serial_options))
        threaded = report_to_json(
            build_report(analyze_numeric(data, threaded_options), "x", threaded_options)
        )
        # Reports echo only analysis settings, not the worker count, so
        # the bytes must match exactly.
        assert serial == threaded


class TestSchemaRoute:
    def test_analyze_dataset_runs_preprocessing_first(self):
        gen = np.random.default_rng(16)
        n = 30
        base = gen.standard_normal(n)
        values = np.column_stack([base + 0.1 * gen.standard_normal(n) for _ in range(4)])
        levels = np.where(base > 0, 1.0, 0.0)
        dataset = Dataset(
            schema=(
                ColumnSchema("a", "continuous"),
                ColumnSchema("b", "continuous"),
                ColumnSchema("c", "continuous"),
                ColumnSchema("d", "continuous"),
                ColumnSchema("e", "binary", levels=("no", "yes")),
            ),
            matrix=MaskedMatrix.complete(np.column_stack([values, levels])),
            row_labels=tuple(str(i) for i in range(n)),
        )
        result = analyze_dataset(dataset, AnalysisOptions(n_null_samples=100, seed=2))
        # One-hot expansion turns the binary column into two indicators.
        assert result.n_cols == 6
        assert result.n_rows == n


class TestValidationSummary:
    def make_runs(self):
        return [
            ValidationRun("i", 150, 15, 2, 0, 101, 14, 2),
            ValidationRun("i", 150, 15, 2, 1, 102, 14, 2),
            ValidationRun("i", 150, 15, 2, 2, 103, 14, 1),
            ValidationRun("i", 150, 30, 4, 0, 104, 29, 3),
        ]

    def test_cells_grouped_and_statistics_computed(self):
        summary = summarize_validation(self.make_runs())
        assert len(summary) == 2
        first = next(s for s in summary if s["cols"] == 15)
        assert first["replicates"] == 3
        assert first["mean_significant"] == pytest.approx(5.0 / 3.0)
        assert first["max_significant"] == 2
        sd = np.std([2, 2, 1], ddof=1)
        half = 1.959964 * sd / np.sqrt(3)
        assert first["ci_low"] == pytest.approx(5.0 / 3.0 - half)
        assert first["ci_high"] == pytest.approx(5.0 / 3.0 + half)
        single = next(s for s in summary if s["cols"] == 30)
        assert single["ci_low"] == single["ci_high"] == single["mean_significant"]

    def test_csv_layout(self):
        text = validation_summary_to_csv(summarize_validation(self.make_runs()))
        lines = text.splitlines()
        assert lines[0] == (
            "scenario,rows,cols,true_significant,replicates,"
            "mean_significant,ci_low,ci_high,max_significant"
        )
        assert len(lines) == 3

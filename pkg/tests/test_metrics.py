"""Scalability metrics, CSV round-trips, and plot emission."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sembench.bakeoff import RunConfig, run
from sembench.metrics import (CSV_COLUMNS, MetricsError, csv_header, csv_line,
                              efficiency_groups, emit_csv, emit_plot_data,
                              extract_metrics, group_metrics, latency_floor,
                              parallel_efficiency, read_csv, result_row)


class TestParallelEfficiency:
    def test_ideal_scaling_is_exactly_one(self):
        curve = parallel_efficiency([(1, 8.0), (2, 4.0), (4, 2.0), (8, 1.0)])
        for p, _, eta in curve.entries:
            assert eta == 1.0

    def test_baseline_point_is_exactly_one(self):
        curve = parallel_efficiency([(2, 5.0), (4, 3.0), (8, 2.0)])
        assert curve.P_min == 2
        assert curve.eta(2) == 1.0

    def test_known_value(self):
        # Doubling resources with T only dropping 1.0 -> 0.625 gives 0.8.
        curve = parallel_efficiency([(1, 1.0), (2, 0.625)])
        assert curve.eta(2) == pytest.approx(0.8)

    def test_unsorted_input_is_sorted(self):
        curve = parallel_efficiency([(8, 1.0), (1, 8.0), (4, 2.0)])
        assert [p for (p, _, _) in curve.entries] == [1, 4, 8]

    def test_missing_p_raises_keyerror(self):
        curve = parallel_efficiency([(1, 1.0), (2, 0.6)])
        with pytest.raises(KeyError):
            curve.eta(3)

    @pytest.mark.parametrize("samples", [
        [(1, 1.0)],
        [(1, 1.0), (1, 0.5)],
        [(1, 1.0), (2, 0.0)],
        [(1, 1.0), (2, -0.5)],
    ])
    def test_invalid_inputs(self, samples):
        with pytest.raises(MetricsError):
            parallel_efficiency(samples)


def saturating_points(r=100.0, c=1000.0, x0=125.0, npts=14):
    # Saturating rate curve rate(x) = r x / (x + c) on a doubling grid.
    xs = [x0 * 2.0 ** i for i in range(npts)]
    return [(x, r * x / (x + c)) for x in xs]


class TestExtractMetrics:
    def test_synthetic_curve_recovers_analytic_knee(self):
        # rate(x) = 100 x / (x + 1000) crosses 80% of its asymptote at
        # x = 4c = 4000; a doubling grid locates it within 2%.
        m = extract_metrics(saturating_points())
        assert not m.degenerate
        assert abs(m.n_08 - 4000.0) / 4000.0 <= 0.02
        assert m.t_08 == 1.25 * m.n_08 / m.r_max

    def test_interpolation_pin(self):
        # Two points bracketing 80% of r_max = 10: threshold 8 midway in
        # rate maps to the log-midpoint of the sizes.
        m = extract_metrics([(100.0, 6.0), (10000.0, 10.0)])
        assert m.r_max == 10.0
        assert m.n_08 == pytest.approx(1000.0, rel=1e-12)

    def test_duplicate_sizes_keep_peak_rate(self):
        m = extract_metrics([(1e3, 5.0), (1e3, 7.0), (1e4, 10.0),
                             (1e4, 9.0)])
        assert m.r_max == 10.0
        assert m.samples == 2

    def test_flat_curve_is_degenerate(self):
        m = extract_metrics([(1e2, 5.0), (1e3, 5.0), (1e4, 5.0)])
        assert m.degenerate
        assert m.n_08 == 1e2

    def test_single_point_is_degenerate(self):
        m = extract_metrics([(256.0, 12.0)])
        assert m.degenerate
        assert m.n_08 == 256.0
        assert m.samples == 1

    def test_first_point_above_threshold(self):
        m = extract_metrics([(1e2, 9.5), (1e3, 10.0)])
        assert not m.degenerate
        assert m.n_08 == 1e2

    @pytest.mark.parametrize("pts", [[], [(0.0, 1.0)], [(1.0, 0.0)],
                                     [(1.0, -2.0)]])
    def test_invalid_points(self, pts):
        with pytest.raises(MetricsError):
            extract_metrics(pts)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 6), st.floats(1.1, 100.0), st.floats(10.0, 1e5))
    def test_monotone_curves_bound_n08(self, npts, growth, n_half):
        # For any increasing rate curve, n_08 lies within the sampled range
        # and the threshold rate brackets hold.
        xs = [100.0 * growth ** i for i in range(npts)]
        pts = [(x, 50.0 * x / (x + n_half)) for x in xs]
        m = extract_metrics(pts)
        assert xs[0] <= m.n_08 <= xs[-1]
        assert m.t_08 == 1.25 * m.n_08 / m.r_max

    def test_scale_equivariance(self):
        pts = saturating_points()
        base = extract_metrics(pts)
        doubled = extract_metrics([(x, 2.0 * r) for (x, r) in pts])
        assert doubled.r_max == 2.0 * base.r_max
        assert doubled.n_08 == pytest.approx(base.n_08, rel=1e-12)
        tripled = extract_metrics([(3.0 * x, r) for (x, r) in pts])
        assert tripled.n_08 == pytest.approx(3.0 * base.n_08, rel=1e-12)


class TestLatencyFloor:
    def test_structural_pins(self):
        # 26 neighbor messages + 8 alphas of reduction cost: 34 to 60.
        low, high = latency_floor(1.0)
        assert (low, high) == (34.0, 60.0)

    def test_reduction_only(self):
        low, high = latency_floor(2.0, neighbor_messages=0)
        assert (low, high) == (16.0, 16.0)

    def test_interconnect_scale(self):
        # 3.8 us latency: 0.13 ms to 0.23 ms per iteration.
        low, high = latency_floor(3.8e-6)
        assert round(low * 1e3, 2) == 0.13
        assert round(high * 1e3, 2) == 0.23

    def test_linearity_in_alpha(self):
        l1, h1 = latency_floor(1e-6)
        l2, h2 = latency_floor(3e-6)
        assert l2 == pytest.approx(3 * l1)
        assert h2 == pytest.approx(3 * h1)

    def test_zero_alpha(self):
        assert latency_floor(0.0) == (0.0, 0.0)

    def test_negative_alpha_rejected(self):
        with pytest.raises(MetricsError):
            latency_floor(-1e-6)


@pytest.fixture(scope="module")
def small_results():
    cfgs = [RunConfig(bp=1, p=2, k=k, iterations=3, trials=1)
            for k in (1, 2)]
    return [run(c) for c in cfgs]


class TestCsv:
    def test_header_matches_schema(self):
        assert csv_header() == ",".join(CSV_COLUMNS)
        assert csv_header().split(",")[0] == "bp_id"
        assert len(CSV_COLUMNS) == 18

    def test_round_trip_is_bitwise(self, small_results, tmp_path):
        path = tmp_path / "data.csv"
        emit_csv(small_results, path)
        rows = read_csv(path)
        assert len(rows) == len(small_results)
        for row, result in zip(rows, small_results):
            ref = result_row(result)
            assert row == ref
            # Float fields survive the text round trip exactly.
            assert row["seconds_total"] == result.seconds_total
            assert row["dofs_rate"] == result.dofs_rate

    def test_csv_line_matches_emit(self, small_results, tmp_path):
        path = tmp_path / "data.csv"
        emit_csv(small_results, path)
        lines = path.read_text().splitlines()
        assert lines[0] == csv_header()
        assert lines[1] == csv_line(small_results[0])

    def test_empty_dataset_writes_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        emit_csv([], path)
        assert path.read_text().strip() == csv_header()
        assert read_csv(path) == []

    def test_missing_file_raises_metrics_error(self, tmp_path):
        with pytest.raises(MetricsError):
            read_csv(tmp_path / "nope.csv")

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "zero.csv"
        path.write_text("")
        with pytest.raises(MetricsError, match="empty"):
            read_csv(path)

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(MetricsError, match="header"):
            read_csv(path)

    def test_wrong_field_count_rejected(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text(csv_header() + "\n1,bp,3\n")
        with pytest.raises(MetricsError, match="field count"):
            read_csv(path)

    def test_malformed_cell_rejected(self, tmp_path):
        path = tmp_path / "cell.csv"
        good = csv_line(  # build a valid row, then break one int cell
            dict(bp_id=1, mode="bp", p=2, q=4, k=1, E=2, ranks=1, threads=1,
                 strategy="sumfact", iterations=3, n=16, n_per_rank=16.0,
                 seconds_total=0.5, seconds_per_iter=0.1, dofs_rate=100.0,
                 flops_measured=10, messages=0, reductions=7))
        path.write_text(csv_header() + "\n" + good.replace("sumfact,3",
                                                           "sumfact,x") + "\n")
        with pytest.raises(MetricsError):
            read_csv(path)


class TestGrouping:
    def test_group_metrics_keys_and_peaks(self):
        rows = [
            dict(bp_id=1, p=2, k=1, n_per_rank=100.0, dofs_rate=5.0,
                 ranks=1, seconds_total=1.0),
            dict(bp_id=1, p=2, k=2, n_per_rank=1000.0, dofs_rate=10.0,
                 ranks=1, seconds_total=1.0),
            dict(bp_id=3, p=4, k=1, n_per_rank=100.0, dofs_rate=7.0,
                 ranks=1, seconds_total=1.0),
        ]
        groups = group_metrics(rows)
        assert set(groups) == {(1, 2), (3, 4)}
        assert groups[(1, 2)].r_max == 10.0
        assert groups[(3, 4)].degenerate

    def test_group_peak_spans_strategies(self):
        rows = [
            dict(bp_id=5, p=3, n_per_rank=100.0, dofs_rate=5.0),
            dict(bp_id=5, p=3, n_per_rank=100.0, dofs_rate=8.0),
            dict(bp_id=5, p=3, n_per_rank=1000.0, dofs_rate=10.0),
        ]
        groups = group_metrics(rows)
        assert groups[(5, 3)].samples == 2
        assert groups[(5, 3)].r_max == 10.0

    def test_efficiency_groups(self):
        rows = [
            dict(bp_id=3, p=4, k=3, ranks=1, seconds_total=8.0),
            dict(bp_id=3, p=4, k=3, ranks=2, seconds_total=5.0),
            dict(bp_id=3, p=4, k=3, ranks=2, seconds_total=4.0),
            dict(bp_id=3, p=4, k=4, ranks=1, seconds_total=9.0),
        ]
        curves = efficiency_groups(rows)
        # Only the k=3 group has two rank counts; the repeat keeps 4.0 s.
        assert set(curves) == {(3, 4, 3)}
        assert curves[(3, 4, 3)].eta(2) == pytest.approx(1.0)

    def test_efficiency_groups_need_two_rank_counts(self):
        rows = [dict(bp_id=1, p=2, k=1, ranks=1, seconds_total=1.0)]
        assert efficiency_groups(rows) == {}


class TestPlotData:
    def test_block_structure(self, tmp_path):
        rows = [
            dict(p=4, n_per_rank=200.0, dofs_rate=6.0),
            dict(p=2, n_per_rank=100.0, dofs_rate=5.0),
            dict(p=2, n_per_rank=50.0, dofs_rate=3.0),
        ]
        path = tmp_path / "plot.dat"
        emit_plot_data(rows, path)
        text = path.read_text()
        blocks = text.split("\n\n")
        assert len(blocks) == 2
        assert "# p = 2" in blocks[0]
        assert "# p = 4" in blocks[1]
        lines = [ln for ln in blocks[0].splitlines()
                 if ln and not ln.startswith("#")]
        cols = [ln.split() for ln in lines]
        assert [float(c[0]) for c in cols] == [50.0, 100.0]
        assert all(len(c) == 2 for c in cols)

    def test_round_trips_from_run_results(self, small_results, tmp_path):
        path = tmp_path / "plot.dat"
        emit_plot_data(small_results, path)
        body = [ln for ln in path.read_text().splitlines()
                if ln and not ln.startswith("#")]
        assert len(body) == len(small_results)
        assert float(body[0].split()[1]) == small_results[0].dofs_rate

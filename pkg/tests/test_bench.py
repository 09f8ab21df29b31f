"""Benchmark harness: growth classes, suite plumbing, CSV export."""

import csv

import numpy as np
import pytest

from spadsim import ConfigError, SystemConfig
from spadsim.bench import (
    AXES,
    SIMULATORS,
    bench_to_csv,
    benchmark,
    classify_slope,
    host_descriptor,
    smoke_suite,
)


def bench_base(**over):
    kw = dict(t_r=100e-9, N_r=200, sigma_t=1e-9, t_d=75e-9, n_b=256,
              tau=40e-9, S=1.0, B=1.0, N_iter=50)
    kw.update(over)
    return SystemConfig(**kw)


class TestClassifySlope:
    @pytest.mark.parametrize("slope,label", [
        (-0.5, "constant"),
        (0.19, "constant"),
        (0.2, "linear"),
        (1.0, "linear"),
        (1.2, "linear"),
        (1.21, "superlinear"),
        (2.0, "superlinear"),
    ])
    def test_boundaries(self, slope, label):
        assert classify_slope(slope) == label


class TestSuiteValidation:
    def test_unknown_simulator(self):
        with pytest.raises(ConfigError):
            benchmark(bench_base(), [{"simulator": "gpu", "axis": "flux",
                                      "values": [1, 2]}])

    def test_unknown_axis(self):
        with pytest.raises(ConfigError):
            benchmark(bench_base(), [{"simulator": "mars", "axis": "bins",
                                      "values": [1, 2]}])

    def test_needs_two_values(self):
        with pytest.raises(ConfigError):
            benchmark(bench_base(), [{"simulator": "mars", "axis": "flux",
                                      "values": [1.0]}])

    def test_constants_exported(self):
        assert AXES == ("flux", "realizations", "pixels")
        assert SIMULATORS == ("mars", "sequential", "poisson")
        assert [c["simulator"] for c in smoke_suite()] == list(SIMULATORS)


@pytest.fixture(scope="module")
def flux_curves():
    suite = [{"simulator": "mars", "axis": "flux", "values": [0.5, 5.0]},
             {"simulator": "poisson", "axis": "flux", "values": [0.5, 5.0]}]
    return benchmark(bench_base(), suite, reps=2, seed=1)


class TestBenchmarkRuns:
    def test_curve_and_row_structure(self, flux_curves):
        assert len(flux_curves) == 2
        for curve in flux_curves:
            assert curve.axis == "flux"
            assert curve.growth_class == classify_slope(curve.slope)
            assert np.isfinite(curve.slope)
            assert len(curve.rows) == 2
            for row, v in zip(curve.rows, [0.5, 5.0]):
                assert row.value == v
                assert row.median_s > 0
                assert len(row.runs) == 2
                assert min(row.runs) <= row.median_s <= max(row.runs)

    def test_mars_realizations_scale_linearly(self):
        suite = [{"simulator": "mars", "axis": "realizations",
                  "values": [200, 2000]}]
        curve = benchmark(bench_base(S=0.0, B=2.0), suite, reps=3, seed=2)[0]
        assert 0.5 < curve.slope < 1.5
        assert curve.growth_class in ("linear", "superlinear")

    def test_sequential_flux_cost_grows(self):
        suite = [{"simulator": "sequential", "axis": "flux",
                  "values": [0.5, 16.0]}]
        curve = benchmark(bench_base(N_iter=100), suite, reps=3, seed=3)[0]
        assert curve.slope > 0.3

    def test_pixels_axis_runs_cube_engine(self):
        suite = [{"simulator": "mars", "axis": "pixels", "values": [4, 16]}]
        curve = benchmark(bench_base(n_b=128, N_iter=5), suite, reps=2, seed=4)[0]
        assert len(curve.rows) == 2
        assert all(r.median_s > 0 for r in curve.rows)


class TestCsvExport:
    def test_header_and_host_fields(self, tmp_path):
        suite = [{"simulator": "poisson", "axis": "flux", "values": [0.5, 5.0]}]
        curves = benchmark(bench_base(N_iter=10), suite, reps=2, seed=5)
        path = tmp_path / "bench.csv"
        bench_to_csv(curves, path)
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["simulator", "axis", "value", "median_s", "slope",
                           "growth_class", "platform", "python", "numpy"]
        host = host_descriptor()
        assert set(host) == {"platform", "python", "numpy"}
        for row in rows[1:]:
            assert len(row) == 9
            assert row[0] == "poisson" and row[1] == "flux"
            assert float(row[3]) > 0
            assert row[5] in ("constant", "linear", "superlinear")
            assert row[6] == host["platform"]
            assert row[7] == host["python"]
            assert row[8] == host["numpy"]

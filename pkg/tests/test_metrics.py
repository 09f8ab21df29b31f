"""Distribution distances and the desk validation sweep."""

import csv
import json

import numpy as np
import pytest
from scipy.stats import poisson

from spadsim import DomainError, SystemConfig, count_law, renewal_law
from spadsim.metrics import (
    DESK_GRID,
    desk_cell,
    evaluate_cell,
    gaussian_count_pmf,
    kl_divergence,
    run_validation,
    wasserstein_1,
)

from conftest import ref_cfg


def pmf_at(points):
    p = np.zeros(max(points) + 1)
    for k in points:
        p[k] += 1 / len(points)
    return p


class TestWasserstein:
    def test_identical_is_zero(self):
        p = np.array([0.2, 0.3, 0.5])
        assert wasserstein_1(p, p) == 0.0

    @pytest.mark.parametrize("i,j", [(0, 4), (2, 9), (7, 3)])
    def test_point_masses(self, i, j):
        assert wasserstein_1(pmf_at([i]), pmf_at([j])) == pytest.approx(
            abs(i - j), rel=1e-12)

    def test_shifted_poisson_pair(self):
        # Poisson(6) dominates Poisson(5) stochastically, so the distance
        # is the mean gap; compare against a brute-force CDF sum too.
        k = np.arange(61)
        p = poisson.pmf(k, 5.0)
        q = poisson.pmf(k, 6.0)
        p /= p.sum()
        q /= q.sum()
        w = wasserstein_1(p, q)
        brute = float(np.abs(np.cumsum(p) - np.cumsum(q)).sum())
        assert w == pytest.approx(brute, abs=1e-12)
        assert w == pytest.approx(1.0, abs=1e-9)

    def test_unequal_lengths_zero_padded(self):
        p = np.array([0.5, 0.5])
        q = np.array([0.5, 0.0, 0.5])
        assert wasserstein_1(p, q) == pytest.approx(0.5, rel=1e-12)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            p, q, r = (rng.dirichlet(np.ones(15)) for _ in range(3))
            assert wasserstein_1(p, r) <= (wasserstein_1(p, q)
                                           + wasserstein_1(q, r) + 1e-12)

    @pytest.mark.parametrize("bad", [
        np.array([0.5, 0.6]),                # mass > 1
        np.array([0.7, -0.1, 0.4]),          # negative entry
        np.array([]),                        # empty
        np.ones((2, 2)) / 4,                 # not 1-D
    ])
    def test_invalid_pmf_rejected(self, bad):
        good = np.array([0.5, 0.5])
        with pytest.raises(DomainError):
            wasserstein_1(bad, good)
        with pytest.raises(DomainError):
            wasserstein_1(good, bad)


class TestGaussianCountPmf:
    def test_moments_recovered_when_wide(self):
        # Integer rounding adds the usual 1/12 grouping correction to the
        # variance; the mean is preserved.
        pmf = gaussian_count_pmf(40.0, 25.0, 120)
        k = np.arange(120)
        assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
        assert (pmf * k).sum() == pytest.approx(40.0, abs=1e-6)
        var = (pmf * k * k).sum() - (pmf * k).sum() ** 2
        assert var == pytest.approx(25.0 + 1 / 12, rel=1e-3)

    def test_floor_keeps_support_positive(self):
        pmf = gaussian_count_pmf(5.0, 0.25, 50)
        assert np.all(pmf > 0)
        assert pmf.sum() == pytest.approx(1.0, abs=1e-12)


class TestKlDivergence:
    def test_self_divergence_zero(self):
        p = np.array([0.1, 0.4, 0.5])
        assert kl_divergence(p, (1.4, 0.44)) >= 0.0
        # identical distributions through the tuple route
        pmf = gaussian_count_pmf(10.0, 4.0, 40)
        assert kl_divergence(pmf, (10.0, 4.0)) <= 1e-9

    def test_count_law_object_equals_tuple(self):
        cfg = ref_cfg(n_b=256, N_iter=1)
        law = count_law(cfg)
        emp = gaussian_count_pmf(law.count_mean, law.count_var, 1100)
        via_obj = kl_divergence(emp, law)
        via_tuple = kl_divergence(emp, (law.count_mean, law.count_var))
        assert via_obj == via_tuple

    def test_disjoint_support_hits_floor(self):
        # Empirical mass far outside the model support pays the floored
        # log(1/1e-12) penalty per unit mass.
        emp = pmf_at([990, 1010])
        kl = kl_divergence(emp, (5.0, 1.0))
        assert 20.0 < kl < 28.0

    def test_invalid_empirical_rejected(self):
        with pytest.raises(DomainError):
            kl_divergence(np.array([]), (5.0, 1.0))


class TestDeadTimeFreeCollapse:
    def test_model_gap_shrinks_first_order_in_bin_width(self):
        # With t_d = 0 the analytic law must collapse to Poisson totals.
        # The residual gap is the holding-time lattice bias, first order
        # in bin width: W1 halves per doubling of n_b.
        lam = 2000.0
        size = int(lam + 12 * np.sqrt(lam))
        gaps = {}
        for n_b in (512, 4096):
            cfg = SystemConfig(t_r=1.0, N_r=1000, sigma_t=0.01, t_d=0.0,
                               n_b=n_b, tau=0.5, S=0.0, B=2.0, N_iter=1)
            law = count_law(cfg)
            a = gaussian_count_pmf(law.count_mean, law.count_var, size)
            b = gaussian_count_pmf(lam, lam, size)
            gaps[n_b] = wasserstein_1(a, b)
        assert gaps[4096] <= 1.0
        assert gaps[512] / gaps[4096] >= 7.0


@pytest.fixture(scope="module")
def single_cell():
    cfg = desk_cell(8.2, 1.2, 75e-9, n_real=500, n_b=1024)
    return cfg, evaluate_cell(cfg, seed=77)


@pytest.fixture(scope="module")
def report():
    return run_validation(cells=[(8.2, 1.2, 75e-9), (2.0, 0.2, 25e-9)],
                          seed=5, n_real=300, n_b=512)


class TestDeskSweep:
    def test_grid_cells(self):
        assert len(DESK_GRID) == 12
        cfg = desk_cell(2.0, 1.2, 75e-9, n_real=100, n_b=512)
        assert cfg.S == 2.0 and cfg.B == 1.2 and cfg.t_d == 75e-9
        assert cfg.N_iter == 100 and cfg.n_b == 512

    def test_rows_structure(self, single_cell):
        cfg, rows = single_cell
        assert [r.method for r in rows] == ["mars", "renewal", "poisson"]
        for r in rows:
            assert r.S == 8.2 and r.B == 1.2 and r.t_d == 75e-9
            assert r.wasserstein >= 0 and r.kl >= 0
            assert r.emp_mean > 0 and r.emp_var > 0
            assert r.mean_diff >= 0 and r.var_diff >= 0

    def test_mars_beats_renewal_here(self, single_cell):
        _, rows = single_cell
        by = {r.method: r for r in rows}
        assert by["mars"].wasserstein < by["renewal"].wasserstein
        assert by["mars"].mean_diff < by["renewal"].mean_diff

    def test_precomputed_totals_short_circuit_oracle(self, single_cell):
        cfg, rows = single_cell
        totals = np.full(400, 1000, dtype=np.int64)
        totals[::2] = 1001
        fast = evaluate_cell(cfg, seed=0, totals=totals)
        assert fast[0].emp_mean == pytest.approx(1000.5, rel=1e-12)

    def test_paper_cell_kl_ordering(self, paper_cfg, paper_empirical, paper_law):
        law, _ = paper_law
        emp = paper_empirical.count_pmf
        kl_mars = kl_divergence(emp, law)
        kl_renewal = kl_divergence(emp, renewal_law(paper_cfg))
        assert kl_mars < kl_renewal


class TestReportSerialization:
    def test_methods_and_averages(self, report):
        assert report.methods() == ["mars", "renewal", "poisson"]
        g = report.grid_average("mars")
        assert set(g) == {"wasserstein", "kl", "mean_diff", "var_diff"}
        assert all(v >= 0 for v in g.values())
        with pytest.raises(DomainError):
            report.grid_average("nonexistent")

    def test_csv_layout(self, report, tmp_path):
        path = tmp_path / "metrics.csv"
        report.to_csv(path)
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["method", "S", "B", "t_d_ns", "wasserstein", "kl",
                           "mean_diff", "var_diff", "emp_mean", "emp_var"]
        assert len(rows) == 1 + 6 + 3       # header, 2 cells x 3, averages
        assert rows[1][0] == "mars" and rows[1][3] == "75.0"
        tail = [r[0] for r in rows[-3:]]
        assert tail == ["mars:grid_average", "renewal:grid_average",
                        "poisson:grid_average"]

    def test_json_layout(self, report, tmp_path):
        path = tmp_path / "metrics.json"
        report.to_json(path)
        doc = json.loads(path.read_text())
        assert set(doc) == {"rows", "grid_average"}
        assert len(doc["rows"]) == 6
        assert set(doc["grid_average"]) == {"mars", "renewal", "poisson"}
        assert doc["rows"][0]["method"] == "mars"

    def test_validation_figure_renders(self, report, tmp_path):
        from spadsim.report import render_validation_figure

        path = tmp_path / "metrics.png"
        render_validation_figure(report, path)
        assert path.stat().st_size > 1000

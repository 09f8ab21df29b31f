"""Sequential gold standard, baselines, and empirical trace statistics."""

import numpy as np
import pytest
from scipy.stats import ks_2samp

from spadsim import (
    DomainError,
    SystemConfig,
    discretize_flux,
    empirical_law,
    poisson_simulate,
    renewal_law,
    sequential_simulate,
)
from spadsim.oracle import RegistrationTrace, inverse_cdf_table

from conftest import ref_cfg


@pytest.fixture(scope="module")
def run():
    cfg = ref_cfg(n_b=128, N_iter=100)
    hist, traces = sequential_simulate(cfg, seed=42)
    return cfg, hist, traces


class TestSequentialInvariants:
    def test_shapes_and_dtype(self, run):
        cfg, hist, traces = run
        assert hist.shape == (100, 128) and hist.dtype == np.uint32
        assert len(traces) == 100

    def test_timestamps_strictly_increasing_inside_exposure(self, run):
        cfg, _, traces = run
        for tr in traces:
            ts = tr.timestamps
            assert np.all(np.diff(ts) > 0)
            assert ts.size == 0 or (ts[0] >= 0 and ts[-1] < cfg.exposure)

    def test_gaps_respect_dead_time(self, run):
        cfg, _, traces = run
        floor = cfg.t_d * (1 - 1e-12)
        for tr in traces:
            assert tr.holding_times.size == 0 or tr.holding_times.min() >= floor

    def test_histogram_equals_binned_trace(self, run):
        cfg, hist, traces = run
        for r, tr in enumerate(traces):
            binned = np.bincount(tr.bin_indices(cfg), minlength=cfg.n_b)
            np.testing.assert_array_equal(hist[r], binned)

    def test_deterministic_and_trace_flag_consistent(self):
        cfg = ref_cfg(n_b=64, N_iter=20)
        h1, t1 = sequential_simulate(cfg, seed=3)
        h2, t2 = sequential_simulate(cfg, seed=3)
        h3, t3 = sequential_simulate(cfg, seed=3, with_traces=False)
        np.testing.assert_array_equal(h1, h2)
        np.testing.assert_array_equal(h1, h3)
        assert t3 is None
        assert all(np.array_equal(a.timestamps, b.timestamps)
                   for a, b in zip(t1, t2))


class TestSequentialPhysics:
    def test_no_dead_time_bin_means_match_integrated_flux(self):
        # With t_d = 0 every arrival registers, so bin means are exactly
        # N_r times the integrated per-bin flux mass. Fixed seed, 4 sigma.
        cfg = SystemConfig(t_r=1.0, N_r=200, sigma_t=0.05, t_d=0.0, n_b=64,
                           tau=0.4, S=1.0, B=1.0, N_iter=3000)
        hist, _ = sequential_simulate(cfg, seed=8, with_traces=False)
        expected = cfg.N_r * discretize_flux(cfg).values * cfg.delta
        sd = np.sqrt(expected / cfg.N_iter)
        assert np.all(np.abs(hist.mean(axis=0) - expected) <= 4 * sd)

    def test_no_dead_time_totals_match_poisson_engine(self):
        cfg = SystemConfig(t_r=1.0, N_r=200, sigma_t=0.05, t_d=0.0, n_b=64,
                           tau=0.4, S=1.0, B=1.0, N_iter=2000)
        seq, _ = sequential_simulate(cfg, seed=14, with_traces=False)
        poi = poisson_simulate(cfg, seed=15)
        res = ks_2samp(seq.sum(axis=1), poi.sum(axis=1))
        assert res.pvalue > 0.01

    def test_dead_time_spanning_exposure_registers_once(self):
        # A dead time at least as long as the exposure lets exactly one
        # arrival through; at Lambda = 50 the no-arrival branch never fires.
        cfg = SystemConfig(t_r=1.0, N_r=20, sigma_t=0.01, t_d=20.0, n_b=16,
                           tau=0.5, S=0.0, B=50.0, N_iter=200)
        hist, traces = sequential_simulate(cfg, seed=5)
        assert np.all(hist.sum(axis=1) == 1)
        assert all(tr.timestamps.size == 1 for tr in traces)

    def test_paralyzing_flux_pins_counts_far_below_poisson(self):
        # The headline saturation effect: at 9.4 photons per cycle and a
        # 75 ns dead time the dead-time-blind baseline overshoots the
        # registered count by several-fold.
        cfg = ref_cfg(n_b=256, N_iter=50)
        seq, _ = sequential_simulate(cfg, seed=30, with_traces=False)
        poi = poisson_simulate(cfg, seed=31)
        assert poi.sum(axis=1).mean() >= 3 * seq.sum(axis=1).mean()

    def test_batched_generation_preserves_statistics(self):
        # A tiny arrival budget forces many internal batches; the stream
        # layout changes, so compare distributions rather than bytes.
        cfg = SystemConfig(t_r=1.0, N_r=100, sigma_t=0.05, t_d=0.3, n_b=64,
                           tau=0.4, S=1.0, B=1.0, N_iter=1000)
        big, traces = sequential_simulate(cfg, seed=51)
        small, _ = sequential_simulate(cfg, seed=52, batch_arrivals=500)
        assert len(traces) == cfg.N_iter
        a = big.sum(axis=1).astype(float)
        b = small.sum(axis=1).astype(float)
        se = np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
        assert abs(a.mean() - b.mean()) <= 5 * se
        assert ks_2samp(a, b).pvalue > 0.01


class TestInverseCdf:
    def test_table_is_monotone_normalized(self):
        cfg = ref_cfg(n_b=256)
        u, t = inverse_cdf_table(cfg)
        assert u.size == 16 * 256 + 1 and t.size == u.size
        assert u[0] == 0.0
        assert u[-1] == pytest.approx(1.0, abs=1e-9)
        assert np.all(np.diff(u) > 0)       # positive background floor

    def test_sampled_phases_match_flux_within_tv(self):
        # Pooled arrival bins from a million registrations against the
        # integrated flux mass; total variation bounds the inverse-CDF
        # interpolation error plus sampling noise.
        cfg = SystemConfig(t_r=1.0, N_r=1000, sigma_t=0.05, t_d=0.0, n_b=256,
                           tau=0.4, S=1.5, B=0.5, N_iter=500)
        _, traces = sequential_simulate(cfg, seed=64)
        bins = np.concatenate([tr.bin_indices(cfg) for tr in traces])
        assert bins.size >= 1_000_000
        emp = np.bincount(bins, minlength=cfg.n_b) / bins.size
        model = discretize_flux(cfg).values * cfg.delta / cfg.Lam
        assert 0.5 * np.abs(emp - model).sum() <= 0.01


class TestPoissonBaseline:
    def test_deterministic(self):
        cfg = ref_cfg(n_b=64, N_iter=10)
        np.testing.assert_array_equal(poisson_simulate(cfg, seed=7),
                                      poisson_simulate(cfg, seed=7))

    def test_total_mean_is_flux_blind(self):
        cfg = SystemConfig(t_r=1.0, N_r=500, sigma_t=0.05, t_d=0.4, n_b=128,
                           tau=0.5, S=1.0, B=1.0, N_iter=2000)
        totals = poisson_simulate(cfg, seed=2).sum(axis=1).astype(float)
        mean = cfg.Lam * cfg.N_r
        assert abs(totals.mean() - mean) <= 4 * np.sqrt(mean / cfg.N_iter)


class TestRenewalBaseline:
    def test_no_dead_time_reduces_to_poisson_moments(self):
        cfg = ref_cfg(t_d=0.0, n_b=64)
        mean, var = renewal_law(cfg)
        assert mean == pytest.approx(9.4 * 1000, rel=1e-12)
        assert var == pytest.approx(9.4 * 1000, rel=1e-12)

    def test_textbook_saturation_point(self):
        # lambda_0 = 1, t_d = 1, t = 100: mean 50, variance 12.5.
        cfg = SystemConfig(t_r=1.0, N_r=100, sigma_t=0.01, t_d=1.0, n_b=8,
                           tau=0.5, S=0.0, B=1.0, N_iter=1)
        mean, var = renewal_law(cfg)
        assert mean == pytest.approx(50.0, rel=1e-12)
        assert var == pytest.approx(12.5, rel=1e-12)

    def test_flattens_pulse_shape(self):
        pulsed = ref_cfg(n_b=64)
        flat = ref_cfg(n_b=64, S=0.0, B=9.4)
        a, b = renewal_law(pulsed), renewal_law(flat)
        assert a[0] == pytest.approx(b[0], rel=1e-12)
        assert a[1] == pytest.approx(b[1], rel=1e-12)


def make_trace(gaps, start=0.0):
    # Explicit origin so np.diff recovers the gap sequence verbatim.
    ts = np.concatenate(([0.0], np.cumsum(np.asarray(gaps))))
    return RegistrationTrace(timestamps=start + ts)


class TestEmpiricalLaw:
    def test_constant_gaps_have_zero_variance(self):
        # Dyadic gap and start offsets keep every float operation exact,
        # so the variance must come out identically zero.
        traces = [make_trace([0.25] * 40, start=0.015625 * k) for k in range(5)]
        law = empirical_law(traces, L=3)
        assert law.holding_mean == 0.25
        assert law.holding_var == 0.0
        np.testing.assert_array_equal(law.lag_covariances, np.zeros(3))
        assert law.count_mean == 41.0 and law.count_var == 0.0

    def test_count_statistics_match_numpy(self):
        rng = np.random.default_rng(6)
        sizes = rng.integers(30, 60, 50)
        traces = [make_trace([0.1] * n) for n in sizes]
        law = empirical_law(traces, L=1)
        assert law.count_mean == pytest.approx(sizes.mean() + 1, rel=1e-12)
        assert law.count_var == pytest.approx(sizes.var(ddof=1), rel=1e-12)
        assert law.count_pmf.sum() == pytest.approx(1.0, abs=1e-12)
        assert law.count_pmf[sizes[0] + 1] > 0

    def test_burn_in_drops_transient(self):
        # First gap is a 10x outlier; burn-in slices it out of the
        # holding statistics but not out of the totals.
        gaps = np.full(30, 0.2)
        gaps[0] = 2.0
        traces = [make_trace(gaps) for _ in range(3)]
        relaxed = empirical_law(traces, L=1, burn_in=1)
        raw = empirical_law(traces, L=1, burn_in=0)
        assert relaxed.holding_mean == pytest.approx(0.2, rel=1e-12)
        assert raw.holding_mean > 0.2
        assert relaxed.count_mean == raw.count_mean == 31.0

    def test_needs_two_realizations(self):
        with pytest.raises(DomainError):
            empirical_law([make_trace([0.1] * 30)])
        with pytest.raises(DomainError):
            empirical_law(None)

    def test_traces_shorter_than_burn_in_rejected(self):
        traces = [make_trace([0.1] * 5) for _ in range(4)]
        with pytest.raises(DomainError):
            empirical_law(traces, L=1, burn_in=10)

    def test_no_pairs_at_requested_lag(self):
        traces = [make_trace([0.1] * 12) for _ in range(4)]
        with pytest.raises(DomainError):
            empirical_law(traces, L=2, burn_in=10)

    def test_lag_covariance_of_alternating_gaps(self):
        # Deterministic 0.1/0.3 alternation: gamma_1 = -0.01, gamma_2 = +0.01.
        gaps = np.tile([0.1, 0.3], 100)
        traces = [make_trace(gaps) for _ in range(2)]
        law = empirical_law(traces, L=2, burn_in=0)
        assert law.lag_covariances[0] == pytest.approx(-0.01, rel=1e-12)
        assert law.lag_covariances[1] == pytest.approx(0.01, rel=1e-12)

"""Reference simulators: sequential gold standard plus the two baselines.

The sequential simulator is the physical ground truth. Per realization it
draws per-cycle arrival counts, draws arrival phases by inverse-CDF lookup,
and scans the absolute-time stream once, keeping an arrival iff it falls at
least one dead time after the previous registration. The scan runs in a
compiled kernel; everything upstream is vectorized numpy, batched over
realizations so arrival arrays stay bounded.

Counts are generated as one Poisson total per realization split uniformly
over cycles, which is distribution-identical to independent per-cycle
Poisson draws but keeps the workload proportional to the number of
arrivals rather than the number of cycles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .config import SystemConfig, cumulative_flux
from .errors import DomainError

# Arrival phases are drawn by linear interpolation of the inverse CDF on a
# monotone table with this many nodes per histogram bin.
CDF_OVERSAMPLE = 16

_DEFAULT_BATCH_ARRIVALS = 10_000_000


@dataclass
class RegistrationTrace:
    """Registration timestamps of one realization, absolute seconds."""

    timestamps: np.ndarray

    @property
    def holding_times(self) -> np.ndarray:
        """Gaps W_k between consecutive registrations."""
        return np.diff(self.timestamps)

    def bin_indices(self, cfg: SystemConfig) -> np.ndarray:
        """Histogram bin of each registration (timestamps mod t_r)."""
        phase = self.timestamps - np.floor(self.timestamps / cfg.t_r) * cfg.t_r
        return np.minimum((phase / cfg.delta).astype(np.int64), cfg.n_b - 1)


def inverse_cdf_table(cfg: SystemConfig, oversample: int = CDF_OVERSAMPLE):
    """Monotone (u, t) table with u = F(t)/Lambda for phase sampling."""
    t = np.linspace(0.0, cfg.t_r, oversample * cfg.n_b + 1)
    u = np.atleast_1d(cumulative_flux(cfg, t)) / cfg.Lam
    return u, t


@njit(cache=True)
def _scatter_by_key(key, phi, cursors, out):
    for k in range(key.size):
        c = cursors[key[k]]
        out[c] = phi[k]
        cursors[key[k]] = c + 1


@njit(cache=True)
def _dead_time_scan(counts_rc, phases, n_real, n_cycles, t_r, t_d, delta, n_b,
                    hist, reg_times, reg_counts, store_times):
    p = 0
    w = 0
    for r in range(n_real):
        last = -1.0e300
        kept = 0
        for c in range(n_cycles):
            m = counts_rc[r * n_cycles + c]
            if m == 0:
                continue
            a = p
            b = p + m
            for ii in range(a + 1, b):  # insertion sort, blocks are tiny
                x = phases[ii]
                jj = ii - 1
                while jj >= a and phases[jj] > x:
                    phases[jj + 1] = phases[jj]
                    jj -= 1
                phases[jj + 1] = x
            base = c * t_r
            for ii in range(a, b):
                t_abs = base + phases[ii]
                if t_abs >= last + t_d:
                    bi = int(phases[ii] / delta)
                    if bi >= n_b:
                        bi = n_b - 1
                    hist[r, bi] += 1
                    if store_times:
                        reg_times[w + kept] = t_abs
                    kept += 1
                    last = t_abs
            p = b
        reg_counts[r] = kept
        w += kept
    return w


def sequential_simulate(cfg: SystemConfig, seed: int, with_traces: bool = True,
                        batch_arrivals: int = _DEFAULT_BATCH_ARRIVALS):
    """Gold-standard simulation of cfg.N_iter realizations.

    Returns
    -------
    histograms : (N_iter, n_b) uint32 array
        Registered counts binned by phase.
    traces : list of RegistrationTrace, or None when with_traces is False.
    """
    rng = np.random.default_rng(seed)
    u_nodes, t_nodes = inverse_cdf_table(cfg)
    n, N_r = cfg.n_b, cfg.N_r
    R = cfg.N_iter
    hist = np.zeros((R, n), dtype=np.uint32)
    traces: list[RegistrationTrace] | None = [] if with_traces else None

    per_real = cfg.Lam * N_r
    r_batch = max(1, int(batch_arrivals / max(per_real, 1.0)))
    r0 = 0
    while r0 < R:
        rb = min(r_batch, R - r0)
        totals = rng.poisson(per_real, rb)
        T = int(totals.sum())
        cyc = rng.integers(0, N_r, T)
        real_id = np.repeat(np.arange(rb), totals)
        key = real_id * N_r + cyc
        phi = np.interp(rng.random(T), u_nodes, t_nodes)

        counts_rc = np.bincount(key, minlength=rb * N_r)
        starts = np.zeros(rb * N_r + 1, dtype=np.int64)
        np.cumsum(counts_rc, out=starts[1:])
        grouped = np.empty(T)
        _scatter_by_key(key, phi, starts[:-1].copy(), grouped)

        if cfg.t_d > 0:
            cap = min(T, rb * (int(N_r * cfg.t_r / cfg.t_d) + 2))
        else:
            cap = T
        reg_times = np.empty(cap if with_traces else 1)
        reg_counts = np.zeros(rb, dtype=np.int64)
        _dead_time_scan(counts_rc, grouped, rb, N_r, cfg.t_r, cfg.t_d,
                        cfg.delta, n, hist[r0:r0 + rb], reg_times, reg_counts,
                        with_traces)
        if with_traces:
            edges = np.concatenate(([0], np.cumsum(reg_counts)))
            for r in range(rb):
                traces.append(RegistrationTrace(
                    timestamps=reg_times[edges[r]:edges[r + 1]].copy()))
        r0 += rb
    return hist, traces


def poisson_simulate(cfg: SystemConfig, seed: int) -> np.ndarray:
    """Dead-time-blind baseline: independent per-bin Poisson counts."""
    rng = np.random.default_rng(seed)
    edges = np.linspace(0.0, cfg.t_r, cfg.n_b + 1)
    F = np.atleast_1d(cumulative_flux(cfg, edges))
    rates = cfg.N_r * np.diff(F)
    return rng.poisson(rates, size=(cfg.N_iter, cfg.n_b)).astype(np.uint32)


def renewal_law(cfg: SystemConfig) -> tuple[float, float]:
    """Constant-rate delayed-renewal baseline moments.

    Flattens the flux to lambda_0 = Lambda / t_r and returns
    (lambda_0 t / (1 + lambda_0 t_d), lambda_0 t / (1 + lambda_0 t_d)^3)
    over the exposure t = N_r t_r.
    """
    lam0 = cfg.Lam / cfg.t_r
    t = cfg.exposure
    denom = 1.0 + lam0 * cfg.t_d
    return lam0 * t / denom, lam0 * t / denom ** 3


@dataclass
class EmpiricalLaw:
    """Sample statistics pooled from registration traces."""

    count_mean: float
    count_var: float
    count_pmf: np.ndarray            # indexed by integer total
    holding_mean: float
    holding_var: float
    lag_covariances: np.ndarray      # gamma_1 .. gamma_L of steady-state gaps


def empirical_law(traces: list[RegistrationTrace], L: int = 6,
                  burn_in: int = 10) -> EmpiricalLaw:
    """Moments, count pmf, and holding-time lag covariances from traces.

    The first `burn_in` registrations of every realization are dropped from
    the holding-time statistics so the embedded chain has relaxed to steady
    state; count totals use the full traces (they are the observable).
    """
    if traces is None or len(traces) < 2:
        raise DomainError("need at least 2 realizations")
    totals = np.array([t.timestamps.size for t in traces])
    count_mean = float(totals.mean())
    count_var = float(totals.var(ddof=1))
    pmf = np.bincount(totals) / totals.size

    segs = [t.timestamps[burn_in:] for t in traces if t.timestamps.size > burn_in + 1]
    if not segs:
        raise DomainError("traces too short for steady-state statistics")
    W = [np.diff(s) for s in segs]
    Wc = np.concatenate(W)
    lens = np.array([w.size for w in W])
    mean_W = float(Wc.mean())
    var_W = float(Wc.var(ddof=1))

    # Lag products restricted to pairs within one realization.
    pos = np.arange(Wc.size) - np.repeat(np.concatenate(([0], np.cumsum(lens)[:-1])), lens)
    len_of = np.repeat(lens, lens)
    c = Wc - mean_W
    gammas = np.empty(L)
    for l in range(1, L + 1):
        valid = pos < len_of - l
        k = np.nonzero(valid)[0]
        if k.size == 0:
            raise DomainError(f"no holding-time pairs at lag {l}")
        gammas[l - 1] = float(np.mean(c[k] * c[k + l]))
    return EmpiricalLaw(count_mean=count_mean, count_var=count_var,
                        count_pmf=pmf, holding_mean=mean_W, holding_var=var_W,
                        lag_covariances=gammas)

"""Count-distribution metrics and the desk-scale validation sweep.

All three methods (analytic law, renewal baseline, Poisson baseline) are
reduced to a (mean, variance) pair and pushed through one shared
discretization: the Gaussian integrated over unit intervals centered on
integers, floored and renormalized. Metrics then compare those integer
pmfs against the empirical count pmf of the sequential oracle, so no
method gets a different numerical treatment.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .config import SystemConfig
from .countlaw import count_law
from .errors import DomainError
from .oracle import renewal_law, sequential_simulate

PMF_FLOOR = 1e-12

# Desk-scale validation grid: (S, B, t_d seconds). The shared base is the
# paper-style pixel (t_r = 100 ns, N_r = 1000, sigma_t = 1 ns, tau = 40 ns).
DESK_GRID = tuple((S, B, td)
                  for S in (0.5, 2.0, 8.2)
                  for B in (0.2, 1.2)
                  for td in (25e-9, 75e-9))


def desk_cell(S: float, B: float, t_d: float, n_real: int = 10_000,
              n_b: int = 4096) -> SystemConfig:
    return SystemConfig(t_r=100e-9, N_r=1000, sigma_t=1e-9, t_d=t_d, n_b=n_b,
                        tau=40e-9, S=S, B=B, N_iter=n_real)


def _check_pmf(name: str, p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise DomainError(f"{name} must be a nonempty 1-D pmf")
    if np.any(p < 0):
        raise DomainError(f"{name} has negative mass")
    if abs(p.sum() - 1.0) > 1e-9:
        raise DomainError(f"{name} sums to {p.sum():.12f}, not 1")
    return p


def wasserstein_1(p: np.ndarray, q: np.ndarray) -> float:
    """W1 between two integer pmfs via the CDF-difference sum."""
    p = _check_pmf("p", p)
    q = _check_pmf("q", q)
    n = max(p.size, q.size)
    P = np.zeros(n)
    Q = np.zeros(n)
    P[:p.size] = p
    Q[:q.size] = q
    return float(np.abs(np.cumsum(P) - np.cumsum(Q)).sum())


def gaussian_count_pmf(mean: float, var: float, size: int) -> np.ndarray:
    """Gaussian law discretized to integers 0..size-1.

    Unit intervals centered on integers, floored at 1e-12, renormalized;
    the shared model-side pipeline for every method.
    """
    if size < 1:
        raise DomainError("pmf size must be >= 1")
    sd = np.sqrt(max(var, 1e-300))
    edges = np.arange(size + 1) - 0.5
    cdf = ndtr((edges - mean) / sd)
    pmf = np.maximum(np.diff(cdf), PMF_FLOOR)
    return pmf / pmf.sum()


def kl_divergence(empirical: np.ndarray, model: tuple[float, float] | object) -> float:
    """KL(empirical || model) in nats, model = Gaussian (mean, var) or CountLaw."""
    emp = np.asarray(empirical, dtype=float)
    if emp.size == 0 or emp.sum() <= 0:
        raise DomainError("empirical pmf has no support")
    emp = _check_pmf("empirical", emp)
    if hasattr(model, "count_mean"):
        mean, var = model.count_mean, model.count_var
    else:
        mean, var = model
    size = max(emp.size, int(np.ceil(mean + 12 * np.sqrt(max(var, 0.0)))) + 1)
    q = gaussian_count_pmf(mean, var, size)
    k = np.nonzero(emp > 0)[0]
    return float(np.sum(emp[k] * (np.log(emp[k]) - np.log(q[k]))))


@dataclass
class MetricRow:
    method: str
    S: float
    B: float
    t_d: float
    wasserstein: float
    kl: float
    mean_diff: float
    var_diff: float
    emp_mean: float
    emp_var: float


@dataclass
class MetricReport:
    """Per-cell metric rows plus grid averages per method."""

    rows: list = field(default_factory=list)

    def grid_average(self, method: str) -> dict:
        sel = [r for r in self.rows if r.method == method]
        if not sel:
            raise DomainError(f"no rows for method {method!r}")
        return {
            "wasserstein": float(np.mean([r.wasserstein for r in sel])),
            "kl": float(np.mean([r.kl for r in sel])),
            "mean_diff": float(np.mean([r.mean_diff for r in sel])),
            "var_diff": float(np.mean([r.var_diff for r in sel])),
        }

    def methods(self) -> list:
        seen = []
        for r in self.rows:
            if r.method not in seen:
                seen.append(r.method)
        return seen

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["method", "S", "B", "t_d_ns", "wasserstein", "kl",
                        "mean_diff", "var_diff", "emp_mean", "emp_var"])
            for r in self.rows:
                w.writerow([r.method, r.S, r.B, r.t_d * 1e9,
                            f"{r.wasserstein:.6f}", f"{r.kl:.6f}",
                            f"{r.mean_diff:.6f}", f"{r.var_diff:.6f}",
                            f"{r.emp_mean:.6f}", f"{r.emp_var:.6f}"])
            for m in self.methods():
                g = self.grid_average(m)
                w.writerow([f"{m}:grid_average", "", "", "",
                            f"{g['wasserstein']:.6f}", f"{g['kl']:.6f}",
                            f"{g['mean_diff']:.6f}", f"{g['var_diff']:.6f}"])

    def to_json(self, path) -> None:
        doc = {
            "rows": [vars(r) for r in self.rows],
            "grid_average": {m: self.grid_average(m) for m in self.methods()},
        }
        with open(path, "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")


def _method_moments(cfg: SystemConfig) -> dict:
    law = count_law(cfg)
    ren = renewal_law(cfg)
    lam_total = cfg.Lam * cfg.N_r
    return {
        "mars": (law.count_mean, law.count_var),
        "renewal": ren,
        "poisson": (lam_total, lam_total),
    }


def evaluate_cell(cfg: SystemConfig, seed: int,
                  totals: np.ndarray | None = None) -> list:
    """Metric rows for one grid cell; runs the oracle unless totals are given."""
    if totals is None:
        hist, _ = sequential_simulate(cfg, seed, with_traces=False)
        totals = hist.sum(axis=1).astype(np.int64)
    emp = np.bincount(totals) / totals.size
    emp_mean = float(totals.mean())
    emp_var = float(totals.var(ddof=1))
    rows = []
    for method, (mean, var) in _method_moments(cfg).items():
        size = max(emp.size, int(np.ceil(mean + 12 * np.sqrt(var))) + 1)
        pmf = gaussian_count_pmf(mean, var, size)
        rows.append(MetricRow(
            method=method, S=cfg.S, B=cfg.B, t_d=cfg.t_d,
            wasserstein=wasserstein_1(emp, pmf),
            kl=kl_divergence(emp, (mean, var)),
            mean_diff=abs(emp_mean - mean),
            var_diff=abs(emp_var - var),
            emp_mean=emp_mean, emp_var=emp_var))
    return rows


def run_validation(cells=DESK_GRID, seed: int = 0, n_real: int = 10_000,
                   n_b: int = 4096) -> MetricReport:
    """Oracle-vs-methods sweep over the desk grid."""
    report = MetricReport()
    for idx, (S, B, td) in enumerate(cells):
        cfg = desk_cell(S, B, td, n_real=n_real, n_b=n_b)
        report.rows.extend(evaluate_cell(cfg, seed + idx))
    return report

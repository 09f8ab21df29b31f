"""Runtime scaling harness: wall-time curves over flux, realizations, pixels.

Each point is the median of repeated timed runs after one warmup (the
warmup also absorbs JIT compilation of the oracle scan). Curves get a
log-log slope and a growth class; the table-lookup engine is timed with
the table prebuilt, since the build is a one-off amortized across runs.
"""

from __future__ import annotations

import csv
import platform
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig
from .errors import ConfigError
from .oracle import poisson_simulate, sequential_simulate
from .synth import (build_lut, law_from_entry, lookup, shift_pdf, simulate_cube,
                    simulate_pixel, uniform_scene)

AXES = ("flux", "realizations", "pixels")
SIMULATORS = ("mars", "sequential", "poisson")

# Growth classes by log-log slope.
CONSTANT_BELOW = 0.2
LINEAR_BELOW = 1.2


@dataclass
class BenchRow:
    simulator: str
    axis: str
    value: float
    median_s: float
    runs: tuple


@dataclass
class BenchCurve:
    simulator: str
    axis: str
    slope: float
    growth_class: str
    rows: list = field(default_factory=list)


def classify_slope(slope: float) -> str:
    if slope < CONSTANT_BELOW:
        return "constant"
    if slope <= LINEAR_BELOW:
        return "linear"
    return "superlinear"


def host_descriptor() -> dict:
    return {
        "platform": platform.platform(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
    }


def _flux_cfg(base: SystemConfig, lam: float) -> SystemConfig:
    """Scale total flux, keeping the base signal/background split."""
    frac = base.S / base.Lam
    return base.with_(S=frac * lam, B=(1.0 - frac) * lam)


def _mars_lut(base: SystemConfig, lams) -> dict:
    """Prebuild per-registration laws for every flux the suite will visit."""
    S_axis = np.unique([_flux_cfg(base, l).S for l in lams])
    B_axis = np.unique([_flux_cfg(base, l).B for l in lams])
    lut = build_lut(base, np.sort(S_axis), np.sort(B_axis), threads=1)
    k = int(np.rint((base.tau - base.t_r / 2) / base.delta))
    laws = {}
    for lam in lams:
        cfg = _flux_cfg(base, lam)
        pi0, mu, s2 = lookup(lut, cfg.S, cfg.B, mode="nearest")
        laws[float(lam)] = law_from_entry(cfg, shift_pdf(pi0, k), mu, s2)
    return {"lut": lut, "laws": laws}


def _make_runner(simulator: str, axis: str, base: SystemConfig, values):
    if simulator == "mars":
        if axis == "flux":
            prep = _mars_lut(base, values)

            def run(v, seed):
                simulate_pixel(_flux_cfg(base, v), seed, law=prep["laws"][float(v)])
        elif axis == "realizations":
            prep = _mars_lut(base, [base.Lam])
            law = prep["laws"][float(base.Lam)]

            def run(v, seed):
                cfg = base.with_(N_iter=int(v))
                simulate_pixel(cfg, seed, law=law_from_entry(cfg, law.pi, law.mu,
                                                             law.sigma2))
        else:
            prep = _mars_lut(base, [base.Lam])
            lut = prep["lut"]

            def run(v, seed):
                side = int(np.sqrt(int(v)))
                scene = uniform_scene(side, max(int(v) // side, 1), base.tau,
                                      base.S, base.B)
                for _ in simulate_cube(scene, base, lut, seed, threads=1):
                    pass
        return run

    def single(cfg, seed):
        if simulator == "sequential":
            sequential_simulate(cfg, seed, with_traces=False)
        else:
            poisson_simulate(cfg, seed)

    if axis == "flux":
        def run(v, seed):
            single(_flux_cfg(base, v), seed)
    elif axis == "realizations":
        def run(v, seed):
            single(base.with_(N_iter=int(v)), seed)
    else:
        def run(v, seed):
            side = int(np.sqrt(int(v)))
            w = max(int(v) // side, 1)
            for p in range(side * w):
                single(base, seed + p)
    return run


def benchmark(base: SystemConfig, suite: list, reps: int = 5,
              seed: int = 0) -> list:
    """Time every (simulator, axis, grid) cell of the suite.

    suite: list of {"simulator": ..., "axis": ..., "values": [...]}.
    Returns one BenchCurve per cell, rows in grid order.
    """
    curves = []
    for cell in suite:
        sim = cell["simulator"]
        axis = cell["axis"]
        values = list(cell["values"])
        if sim not in SIMULATORS:
            raise ConfigError(f"unknown simulator {sim!r}")
        if axis not in AXES:
            raise ConfigError(f"unknown axis {axis!r}")
        if len(values) < 2:
            raise ConfigError("each bench cell needs at least 2 grid values")
        run = _make_runner(sim, axis, base, values)
        rows = []
        for v in values:
            run(v, seed)  # warmup; also JIT-compiles on first touch
            ts = []
            for r in range(reps):
                t0 = time.perf_counter()
                run(v, seed + r)
                ts.append(time.perf_counter() - t0)
            rows.append(BenchRow(simulator=sim, axis=axis, value=float(v),
                                 median_s=float(np.median(ts)), runs=tuple(ts)))
        xs = np.log([r.value for r in rows])
        ys = np.log([r.median_s for r in rows])
        slope = float(np.polyfit(xs, ys, 1)[0])
        curves.append(BenchCurve(simulator=sim, axis=axis, slope=slope,
                                 growth_class=classify_slope(slope), rows=rows))
    return curves


def smoke_suite() -> list:
    return [
        {"simulator": "mars", "axis": "flux", "values": [0.5, 5.0, 50.0]},
        {"simulator": "sequential", "axis": "flux", "values": [0.5, 5.0, 50.0]},
        {"simulator": "poisson", "axis": "flux", "values": [0.5, 5.0, 50.0]},
    ]


def bench_to_csv(curves: list, path) -> None:
    host = host_descriptor()
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["simulator", "axis", "value", "median_s", "slope",
                    "growth_class", "platform", "python", "numpy"])
        for c in curves:
            for r in c.rows:
                w.writerow([r.simulator, r.axis, r.value, f"{r.median_s:.6e}",
                            f"{c.slope:.4f}", c.growth_class,
                            host["platform"], host["python"], host["numpy"]])

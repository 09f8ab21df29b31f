"""Shared fixtures: the expensive reference runs are computed once per session.

The heavyweight fixtures (10^4-realization sequential run at the reference
cell, the 12-cell validation sweep) take a couple of minutes combined and are
shared by several test modules, so they live here at session scope.
"""

import time

import pytest

from spadsim import SystemConfig, count_law, empirical_law, sequential_simulate
from spadsim.metrics import run_validation

# Reference operating point used throughout: 100 ns period, 1000 pulses,
# 1 ns pulse width, 75 ns dead time, pulse at 40 ns, S = 8.2, B = 1.2.
REF = dict(t_r=100e-9, N_r=1000, sigma_t=1e-9, t_d=75e-9, tau=40e-9, S=8.2, B=1.2)


def ref_cfg(**overrides):
    params = dict(REF, n_b=4096, N_iter=1)
    params.update(overrides)
    return SystemConfig(**params)


@pytest.fixture(scope="session")
def paper_cfg():
    return ref_cfg(N_iter=10_000)


@pytest.fixture(scope="session")
def paper_oracle(paper_cfg):
    """Sequential gold-standard run at the reference cell, with traces.

    Returns (histograms, traces, wall_seconds); the wall time feeds the
    end-to-end runtime budget check in the acceptance tests.
    """
    start = time.perf_counter()
    hist, traces = sequential_simulate(paper_cfg, seed=1234, with_traces=True)
    wall = time.perf_counter() - start
    return hist, traces, wall


@pytest.fixture(scope="session")
def paper_empirical(paper_oracle):
    _, traces, _ = paper_oracle
    return empirical_law(traces, L=6)


@pytest.fixture(scope="session")
def paper_law(paper_cfg):
    start = time.perf_counter()
    law = count_law(paper_cfg)
    wall = time.perf_counter() - start
    return law, wall


@pytest.fixture(scope="session")
def desk_report():
    """Full 12-cell validation sweep against 10^4 oracle realizations."""
    return run_validation(seed=20, n_real=10_000)

"""System configuration and the arrival-flux model.

The per-cycle arrival rate is a Gaussian pulse of mass S centered at the
depth delay tau, on top of a uniform background of mass B:

    lambda(t) = S * N(t; tau, sigma_t^2) + B / t_r,   0 <= t < t_r

Everything downstream (transition operator, holding moments, oracles) is
driven by this rate and its antiderivative, so both are evaluated in closed
form via the error function rather than by quadrature.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError, DomainError

# Seconds per supported config time unit.
_TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9, "ps": 1e-12}

_TIME_FIELDS = ("t_r", "sigma_t", "t_d", "tau")


@dataclass(frozen=True)
class SystemConfig:
    """Complete parameter set of one simulated pixel.

    Parameters
    ----------
    t_r : float
        Laser repetition period in seconds; one histogram span.
    N_r : int
        Number of emitted pulses (cycles) per realization.
    sigma_t : float
        RMS width of the Gaussian pulse in seconds.
    t_d : float
        Detector dead time in seconds (nonparalyzable).
    n_b : int
        Number of histogram bins over [0, t_r).
    tau : float
        Depth delay in seconds, 0 <= tau < t_r.
    S : float
        Mean signal photons per cycle.
    B : float
        Mean background photons per cycle.
    N_iter : int
        Number of independent realizations to generate.
    """

    t_r: float
    N_r: int
    sigma_t: float
    t_d: float
    n_b: int
    tau: float
    S: float
    B: float
    N_iter: int = 1

    def __post_init__(self):
        if not (self.t_r > 0):
            raise ConfigError("t_r must be positive")
        if self.n_b < 1:
            raise ConfigError("n_b must be >= 1")
        if self.N_r < 1:
            raise ConfigError("N_r must be >= 1")
        if self.N_iter < 1:
            raise ConfigError("N_iter must be >= 1")
        if self.S < 0 or self.B < 0:
            raise ConfigError("S and B must be nonnegative")
        if self.S + self.B <= 0:
            raise ConfigError("total per-cycle flux S + B must be positive")
        if not (0 <= self.tau < self.t_r):
            raise ConfigError("tau must lie in [0, t_r)")
        if self.t_d < 0:
            raise ConfigError("t_d must be nonnegative")
        if not (self.sigma_t > 0):
            raise ConfigError("sigma_t must be positive")

    @property
    def Lam(self) -> float:
        """Total expected arrivals per cycle, Lambda = S + B."""
        return self.S + self.B

    @property
    def delta(self) -> float:
        """Bin width t_r / n_b in seconds."""
        return self.t_r / self.n_b

    @property
    def exposure(self) -> float:
        """Total exposure t = N_r * t_r in seconds."""
        return self.N_r * self.t_r

    @property
    def pulse_clipped(self) -> bool:
        """True when the pulse support is clipped by the period boundary.

        The flux formulas stay exact either way; this only flags that the
        per-cycle pulse mass is less than S.
        """
        return self.tau < 6 * self.sigma_t or self.tau > self.t_r - 6 * self.sigma_t

    def bin_centers(self) -> np.ndarray:
        """Phases s_i = (i + 0.5) * delta of all bins, shape (n_b,)."""
        return (np.arange(self.n_b) + 0.5) * self.delta

    def with_(self, **kw) -> "SystemConfig":
        """Copy with replaced fields."""
        return replace(self, **kw)


@dataclass(frozen=True)
class FluxVector:
    """Arrival rate sampled at bin centers, photons/second."""

    values: np.ndarray

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ConfigError("flux values must be nonnegative")


def flux_at(cfg: SystemConfig, t):
    """Arrival rate lambda(t) in photons/second at phase t within a cycle.

    Accepts a scalar or array; every element must satisfy 0 <= t < t_r.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t >= cfg.t_r):
        raise DomainError("flux_at requires 0 <= t < t_r")
    z = (t - cfg.tau) / cfg.sigma_t
    pulse = np.exp(-0.5 * z * z) / (cfg.sigma_t * math.sqrt(2 * math.pi))
    out = cfg.S * pulse + cfg.B / cfg.t_r
    return float(out) if out.ndim == 0 else out


def cumulative_flux(cfg: SystemConfig, t):
    """Expected arrivals in [0, t]: F(t) = S*[Phi((t-tau)/sigma) - Phi(-tau/sigma)] + B*t/t_r.

    Accepts a scalar or array; every element must satisfy 0 <= t <= t_r.
    F(0) = 0 exactly and F is nondecreasing.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > cfg.t_r):
        raise DomainError("cumulative_flux requires 0 <= t <= t_r")
    out = cfg.S * (ndtr((t - cfg.tau) / cfg.sigma_t) - ndtr(-cfg.tau / cfg.sigma_t)) \
        + (cfg.B / cfg.t_r) * t
    return float(out) if out.ndim == 0 else out


def discretize_flux(cfg: SystemConfig) -> FluxVector:
    """Sample the rate at every bin center."""
    return FluxVector(values=np.atleast_1d(flux_at(cfg, cfg.bin_centers())))


def config_from_dict(doc: dict, units: Optional[str] = None) -> SystemConfig:
    """Build a SystemConfig from a JSON-style dict.

    Time fields default to seconds. A {"units": {"time": "ns"}} entry in the
    document, or the `units` argument (which wins), rescales t_r, sigma_t,
    t_d and tau on load.
    """
    doc = dict(doc)
    unit_name = units
    file_units = doc.pop("units", None)
    if unit_name is None and file_units is not None:
        if not isinstance(file_units, dict) or "time" not in file_units:
            raise ConfigError('"units" must be an object like {"time": "ns"}')
        unit_name = file_units["time"]
    scale = 1.0
    if unit_name is not None:
        if unit_name not in _TIME_UNITS:
            raise ConfigError(f"unknown time unit {unit_name!r}; expected one of {sorted(_TIME_UNITS)}")
        scale = _TIME_UNITS[unit_name]

    required = {"t_r", "N_r", "sigma_t", "t_d", "n_b", "tau", "S", "B"}
    missing = required - doc.keys()
    if missing:
        raise ConfigError(f"config missing fields: {sorted(missing)}")
    unknown = doc.keys() - required - {"N_iter"}
    if unknown:
        raise ConfigError(f"config has unknown fields: {sorted(unknown)}")

    kw = {}
    for name in required | ({"N_iter"} & doc.keys()):
        value = doc[name]
        if name in _TIME_FIELDS:
            value = float(value) * scale
        elif name in ("N_r", "n_b", "N_iter"):
            if int(value) != value:
                raise ConfigError(f"{name} must be an integer")
            value = int(value)
        else:
            value = float(value)
        kw[name] = value
    return SystemConfig(**kw)


def load_config(path, units: Optional[str] = None) -> SystemConfig:
    """Read a SystemConfig from a JSON file; see config_from_dict."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must contain a JSON object")
    return config_from_dict(doc, units=units)


def config_to_dict(cfg: SystemConfig) -> dict:
    """Plain-dict form of a config, times in seconds (for manifests and sidecars)."""
    return {
        "t_r": cfg.t_r, "N_r": cfg.N_r, "sigma_t": cfg.sigma_t, "t_d": cfg.t_d,
        "n_b": cfg.n_b, "tau": cfg.tau, "S": cfg.S, "B": cfg.B, "N_iter": cfg.N_iter,
    }


def dead_time_shift(cfg: SystemConfig) -> int:
    """Dead-time row shift d = ceil(x_d / delta) in bins, with x_d = t_d mod t_r.

    Exact integer ratios must not be bumped up by float noise, so the ceiling
    is taken with a small guard; the result is reduced mod n_b (a full-period
    shift is no shift).
    """
    x_d = math.fmod(cfg.t_d, cfg.t_r)
    ratio = x_d / cfg.delta
    d = math.ceil(ratio - 1e-9)
    return d % cfg.n_b

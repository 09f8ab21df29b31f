"""Histogram and cube synthesis from the analytic count law.

A pixel is simulated by drawing its total registered count from the
Gaussian count law (rounded, clamped at zero) and spreading that total
over bins with one multinomial draw from the stationary phase
distribution. The heavy per-configuration work (stationary pdf, effective
moments) is precomputed once into a lookup table over (S, B) at a
canonical delay of t_r/2; a pixel's actual delay is applied as a circular
shift of the stored pdf.

Randomness is organized as one counter-based stream per (pixel,
realization) pair, keyed by (seed, pixel*N_iter + realization), so cubes
are bit-reproducible no matter how pixels are scheduled across threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .config import SystemConfig
from .countlaw import CountLaw, count_law
from .errors import (ConfigError, DomainError, FingerprintError, RangeError,
                     SimError)
from .transition import TemporalPdf

DEFAULT_S_AXIS = (0.1, 20.0, 64)     # geometric (lo, hi, count)
DEFAULT_B_AXIS = (0.05, 5.0, 16)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _stream(seed: int, pixel: int, realization: int, n_iter: int) -> np.random.Generator:
    """Counter-based stream for one (pixel, realization) pair."""
    key = np.array([seed, pixel * n_iter + realization], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_counts(law: CountLaw, n: int, seed) -> np.ndarray:
    """n i.i.d. total counts: Gaussian draws rounded to integers, clamped at 0."""
    rng = _as_rng(seed)
    x = rng.normal(law.count_mean, np.sqrt(law.count_var), size=n)
    return np.maximum(np.rint(x), 0.0).astype(np.int64)


def _draw_total(rng: np.random.Generator, mean: float, sd: float) -> int:
    x = rng.normal(mean, sd)
    return int(max(np.rint(x), 0.0))


def _draw_histogram(rng: np.random.Generator, total: int, pvals: np.ndarray,
                    cdf: np.ndarray) -> np.ndarray:
    """One multinomial histogram draw.

    Small totals go through inverse-CDF categorical draws (O(total) work),
    large ones through numpy's multinomial (O(n_b)); both produce exact
    multinomial samples and the switch depends only on (total, n_b).
    """
    n_b = pvals.size
    if total == 0:
        return np.zeros(n_b, dtype=np.int64)
    if 4 * total < n_b:
        idx = np.searchsorted(cdf, rng.random(total), side="right")
        np.clip(idx, 0, n_b - 1, out=idx)
        return np.bincount(idx, minlength=n_b)
    return rng.multinomial(total, pvals)


def sample_histogram(total: int, pi: TemporalPdf, seed) -> np.ndarray:
    """Spread `total` counts over bins with one multinomial draw from pi."""
    if total < 0:
        raise DomainError("total must be nonnegative")
    rng = _as_rng(seed)
    pvals = np.asarray(pi.pi, dtype=float)
    pvals = pvals / pvals.sum()
    return _draw_histogram(rng, int(total), pvals, np.cumsum(pvals))


def simulate_pixel(cfg: SystemConfig, seed: int, law: Optional[CountLaw] = None,
                   pixel_index: int = 0) -> np.ndarray:
    """Alg.-1 single-pixel synthesis: one law, N_iter (count, histogram) draws.

    Passing a precomputed `law` (e.g. from a lookup table) skips the
    analytic solve; the draws use the same per-(pixel, realization) streams
    as cube synthesis, so a 1x1 cube and this function agree exactly.
    """
    if law is None:
        law = count_law(cfg)
    pvals = law.pi.pi / law.pi.pi.sum()
    cdf = np.cumsum(pvals)
    sd = float(np.sqrt(law.count_var))
    out = np.empty((cfg.N_iter, cfg.n_b), dtype=np.uint32)
    for r in range(cfg.N_iter):
        rng = _stream(seed, pixel_index, r, cfg.N_iter)
        total = _draw_total(rng, law.count_mean, sd)
        out[r] = _draw_histogram(rng, total, pvals, cdf)
    return out


def shift_pdf(pi: TemporalPdf, delta_bins: int) -> TemporalPdf:
    """Circular shift by an integer number of bins (mass preserved exactly)."""
    return TemporalPdf(pi=np.roll(pi.pi, int(delta_bins)))


@dataclass
class LookupTable:
    """Per-registration law entries on an (S, B) grid at canonical delay t_r/2."""

    S_axis: np.ndarray
    B_axis: np.ndarray
    mu: np.ndarray          # (|S|, |B|) seconds
    sigma2: np.ndarray      # (|S|, |B|) seconds^2
    pi: np.ndarray          # (|S|, |B|, n_b)
    t_r: float
    sigma_t: float
    t_d: float
    n_b: int

    @property
    def fingerprint(self) -> tuple:
        return (self.t_r, self.sigma_t, self.t_d, self.n_b)

    def check_fingerprint(self, cfg: SystemConfig) -> None:
        got = (cfg.t_r, cfg.sigma_t, cfg.t_d, cfg.n_b)
        if got != self.fingerprint:
            raise FingerprintError(
                f"lookup table was built for (t_r, sigma_t, t_d, n_b) = "
                f"{self.fingerprint}, queried with {got}")


def default_lut_axes() -> tuple[np.ndarray, np.ndarray]:
    lo, hi, n = DEFAULT_S_AXIS
    S = np.geomspace(lo, hi, n)
    lo, hi, n = DEFAULT_B_AXIS
    B = np.geomspace(lo, hi, n)
    return S, B


def _resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        env = os.environ.get("MARS_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise ConfigError(f"MARS_THREADS must be an integer, got {env!r}")
        else:
            threads = os.cpu_count() or 1
    if threads < 1:
        raise ConfigError("thread count must be >= 1")
    return threads


def build_lut(cfg_template: SystemConfig, S_axis: np.ndarray, B_axis: np.ndarray,
              threads: Optional[int] = None) -> LookupTable:
    """Solve the count law on every (S, B) grid point at delay t_r/2.

    Grid points are independent and run on a thread pool; results are
    assembled by index so the table does not depend on completion order.
    """
    S_axis = np.asarray(S_axis, dtype=float)
    B_axis = np.asarray(B_axis, dtype=float)
    for name, ax in (("S", S_axis), ("B", B_axis)):
        if ax.ndim != 1 or ax.size == 0:
            raise ConfigError(f"{name} axis must be a nonempty 1-D grid")
        if np.any(np.diff(ax) <= 0):
            raise ConfigError(f"{name} axis must be strictly increasing")
    if S_axis[0] + B_axis[0] <= 0:
        raise ConfigError("grid must have positive total flux everywhere")

    canon = cfg_template.with_(tau=cfg_template.t_r / 2)
    nS, nB = S_axis.size, B_axis.size
    mu = np.empty((nS, nB))
    sigma2 = np.empty((nS, nB))
    pi = np.empty((nS, nB, cfg_template.n_b))

    def solve(idx):
        i, j = idx
        try:
            law = count_law(canon.with_(S=float(S_axis[i]), B=float(B_axis[j])))
        except SimError as exc:
            err = SimError(
                f"lookup-table entry S={S_axis[i]:g}, B={B_axis[j]:g} failed: {exc}")
            err.code = exc.code
            raise err from exc
        return i, j, law

    with ThreadPoolExecutor(max_workers=_resolve_threads(threads)) as pool:
        for i, j, law in pool.map(solve, np.ndindex(nS, nB)):
            mu[i, j] = law.mu
            sigma2[i, j] = law.sigma2
            pi[i, j] = law.pi.pi

    return LookupTable(S_axis=S_axis, B_axis=B_axis, mu=mu, sigma2=sigma2,
                       pi=pi, t_r=cfg_template.t_r, sigma_t=cfg_template.sigma_t,
                       t_d=cfg_template.t_d, n_b=cfg_template.n_b)


def _nearest_index(axis: np.ndarray, value: float) -> int:
    if value <= 0:
        return 0  # log-space limit: zero flux maps to the smallest node
    return int(np.argmin(np.abs(np.log(axis) - np.log(value))))


def lookup(lut: LookupTable, S: float, B: float,
           mode: str = "nearest") -> tuple[TemporalPdf, float, float]:
    """Retrieve (pi, mu, sigma2) for a flux point.

    nearest: closest grid point by Euclidean distance in log(S), log(B).
    bilinear: rectangle interpolation of mu, sigma2, and pi (renormalized);
    queries outside the axis hull are an error in this mode.
    """
    if mode == "nearest":
        i = _nearest_index(lut.S_axis, S)
        j = _nearest_index(lut.B_axis, B)
        return TemporalPdf(pi=lut.pi[i, j].copy()), float(lut.mu[i, j]), float(lut.sigma2[i, j])
    if mode != "bilinear":
        raise ConfigError(f"unknown lookup mode {mode!r}")
    for name, ax, v in (("S", lut.S_axis, S), ("B", lut.B_axis, B)):
        if not (ax[0] <= v <= ax[-1]):
            raise RangeError(
                f"{name} = {v:g} outside lookup axis [{ax[0]:g}, {ax[-1]:g}]")
    i = min(int(np.searchsorted(lut.S_axis, S, side="right")) - 1, lut.S_axis.size - 2)
    j = min(int(np.searchsorted(lut.B_axis, B, side="right")) - 1, lut.B_axis.size - 2)
    i = max(i, 0)
    j = max(j, 0)
    fs = (S - lut.S_axis[i]) / (lut.S_axis[i + 1] - lut.S_axis[i])
    fb = (B - lut.B_axis[j]) / (lut.B_axis[j + 1] - lut.B_axis[j])

    def blend(arr):
        return ((1 - fs) * (1 - fb) * arr[i, j] + fs * (1 - fb) * arr[i + 1, j]
                + (1 - fs) * fb * arr[i, j + 1] + fs * fb * arr[i + 1, j + 1])

    p = blend(lut.pi)
    p = p / p.sum()
    return TemporalPdf(pi=p), float(blend(lut.mu)), float(blend(lut.sigma2))


def law_from_entry(cfg: SystemConfig, pi: TemporalPdf, mu: float,
                   sigma2: float) -> CountLaw:
    """Assemble a CountLaw from stored per-registration moments."""
    t = cfg.exposure
    return CountLaw(cfg=cfg, mu=mu, sigma2=sigma2, exposure=t,
                    count_mean=t / mu, count_var=t * sigma2 / mu ** 3,
                    pi=pi, diagnostics={"source": "lut"})


@dataclass
class Scene:
    """Per-pixel delays and signal levels plus one shared background level."""

    Z: np.ndarray      # (H, W) delay tau per pixel, seconds
    R: np.ndarray      # (H, W) per-pixel signal level S
    B: float

    def validate(self, cfg: SystemConfig) -> None:
        if self.Z.ndim != 2 or self.Z.shape != self.R.shape:
            raise ConfigError("Z and R must be 2-D arrays of equal shape")
        if np.any(self.Z < 0) or np.any(self.Z >= cfg.t_r):
            raise ConfigError("scene delays must lie in [0, t_r)")
        if np.any(self.R < 0):
            raise ConfigError("scene reflectivity must be nonnegative")
        if self.B < 0:
            raise ConfigError("scene background must be nonnegative")
        if self.B + float(self.R.min()) <= 0:
            raise ConfigError("every pixel needs positive total flux S + B")


def uniform_scene(H: int, W: int, tau: float, S: float, B: float) -> Scene:
    return Scene(Z=np.full((H, W), tau), R=np.full((H, W), S), B=B)


@dataclass
class HistogramCube:
    """One realization of binned counts for a pixel array."""

    counts: np.ndarray     # (H, W, n_b) uint32
    realization: int
    cfg: SystemConfig
    seed: int


def simulate_cube(scene: Scene, cfg: SystemConfig, lut: LookupTable, seed: int,
                  mode: str = "nearest",
                  threads: Optional[int] = None) -> Iterator[HistogramCube]:
    """Alg.-2 cube synthesis, streamed one realization at a time.

    Per pixel: lookup at (S, B), circular-shift the canonical pdf by the
    pixel delay, then per realization draw a total and a multinomial
    histogram from that pixel's private stream.
    """
    scene.validate(cfg)
    lut.check_fingerprint(cfg)
    H, W = scene.Z.shape
    n_b, N_iter = cfg.n_b, cfg.N_iter
    delta = cfg.delta
    half = lut.t_r / 2.0

    # Per-pixel sampling inputs, deduplicated: a uniform scene hits a single
    # cache entry instead of H*W copies of the same cdf.
    cache: dict = {}
    pix_entry = np.empty(H * W, dtype=object)
    for p in range(H * W):
        S_p = float(scene.R.flat[p])
        B_p = float(scene.B)
        k = int(np.rint((float(scene.Z.flat[p]) - half) / delta))
        if mode == "nearest":
            ck = (_nearest_index(lut.S_axis, S_p), _nearest_index(lut.B_axis, B_p), k)
        else:
            ck = (S_p, B_p, k)
        ent = cache.get(ck)
        if ent is None:
            pi0, mu, sigma2 = lookup(lut, S_p, B_p, mode=mode)
            pv = np.roll(pi0.pi, k)
            pv = pv / pv.sum()
            t = cfg.exposure
            ent = (t / mu, float(np.sqrt(t * sigma2 / mu ** 3)), pv, np.cumsum(pv))
            cache[ck] = ent
        pix_entry[p] = ent

    n_workers = _resolve_threads(threads)

    def fill(counts, r, pixels):
        flat = counts.reshape(H * W, n_b)
        for p in pixels:
            mean, sd, pv, cdf = pix_entry[p]
            rng = _stream(seed, p, r, N_iter)
            total = _draw_total(rng, mean, sd)
            flat[p] = _draw_histogram(rng, total, pv, cdf)

    chunks = np.array_split(np.arange(H * W), min(n_workers, H * W))
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        for r in range(N_iter):
            counts = np.empty((H, W, n_b), dtype=np.uint32)
            if n_workers == 1:
                fill(counts, r, np.arange(H * W))
            else:
                list(pool.map(lambda ch: fill(counts, r, ch), chunks))
            yield HistogramCube(counts=counts, realization=r, cfg=cfg, seed=seed)

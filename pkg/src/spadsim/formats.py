"""Binary artifact formats, scene files, run manifests, and output locking.

Two little-endian container formats:

MLUT (lookup table)
    "MLUT" | u32 version | u32 n_b | u32 |S| | u32 |B|
    f64 t_r | f64 sigma_t | f64 t_d
    f64 S_axis[|S|] | f64 B_axis[|B|]
    entries S-major: per (i, j): f64 mu, f64 sigma2, f64 pi[n_b]

MCUB (histogram cubes)
    "MCUB" | u32 version | u32 H | u32 W | u32 n_b | u32 N_iter
    u32 counts, realization-major then row-major
    plus a JSON sidecar (same path + ".json") carrying cfg, seed, engine
    identity, and wall time.

Scenes travel as .npz archives with arrays Z, R and scalar B.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .config import SystemConfig, config_to_dict
from .errors import FormatError, LockError
from .synth import HistogramCube, LookupTable, Scene

_LUT_MAGIC = b"MLUT"
_CUBE_MAGIC = b"MCUB"
_LUT_VERSION = 1
_CUBE_VERSION = 1

_LUT_HEADER = struct.Struct("<4s4I3d")
_CUBE_HEADER = struct.Struct("<4s5I")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_lut(lut: LookupTable, path) -> None:
    nS, nB = lut.S_axis.size, lut.B_axis.size
    with open(path, "wb") as f:
        f.write(_LUT_HEADER.pack(_LUT_MAGIC, _LUT_VERSION, lut.n_b, nS, nB,
                                 lut.t_r, lut.sigma_t, lut.t_d))
        f.write(np.ascontiguousarray(lut.S_axis, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(lut.B_axis, dtype="<f8").tobytes())
        for i in range(nS):
            for j in range(nB):
                f.write(struct.pack("<2d", lut.mu[i, j], lut.sigma2[i, j]))
                f.write(np.ascontiguousarray(lut.pi[i, j], dtype="<f8").tobytes())


def read_lut(path) -> LookupTable:
    with open(path, "rb") as f:
        head = f.read(_LUT_HEADER.size)
        if len(head) != _LUT_HEADER.size:
            raise FormatError(f"{path}: truncated lookup-table header")
        magic, version, n_b, nS, nB, t_r, sigma_t, t_d = _LUT_HEADER.unpack(head)
        if magic != _LUT_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {_LUT_MAGIC!r}")
        if version != _LUT_VERSION:
            raise FormatError(f"{path}: unsupported lookup-table version {version}")
        body = np.frombuffer(f.read(), dtype="<f8")
    expected = nS + nB + nS * nB * (2 + n_b)
    if body.size != expected:
        raise FormatError(
            f"{path}: payload holds {body.size} floats, expected {expected}")
    S_axis = body[:nS].copy()
    B_axis = body[nS:nS + nB].copy()
    entries = body[nS + nB:].reshape(nS, nB, 2 + n_b)
    return LookupTable(S_axis=S_axis, B_axis=B_axis,
                       mu=entries[:, :, 0].copy(), sigma2=entries[:, :, 1].copy(),
                       pi=entries[:, :, 2:].copy(),
                       t_r=t_r, sigma_t=sigma_t, t_d=t_d, n_b=int(n_b))


def write_cube_file(path, cfg: SystemConfig, seed: int,
                    cubes: Iterable[HistogramCube], engine: str,
                    H: int, W: int, wall_s: float | None = None) -> int:
    """Stream realizations into one MCUB file; returns realizations written.

    The sidecar carries everything needed to interpret the bytes, including
    the wall time, which is deliberately kept out of the binary payload so
    repeated runs with one seed produce identical data files.
    """
    n = 0
    with open(path, "wb") as f:
        f.write(_CUBE_HEADER.pack(_CUBE_MAGIC, _CUBE_VERSION, H, W,
                                  cfg.n_b, cfg.N_iter))
        for cube in cubes:
            if cube.counts.shape != (H, W, cfg.n_b):
                raise FormatError(
                    f"realization {cube.realization}: counts shape "
                    f"{cube.counts.shape} does not match header {(H, W, cfg.n_b)}")
            f.write(np.ascontiguousarray(cube.counts, dtype="<u4").tobytes())
            n += 1
    if n != cfg.N_iter:
        raise FormatError(f"wrote {n} realizations, header promised {cfg.N_iter}")
    sidecar = {
        "cfg": config_to_dict(cfg),
        "seed": int(seed),
        "engine": engine,
        "shape": [H, W, cfg.n_b, cfg.N_iter],
        "wall_s": wall_s,
    }
    with open(str(path) + ".json", "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")
    return n


def read_cube_file(path) -> tuple[dict, np.ndarray]:
    """Read an MCUB file into (header dict, (N_iter, H, W, n_b) array)."""
    with open(path, "rb") as f:
        head = f.read(_CUBE_HEADER.size)
        if len(head) != _CUBE_HEADER.size:
            raise FormatError(f"{path}: truncated cube header")
        magic, version, H, W, n_b, n_iter = _CUBE_HEADER.unpack(head)
        if magic != _CUBE_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {_CUBE_MAGIC!r}")
        if version != _CUBE_VERSION:
            raise FormatError(f"{path}: unsupported cube version {version}")
        body = np.frombuffer(f.read(), dtype="<u4")
    expected = n_iter * H * W * n_b
    if body.size != expected:
        raise FormatError(f"{path}: payload holds {body.size} counts, expected {expected}")
    header = {"H": H, "W": W, "n_b": n_b, "N_iter": n_iter}
    return header, body.reshape(n_iter, H, W, n_b).copy()


def write_scene(scene: Scene, path) -> None:
    np.savez(path, Z=scene.Z, R=scene.R, B=np.float64(scene.B))


def load_scene(path) -> Scene:
    try:
        with np.load(path) as data:
            missing = {"Z", "R", "B"} - set(data.files)
            if missing:
                raise FormatError(f"{path}: scene file missing arrays {sorted(missing)}")
            return Scene(Z=np.asarray(data["Z"], dtype=float),
                         R=np.asarray(data["R"], dtype=float),
                         B=float(data["B"]))
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: cannot read scene archive: {exc}") from exc


def dump_trace_csv(traces, path) -> None:
    """Registration timestamps as CSV rows (realization, k, T_k seconds)."""
    with open(path, "w") as f:
        f.write("realization,k,T_k\n")
        for r, trace in enumerate(traces):
            for k, t in enumerate(trace.timestamps):
                # repr of a Python float round-trips exactly; the numpy
                # scalar's repr would wrap it in np.float64(...).
                f.write(f"{r},{k},{float(t)!r}\n")


def append_manifest(out_dir, record: dict) -> None:
    """Append one JSON line to the run directory's manifest."""
    path = Path(out_dir) / "manifest.jsonl"
    with open(path, "a") as f:
        json.dump(record, f, sort_keys=True)
        f.write("\n")


def manifest_record(command: str, cfg: SystemConfig | None, seed, inputs: list,
                    outputs: list, wall_s: float) -> dict:
    return {
        "command": command,
        "config": config_to_dict(cfg) if cfg is not None else None,
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [{"path": str(p), "sha256": sha256_file(p)} for p in outputs],
        "wall_s": wall_s,
        "timestamp": time.time(),
    }


@contextmanager
def output_lock(out_dir) -> Iterator[None]:
    """Exclusive ownership of an output directory via a lockfile."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockError(
            f"output directory {out} is locked by another run "
            f"(remove {lock} if that run is dead)")
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        try:
            os.unlink(lock)
        except FileNotFoundError:
            pass

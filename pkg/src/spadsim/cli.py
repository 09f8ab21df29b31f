"""Command-line entry point.

Subcommands: simulate (single pixel or scene cube, any engine), build-lut,
validate (oracle-vs-methods metric sweep), bench (runtime scaling). Human
progress goes to stdout; failures are a single machine-readable JSON object
on stderr with a stable error code, because the tool's primary consumers
are batch pipelines.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .bench import benchmark, bench_to_csv, smoke_suite
from .config import SystemConfig, load_config
from .countlaw import count_law
from .errors import ConfigError, SimError
from .formats import (append_manifest, load_scene, manifest_record, output_lock,
                      read_lut, write_cube_file, write_lut)
from .metrics import DESK_GRID, run_validation
from .oracle import poisson_simulate, sequential_simulate
from .report import render_bench_figure, render_validation_figure
from .synth import (HistogramCube, build_lut, default_lut_axes, law_from_entry,
                    lookup, shift_pdf, simulate_cube, simulate_pixel)


def _parse_grid(spec: str):
    """Parse 'S:lo:hi:n,B:lo:hi:n' into geometric axes."""
    axes = {}
    for part in spec.split(","):
        fields = part.split(":")
        if len(fields) != 4 or fields[0] not in ("S", "B"):
            raise ConfigError(
                f"bad grid component {part!r}; expected S:lo:hi:n or B:lo:hi:n")
        lo, hi, n = float(fields[1]), float(fields[2]), int(fields[3])
        if lo <= 0 or hi <= lo or n < 1:
            raise ConfigError(f"bad grid range in {part!r}")
        axes[fields[0]] = np.geomspace(lo, hi, n)
    if set(axes) != {"S", "B"}:
        raise ConfigError("grid must specify both S and B axes")
    return axes["S"], axes["B"]


def _rows_as_cubes(rows: np.ndarray, cfg: SystemConfig, seed: int):
    for r in range(rows.shape[0]):
        yield HistogramCube(counts=rows[r].reshape(1, 1, cfg.n_b),
                            realization=r, cfg=cfg, seed=seed)


def _engine_scene_cubes(engine: str, scene, cfg: SystemConfig, seed: int):
    """Per-pixel reference engines over a scene, realization-major."""
    H, W = scene.Z.shape
    children = np.random.SeedSequence(seed).spawn(H * W)
    rows = np.empty((cfg.N_iter, H * W, cfg.n_b), dtype=np.uint32)
    for p in range(H * W):
        pcfg = cfg.with_(S=float(scene.R.flat[p]), B=float(scene.B),
                         tau=float(scene.Z.flat[p]))
        if engine == "sequential":
            hist, _ = sequential_simulate(pcfg, children[p], with_traces=False)
        else:
            hist = poisson_simulate(pcfg, children[p])
        rows[:, p, :] = hist
    for r in range(cfg.N_iter):
        yield HistogramCube(counts=rows[r].reshape(H, W, cfg.n_b),
                            realization=r, cfg=cfg, seed=seed)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, units=args.units)
    t0 = time.perf_counter()
    with output_lock(args.out):
        out_path = f"{args.out}/cube_{args.engine}_seed{args.seed}.mcub"
        inputs = [args.config]
        if args.scene:
            scene = load_scene(args.scene)
            scene.validate(cfg)
            inputs.append(args.scene)
            H, W = scene.Z.shape
            if args.engine == "mars":
                if not args.lut:
                    raise ConfigError(
                        "scene simulation with the mars engine needs --lut")
                lut = read_lut(args.lut)
                inputs.append(args.lut)
                cubes = simulate_cube(scene, cfg, lut, args.seed,
                                      threads=args.threads)
            else:
                cubes = _engine_scene_cubes(args.engine, scene, cfg, args.seed)
        else:
            H = W = 1
            if args.engine == "mars":
                law = None
                if args.lut:
                    lut = read_lut(args.lut)
                    inputs.append(args.lut)
                    lut.check_fingerprint(cfg)
                    pi0, mu, s2 = lookup(lut, cfg.S, cfg.B)
                    k = int(np.rint((cfg.tau - cfg.t_r / 2) / cfg.delta))
                    law = law_from_entry(cfg, shift_pdf(pi0, k), mu, s2)
                rows = simulate_pixel(cfg, args.seed, law=law)
            elif args.engine == "sequential":
                rows, _ = sequential_simulate(cfg, args.seed, with_traces=False)
            else:
                rows = poisson_simulate(cfg, args.seed)
            cubes = _rows_as_cubes(rows, cfg, args.seed)
        n = write_cube_file(out_path, cfg, args.seed, cubes, args.engine, H, W,
                            wall_s=time.perf_counter() - t0)
        append_manifest(args.out, manifest_record(
            "simulate", cfg, args.seed, inputs,
            [out_path, out_path + ".json"], time.perf_counter() - t0))
    print(f"wrote {n} realizations of {H}x{W}x{cfg.n_b} to {out_path}")
    return 0


def cmd_build_lut(args) -> int:
    cfg = load_config(args.config, units=args.units)
    S_axis, B_axis = _parse_grid(args.grid) if args.grid else default_lut_axes()
    t0 = time.perf_counter()
    with output_lock(args.out):
        lut = build_lut(cfg, S_axis, B_axis, threads=args.threads)
        out_path = f"{args.out}/table.mlut"
        write_lut(lut, out_path)
        append_manifest(args.out, manifest_record(
            "build-lut", cfg, None, [args.config], [out_path],
            time.perf_counter() - t0))
    print(f"built {S_axis.size}x{B_axis.size} lookup table at n_b={cfg.n_b}: {out_path}")
    print(f"  mu range      [{lut.mu.min():.3e}, {lut.mu.max():.3e}] s")
    print(f"  sigma2 range  [{lut.sigma2.min():.3e}, {lut.sigma2.max():.3e}] s^2")
    print(f"  pi mass error {np.abs(lut.pi.sum(axis=2) - 1).max():.2e}")
    return 0


def cmd_validate(args) -> int:
    cells = DESK_GRID if args.cells in (None, "all") else DESK_GRID[:int(args.cells)]
    t0 = time.perf_counter()
    with output_lock(args.out):
        report = run_validation(cells=cells, seed=args.seed,
                                n_real=args.realizations)
        csv_path = f"{args.out}/metrics.csv"
        json_path = f"{args.out}/metrics.json"
        fig_path = f"{args.out}/metrics.png"
        report.to_csv(csv_path)
        report.to_json(json_path)
        render_validation_figure(report, fig_path)
        append_manifest(args.out, manifest_record(
            "validate", None, args.seed, [],
            [csv_path, json_path, fig_path], time.perf_counter() - t0))
    for m in report.methods():
        g = report.grid_average(m)
        print(f"{m:10s} W1 {g['wasserstein']:12.3f}   KL {g['kl']:10.3f}   "
              f"|mean| {g['mean_diff']:12.3f}   |var| {g['var_diff']:12.3f}")
    print(f"report written to {csv_path} (+json, +png)")
    return 0


def cmd_bench(args) -> int:
    if args.suite:
        with open(args.suite) as f:
            doc = json.load(f)
        suite = doc["cells"] if isinstance(doc, dict) else doc
        base_doc = doc.get("base") if isinstance(doc, dict) else None
    else:
        suite, base_doc = smoke_suite(), None
    if base_doc:
        from .config import config_from_dict
        base = config_from_dict(base_doc)
    else:
        base = SystemConfig(t_r=100e-9, N_r=1000, sigma_t=1e-9, t_d=75e-9,
                            n_b=512, tau=40e-9, S=8.2, B=1.2, N_iter=100)
    t0 = time.perf_counter()
    with output_lock(args.out):
        curves = benchmark(base, suite, seed=args.seed)
        csv_path = f"{args.out}/bench.csv"
        fig_path = f"{args.out}/bench.png"
        bench_to_csv(curves, csv_path)
        render_bench_figure(curves, fig_path)
        append_manifest(args.out, manifest_record(
            "bench", base, args.seed, [args.suite] if args.suite else [],
            [csv_path, fig_path], time.perf_counter() - t0))
    for c in curves:
        print(f"{c.simulator:10s} {c.axis:13s} slope {c.slope:6.2f}  {c.growth_class}")
    print(f"timings written to {csv_path} (+png)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="spadsim",
        description="Analytic single-photon-lidar histogram simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, need_config=True):
        if need_config:
            p.add_argument("--config", required=True, help="JSON config file")
            p.add_argument("--units", choices=("s", "ms", "us", "ns", "ps"),
                           help="override time units of the config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: MARS_THREADS or cpu count)")

    p = sub.add_parser("simulate", help="generate histograms or cubes")
    common(p)
    p.add_argument("--scene", help="scene .npz (Z, R, B); omit for single pixel")
    p.add_argument("--lut", help="lookup table .mlut (mars engine over scenes)")
    p.add_argument("--engine", choices=("mars", "sequential", "poisson"),
                   default="mars")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("build-lut", help="precompute the (S, B) lookup table")
    common(p)
    p.add_argument("--grid", help="axes as S:lo:hi:n,B:lo:hi:n (geometric)")
    p.set_defaults(func=cmd_build_lut)

    p = sub.add_parser("validate", help="metric sweep against the oracle")
    common(p, need_config=False)
    p.add_argument("--cells", default="all",
                   help="'all' or a leading cell count of the desk grid")
    p.add_argument("--realizations", type=int, default=2000,
                   help="oracle realizations per cell")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="runtime scaling benchmark")
    common(p, need_config=False)
    p.add_argument("--suite", help="JSON suite file (default: 3-cell smoke suite)")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SimError as exc:
        json.dump({"error": exc.code, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    except OSError as exc:
        json.dump({"error": "io", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command line interface: ``foldy-imaging <subcommand> ...``.

Subcommands
-----------
synthesize   write the scene, response matrix, illuminations and data
image        run one imaging experiment (smv, mmv or music)
coherence    sweep normalized inner products for a planar or spherical array
bounds       print the mutual coherence and the theory constants
compare      compare smv, mmv-random, mmv-optimal and music on one realization
config       print the resolved configuration

``FOLDY_IMAGING_THREADS`` sets the default number of worker processes used
for multi-seed sweeps (``compare --seeds``).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .coherence import planar_coherence_curve, spherical_coherence_curve, write_curve_csv
from .csvio import fmt, write_complex_matrix, write_rows
from .experiment import acquire, build_geometry, build_window, compare_methods, run_experiment, summary_lines
from .forward import write_response_csv, write_scene_csv
from .geometry import build_sensing_matrix, exact_recovery_coefficient, mutual_coherence
from .illumination import write_illuminations_csv
from .sparse import theory_bounds

THREADS_ENV = "FOLDY_IMAGING_THREADS"


def _load_config(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config) if getattr(args, "config", None) else cfgmod.ExperimentConfig()
    overrides = {}
    for attr, key in (("method", "method"), ("illum", "illumination"), ("noise", "noise_pct"),
                      ("seed", "seed"), ("out", "output_dir")):
        val = getattr(args, attr, None)
        if val is not None:
            overrides[key] = val
    cfg = replace(cfg, **overrides)
    if getattr(args, "nu", None) is not None:
        cfg = replace(cfg, music_nu=args.nu)
    cfgmod.validate(cfg)
    return cfg


def _seed_range(text: str) -> range:
    if ":" in text:
        lo, hi = text.split(":", 1)
        return range(int(lo), int(hi))
    return range(int(text), int(text) + 1)


def cmd_config(args) -> int:
    sys.stdout.write(cfgmod.dumps(_load_config(args)))
    return 0


def cmd_synthesize(args) -> int:
    cfg = _load_config(args)
    prob = acquire(cfg)
    out = Path(cfg.output_dir or ".")
    write_scene_csv(prob.scene, out / "scene.csv")
    write_response_csv(prob.response, out / "response.csv")
    if prob.measured is not prob.response:
        write_response_csv(prob.measured, out / "response_measured.csv")
    write_illuminations_csv(prob.data.illuminations, out / "illuminations.csv")
    write_complex_matrix(out / "data.csv", prob.data.B)
    (out / "config.ini").write_text(cfgmod.dumps(cfg))
    print(f"wrote synthetic data for {prob.scene.M} scatterers to {out}")
    return 0


def cmd_image(args) -> int:
    cfg = _load_config(args)
    if cfg.output_dir is None:
        cfg = replace(cfg, output_dir="out")
    report = run_experiment(cfg)
    print("\n".join(summary_lines(report)))
    return 0


def cmd_coherence(args) -> int:
    seps = np.arange(args.sep_min, args.sep_max + 0.5 * args.sep_step, args.sep_step)
    if args.array == "spherical":
        curve = spherical_coherence_curve(args.L, args.h, seps)
    else:
        curve = planar_coherence_curve(args.a, args.L, args.h, seps, args.orientation)
    out = Path(args.out)
    write_curve_csv(curve, out / f"coherence_{curve.geometry}.csv")
    for s, m, p in zip(curve.separations, curve.measured, curve.predicted):
        print(f"{s:8.3f} {m:.6f} {p:.6f}")
    return 0


def cmd_bounds(args) -> int:
    if args.eps is not None:
        eps, M = args.eps, args.M
    else:
        cfg = _load_config(args)
        S = build_sensing_matrix(build_geometry(cfg), build_window(cfg))
        eps, M = mutual_coherence(S), len(cfg.scene.indices)
        support = np.asarray(cfg.scene.indices) - 1
        try:
            print(f"erc = {fmt(exact_recovery_coefficient(S, support))}")
        except np.linalg.LinAlgError as exc:
            print(f"erc = unavailable ({exc})")
    b = theory_bounds(min(eps, 1 - 1e-15), M, args.noise_energy)
    print(f"mutual_coherence = {fmt(eps)}")
    print(f"M = {M}")
    print(f"M_eps = {fmt(M * eps)}")
    print(f"status = {b.status}")
    print(f"delta_min = {fmt(b.delta_min)}")
    print(f"err_bound = {fmt(b.err_bound)}")
    return 0


def _compare_one(args_tuple):
    cfg, methods = args_tuple
    return cfg.seed, compare_methods(cfg, methods, write=False)


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    seeds = _seed_range(args.seeds) if args.seeds else range(cfg.seed, cfg.seed + 1)
    jobs = [(replace(cfg, seed=s), methods) for s in seeds]
    workers = args.workers or int(os.environ.get(THREADS_ENV, "1"))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_compare_one, jobs))
    else:
        results = [_compare_one(j) for j in jobs]
    out = Path(cfg.output_dir or "out")
    rows = [(seed, r.method, r.illumination, float(r.precision), float(r.recall), float(r.rho_rel_error))
            for seed, res in results for r in res]
    write_rows(out / "compare.csv", ["seed", "method", "illumination", "precision", "recall", "rho_rel_error"], rows)
    (out / "timing.txt").write_text("".join(f"{seed} {r.method} = {r.runtime:.3f} s\n"
                                            for seed, res in results for r in res))
    print(f"{'method':<12} {'illum':<11} {'precision':>9} {'recall':>7} {'rho err':>9} {'time s':>7}")
    for m in methods:
        sel = [r for _, res in results for r in res if r.method == m]
        prec = np.mean([r.precision for r in sel])
        rec = np.mean([r.recall for r in sel])
        errs = [r.rho_rel_error for r in sel if not math.isnan(r.rho_rel_error)]
        err = np.mean(errs) if errs else math.nan
        print(f"{m:<12} {sel[0].illumination:<11} {prec:9.3f} {rec:7.3f} {err:9.2e} {np.mean([r.runtime for r in sel]):7.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foldy-imaging", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_out=True):
        p.add_argument("--config", help="experiment configuration file (INI format)")
        p.add_argument("--illum", help="point:s | random:nu | optimal:nu (transducers are 1-based)")
        p.add_argument("--noise", type=float, help="noise level in percent")
        p.add_argument("--seed", type=int, help="master seed")
        if with_out:
            p.add_argument("--out", help="output directory")

    p = sub.add_parser("config", help="print the resolved configuration")
    common(p, with_out=False)
    p.add_argument("--method", choices=cfgmod.METHODS)
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("synthesize", help="write scene, response matrix and data")
    common(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("image", help="run one imaging experiment")
    common(p)
    p.add_argument("--method", choices=cfgmod.METHODS)
    p.add_argument("--nu", type=int, help="number of singular vectors for MUSIC")
    p.set_defaults(func=cmd_image)

    p = sub.add_parser("coherence", help="coherence sweep for planar or spherical arrays")
    p.add_argument("--array", choices=("planar", "spherical"), required=True)
    p.add_argument("--L", type=float, default=100.0, help="array distance or radius")
    p.add_argument("--h", type=float, default=0.5, help="transducer spacing")
    p.add_argument("--a", type=float, default=100.0, help="planar aperture diameter")
    p.add_argument("--orientation", choices=("parallel", "perpendicular"), default="parallel")
    p.add_argument("--sep-min", type=float, default=5.0)
    p.add_argument("--sep-max", type=float, default=10.0)
    p.add_argument("--sep-step", type=float, default=0.5)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_coherence)

    p = sub.add_parser("bounds", help="mutual coherence and theory constants")
    p.add_argument("--config")
    p.add_argument("--eps", type=float, help="use this coherence instead of the configured geometry")
    p.add_argument("--M", type=int, default=5)
    p.add_argument("--noise-energy", type=float, default=0.0)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("compare", help="compare imaging methods")
    common(p)
    p.add_argument("--methods", default=",".join(cfgmod.COMPARE_METHODS))
    p.add_argument("--seeds", help="seed or half-open range lo:hi")
    p.add_argument("--workers", type=int, help=f"worker processes (default ${THREADS_ENV} or 1)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end imaging experiments: synthesize, solve, recover, report."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import config as cfgmod
from .config import ConfigError, ExperimentConfig, parse_illumination
from .csvio import fmt, write_rows
from .forward import (
    ResponseMatrix,
    ScattererScene,
    multiple_scattering_amount,
    response_matrix,
    write_scene_csv,
)
from .geometry import ArrayGeometry, ImageWindow, SensingMatrix, build_sensing_matrix, mutual_coherence
from .illumination import (
    DataMatrix,
    build_data_matrix,
    measure_response_matrix,
    optimal_illuminations,
    point_illumination,
    random_illuminations,
)
from .music import MusicImage, music_image, peak_indices
from .reflectivity import ReflectivityEstimate, recover_reflectivities, write_estimate_csv
from .sparse import EffectiveSourceSolution, SolverSettings, TheoryBounds, extract_support, gelma_solve, theory_bounds

NOISY_SUPPORT_FRACTION = 0.1
NOISELESS_SUPPORT_FRACTION = 1e-3


# ------------------------------------------------------------------ images

@dataclass(frozen=True)
class ImageGrid:
    """Real image over the window, stored as ``(n_y, n_x)`` (rows are range)."""

    values: np.ndarray
    x: np.ndarray
    y: np.ndarray
    markers: tuple[tuple[int, int], ...] = ()

    @classmethod
    def from_vector(cls, values, window: ImageWindow, marker_indices: Sequence[int] = ()) -> "ImageGrid":
        vals = np.asarray(values, dtype=float).reshape(window.n_y, window.n_x)
        xs, ys = window.offsets()
        markers = tuple(window.pixel(int(k)) for k in marker_indices)
        return cls(vals, xs, ys, markers)

    def to_csv(self, path) -> None:
        header = ["y\\x"] + [fmt(x) for x in self.x]
        rows = ([float(y)] + [float(v) for v in row] for y, row in zip(self.y, self.values))
        write_rows(path, header, rows)

    def to_pgm(self, path) -> None:
        """8-bit binary PGM, values mapped linearly from [0, max] to [0, 255]."""
        vals = np.nan_to_num(self.values, nan=0.0, posinf=0.0, neginf=0.0)
        vmax = vals.max(initial=0.0)
        scaled = np.zeros(vals.shape) if vmax <= 0 else np.clip(vals / vmax, 0.0, 1.0) * 255.0
        data = np.rint(scaled).astype(np.uint8)
        header = f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(header + data.tobytes())
        tmp.replace(path)

    def write_markers(self, path) -> None:
        write_rows(path, ["ix", "iy"], self.markers)


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


# ------------------------------------------------------------------ setup

def build_geometry(cfg: ExperimentConfig) -> ArrayGeometry:
    g = cfg.geometry
    if g.kind == "linear":
        return ArrayGeometry.linear(g.n_sensors, g.pitch)
    if g.kind == "planar":
        return ArrayGeometry.planar(g.aperture, g.pitch, shape=g.shape)
    return ArrayGeometry.spherical(g.radius, g.pitch)


def build_window(cfg: ExperimentConfig) -> ImageWindow:
    w = cfg.window
    return ImageWindow(tuple(w.center), (w.width, w.height), w.pitch)


def _seeds(cfg: ExperimentConfig) -> dict[str, np.random.SeedSequence]:
    children = np.random.SeedSequence(cfg.seed).spawn(4)
    phase = children[0] if cfg.scene.phase_seed is None else np.random.SeedSequence(cfg.scene.phase_seed)
    return {"phase": phase, "illum": children[1], "data": children[2], "response": children[3]}


def build_scene(cfg: ExperimentConfig, window: ImageWindow | None = None) -> ScattererScene:
    window = window or build_window(cfg)
    s = cfg.scene
    idx = np.asarray(s.indices, dtype=int) - 1
    return ScattererScene.with_random_phases(window, idx, s.amplitudes, rng=np.random.default_rng(_seeds(cfg)["phase"]),
                                             scale=s.amplitude_scale)


@dataclass
class Problem:
    """Everything the solvers need for one realization."""

    config: ExperimentConfig
    geometry: ArrayGeometry
    window: ImageWindow
    sensing: SensingMatrix
    scene: ScattererScene
    response: ResponseMatrix
    measured: ResponseMatrix
    data: DataMatrix


def acquire(cfg: ExperimentConfig) -> Problem:
    """Build the scene, its response matrix and the data for the configured illumination."""
    cfgmod.validate(cfg)
    seeds = _seeds(cfg)
    geom = build_geometry(cfg)
    window = build_window(cfg)
    S = build_sensing_matrix(geom, window, normalize=True)
    scene = build_scene(cfg, window)
    P = response_matrix(scene, geom)
    N = geom.n_sensors
    if cfg.noise_pct > 0:
        measured = measure_response_matrix(P, cfg.noise_pct, np.random.default_rng(seeds["response"]))
    else:
        measured = P
    kind, count = parse_illumination(cfg.illumination)
    if kind == "point":
        if not 1 <= count <= N:
            raise ConfigError([f"experiment.illumination: transducer {count} outside [1, {N}]"])
        illums = [point_illumination(count - 1, N)]
    elif kind == "random":
        if count > N:
            raise ConfigError([f"experiment.illumination: cannot draw {count} of {N} transducers"])
        illums = random_illuminations(count, N, np.random.default_rng(seeds["illum"]))
    else:
        if count > N:
            raise ConfigError([f"experiment.illumination: only {N} singular vectors exist"])
        illums = optimal_illuminations(measured, count)
    if kind == "optimal":
        F = np.column_stack([il.f for il in illums])
        B = measured.P @ F
        data = DataMatrix(B, tuple(illums), cfg.noise_pct, float(np.linalg.norm(B - P.P @ F)))
    else:
        data = build_data_matrix(P, illums, cfg.noise_pct, np.random.default_rng(seeds["data"]))
    return Problem(cfg, geom, window, S, scene, P, measured, data)


# ------------------------------------------------------------------ report

@dataclass
class ExperimentReport:
    config: ExperimentConfig
    problem: Problem
    support: np.ndarray
    solution: EffectiveSourceSolution | None
    estimate: ReflectivityEstimate | None
    music: MusicImage | None
    bounds: TheoryBounds
    metrics: dict
    diagnostics: dict
    images: dict[str, ImageGrid] = field(default_factory=dict)

    @property
    def true_support(self) -> np.ndarray:
        return self.problem.scene.support


def support_metrics(found: Sequence[int], truth: Sequence[int]) -> tuple[float, float]:
    found, truth = set(int(i) for i in found), set(int(i) for i in truth)
    tp = len(found & truth)
    precision = tp / len(found) if found else 0.0
    recall = tp / len(truth) if truth else 1.0
    return precision, recall


def reflectivity_errors(est: ReflectivityEstimate, scene: ScattererScene) -> tuple[float, float]:
    """Relative errors on correctly located scatterers: (vector norm, worst entry)."""
    truth = scene.rho0
    mask = np.isin(est.support, scene.support) & ~est.screened
    if not mask.any():
        return math.nan, math.nan
    idx = est.support[mask]
    diff = est.rho[mask] - truth[idx]
    return (float(np.linalg.norm(diff) / np.linalg.norm(truth[idx])),
            float(np.max(np.abs(diff) / np.abs(truth[idx]))))


def solver_settings(cfg: ExperimentConfig, data: DataMatrix) -> SolverSettings:
    v = cfg.solver
    delta = data.noise_energy if (cfg.noise_pct > 0 and v.use_delta) else None
    return SolverSettings(beta=v.beta, tau=v.tau, tau_factor=v.tau_factor, max_iters=v.max_iters,
                          tolerance=v.tolerance, delta=delta)


def run_experiment(cfg: ExperimentConfig, write: bool = True, coherence: float | None = None) -> ExperimentReport:
    """Run one realization and, if ``cfg.output_dir`` is set and ``write`` is true, emit files.

    ``coherence`` may be passed to skip recomputing the mutual coherence of
    the sensing matrix, which is the same for every realization.
    """
    prob = acquire(cfg)
    S, scene = prob.sensing, prob.scene
    eps = mutual_coherence(S) if coherence is None else coherence
    bounds = theory_bounds(min(eps, 1 - 1e-15), scene.M, prob.data.noise_energy)
    diagnostics: dict = {
        "mutual_coherence": eps,
        "multiple_scattering_pct": multiple_scattering_amount(scene, prob.geometry),
        "noise_energy": prob.data.noise_energy,
        "theory_conditions": bounds.status,
        "delta_min": bounds.delta_min,
        "err_bound": bounds.err_bound,
    }
    sol = est = mus = None
    if cfg.method == "music":
        nu = cfg.music_nu or parse_illumination(cfg.illumination)[1]
        mus = music_image(prob.measured, prob.window, prob.geometry, nu, sensing=S)
        support = np.sort(peak_indices(mus.values, prob.window, scene.M))
        diagnostics["music_nu"] = nu
    else:
        settings = solver_settings(cfg, prob.data)
        sol = gelma_solve(S, prob.data, settings)
        frac = cfg.solver.support_fraction
        if frac is None:
            frac = NOISY_SUPPORT_FRACTION if cfg.noise_pct > 0 else NOISELESS_SUPPORT_FRACTION
        support = extract_support(sol, bounds, fraction=frac)
        thr = bounds.detectability if not bounds.violated else frac * float(sol.row_norms.max(initial=0.0))
        sol = replace(sol, support=support, threshold=float(thr))
        est = recover_reflectivities(sol, S, prob.data.illuminations)
        diagnostics.update(residual=sol.residual, iterations=sol.iterations, stop_reason=sol.stop_reason,
                           beta=sol.beta, tau=sol.tau, support_threshold=sol.threshold)
        if cfg.music_nu:
            mus = music_image(prob.measured, prob.window, prob.geometry, cfg.music_nu, sensing=S)
    precision, recall = support_metrics(support, scene.support)
    metrics = {"precision": precision, "recall": recall, "exact_support": bool(
        np.array_equal(np.sort(support), scene.support))}
    if est is not None:
        metrics["rho_rel_error"], metrics["rho_max_rel_error"] = reflectivity_errors(est, scene)
    else:
        metrics["rho_rel_error"] = metrics["rho_max_rel_error"] = math.nan

    images = {"truth": ImageGrid.from_vector(np.abs(scene.rho0) / cfg.scene.amplitude_scale, prob.window, scene.support)}
    if sol is not None:
        images["rownorm"] = ImageGrid.from_vector(sol.row_norms, prob.window, scene.support)
        images["rho"] = ImageGrid.from_vector(np.nan_to_num(np.abs(est.as_vector(scene.window.K)))
                                              / cfg.scene.amplitude_scale, prob.window, scene.support)
    if mus is not None:
        images["music"] = ImageGrid.from_vector(mus.values, prob.window, scene.support)
    report = ExperimentReport(cfg, prob, np.asarray(support, dtype=int), sol, est, mus, bounds, metrics, diagnostics, images)
    if write and cfg.output_dir:
        write_report(report, cfg.output_dir)
    return report


def summary_lines(report: ExperimentReport) -> list[str]:
    cfg = report.config
    lines = [f"method = {cfg.method}", f"illumination = {cfg.illumination}", f"noise_pct = {fmt(cfg.noise_pct)}",
             f"seed = {cfg.seed}",
             "true_support = " + " ".join(str(int(k) + 1) for k in report.true_support),
             "recovered_support = " + " ".join(str(int(k) + 1) for k in report.support)]
    for key, val in report.metrics.items():
        lines.append(f"{key} = {val if isinstance(val, bool) else fmt(val)}")
    for key, val in report.diagnostics.items():
        lines.append(f"{key} = {fmt(val) if isinstance(val, (float, np.floating)) else val}")
    return lines


def write_report(report: ExperimentReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prob = report.problem
    (out / "config.ini").write_text(cfgmod.dumps(report.config))
    (out / "summary.txt").write_text("\n".join(summary_lines(report)) + "\n")
    write_scene_csv(prob.scene, out / "scene.csv")
    s = prob.measured.singular_values
    write_rows(out / "singular_values.csv", ["index", "sigma", "sigma_rel"],
               ((j + 1, float(v), float(v / s[0]) if s[0] else 0.0) for j, v in enumerate(s)))
    if report.estimate is not None:
        write_estimate_csv(report.estimate, prob.window, out / "recovered.csv", report.config.scene.amplitude_scale)
    else:
        write_rows(out / "recovered.csv", ["grid_index"], ((int(k) + 1,) for k in report.support))
    for name, img in report.images.items():
        img.to_csv(out / f"image_{name}.csv")
        img.to_pgm(out / f"image_{name}.pgm")
    report.images["truth"].write_markers(out / "markers.csv")


# ------------------------------------------------------------------ comparison

@dataclass(frozen=True)
class MethodResult:
    method: str
    illumination: str
    precision: float
    recall: float
    rho_rel_error: float
    runtime: float


def method_config(cfg: ExperimentConfig, method: str) -> ExperimentConfig:
    """Configuration variant used by :func:`compare_methods` for ``method``."""
    c = cfg.compare
    N = build_geometry(cfg).n_sensors
    if method == "smv":
        kind, count = parse_illumination(cfg.illumination)
        illum = cfg.illumination if kind == "point" else f"point:{(N + 1) // 2}"
        return replace(cfg, method="smv", illumination=illum, music_nu=None)
    if method == "mmv-random":
        return replace(cfg, method="mmv", illumination=f"random:{c.random_nu}", music_nu=None)
    if method == "mmv-optimal":
        return replace(cfg, method="mmv", illumination=f"optimal:{c.optimal_nu}", music_nu=None)
    if method == "music":
        return replace(cfg, method="music", illumination=f"optimal:{c.music_nu}", music_nu=c.music_nu)
    raise ConfigError([f"compare.methods: unknown method {method!r}"])


def compare_methods(cfg: ExperimentConfig, methods: Sequence[str] = cfgmod.COMPARE_METHODS,
                    write: bool = True) -> list[MethodResult]:
    """Run several methods on the same scene and noise seed and tabulate their accuracy."""
    cfgmod.validate(cfg)
    variants = [method_config(cfg, m) for m in methods]
    eps = mutual_coherence(build_sensing_matrix(build_geometry(cfg), build_window(cfg)))
    results = []
    for m, vc in zip(methods, variants):
        t0 = time.perf_counter()
        rep = run_experiment(replace(vc, output_dir=None), write=False, coherence=eps)
        results.append(MethodResult(m, vc.illumination, rep.metrics["precision"], rep.metrics["recall"],
                                    rep.metrics["rho_rel_error"], time.perf_counter() - t0))
    if write and cfg.output_dir:
        write_comparison(results, cfg.output_dir)
    return results


def write_comparison(results: Sequence[MethodResult], out_dir) -> None:
    """``compare.csv`` is deterministic; wall-clock times go to ``timing.txt``."""
    out = Path(out_dir)
    write_rows(out / "compare.csv", ["method", "illumination", "precision", "recall", "rho_rel_error"],
               ((r.method, r.illumination, float(r.precision), float(r.recall), float(r.rho_rel_error)) for r in results))
    (out / "timing.txt").write_text("".join(f"{r.method} = {r.runtime:.3f} s\n" for r in results))

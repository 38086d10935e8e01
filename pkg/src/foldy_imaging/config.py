"""Experiment configuration: dataclasses plus an INI-style text format.

Scatterer indices and transducer numbers are 1-based in the text format and
in illumination specs such as ``point:50``; the Python API is 0-based
throughout.
"""

from __future__ import annotations

import configparser
import io
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

# Non-canonical default scatterer pixels, as (range row, cross-range column),
# 0-based on the 41 x 41 default window. The positions are arbitrary but
# spread over distinct cross-range columns.
DEFAULT_PIXELS = ((20, 10), (17, 15), (22, 20), (19, 24), (24, 29))
DEFAULT_AMPLITUDES = (2.96, 2.76, 2.05, 1.54, 1.35)
DEFAULT_AMPLITUDE_SCALE = 4.0 * math.pi

METHODS = ("smv", "mmv", "music")
COMPARE_METHODS = ("smv", "mmv-random", "mmv-optimal", "music")
_ILLUM_RE = re.compile(r"^(point|random|optimal):(\d+)$")


class ConfigError(ValueError):
    """Invalid configuration; the message lists every offending field."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


def parse_illumination(spec: str) -> tuple[str, int]:
    m = _ILLUM_RE.match(spec.strip())
    if not m:
        raise ValueError(f"illumination must look like point:s, random:nu or optimal:nu, got {spec!r}")
    return m.group(1), int(m.group(2))


@dataclass(frozen=True)
class GeometryConfig:
    kind: str = "linear"
    n_sensors: int = 100
    pitch: float = 1.0
    aperture: float = 100.0
    shape: str = "disc"
    radius: float = 100.0


@dataclass(frozen=True)
class WindowConfig:
    center: tuple[float, float, float] = (0.0, 100.0, 0.0)
    width: float = 41.0
    height: float = 41.0
    pitch: float = 1.0


@dataclass(frozen=True)
class SceneConfig:
    indices: tuple[int, ...] = tuple(r * 41 + c + 1 for r, c in DEFAULT_PIXELS)
    amplitudes: tuple[float, ...] = DEFAULT_AMPLITUDES
    amplitude_scale: float = DEFAULT_AMPLITUDE_SCALE
    phase_seed: int | None = None


@dataclass(frozen=True)
class SolverConfig:
    beta: float | None = None
    tau: float | None = None
    tau_factor: float = 0.1
    max_iters: int = 50_000
    tolerance: float = 1e-8
    support_fraction: float | None = None
    use_delta: bool = True


@dataclass(frozen=True)
class CompareConfig:
    random_nu: int = 5
    optimal_nu: int = 3
    music_nu: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "smv"
    illumination: str = "point:50"
    noise_pct: float = 0.0
    seed: int = 0
    output_dir: str | None = None
    music_nu: int | None = None
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    @property
    def K(self) -> int:
        w = self.window
        return int(round(w.width / w.pitch)) * int(round(w.height / w.pitch))


def validate(cfg: ExperimentConfig) -> None:
    """Raise :class:`ConfigError` listing every invalid field."""
    problems: list[str] = []
    if cfg.method not in METHODS:
        problems.append(f"experiment.method: must be one of {', '.join(METHODS)}, got {cfg.method!r}")
    try:
        kind, count = parse_illumination(cfg.illumination)
        if count < 1:
            problems.append("experiment.illumination: count or transducer number must be at least 1")
        elif cfg.method == "smv" and kind != "point" and count != 1:
            problems.append("experiment.illumination: smv needs a single illumination (point:s or nu = 1)")
    except ValueError as exc:
        problems.append(f"experiment.illumination: {exc}")
    if not cfg.noise_pct >= 0:
        problems.append("experiment.noise_pct: must be non-negative")
    if cfg.music_nu is not None and cfg.music_nu < 1:
        problems.append("music.nu: must be at least 1")
    g = cfg.geometry
    if g.kind not in ("linear", "planar", "spherical"):
        problems.append(f"geometry.kind: unknown array kind {g.kind!r}")
    if g.kind == "linear" and g.n_sensors < 1:
        problems.append("geometry.n_sensors: must be at least 1")
    if g.pitch <= 0:
        problems.append("geometry.pitch: must be positive")
    w = cfg.window
    if w.pitch <= 0:
        problems.append("window.pitch: must be positive")
    for name in ("width", "height"):
        ext = getattr(w, name)
        if w.pitch > 0 and (ext <= 0 or abs(ext / w.pitch - round(ext / w.pitch)) > 1e-9):
            problems.append(f"window.{name}: must be a positive multiple of the pitch")
    s = cfg.scene
    if len(s.indices) == 0:
        problems.append("scene.indices: scene must contain at least one scatterer")
    if len(s.indices) != len(s.amplitudes):
        problems.append("scene.amplitudes: need one amplitude per scatterer index")
    if len(set(s.indices)) != len(s.indices):
        problems.append("scene.indices: indices must be distinct")
    if not problems or all(not p.startswith("window.") for p in problems):
        K = cfg.K
        bad = [i for i in s.indices if not 1 <= i <= K]
        if bad:
            problems.append(f"scene.indices: {bad} outside [1, {K}]")
    if s.amplitude_scale <= 0:
        problems.append("scene.amplitude_scale: must be positive")
    v = cfg.solver
    if v.beta is not None and v.beta <= 0:
        problems.append("solver.beta: must be positive")
    if v.tau is not None and v.tau < 0:
        problems.append("solver.tau: must be non-negative")
    if v.max_iters < 1:
        problems.append("solver.max_iters: must be at least 1")
    if v.tolerance <= 0:
        problems.append("solver.tolerance: must be positive")
    if v.support_fraction is not None and not 0 < v.support_fraction < 1:
        problems.append("solver.support_fraction: must lie in (0, 1)")
    if problems:
        raise ConfigError(problems)


# ---------------------------------------------------------------- text format

_SECTIONS = {"geometry": GeometryConfig, "window": WindowConfig, "scene": SceneConfig,
             "solver": SolverConfig, "compare": CompareConfig}
_TOP = ("method", "illumination", "noise_pct", "seed", "output_dir")


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def _parse_value(raw: str, default):
    """Convert ``raw`` to the type suggested by the dataclass default."""
    raw = raw.strip()
    optional = raw.lower() in ("auto", "none", "")
    if isinstance(default, bool):
        if raw.lower() in ("true", "yes", "1", "on"):
            return True
        if raw.lower() in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, tuple):
        parts = [p for p in re.split(r"[,\s]+", raw) if p]
        if default and isinstance(default[0], int) and not isinstance(default[0], bool):
            return tuple(int(p) for p in parts)
        return tuple(float(p) for p in parts)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if optional:
        return None
    return raw


_OPTIONAL_TYPES = {("solver", "beta"): float, ("solver", "tau"): float,
                   ("solver", "support_fraction"): float, ("scene", "phase_seed"): int}


def loads(text: str) -> ExperimentConfig:
    """Parse the INI text format and validate the result."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_string(text)
    problems: list[str] = []
    base = ExperimentConfig()
    top = {}
    if parser.has_section("experiment"):
        for key, raw in parser.items("experiment"):
            if key not in _TOP:
                problems.append(f"experiment.{key}: unknown key")
                continue
            try:
                if key == "output_dir":
                    top[key] = None if raw.strip().lower() in ("", "none", "auto") else raw.strip()
                else:
                    top[key] = _parse_value(raw, getattr(base, key))
            except ValueError as exc:
                problems.append(f"experiment.{key}: {exc}")
    if parser.has_section("music"):
        for key, raw in parser.items("music"):
            if key != "nu":
                problems.append(f"music.{key}: unknown key")
                continue
            try:
                top["music_nu"] = None if raw.strip().lower() in ("", "none", "auto") else int(raw)
            except ValueError as exc:
                problems.append(f"music.nu: {exc}")
    sections = {}
    for name, cls in _SECTIONS.items():
        default = getattr(base, name)
        values = {}
        if parser.has_section(name):
            known = {f.name for f in fields(cls)}
            for key, raw in parser.items(name):
                if key not in known:
                    problems.append(f"{name}.{key}: unknown key")
                    continue
                try:
                    if (name, key) in _OPTIONAL_TYPES:
                        r = raw.strip().lower()
                        values[key] = None if r in ("", "auto", "none") else _OPTIONAL_TYPES[(name, key)](raw)
                    else:
                        values[key] = _parse_value(raw, getattr(default, key))
                except ValueError as exc:
                    problems.append(f"{name}.{key}: {exc}")
        sections[name] = replace(default, **values)
    for name in parser.sections():
        if name not in _SECTIONS and name not in ("experiment", "music"):
            problems.append(f"{name}: unknown section")
    if problems:
        raise ConfigError(problems)
    cfg = replace(base, **top, **sections)
    validate(cfg)
    return cfg


def dumps(cfg: ExperimentConfig) -> str:
    """Serialize to the INI text format (inverse of :func:`loads`)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["experiment"] = {k: _fmt(getattr(cfg, k)) if getattr(cfg, k) is not None else "none" for k in _TOP}
    parser["music"] = {"nu": _fmt(cfg.music_nu)}
    for name in _SECTIONS:
        sec = getattr(cfg, name)
        parser[name] = {f.name: _fmt(getattr(sec, f.name)) for f in fields(sec)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def load(path) -> ExperimentConfig:
    return loads(Path(path).read_text())


def dump(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps(cfg))

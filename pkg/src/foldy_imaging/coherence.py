"""Numerical checks of the coherence asymptotics for spherical and planar arrays.

For two image points ``y`` and ``y'`` the normalized inner product of their
steering vectors controls how well a sparse solver can tell them apart. The
functions here sweep the separation ``|y - y'|`` and compare the discrete-array
values with the continuum predictions:

* spherical array of radius ``L``: ``|sinc(k d)|``;
* planar array, points offset along the array normal (range): the two-sided
  bounds ``(2/c - 2) / (k d log sec phi0)`` and ``2 / (k d c log sec phi0)``
  with ``c = cos phi0 = 2 L / sqrt(a^2 + 4 L^2)``;
* planar array, points offset parallel to the array (cross-range): an
  envelope ``C / sqrt(k d)`` whose constant is fitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .csvio import write_rows
from .geometry import WAVENUMBER, ArrayGeometry, green_function

SCALE_MIN = 3.0
SCALE_RATIO = 10.0
REGIME_FACTOR = 4.0


@dataclass(frozen=True)
class CoherenceCurve:
    """Measured and predicted normalized inner products over a separation sweep."""

    separations: np.ndarray
    measured: np.ndarray
    predicted: np.ndarray
    lower_bound: np.ndarray
    upper_bound: np.ndarray
    geometry: str
    info: dict = field(default_factory=dict)

    def within_bounds(self) -> np.ndarray:
        return (self.measured >= self.lower_bound) & (self.measured <= self.upper_bound)


def normalized_inner_product(geom: ArrayGeometry, y1, y2) -> float:
    a = green_function(geom.sensors, np.reshape(y1, (1, 3)))[:, 0]
    b = green_function(geom.sensors, np.reshape(y2, (1, 3)))[:, 0]
    val = abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(min(val, 1.0))


def _check_scales(separations: np.ndarray, L: float) -> None:
    if separations.ndim != 1 or separations.size == 0:
        raise ValueError("separations must be a non-empty 1-D sequence")
    if np.any(np.diff(separations) <= 0):
        raise ValueError("separations must be strictly increasing")
    if separations[0] < SCALE_MIN:
        raise ValueError(
            f"scale separation violated: separation {separations[0]:g} is not large compared "
            f"with the wavelength (need >= {SCALE_MIN:g})"
        )
    # the pair sits at +-sep/2 about the sweep centre; each point must stay well inside L
    if separations[-1] / 2 > L / SCALE_RATIO:
        raise ValueError(
            f"scale separation violated: points at +-{separations[-1] / 2:g} from the centre are not "
            f"small compared with the array distance L={L:g} (need <= L/{SCALE_RATIO:g})"
        )


def _sweep(geom: ArrayGeometry, center: np.ndarray, direction: np.ndarray, separations: np.ndarray) -> np.ndarray:
    u = direction / np.linalg.norm(direction)
    return np.array([
        normalized_inner_product(geom, center - d / 2 * u, center + d / 2 * u) for d in separations
    ])


def spherical_coherence_curve(L: float, h: float, separations, direction=(1.0, 0.0, 0.0)) -> CoherenceCurve:
    """Coherence of point pairs on a diameter through the centre of a spherical array.

    Parameters
    ----------
    L : float
        Array radius.
    h : float
        Target spacing between neighbouring transducers.
    separations : sequence of float
        Strictly increasing distances between the two points, each in ``[3, L/10]``.
    """
    seps = np.asarray(separations, dtype=float)
    _check_scales(seps, L)
    geom = ArrayGeometry.spherical(L, h)
    measured = _sweep(geom, np.zeros(3), np.asarray(direction, dtype=float), seps)
    predicted = np.abs(np.sinc(WAVENUMBER * seps / math.pi))
    nan = np.full_like(seps, np.nan)
    return CoherenceCurve(seps, measured, predicted, nan, nan.copy(), "spherical",
                          {"L": L, "h": h, "n_sensors": geom.n_sensors})


def cos_phi0(a: float, L: float) -> float:
    return 2.0 * L / math.sqrt(a * a + 4.0 * L * L)


def planar_norm_prediction(a: float, L: float, h: float) -> float:
    """Continuum estimate of the squared steering-vector norm for a disc of diameter ``a``."""
    return math.log(1.0 + a * a / (4.0 * L * L)) / (16.0 * math.pi * h * h)


def spherical_norm_prediction(h: float) -> float:
    return 1.0 / (4.0 * math.pi * h * h)


def planar_bounds(separations, a: float, L: float) -> tuple[np.ndarray, np.ndarray]:
    """Two-sided bounds on the normalized inner product for range-aligned pairs."""
    c = cos_phi0(a, L)
    log_sec = -math.log(c)
    ke = WAVENUMBER * np.asarray(separations, dtype=float)
    return (2.0 / c - 2.0) / (ke * log_sec), 2.0 / (ke * c * log_sec)


def planar_coherence_curve(a: float, L: float, h: float, separations, orientation: str,
                           shape: str = "disc") -> CoherenceCurve:
    """Coherence of point pairs at distance ``L`` in front of a planar array.

    The array is a square lattice of pitch ``h`` cut to a disc (or square) of
    size ``a`` in the plane ``z = 0``; the pair is centred at ``(0, 0, L)``.
    ``orientation="parallel"`` offsets the points along the array normal,
    ``"perpendicular"`` offsets them along the array plane.

    Besides the scale checks of the spherical case, the sweep must satisfy
    ``1 / (k d) <= cos(phi0) / 4`` for every separation ``d``.
    """
    seps = np.asarray(separations, dtype=float)
    _check_scales(seps, L)
    c = cos_phi0(a, L)
    worst = 1.0 / (WAVENUMBER * seps[0])
    if worst * REGIME_FACTOR > c:
        raise ValueError(
            f"scale separation violated: 1/(k d) = {worst:.3g} is not small compared with "
            f"cos(phi0) = {c:.3g}; enlarge the separations or shrink the aperture"
        )
    geom = ArrayGeometry.planar(a, h, shape=shape)
    center = np.array([0.0, 0.0, L])
    info = {"a": a, "L": L, "h": h, "cos_phi0": c, "n_sensors": geom.n_sensors, "orientation": orientation}
    if orientation == "parallel":
        measured = _sweep(geom, center, np.array([0.0, 0.0, 1.0]), seps)
        lo, hi = planar_bounds(seps, a, L)
        predicted = np.sqrt(lo * hi)
        return CoherenceCurve(seps, measured, predicted, lo, hi, "planar-parallel", info)
    if orientation == "perpendicular":
        measured = _sweep(geom, center, np.array([1.0, 0.0, 0.0]), seps)
        ke = WAVENUMBER * seps
        pos = measured > 0
        C = math.exp(np.mean(np.log(measured[pos]) + 0.5 * np.log(ke[pos]))) if pos.any() else 0.0
        info["fitted_constant"] = C
        nan = np.full_like(seps, np.nan)
        return CoherenceCurve(seps, measured, C / np.sqrt(ke), nan, nan.copy(), "planar-perpendicular", info)
    raise ValueError(f"orientation must be 'parallel' or 'perpendicular', got {orientation!r}")


def envelope(separations, values, window: float = 0.5) -> np.ndarray:
    """Running maximum of ``values`` over ``|d - d'| <= window``."""
    seps = np.asarray(separations, dtype=float)
    vals = np.asarray(values, dtype=float)
    lo = np.searchsorted(seps, seps - window, side="left")
    hi = np.searchsorted(seps, seps + window, side="right")
    return np.array([vals[i:j].max() for i, j in zip(lo, hi)])


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def envelope_slope(curve: CoherenceCurve, centers, window: float = 0.5) -> float:
    """Log-log slope of the running-maximum envelope sampled at ``centers``.

    The curve should be sampled densely enough that every window around a
    centre contains several points.
    """
    env = envelope(curve.separations, curve.measured, window)
    at = np.interp(np.asarray(centers, float), curve.separations, env)
    return loglog_slope(centers, at)


def write_curve_csv(curve: CoherenceCurve, path) -> None:
    rows = zip(curve.separations, curve.measured, curve.predicted, curve.lower_bound, curve.upper_bound)
    write_rows(path, ["sep", "measured", "predicted", "lower_bound", "upper_bound"],
               ([float(v) for v in r] for r in rows))

"""Sensor arrays, image windows and the sensing matrix.

All lengths are measured in wavelengths, so the wavelength is fixed to one and
the wavenumber is ``2*pi``. The free-space kernel is the three-dimensional
outgoing Green's function ``exp(i k r) / (4 pi r)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

WAVELENGTH = 1.0
WAVENUMBER = 2.0 * math.pi / WAVELENGTH
COINCIDENCE_TOL = 1e-9
_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


class SingularKernelError(ValueError):
    """A field point coincides with a source point (singular kernel)."""


class DependentSupportError(np.linalg.LinAlgError):
    """The sensing-matrix columns on a support are linearly dependent."""


class ArrayKind(enum.Enum):
    LINEAR = "linear"
    PLANAR = "planar"
    SPHERICAL = "spherical"


def _frozen_points(points, name: str) -> np.ndarray:
    arr = np.array(points, dtype=float, copy=True)
    if arr.ndim == 1 and arr.size == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    arr.setflags(write=False)
    return arr


def green_function(sources: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Free-space Green's function between two point sets.

    Parameters
    ----------
    sources : (n, 3) array_like
    targets : (m, 3) array_like

    Returns
    -------
    ndarray, shape (n, m)
        ``exp(i k |x - y|) / (4 pi |x - y|)`` for every pair.

    Raises
    ------
    SingularKernelError
        If any pair is closer than :data:`COINCIDENCE_TOL`.
    """
    src = np.atleast_2d(np.asarray(sources, dtype=float))
    tgt = np.atleast_2d(np.asarray(targets, dtype=float))
    diff = src[:, None, :] - tgt[None, :, :]
    dist = np.sqrt(np.einsum("nmk,nmk->nm", diff, diff))
    if dist.size and dist.min() < COINCIDENCE_TOL:
        raise SingularKernelError(
            "singular kernel: a field point coincides with a source point "
            f"(distance {dist.min():.3e})"
        )
    return np.exp(1j * WAVENUMBER * dist) / (4.0 * math.pi * dist)


def pairwise_green(points: np.ndarray) -> np.ndarray:
    """Green's function between all distinct pairs of ``points``, zero on the diagonal."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.einsum("nmk,nmk->nm", diff, diff))
    np.fill_diagonal(dist, 1.0)
    if n > 1 and dist.min() < COINCIDENCE_TOL:
        raise SingularKernelError("singular kernel: two scatterer positions coincide")
    out = np.exp(1j * WAVENUMBER * dist) / (4.0 * math.pi * dist)
    np.fill_diagonal(out, 0.0)
    return out


@dataclass(frozen=True)
class ArrayGeometry:
    """Positions of the array transducers.

    Use the :meth:`linear`, :meth:`planar` and :meth:`spherical` constructors
    rather than building instances by hand. Spherical arrays remember their
    ``center`` and ``radius`` so that the on-sphere invariant can be checked.
    """

    sensors: np.ndarray
    kind: ArrayKind
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float | None = None

    def __post_init__(self):
        sensors = _frozen_points(self.sensors, "sensors")
        if sensors.shape[0] < 1:
            raise ValueError("an array needs at least one sensor")
        object.__setattr__(self, "sensors", sensors)
        object.__setattr__(self, "kind", ArrayKind(self.kind))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.kind is ArrayKind.SPHERICAL:
            if self.radius is None or self.radius <= 0:
                raise ValueError("spherical arrays need a positive radius")
            r = np.linalg.norm(sensors - np.asarray(self.center), axis=1)
            if np.max(np.abs(r - self.radius)) >= 1e-9 * self.radius:
                raise ValueError("sensors do not lie on the stated sphere")
        elif sensors.shape[0] > 3:
            centred = sensors - sensors.mean(axis=0)
            sv = np.linalg.svd(centred, compute_uv=False)
            if sv[-1] > 1e-9 * max(sv[0], 1.0):
                raise ValueError(f"{self.kind.value} array sensors are not coplanar")

    @property
    def n_sensors(self) -> int:
        return self.sensors.shape[0]

    @property
    def wavelength(self) -> float:
        return WAVELENGTH

    @property
    def wavenumber(self) -> float:
        return WAVENUMBER

    @classmethod
    def linear(cls, n: int, pitch: float = 1.0, center=(0.0, 0.0, 0.0), axis=(1.0, 0.0, 0.0)):
        """``n`` transducers spaced by ``pitch`` along ``axis``, centred on ``center``."""
        if n < 1:
            raise ValueError("an array needs at least one sensor")
        u = np.asarray(axis, dtype=float)
        u = u / np.linalg.norm(u)
        offsets = (np.arange(n) - (n - 1) / 2.0) * pitch
        pts = np.asarray(center, dtype=float) + offsets[:, None] * u
        return cls(pts, ArrayKind.LINEAR, center=tuple(center))

    @classmethod
    def planar(cls, aperture: float, pitch: float, shape: str = "disc", center=(0.0, 0.0, 0.0)):
        """Square lattice in the plane ``z = center[2]``.

        ``shape="square"`` keeps the full ``aperture x aperture`` lattice,
        ``shape="disc"`` keeps lattice points within a disc of diameter ``aperture``.
        """
        n = int(math.floor(aperture / pitch + 1e-9)) + 1
        offs = (np.arange(n) - (n - 1) / 2.0) * pitch
        gx, gy = np.meshgrid(offs, offs, indexing="xy")
        gx, gy = gx.ravel(), gy.ravel()
        if shape == "disc":
            keep = gx**2 + gy**2 <= (aperture / 2.0) ** 2 * (1 + 1e-12)
            gx, gy = gx[keep], gy[keep]
        elif shape != "square":
            raise ValueError(f"unknown planar aperture shape {shape!r}")
        c = np.asarray(center, dtype=float)
        pts = np.column_stack([gx + c[0], gy + c[1], np.full(gx.shape, c[2])])
        return cls(pts, ArrayKind.PLANAR, center=tuple(center))

    @classmethod
    def spherical(cls, radius: float, spacing: float, center=(0.0, 0.0, 0.0)):
        """Fibonacci-sphere sampling with roughly ``spacing`` between neighbours."""
        n = max(1, int(round(4.0 * math.pi * radius**2 / spacing**2)))
        i = np.arange(n)
        z = 1.0 - (2.0 * i + 1.0) / n
        rxy = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        phi = i * _GOLDEN_ANGLE
        unit = np.column_stack([rxy * np.cos(phi), rxy * np.sin(phi), z])
        unit /= np.linalg.norm(unit, axis=1, keepdims=True)
        pts = np.asarray(center, dtype=float) + radius * unit
        return cls(pts, ArrayKind.SPHERICAL, center=tuple(center), radius=float(radius))


@dataclass(frozen=True)
class ImageWindow:
    """Uniform grid of candidate scatterer positions.

    The window spans ``extents = (width, height)`` along the unit vectors
    ``axes[0]`` (cross-range) and ``axes[1]`` (range). It holds
    ``n_x = width / pitch`` by ``n_y = height / pitch`` points, centred on
    ``center``. Points are stored row-major: grid index ``k = iy * n_x + ix``.
    """

    center: tuple[float, float, float]
    extents: tuple[float, float]
    pitch: float = 1.0
    axes: tuple[tuple[float, float, float], tuple[float, float, float]] = (
        (1.0, 0.0, 0.0),
        (0.0, 1.0, 0.0),
    )
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.pitch <= 0:
            raise ValueError("pixel pitch must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        object.__setattr__(self, "axes", tuple(tuple(float(c) for c in a) for a in self.axes))
        for name, ext in zip(("width", "height"), self.extents):
            ratio = ext / self.pitch
            if ext <= 0 or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ValueError(f"window {name} {ext} is not a whole number of pixels of pitch {self.pitch}")
        u, v = (np.asarray(a) / np.linalg.norm(a) for a in self.axes)
        xs, ys = self.offsets()
        pts = np.asarray(self.center) + xs[None, :, None] * u + ys[:, None, None] * v
        pts = pts.reshape(-1, 3)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n_x(self) -> int:
        return int(round(self.extents[0] / self.pitch))

    @property
    def n_y(self) -> int:
        return int(round(self.extents[1] / self.pitch))

    @property
    def K(self) -> int:
        return self.n_x * self.n_y

    def offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Cross-range and range pixel offsets from the window centre."""
        xs = (np.arange(self.n_x) - (self.n_x - 1) / 2.0) * self.pitch
        ys = (np.arange(self.n_y) - (self.n_y - 1) / 2.0) * self.pitch
        return xs, ys

    def index(self, ix: int, iy: int) -> int:
        if not (0 <= ix < self.n_x and 0 <= iy < self.n_y):
            raise IndexError(f"pixel ({ix}, {iy}) outside a {self.n_x} x {self.n_y} window")
        return iy * self.n_x + ix

    def pixel(self, k: int) -> tuple[int, int]:
        """Inverse of :meth:`index`: returns ``(ix, iy)``."""
        if not 0 <= k < self.K:
            raise IndexError(f"grid index {k} outside [0, {self.K})")
        return k % self.n_x, k // self.n_x


@dataclass(frozen=True)
class SensingMatrix:
    """Steering vectors of every image-window point, one per column.

    ``column_norms`` always holds the norms of the physical (unnormalized)
    columns, so ``G * column_norms`` recovers the physical matrix when
    ``normalized`` is set.
    """

    G: np.ndarray
    column_norms: np.ndarray
    normalized: bool
    points: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_array(cls, G, normalize: bool = True, points=None) -> "SensingMatrix":
        """Wrap an arbitrary matrix, optionally normalizing its columns."""
        G = np.array(G, dtype=complex, copy=True)
        if G.ndim == 1:
            G = G[:, None]
        norms = np.linalg.norm(G, axis=0)
        if normalize:
            if np.any(norms == 0):
                raise ValueError("cannot normalize a zero column")
            G = G / norms
        G.setflags(write=False)
        norms.setflags(write=False)
        if points is not None:
            points = _frozen_points(points, "points")
        return cls(G, norms, bool(normalize), points)

    @property
    def shape(self) -> tuple[int, int]:
        return self.G.shape

    def physical(self) -> np.ndarray:
        """The unnormalized matrix of Green's function columns."""
        return self.G * self.column_norms if self.normalized else self.G

    def normalized_matrix(self) -> np.ndarray:
        return self.G if self.normalized else self.G / self.column_norms

    def check_normalized(self, tol: float = 1e-10) -> None:
        dev = np.max(np.abs(np.linalg.norm(self.G, axis=0) - 1.0))
        if not self.normalized or dev > tol:
            raise ValueError(f"sensing matrix columns are not unit-norm (max deviation {dev:.2e})")


def green_vector(geom: ArrayGeometry, y) -> np.ndarray:
    """Steering vector of the array at the point ``y``.

    Entry ``r`` is ``exp(i k |x_r - y|) / (4 pi |x_r - y|)``.
    """
    y = np.asarray(y, dtype=float).reshape(1, 3)
    return green_function(geom.sensors, y)[:, 0]


def build_sensing_matrix(geom: ArrayGeometry, iw: ImageWindow, normalize: bool = True) -> SensingMatrix:
    """Assemble the ``N x K`` matrix of steering vectors for every window point."""
    G = green_function(geom.sensors, iw.points)
    return SensingMatrix.from_array(G, normalize=normalize, points=iw.points)


def mutual_coherence(S: SensingMatrix, block: int = 512) -> float:
    """Largest normalized inner product between two distinct columns.

    The Gram matrix is formed in column blocks of size ``block`` to bound memory.
    """
    Gn = S.normalized_matrix()
    K = Gn.shape[1]
    if K < 2:
        raise ValueError("mutual coherence needs at least two columns")
    best = 0.0
    for start in range(0, K, block):
        stop = min(start + block, K)
        gram = np.abs(Gn[:, start:stop].conj().T @ Gn)
        rows = np.arange(stop - start)
        gram[rows, rows + start] = 0.0
        best = max(best, float(gram.max()))
    return min(best, 1.0)


def exact_recovery_coefficient(S: SensingMatrix, support: Sequence[int], method: str = "pinv") -> float:
    """Exact Recovery Coefficient of a support set.

    ``1 - max_{j not in support} || pinv(G_support) g_j ||_1``.

    Parameters
    ----------
    S : SensingMatrix
        Must be column-normalized.
    support : sequence of int
        Column indices of the candidate support.
    method : {"pinv", "lstsq"}
        ``"pinv"`` forms ``(G*G)^-1 G*`` explicitly, ``"lstsq"`` solves least
        squares problems. Both should agree to rounding error.
    """
    S.check_normalized()
    idx = np.unique(np.asarray(support, dtype=int))
    if idx.size == 0:
        raise ValueError("support must not be empty")
    G = S.G
    G_sup = G[:, idx]
    sv = np.linalg.svd(G_sup, compute_uv=False)
    if idx.size > G.shape[0] or sv[-1] <= 1e-12 * sv[0]:
        raise DependentSupportError("dependent support columns")
    rest = np.setdiff1d(np.arange(G.shape[1]), idx)
    if rest.size == 0:
        return 1.0
    if method == "pinv":
        coeffs = np.linalg.solve(G_sup.conj().T @ G_sup, G_sup.conj().T) @ G[:, rest]
    elif method == "lstsq":
        coeffs = np.linalg.lstsq(G_sup, G[:, rest], rcond=None)[0]
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(1.0 - np.abs(coeffs).sum(axis=0).max())

"""Foldy-Lax forward model: exciting fields, response matrix and array data.

Point scatterers sit on image-window grid points. Each scatterer is excited by
the incident field plus the fields scattered by all the others (no
self-interaction), which yields a small dense linear system on the scene
support.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .csvio import write_complex_matrix, write_rows
from .geometry import ArrayGeometry, ImageWindow, green_function, pairwise_green

CONDITION_LIMIT = 1e12


class ResonanceError(np.linalg.LinAlgError):
    """The Foldy-Lax matrix is numerically singular (resonant configuration)."""

    def __init__(self, condition: float):
        super().__init__(
            f"Foldy-Lax matrix is singular or resonant: condition number {condition:.3e} "
            f"exceeds {CONDITION_LIMIT:.0e}"
        )
        self.condition = condition


def as_vector(f) -> np.ndarray:
    """Accept an :class:`~foldy_imaging.illumination.Illumination` or a plain vector."""
    return np.asarray(getattr(f, "f", f), dtype=complex).ravel()


@dataclass(frozen=True)
class ScattererScene:
    """True reflectivity vector on an image window.

    ``rho0[k]`` is the reflectivity at grid point ``k``. The support is
    derived from the nonzero entries and is always sorted.
    """

    rho0: np.ndarray
    window: ImageWindow

    def __post_init__(self):
        rho = np.array(self.rho0, dtype=complex, copy=True).ravel()
        if rho.shape[0] != self.window.K:
            raise ValueError(f"reflectivity vector has length {rho.shape[0]}, window has K={self.window.K}")
        if not np.all(np.isfinite(rho)):
            raise ValueError("reflectivities must be finite")
        rho.setflags(write=False)
        object.__setattr__(self, "rho0", rho)

    @classmethod
    def from_support(cls, window: ImageWindow, indices, values) -> "ScattererScene":
        indices = np.asarray(indices, dtype=int).ravel()
        values = np.asarray(values, dtype=complex).ravel()
        if indices.shape != values.shape:
            raise ValueError("indices and values must have the same length")
        if np.unique(indices).size != indices.size:
            raise ValueError("scatterer indices must be distinct")
        if indices.size and (indices.min() < 0 or indices.max() >= window.K):
            raise ValueError(f"scatterer index outside [0, {window.K})")
        rho = np.zeros(window.K, dtype=complex)
        rho[indices] = values
        return cls(rho, window)

    @classmethod
    def with_random_phases(cls, window: ImageWindow, indices, amplitudes, rng=None, scale: float = 1.0):
        """Scatterers of magnitude ``scale * amplitudes`` with phases uniform on [0, 2 pi)."""
        rng = np.random.default_rng(rng)
        amps = np.asarray(amplitudes, dtype=float).ravel()
        phases = rng.uniform(0.0, 2.0 * np.pi, size=amps.size)
        return cls.from_support(window, indices, scale * amps * np.exp(1j * phases))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.rho0)

    @property
    def M(self) -> int:
        return int(np.count_nonzero(self.rho0))

    @property
    def reflectivities(self) -> np.ndarray:
        return self.rho0[self.support]

    @property
    def positions(self) -> np.ndarray:
        return self.window.points[self.support]

    def scaled(self, factor: complex) -> "ScattererScene":
        return ScattererScene(self.rho0 * factor, self.window)


class MatrixForm(enum.Enum):
    SUPPORT = "support"
    EXTENDED = "extended"


@dataclass(frozen=True)
class FoldyLaxMatrix:
    Z: np.ndarray
    form: MatrixForm
    indices: np.ndarray

    @property
    def condition(self) -> float:
        return float(np.linalg.cond(self.Z))


def foldy_lax_matrix(scene: ScattererScene, form: MatrixForm | str = MatrixForm.SUPPORT) -> FoldyLaxMatrix:
    """Foldy-Lax matrix with unit diagonal and ``-rho_j G(y_i, y_j)`` off the diagonal.

    The support form is ``M x M``; the extended form covers all ``K`` grid
    points and is dense, so only build it for small windows.
    """
    form = MatrixForm(form)
    if form is MatrixForm.SUPPORT:
        idx = scene.support
    else:
        idx = np.arange(scene.window.K)
    pts = scene.window.points[idx]
    Z = np.eye(idx.size, dtype=complex) - pairwise_green(pts) * scene.rho0[idx][None, :]
    return FoldyLaxMatrix(Z, form, idx)


def _checked_solve(Z: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if Z.size == 0:
        return np.zeros_like(rhs)
    cond = np.linalg.cond(Z)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise ResonanceError(float(cond))
    return np.linalg.solve(Z, rhs)


def incident_fields(scene: ScattererScene, geom: ArrayGeometry, f) -> np.ndarray:
    """Incident field ``g0(y)^T f`` at every scatterer."""
    G_M = green_function(geom.sensors, scene.positions)
    return G_M.T @ as_vector(f)


def solve_exciting_fields(scene: ScattererScene, geom: ArrayGeometry, f) -> np.ndarray:
    """Exciting fields at the scatterers for illumination ``f``.

    Solves the self-consistent system ``Z_M psi = psi_inc`` by LU with partial
    pivoting. Raises :class:`ResonanceError` when ``Z_M`` has a condition
    number above :data:`CONDITION_LIMIT`.
    """
    inc = incident_fields(scene, geom, f)
    return _checked_solve(foldy_lax_matrix(scene).Z, inc)


def effective_sources(scene: ScattererScene, geom: ArrayGeometry, f) -> np.ndarray:
    """Effective source vector ``diag(rho) Z^-1 G^T f`` on the full grid (length K)."""
    gamma = np.zeros(scene.window.K, dtype=complex)
    gamma[scene.support] = scene.reflectivities * solve_exciting_fields(scene, geom, f)
    return gamma


@dataclass(frozen=True)
class ResponseMatrix:
    """Array response matrix with a lazily computed SVD.

    The SVD follows a fixed phase convention: the largest-magnitude entry of
    each right singular vector is real and positive, and the left singular
    vectors are rotated to match, so ``P V = U diag(s)`` still holds.
    """

    P: np.ndarray
    noise_level: float = 0.0

    def __post_init__(self):
        P = np.array(self.P, dtype=complex, copy=True)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("response matrix must be square")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def N(self) -> int:
        return self.P.shape[0]

    @cached_property
    def svd(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(U, s, V)`` with ``P = U diag(s) V^*`` (note: ``V``, not ``V^*``)."""
        U, s, Vh = np.linalg.svd(self.P)
        V = Vh.conj().T
        pivot = np.argmax(np.abs(V), axis=0)
        entry = V[pivot, np.arange(V.shape[1])]
        mag = np.abs(entry)
        phase = np.where(mag > 0, entry / np.where(mag > 0, mag, 1.0), 1.0)
        V = V / phase[None, :]
        U = U / phase[None, :]
        for arr in (U, s, V):
            arr.setflags(write=False)
        return U, s, V

    @property
    def singular_values(self) -> np.ndarray:
        return self.svd[1]

    def symmetry_error(self) -> float:
        nrm = np.linalg.norm(self.P)
        return float(np.linalg.norm(self.P - self.P.T) / nrm) if nrm else 0.0


def response_matrix(scene: ScattererScene, geom: ArrayGeometry, form: MatrixForm | str = MatrixForm.SUPPORT) -> ResponseMatrix:
    """Full multiple-scattering response matrix.

    ``form="support"`` evaluates ``G_M diag(rho) Z_M^-1 G_M^T`` on the scene
    support. ``form="extended"`` goes through the ``K x K`` matrix and the
    Foldy-Lax Green's vectors ``G Z^-T``; it is meant for cross-checks only.
    """
    form = MatrixForm(form)
    if form is MatrixForm.SUPPORT:
        G_M = green_function(geom.sensors, scene.positions)
        W = _checked_solve(foldy_lax_matrix(scene).Z, G_M.T)
        return ResponseMatrix(G_M @ (scene.reflectivities[:, None] * W))
    G = green_function(geom.sensors, scene.window.points)
    Z = foldy_lax_matrix(scene, MatrixForm.EXTENDED).Z
    G_fl = _checked_solve(Z, G.T).T
    return ResponseMatrix((G * scene.rho0[None, :]) @ G_fl.T)


def single_scattering_response(scene: ScattererScene, geom: ArrayGeometry) -> ResponseMatrix:
    """Born-approximation response ``G diag(rho) G^T`` (no multiple scattering)."""
    G_M = green_function(geom.sensors, scene.positions)
    return ResponseMatrix((G_M * scene.reflectivities[None, :]) @ G_M.T)


def multiple_scattering_amount(scene: ScattererScene, geom: ArrayGeometry) -> float:
    """Relative size, in percent, of the multiple-scattering part of the response."""
    if scene.M == 0:
        raise ValueError("scene must contain at least one scatterer")
    P = response_matrix(scene, geom).P
    P_ss = single_scattering_response(scene, geom).P
    return float(100.0 * np.linalg.norm(P - P_ss) / np.linalg.norm(P_ss))


def complex_noise(rng: np.random.Generator, size) -> np.ndarray:
    return rng.standard_normal(size) + 1j * rng.standard_normal(size)


def synthesize_data(P: ResponseMatrix, f, noise_pct: float = 0.0, rng=None) -> np.ndarray:
    """Array data ``b = P f + e`` for one illumination.

    The noise ``e`` is a complex Gaussian draw rescaled so that
    ``||e|| = noise_pct / 100 * ||P f||``.

    Parameters
    ----------
    P : ResponseMatrix
    f : Illumination or array_like
        Must have unit norm.
    noise_pct : float
        Noise level in percent of the noise-free data norm.
    rng : int, Generator or None
        Seed or generator for the noise draw.
    """
    f = as_vector(f)
    if f.shape[0] != P.N:
        raise ValueError(f"illumination has length {f.shape[0]}, array has {P.N} sensors")
    if abs(np.linalg.norm(f) - 1.0) > 1e-12:
        raise ValueError("illumination vectors must have unit norm")
    if noise_pct < 0:
        raise ValueError("noise_pct must be non-negative")
    clean = P.P @ f
    if noise_pct == 0:
        return clean
    rng = np.random.default_rng(rng)
    e = complex_noise(rng, clean.shape)
    scale = noise_pct / 100.0 * np.linalg.norm(clean)
    return clean + e * (scale / np.linalg.norm(e))


def write_scene_csv(scene: ScattererScene, path) -> None:
    """One row per scatterer: 1-based grid index, real and imaginary reflectivity."""
    rows = [(int(k) + 1, float(r.real), float(r.imag)) for k, r in zip(scene.support, scene.reflectivities)]
    write_rows(path, ["grid_index", "re_rho", "im_rho"], rows)


def read_scene_csv(path, window: ImageWindow) -> ScattererScene:
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh)]
    idx = [int(r["grid_index"]) - 1 for r in rows]
    vals = [complex(float(r["re_rho"]), float(r["im_rho"])) for r in rows]
    return ScattererScene.from_support(window, idx, vals)


def write_response_csv(P: ResponseMatrix, path) -> None:
    write_complex_matrix(path, P.P)

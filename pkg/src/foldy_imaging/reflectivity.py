"""Reflectivities from recovered effective sources.

Once the effective sources ``gamma`` are known on a support, the exciting
field at each support point is a direct sum over the other sources, and the
reflectivity is the ratio ``gamma / exciting field``. No linear system is
solved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .csvio import write_rows
from .forward import as_vector
from .geometry import ImageWindow, SensingMatrix, pairwise_green
from .sparse import EffectiveSourceSolution

SCREEN_FACTOR = 1e-3


@dataclass(frozen=True)
class ReflectivityEstimate:
    """Recovered reflectivities on a support.

    Attributes
    ----------
    support : (M',) int array
    rho : (M',) complex array
        Mean over the usable shots; NaN where every shot is screened.
    per_illumination : (M', nu) complex array
        ``gamma / exciting field`` for each shot.
    exciting_fields : (M', nu) complex array
    usable : (M', nu) bool array
        False where the exciting field fell below the screening tolerance.
    """

    support: np.ndarray
    rho: np.ndarray
    per_illumination: np.ndarray
    exciting_fields: np.ndarray
    usable: np.ndarray

    @property
    def screened(self) -> np.ndarray:
        """Support entries for which no shot was usable."""
        return ~self.usable.any(axis=1)

    def as_vector(self, K: int) -> np.ndarray:
        """Reflectivity estimate spread on the full grid (zero off support, NaN if screened)."""
        out = np.zeros(K, dtype=complex)
        out[self.support] = self.rho
        return out


def _require_points(S: SensingMatrix) -> np.ndarray:
    if S.points is None:
        raise ValueError("sensing matrix carries no grid coordinates")
    return S.points


def exciting_fields_on_support(S: SensingMatrix, support: Sequence[int], gamma, f) -> np.ndarray:
    """Exciting fields ``g0(y_j)^T f + sum_{k != j} gamma_k G(y_j, y_k)`` on a support.

    Parameters
    ----------
    S : SensingMatrix
        Supplies the steering vectors and the grid coordinates.
    support : sequence of int
    gamma : array_like
        Physical effective sources on ``support`` (same order).
    f : Illumination or array_like
    """
    support = np.asarray(support, dtype=int)
    gamma = np.asarray(gamma, dtype=complex).ravel()
    if support.size == 0:
        raise ValueError("support must not be empty")
    if gamma.shape[0] != support.size:
        raise ValueError("gamma must be given on the support only")
    incident = S.physical()[:, support].T @ as_vector(f)
    return incident + pairwise_green(_require_points(S)[support]) @ gamma


def recover_reflectivities(sol: EffectiveSourceSolution, S: SensingMatrix, illuminations: Sequence,
                           support: Sequence[int] | None = None, screen_factor: float = SCREEN_FACTOR) -> ReflectivityEstimate:
    """Divide effective sources by exciting fields and average over shots.

    A shot is ignored at a support point when its exciting field is smaller
    than ``screen_factor`` times the median exciting-field magnitude of that
    shot over the support.
    """
    support = np.asarray(sol.support if support is None else support, dtype=int)
    if len(illuminations) != sol.X.shape[1]:
        raise ValueError("one illumination per solution column is required")
    m, nu = support.size, len(illuminations)
    fields = np.zeros((m, nu), dtype=complex)
    per_shot = np.zeros((m, nu), dtype=complex)
    usable = np.zeros((m, nu), dtype=bool)
    for j, f in enumerate(illuminations):
        if m == 0:
            break
        gamma = sol.X[support, j]
        g = exciting_fields_on_support(S, support, gamma, f)
        fields[:, j] = g
        mag = np.abs(g)
        tol = screen_factor * np.median(mag)
        usable[:, j] = mag > tol
        per_shot[:, j] = np.where(usable[:, j], gamma / np.where(usable[:, j], g, 1.0), np.nan)
    count = usable.sum(axis=1)
    total = np.where(usable, per_shot, 0.0).sum(axis=1)
    rho = np.where(count > 0, total / np.maximum(count, 1), np.nan + 1j * np.nan)
    return ReflectivityEstimate(support, rho, per_shot, fields, usable)


def write_estimate_csv(est: ReflectivityEstimate, window: ImageWindow, path, scale: float = 1.0) -> None:
    """Rows: 1-based grid index, pixel offsets, reflectivity, magnitude, screened flag.

    ``abs_rho_scaled`` divides the magnitude by ``scale`` so that amplitudes
    can be compared with the units used to specify the scene.
    """
    xs, ys = window.offsets()
    rows = []
    for k, r, scr in zip(est.support, est.rho, est.screened):
        ix, iy = window.pixel(int(k))
        rows.append((int(k) + 1, float(xs[ix]), float(ys[iy]), float(r.real), float(r.imag),
                     float(abs(r)), float(abs(r) / scale), int(scr)))
    write_rows(path, ["grid_index", "x", "y", "re_rho", "im_rho", "abs_rho", "abs_rho_scaled", "screened"], rows)

"""MUSIC imaging from the leading left singular vectors of the response matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import ResponseMatrix
from .geometry import ArrayGeometry, ImageWindow, SensingMatrix, build_sensing_matrix

FLOOR_EPS = 1e-12


@dataclass(frozen=True)
class MusicImage:
    values: np.ndarray
    nu_used: int

    def peaks(self, window: ImageWindow, count: int) -> np.ndarray:
        return peak_indices(self.values, window, count)


def signal_projection(P: ResponseMatrix, S: SensingMatrix, nu: int) -> np.ndarray:
    """Energy of every normalized steering vector inside the span of ``U[:, :nu]``."""
    U = P.svd[0][:, :nu]
    return np.sum(np.abs(U.conj().T @ S.normalized_matrix()) ** 2, axis=0)


def music_image(P: ResponseMatrix, iw: ImageWindow, geom: ArrayGeometry, nu: int,
                floor_eps: float = FLOOR_EPS, sensing: SensingMatrix | None = None) -> MusicImage:
    """MUSIC pseudospectrum ``1 / (1 - s(y) + floor_eps)`` over the window.

    ``s(y)`` is the squared norm of the projection of the normalized steering
    vector at ``y`` onto the ``nu`` leading left singular vectors. Pass
    ``sensing`` to reuse an already assembled sensing matrix.
    """
    if not 1 <= nu <= P.N:
        raise ValueError(f"nu must lie in [1, {P.N}]")
    S = sensing if sensing is not None else build_sensing_matrix(geom, iw, normalize=True)
    s = np.clip(signal_projection(P, S, nu), 0.0, 1.0)
    return MusicImage(1.0 / (1.0 - s + floor_eps), nu)


def peak_indices(values, window: ImageWindow, count: int) -> np.ndarray:
    """Grid indices of the ``count`` largest local maxima (8-neighbourhood)."""
    img = np.asarray(values, dtype=float).reshape(window.n_y, window.n_x)
    padded = np.pad(img, 1, constant_values=-np.inf)
    is_max = np.ones_like(img, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            shifted = padded[1 + dy:1 + dy + window.n_y, 1 + dx:1 + dx + window.n_x]
            is_max &= img >= shifted
    cand = np.flatnonzero(is_max.ravel())
    order = np.argsort(-img.ravel()[cand], kind="stable")
    return cand[order[:count]]

"""Illumination vectors and multi-illumination data matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .csvio import write_rows
from .forward import ResponseMatrix, as_vector, synthesize_data


@dataclass(frozen=True)
class Illumination:
    """A unit-norm illumination vector with a provenance label.

    Labels read ``"point:s"`` for transducer ``s`` (0-based) and
    ``"optimal:j"`` for the ``j``-th right singular vector.
    """

    f: np.ndarray
    label: str

    def __post_init__(self):
        f = np.array(self.f, dtype=complex, copy=True).ravel()
        if abs(np.linalg.norm(f) - 1.0) > 1e-12:
            raise ValueError(f"illumination {self.label!r} is not unit-norm")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)

    @property
    def N(self) -> int:
        return self.f.shape[0]


def point_illumination(s: int, n: int) -> Illumination:
    """Fire transducer ``s`` alone (0-based index)."""
    if not 0 <= s < n:
        raise IndexError(f"transducer index {s} outside [0, {n})")
    f = np.zeros(n, dtype=complex)
    f[s] = 1.0
    return Illumination(f, f"point:{s}")


def random_illuminations(count: int, n: int, rng=None) -> list[Illumination]:
    """``count`` distinct single-transducer illuminations drawn uniformly."""
    if count > n:
        raise ValueError(f"cannot pick {count} distinct transducers out of {n}")
    if count < 1:
        raise ValueError("need at least one illumination")
    rng = np.random.default_rng(rng)
    chosen = rng.choice(n, size=count, replace=False)
    return [point_illumination(int(s), n) for s in chosen]


def optimal_illuminations(P: ResponseMatrix, count: int) -> list[Illumination]:
    """The ``count`` leading right singular vectors of ``P``."""
    if not 1 <= count <= P.N:
        raise ValueError(f"count must lie in [1, {P.N}]")
    V = P.svd[2]
    return [Illumination(V[:, j], f"optimal:{j}") for j in range(count)]


@dataclass(frozen=True)
class DataMatrix:
    """Data vectors stacked column-wise, one per illumination.

    ``noise_energy`` is the Frobenius norm of the injected noise. It is only
    known for synthetic data and serves as an oracle input for the theory
    bounds and the discrepancy stopping rule.
    """

    B: np.ndarray
    illuminations: tuple[Illumination, ...]
    noise_pct: float = 0.0
    noise_energy: float = 0.0

    def __post_init__(self):
        B = np.array(self.B, dtype=complex, copy=True)
        if B.ndim == 1:
            B = B[:, None]
        if B.shape[1] != len(self.illuminations):
            raise ValueError("one illumination per data column is required")
        B.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "illuminations", tuple(self.illuminations))

    @property
    def nu(self) -> int:
        return self.B.shape[1]

    def illumination_matrix(self) -> np.ndarray:
        return np.column_stack([il.f for il in self.illuminations])


def build_data_matrix(P: ResponseMatrix, illuminations: Sequence[Illumination], noise_pct: float = 0.0, rng=None) -> DataMatrix:
    """Synthesize one data column per illumination, each with its own noise draw."""
    rng = np.random.default_rng(rng)
    cols = [synthesize_data(P, il, noise_pct, rng) for il in illuminations]
    B = np.column_stack(cols)
    clean = np.column_stack([P.P @ as_vector(il) for il in illuminations])
    return DataMatrix(B, tuple(illuminations), noise_pct, float(np.linalg.norm(B - clean)))


def measure_response_matrix(P: ResponseMatrix, noise_pct: float, rng=None) -> ResponseMatrix:
    """Response matrix measured column by column with noisy point illuminations."""
    rng = np.random.default_rng(rng)
    cols = [synthesize_data(P, point_illumination(s, P.N), noise_pct, rng) for s in range(P.N)]
    return ResponseMatrix(np.column_stack(cols), noise_level=noise_pct / 100.0)


def write_illuminations_csv(illuminations: Sequence[Illumination], path) -> None:
    """Long format: one row per (illumination, transducer) pair."""
    rows = []
    for j, il in enumerate(illuminations):
        for r, v in enumerate(il.f):
            rows.append((il.label, r, float(v.real), float(v.imag)))
    write_rows(path, ["label", "transducer", "re_f", "im_f"], rows)

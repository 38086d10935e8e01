"""Joint-sparse recovery of effective sources.

The solver is the augmented-Lagrangian shrinkage-thresholding scheme (GeLMA)
for ``min J_{2,1}(X)`` subject to ``G X = B``. With a single data column it is
the plain l1 version. Its fixed point does not depend on the regularization
parameter ``tau``; ``tau`` only affects the speed of convergence.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace
from typing import TextIO

import numpy as np

from .geometry import SensingMatrix

DEFAULT_TAU_FACTOR = 0.1
DEFAULT_SUPPORT_FRACTION = 0.1
DIVERGENCE_FLOOR = 0.1


class DivergenceError(RuntimeError):
    """The residual grew far above its running minimum.

    The last iterate, the multiplier and the residual history are attached
    for post-mortem inspection.
    """

    def __init__(self, message, X, Z, residuals):
        super().__init__(message)
        self.X = X
        self.Z = Z
        self.residuals = residuals


def jpq_norm(X, p: float = 2, q: float = 1) -> float:
    """Mixed norm: the l_q norm of the vector of row-wise l_p norms."""
    if p < 1 or q < 1:
        raise ValueError("p and q must be at least 1")
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[:, None]
    rows = np.linalg.norm(X, ord=p, axis=1)
    return float(np.linalg.norm(rows, ord=q))


@dataclass(frozen=True)
class SolverSettings:
    """Parameters of the shrinkage-thresholding solver.

    ``beta`` and ``tau`` left as ``None`` are filled in from the data:
    ``beta = 0.9 / ||G||_2^2`` and ``tau = tau_factor * ||G^* B||_{2->inf}``.
    ``delta``, when set, stops the iteration as soon as the residual
    Frobenius norm falls to ``delta`` (discrepancy principle).
    """

    beta: float | None = None
    tau: float | None = None
    tau_factor: float = DEFAULT_TAU_FACTOR
    max_iters: int = 50_000
    tolerance: float = 1e-8
    delta: float | None = None

    def __post_init__(self):
        if self.beta is not None and self.beta <= 0:
            raise ValueError("step size beta must be positive")
        if self.tau is not None and self.tau < 0:
            raise ValueError("tau must be non-negative")
        if self.tau_factor < 0:
            raise ValueError("tau_factor must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.delta is not None and self.delta < 0:
            raise ValueError("delta must be non-negative")


@dataclass(frozen=True)
class EffectiveSourceSolution:
    """Solver output.

    ``X`` holds the physical effective sources (rows rescaled by the inverse
    column norms). ``row_norms`` are measured on the solver's normalized
    variable, which is what the support threshold and the theory bounds
    refer to.
    """

    X: np.ndarray
    X_normalized: np.ndarray
    row_norms: np.ndarray
    support: np.ndarray
    threshold: float
    residual: float
    iterations: int
    converged: bool
    stop_reason: str
    beta: float
    tau: float
    spectral_norm: float

    def with_threshold(self, threshold: float) -> "EffectiveSourceSolution":
        support = np.flatnonzero(self.row_norms > threshold)
        return replace(self, support=support, threshold=float(threshold))


@dataclass(frozen=True)
class TheoryBounds:
    """Constants of the noisy-recovery guarantee.

    When ``M * eps >= 1/2`` the guarantee does not apply: ``violated`` is
    set and the derived quantities are NaN.
    """

    eps: float
    M: int
    noise_energy: float
    delta_min: float
    delta: float
    err_bound: float
    detectability: float
    violated: bool

    @property
    def status(self) -> str:
        return "conditions violated" if self.violated else "conditions satisfied"


def theory_bounds(eps: float, M: int, noise_energy: float, delta: float | None = None) -> TheoryBounds:
    """Minimal constraint radius and error bound for ``M``-row-sparse recovery.

    Parameters
    ----------
    eps : float
        Mutual coherence of the normalized sensing matrix, in [0, 1).
    M : int
        Number of nonzero rows of the true solution.
    noise_energy : float
        Frobenius norm of the noise matrix.
    delta : float, optional
        Constraint radius actually used. Defaults to the minimal admissible one.
    """
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    if M < 1:
        raise ValueError("M must be at least 1")
    violated = M * eps >= 0.5
    if violated:
        nan = math.nan
        return TheoryBounds(eps, M, noise_energy, nan, nan if delta is None else delta, nan, nan, True)
    factor = M * (1.0 - (M - 1) * eps) / (1.0 - 2.0 * M * eps + eps) ** 2
    delta_min = noise_energy * math.sqrt(1.0 + factor)
    if delta is None:
        delta = delta_min
    err_bound = delta / math.sqrt(1.0 - (M - 1) * eps)
    return TheoryBounds(eps, M, noise_energy, delta_min, delta, err_bound, err_bound, False)


def _as_data(B) -> np.ndarray:
    B = np.asarray(getattr(B, "B", B), dtype=complex)
    if B.ndim == 1:
        B = B[:, None]
    return B


def resolve_settings(S: SensingMatrix, B, settings: SolverSettings | None = None) -> tuple[float, float, float]:
    """Return ``(beta, tau, spectral_norm)`` for the given problem."""
    settings = settings or SolverSettings()
    B = _as_data(B)
    sigma = float(np.linalg.norm(S.G, 2))
    beta = settings.beta if settings.beta is not None else 0.9 / sigma**2
    if settings.tau is not None:
        tau = settings.tau
    else:
        tau = settings.tau_factor * float(np.linalg.norm(S.G.conj().T @ B, axis=1).max(initial=0.0))
    return beta, tau, sigma


def gelma_solve(S: SensingMatrix, B, settings: SolverSettings | None = None, trace: TextIO | None = None) -> EffectiveSourceSolution:
    """Minimize ``J_{2,1}(X)`` subject to ``G X = B`` by GeLMA iterations.

    One iteration reads::

        R = B - G X
        X = shrink_rows(X + beta G^* (Z + R), beta tau)
        Z = Z + beta R

    and the loop stops when the relative Frobenius change of ``X`` drops
    below ``settings.tolerance``, when the residual reaches
    ``settings.delta`` (if given), or after ``settings.max_iters``.

    Parameters
    ----------
    S : SensingMatrix
        Column-normalized sensing matrix.
    B : DataMatrix or array_like, shape (N,) or (N, nu)
    settings : SolverSettings, optional
    trace : text stream, optional
        Receives CSV rows ``iteration,residual,j21`` for every iteration.

    Returns
    -------
    EffectiveSourceSolution
        The support is preliminarily set to rows above 10% of the largest row
        norm; refine it with :func:`extract_support`.

    Raises
    ------
    ValueError
        If ``S`` is not column-normalized or ``beta`` exceeds ``1 / ||G||^2``.
    DivergenceError
        If the residual grows tenfold above its running minimum (floored at
        ``DIVERGENCE_FLOOR * ||B||``).
    """
    settings = settings or SolverSettings()
    S.check_normalized()
    B = _as_data(B)
    G = S.G
    if B.shape[0] != G.shape[0]:
        raise ValueError(f"data has {B.shape[0]} rows, sensing matrix has {G.shape[0]}")
    beta, tau, sigma = resolve_settings(S, B, settings)
    if beta > (1.0 + 1e-12) / sigma**2:
        raise ValueError(f"step size {beta:.3e} exceeds 1/||G||^2 = {1 / sigma**2:.3e}")

    Gh = G.conj().T
    K, nu = G.shape[1], B.shape[1]
    X = np.zeros((K, nu), dtype=complex)
    Zm = np.zeros_like(B)
    b_norm = float(np.linalg.norm(B))
    # the residual oscillates on its way down, so a tenfold rebound from a lucky dip is
    # normal; only growth past the zero-iterate residual ||B|| counts as divergence
    floor = DIVERGENCE_FLOOR * b_norm
    thresh = beta * tau
    writer = csv.writer(trace, lineterminator="\n") if trace is not None else None
    if writer:
        writer.writerow(["iteration", "residual", "j21"])

    best = math.inf
    history: list[float] = []
    stop_reason = "max_iters"
    converged = False
    iterations = 0
    for it in range(1, settings.max_iters + 1):
        R = B - G @ X
        res = float(np.linalg.norm(R))
        if settings.delta is not None and res <= settings.delta:
            stop_reason, converged = "discrepancy", True
            break
        history.append(res)
        best = min(best, res)
        if res > 10.0 * max(best, floor):
            raise DivergenceError(
                f"residual {res:.3e} grew tenfold above its minimum {best:.3e} at iteration {it}",
                X / S.column_norms[:, None], Zm, np.array(history),
            )
        Y = X + beta * (Gh @ (Zm + R))
        ny = np.linalg.norm(Y, axis=1)
        keep = np.maximum(ny - thresh, 0.0)
        scale = np.divide(keep, ny, out=np.zeros_like(ny), where=ny > 0)
        X_new = Y * scale[:, None]
        Zm += beta * R
        iterations = it
        if writer:
            writer.writerow([it, repr(res), repr(float(keep.sum()))])
        change = float(np.linalg.norm(X_new - X))
        x_norm = float(np.linalg.norm(X_new))
        X = X_new
        if x_norm == 0.0:
            if b_norm == 0.0:
                stop_reason, converged = "zero data", True
                break
            continue
        if change <= settings.tolerance * x_norm:
            stop_reason, converged = "tolerance", True
            break

    residual = float(np.linalg.norm(G @ X - B))
    row_norms = np.linalg.norm(X, axis=1)
    threshold = DEFAULT_SUPPORT_FRACTION * float(row_norms.max(initial=0.0))
    support = np.flatnonzero(row_norms > threshold) if threshold > 0 else np.array([], dtype=int)
    return EffectiveSourceSolution(
        X=X / S.column_norms[:, None],
        X_normalized=X,
        row_norms=row_norms,
        support=support,
        threshold=threshold,
        residual=residual,
        iterations=iterations,
        converged=converged,
        stop_reason=stop_reason,
        beta=beta,
        tau=tau,
        spectral_norm=sigma,
    )


def support_threshold(sol: EffectiveSourceSolution, bounds: TheoryBounds | None = None,
                      fraction: float = DEFAULT_SUPPORT_FRACTION, threshold: float | None = None) -> float:
    """Row-norm threshold used for support extraction.

    An explicit ``threshold`` wins. Otherwise the theoretical detectability
    level is used when ``bounds`` are given and valid, and ``fraction`` of the
    largest row norm in all other cases.
    """
    if threshold is not None:
        return float(threshold)
    if bounds is not None and not bounds.violated:
        return float(bounds.detectability)
    return fraction * float(sol.row_norms.max(initial=0.0))


def extract_support(sol: EffectiveSourceSolution, bounds: TheoryBounds | None = None,
                    fraction: float = DEFAULT_SUPPORT_FRACTION, threshold: float | None = None) -> np.ndarray:
    """Indices of the rows whose norm exceeds the support threshold.

    See :func:`support_threshold` for how the threshold is chosen. Emits a
    warning and returns an empty array when nothing survives.
    """
    t = support_threshold(sol, bounds, fraction, threshold)
    support = np.flatnonzero(sol.row_norms > t)
    if support.size == 0:
        warnings.warn("empty support: no row norm exceeds the threshold", RuntimeWarning, stacklevel=2)
    return support


def solve_decoupled(S: SensingMatrix, B, settings: SolverSettings | None = None) -> EffectiveSourceSolution:
    """Solve each data column separately (``J_{1,1}`` objective) and stack the results.

    Useful as a baseline: the union of the per-column supports can be larger
    than the joint row support.
    """
    B = _as_data(B)
    parts = [gelma_solve(S, B[:, [j]], settings) for j in range(B.shape[1])]
    Xn = np.hstack([p.X_normalized for p in parts])
    row_norms = np.linalg.norm(Xn, axis=1)
    support = np.unique(np.concatenate([p.support for p in parts]))
    return EffectiveSourceSolution(
        X=Xn / S.column_norms[:, None],
        X_normalized=Xn,
        row_norms=row_norms,
        support=support,
        threshold=math.nan,
        residual=float(np.linalg.norm(S.G @ Xn - B)),
        iterations=max(p.iterations for p in parts),
        converged=all(p.converged for p in parts),
        stop_reason="decoupled",
        beta=parts[0].beta,
        tau=max(p.tau for p in parts),
        spectral_norm=parts[0].spectral_norm,
    )


def _shrink_rows(Y: np.ndarray, t: float) -> np.ndarray:
    ny = np.linalg.norm(Y, axis=1)
    scale = np.divide(np.maximum(ny - t, 0.0), ny, out=np.zeros_like(ny), where=ny > 0)
    return Y * scale[:, None]


def solve_penalized(S: SensingMatrix, B, lam: float, X0=None, tolerance: float = 1e-13,
                    max_iters: int = 20_000) -> np.ndarray:
    """Minimize ``0.5 ||G X - B||_F^2 + lam J_{2,1}(X)`` by accelerated proximal gradient.

    Works on the normalized variable; returns the minimizer in those units.
    """
    B = _as_data(B)
    G = S.G
    Gh = G.conj().T
    lip = float(np.linalg.norm(G, 2)) ** 2
    X = np.zeros((G.shape[1], B.shape[1]), dtype=complex) if X0 is None else np.array(X0, dtype=complex)
    V = X.copy()
    t = 1.0
    for _ in range(max_iters):
        X_new = _shrink_rows(V - Gh @ (G @ V - B) / lip, lam / lip)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        V = X_new + ((t - 1.0) / t_new) * (X_new - X)
        change = float(np.linalg.norm(X_new - X))
        X, t = X_new, t_new
        if change <= tolerance * max(float(np.linalg.norm(X)), 1e-300):
            break
    return X


def solve_constrained(S: SensingMatrix, B, delta: float, rel_tol: float = 1e-10,
                      max_bisections: int = 80) -> EffectiveSourceSolution:
    """Minimizer of ``J_{2,1}(X)`` subject to ``||G X - B||_F <= delta``.

    The constrained minimizer coincides with the penalized one for the
    multiplier ``lam`` at which the residual equals ``delta``; ``lam`` is
    found by bisection (the residual grows monotonically with ``lam``).
    This is slower than :func:`gelma_solve` with a discrepancy stop but
    returns the exact minimizer, as needed to check stability bounds.
    """
    S.check_normalized()
    B = _as_data(B)
    K, nu = S.G.shape[1], B.shape[1]
    sigma = float(np.linalg.norm(S.G, 2))
    X = np.zeros((K, nu), dtype=complex)
    lam = hi = float(np.linalg.norm(S.G.conj().T @ B, axis=1).max(initial=0.0))
    lo = 0.0
    steps = 0
    if float(np.linalg.norm(B)) > delta:
        X_ok = None
        for steps in range(1, max_bisections + 1):
            lam = 0.5 * (lo + hi)
            X = solve_penalized(S, B, lam, X)
            res = float(np.linalg.norm(S.G @ X - B))
            if res > delta:
                hi = lam
            else:
                lo, X_ok = lam, X
                if delta - res <= rel_tol * delta:
                    break
        if X_ok is None:
            X_ok = solve_penalized(S, B, lo, X)
        X = X_ok
    row_norms = np.linalg.norm(X, axis=1)
    support = np.flatnonzero(row_norms > 0)
    return EffectiveSourceSolution(
        X=X / S.column_norms[:, None], X_normalized=X, row_norms=row_norms, support=support,
        threshold=0.0, residual=float(np.linalg.norm(S.G @ X - B)), iterations=steps,
        converged=True, stop_reason="constrained", beta=1.0 / sigma**2, tau=lam, spectral_norm=sigma,
    )

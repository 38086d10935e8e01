import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import foldy_imaging.sparse as sparse
from conftest import random_unit_matrix
from foldy_imaging.geometry import SensingMatrix, mutual_coherence
from foldy_imaging.sparse import (
    DivergenceError,
    SolverSettings,
    extract_support,
    gelma_solve,
    jpq_norm,
    solve_constrained,
    solve_decoupled,
    solve_penalized,
    support_threshold,
    theory_bounds,
)
from oracles import desk_instance, l0_support, noisy_row_sparse, spikes_and_sines


class TestJpqNorm:
    def test_known_values(self):
        X = np.array([[3.0, 4.0], [0.0, 0.0], [1.0, 0.0]])
        assert jpq_norm(X) == pytest.approx(6.0)
        assert jpq_norm(X, 2, 2) == pytest.approx(np.linalg.norm(X))
        assert jpq_norm(X, 1, 1) == pytest.approx(8.0)

    def test_vector_is_one_column(self):
        assert jpq_norm(np.array([1.0, -2.0])) == pytest.approx(3.0)

    def test_rejects_p_below_one(self):
        with pytest.raises(ValueError):
            jpq_norm(np.ones((2, 2)), p=0.5)


class TestTheoryBounds:
    def test_hand_computed(self):
        b = theory_bounds(0.1, 2, 1.0)
        factor = 2 * 0.9 / 0.7**2
        assert b.delta_min == pytest.approx(math.sqrt(1 + factor), rel=1e-14)
        assert b.err_bound == pytest.approx(b.delta_min / math.sqrt(0.9), rel=1e-14)
        assert b.status == "conditions satisfied"

    def test_violated_at_half(self):
        b = theory_bounds(0.25, 2, 1.0)
        assert b.violated and math.isnan(b.delta_min) and b.status == "conditions violated"

    def test_explicit_delta_scales_bound(self):
        b = theory_bounds(0.05, 3, 0.5, delta=2.0)
        assert b.delta == 2.0 and b.err_bound == pytest.approx(2.0 / math.sqrt(0.9))

    @pytest.mark.parametrize("eps,M", [(1.0, 1), (-0.1, 1), (0.1, 0)])
    def test_domain(self, eps, M):
        with pytest.raises(ValueError):
            theory_bounds(eps, M, 1.0)


class TestGelma:
    def test_identity_dictionary_recovers_exactly(self):
        S = SensingMatrix.from_array(np.eye(6, dtype=complex))
        b = np.array([0, 2.0 - 1.0j, 0, 0, 0.5j, 0])
        sol = gelma_solve(S, b, SolverSettings(tolerance=1e-12))
        assert sol.converged and sol.stop_reason == "tolerance"
        assert np.allclose(sol.X[:, 0], b, atol=1e-9)
        assert list(sol.support) == [1, 4]

    def test_vector_and_column_data_agree_bit_for_bit(self):
        rng = np.random.default_rng(5)
        S, _, b = desk_instance(rng)
        a = gelma_solve(S, b)
        c = gelma_solve(S, b[:, None])
        assert a.X.tobytes() == c.X.tobytes() and a.iterations == c.iterations

    def test_physical_units(self):
        rng = np.random.default_rng(1)
        G = 3.0 * random_unit_matrix(rng, 6, 9)
        S = SensingMatrix.from_array(G)  # normalizes, remembers the norms
        x = np.zeros(9, dtype=complex)
        x[4] = 1.0 + 1.0j
        sol = gelma_solve(S, G @ x, SolverSettings(tolerance=1e-12))
        assert np.allclose(sol.X[:, 0], x, atol=1e-8)
        assert np.allclose(sol.X_normalized[4, 0], 3.0 * x[4], atol=1e-8)

    def test_zero_data(self):
        S = SensingMatrix.from_array(np.eye(4))
        sol = gelma_solve(S, np.zeros(4))
        assert sol.stop_reason == "zero data" and sol.iterations == 1
        assert not np.any(sol.X) and sol.support.size == 0

    def test_discrepancy_stop(self):
        rng = np.random.default_rng(2)
        S, _, b = desk_instance(rng)
        delta = 0.05 * np.linalg.norm(b)
        sol = gelma_solve(S, b, SolverSettings(delta=delta))
        assert sol.stop_reason == "discrepancy" and sol.residual <= delta

    def test_max_iters(self):
        rng = np.random.default_rng(2)
        S, _, b = desk_instance(rng)
        sol = gelma_solve(S, b, SolverSettings(max_iters=3))
        assert sol.iterations == 3 and not sol.converged and sol.stop_reason == "max_iters"

    def test_requires_normalized_columns(self):
        S = SensingMatrix.from_array(2 * np.eye(3), normalize=False)
        with pytest.raises(ValueError, match="unit-norm"):
            gelma_solve(S, np.ones(3))

    def test_rejects_large_step(self):
        S = SensingMatrix.from_array(np.eye(3))
        with pytest.raises(ValueError, match="step size"):
            gelma_solve(S, np.ones(3), SolverSettings(beta=1.5))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="rows"):
            gelma_solve(SensingMatrix.from_array(np.eye(3)), np.ones(4))

    def test_divergence_is_caught_with_dump(self, monkeypatch):
        rng = np.random.default_rng(0)
        S, _, b = desk_instance(rng)
        sigma = float(np.linalg.norm(S.G, 2))
        # understate the spectral norm so that a step of 3/sigma^2 passes the admissibility check
        monkeypatch.setattr(sparse, "resolve_settings", lambda *a, **k: (3.0 / sigma**2, 0.0, sigma / 2))
        with pytest.raises(DivergenceError) as info:
            gelma_solve(S, b)
        err = info.value
        assert err.X.shape == (12, 1) and err.Z.shape == (8, 1)
        assert err.residuals[-1] > 10 * np.linalg.norm(b) * sparse.DIVERGENCE_FLOOR

    def test_trace_rows(self):
        rng = np.random.default_rng(3)
        S, _, b = desk_instance(rng)
        buf = io.StringIO()
        sol = gelma_solve(S, b, SolverSettings(max_iters=25), trace=buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "iteration,residual,j21"
        assert len(lines) == sol.iterations + 1
        first = lines[1].split(",")
        assert first[0] == "1" and float(first[1]) == pytest.approx(np.linalg.norm(b))

    def test_tau_insensitivity(self):
        rng = np.random.default_rng(11)
        S, x, b = desk_instance(rng)
        sols = [gelma_solve(S, b, SolverSettings(tau_factor=f, tolerance=1e-12)) for f in (0.1, 1.0)]
        a, c = sols[0].X_normalized, sols[1].X_normalized
        assert np.linalg.norm(a - c) <= 1e-6 * np.linalg.norm(a)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_matches_l0_oracle(self, seed):
        rng = np.random.default_rng(seed)
        S, x, b = desk_instance(rng)
        sol = gelma_solve(S, b, SolverSettings(tolerance=1e-10))
        found = set(extract_support(sol, fraction=1e-3).tolist())
        assert found == l0_support(S.G, b) == set(np.flatnonzero(x).tolist())

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_running_min_residual_nonincreasing(self, seed):
        rng = np.random.default_rng(seed)
        S, _, b = desk_instance(rng)
        buf = io.StringIO()
        gelma_solve(S, b, SolverSettings(max_iters=200), trace=buf)
        res = np.array([float(r.split(",")[1]) for r in buf.getvalue().splitlines()[1:]])
        running = np.minimum.accumulate(res)
        assert np.all(np.diff(running) <= 0) and res.max() <= 10 * np.linalg.norm(b)


class TestSupport:
    def _solution(self, row_norms):
        X = np.asarray(row_norms, dtype=complex)[:, None]
        S = SensingMatrix.from_array(np.eye(len(row_norms)))
        sol = gelma_solve(S, X[:, 0], SolverSettings(max_iters=1))
        return sparse.EffectiveSourceSolution(**{**sol.__dict__, "X": X, "X_normalized": X,
                                                 "row_norms": np.abs(X[:, 0])})

    def test_fraction_rule(self):
        sol = self._solution([1.0, 0.2, 0.05, 0.0])
        assert list(extract_support(sol)) == [0, 1]
        assert list(extract_support(sol, fraction=0.01)) == [0, 1, 2]

    def test_theory_threshold_wins_when_valid(self):
        sol = self._solution([1.0, 0.2, 0.05, 0.0])
        bounds = theory_bounds(0.1, 1, 0.1)
        assert support_threshold(sol, bounds) == pytest.approx(bounds.detectability)
        assert support_threshold(sol, theory_bounds(0.6, 1, 0.1)) == pytest.approx(0.1)

    def test_explicit_threshold(self):
        sol = self._solution([1.0, 0.2, 0.05, 0.0])
        assert list(extract_support(sol, threshold=0.5)) == [0]

    def test_empty_support_warns(self):
        sol = self._solution([1.0, 0.2, 0.05, 0.0])
        with pytest.warns(RuntimeWarning, match="empty support"):
            assert extract_support(sol, threshold=2.0).size == 0

    def test_with_threshold(self):
        sol = self._solution([1.0, 0.2, 0.05, 0.0]).with_threshold(0.01)
        assert list(sol.support) == [0, 1, 2] and sol.threshold == 0.01


class TestDecoupled:
    def test_equals_stacked_single_column_solves(self):
        rng = np.random.default_rng(8)
        S = spikes_and_sines(16)
        _, B, _ = noisy_row_sparse(rng, S, 2, 3, 0.0)
        dec = solve_decoupled(S, B, SolverSettings(tolerance=1e-10))
        for j in range(3):
            single = gelma_solve(S, B[:, j], SolverSettings(tolerance=1e-10))
            assert dec.X[:, j].tobytes() == single.X[:, 0].tobytes()
        assert dec.stop_reason == "decoupled"

    def test_joint_and_decoupled_agree_on_clean_row_sparse_data(self):
        rng = np.random.default_rng(9)
        S = spikes_and_sines(16)
        X0, B, _ = noisy_row_sparse(rng, S, 2, 3, 0.0)
        joint = gelma_solve(S, B, SolverSettings(tolerance=1e-11))
        dec = solve_decoupled(S, B, SolverSettings(tolerance=1e-11))
        truth = set(np.flatnonzero(np.linalg.norm(X0, axis=1)).tolist())
        assert set(extract_support(joint, fraction=1e-3).tolist()) == truth
        assert set(extract_support(dec, fraction=1e-3).tolist()) == truth


class TestConstrained:
    def test_residual_on_the_constraint(self):
        rng = np.random.default_rng(4)
        S = spikes_and_sines(32)
        _, B, noise = noisy_row_sparse(rng, S, 2, 2, 0.05)
        sol = solve_constrained(S, B, 1.5 * noise)
        assert sol.residual == pytest.approx(1.5 * noise, rel=1e-8)

    def test_data_inside_ball_gives_zero(self):
        S = spikes_and_sines(8)
        sol = solve_constrained(S, np.full(8, 0.01), 1.0)
        assert not np.any(sol.X) and sol.support.size == 0

    def test_penalized_optimality_conditions(self):
        rng = np.random.default_rng(6)
        S = spikes_and_sines(16)
        _, B, _ = noisy_row_sparse(rng, S, 3, 2, 0.1)
        lam = 0.2 * float(np.linalg.norm(S.G.conj().T @ B, axis=1).max())
        X = solve_penalized(S, B, lam)
        corr = S.G.conj().T @ (B - S.G @ X)
        rows = np.linalg.norm(X, axis=1)
        on = rows > 0
        assert on.any()
        assert np.allclose(corr[on], lam * X[on] / rows[on, None], atol=1e-8 * lam)
        assert np.all(np.linalg.norm(corr[~on], axis=1) <= lam * (1 + 1e-8))

    def test_stability_bound_small_sample(self):
        rng = np.random.default_rng(12)
        S = spikes_and_sines(32)
        eps = mutual_coherence(S)
        for _ in range(5):
            X0, B, noise = noisy_row_sparse(rng, S, 1, 2, 0.05)
            b = theory_bounds(eps, 1, noise)
            sol = solve_constrained(S, B, b.delta)
            assert np.linalg.norm(sol.X_normalized - X0) <= b.err_bound
            assert set(sol.support) <= set(np.flatnonzero(np.linalg.norm(X0, axis=1)))

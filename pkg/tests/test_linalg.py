"""Numerical-layer tests: validation, canonicalization, and the
semi-orthogonal log-det minimizer (including a brute-force grid oracle
and backend agreement)."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from envcore import _sweep_py, kernels
from envcore.errors import DimensionMismatch, NoConvergence, NonPositiveDefinite
from envcore.linalg import (OptimizerOptions, canonicalize, check_pd,
                            check_symmetric, complete_basis,
                            envelope_objective, is_semi_orthogonal,
                            minimize_envelope_objective, subspace_distance)

try:
    from envcore import _sweep_cy
except ImportError:  # compiled backend missing; fallback-only environment
    _sweep_cy = None


def _rand_pd(rng, r, spread=1.0):
    A = rng.standard_normal((r, 2 * r))
    M = A @ A.T / (2 * r)
    return M + spread * np.eye(r) * 0.1


def _rand_orth(rng, r, u):
    return np.linalg.qr(rng.standard_normal((r, u)))[0]


class TestValidation:
    def test_check_symmetric_rejects_asymmetric(self):
        M = np.array([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(NonPositiveDefinite):
            check_symmetric(M)

    def test_check_symmetric_rejects_nonsquare(self):
        with pytest.raises(DimensionMismatch):
            check_symmetric(np.ones((2, 3)))

    def test_check_pd_rejects_indefinite(self):
        with pytest.raises(NonPositiveDefinite):
            check_pd(np.diag([1.0, -1.0]))

    def test_check_pd_jitter_regularizes(self):
        M, jittered = check_pd(np.diag([1.0, 0.0]), jitter=True)
        assert jittered
        assert np.linalg.eigvalsh(M)[0] > 0

    def test_check_pd_passes_pd_unchanged(self, rng):
        M = _rand_pd(rng, 4)
        out, jittered = check_pd(M)
        assert not jittered
        np.testing.assert_allclose(out, M)


class TestCanonicalize:
    def test_idempotent(self, rng):
        G = _rand_orth(rng, 6, 3)
        C = canonicalize(G)
        np.testing.assert_allclose(canonicalize(C), C)

    def test_span_preserved(self, rng):
        G = _rand_orth(rng, 6, 3)
        assert subspace_distance(canonicalize(G), G) < 1e-12

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_invariant_to_column_signs_and_order(self, seed):
        rng = np.random.default_rng(seed)
        G = _rand_orth(rng, 5, 3)
        signs = rng.choice([-1.0, 1.0], size=3)
        perm = rng.permutation(3)
        np.testing.assert_allclose(canonicalize(G),
                                   canonicalize((G * signs)[:, perm]),
                                   atol=1e-12)


class TestCompleteBasis:
    def test_orthogonal_complement(self, rng):
        B = _rand_orth(rng, 7, 3)
        B0 = complete_basis(B)
        assert B0.shape == (7, 4)
        assert np.abs(B.T @ B0).max() < 1e-12
        assert is_semi_orthogonal(B0)

    def test_rejects_non_semi_orthogonal(self, rng):
        with pytest.raises(DimensionMismatch):
            complete_basis(rng.standard_normal((5, 2)))

    def test_empty_input_gives_identity_span(self):
        B0 = complete_basis(np.empty((4, 0)))
        assert subspace_distance(B0, np.eye(4)) < 1e-12


class TestSubspaceDistance:
    def test_zero_iff_same_span(self, rng):
        G = _rand_orth(rng, 6, 2)
        O = np.linalg.qr(rng.standard_normal((2, 2)))[0]
        assert subspace_distance(G, G @ O) < 1e-12

    def test_one_for_orthogonal_spans(self):
        A = np.eye(4)[:, :2]
        B = np.eye(4)[:, 2:]
        assert abs(subspace_distance(A, B) - 1.0) < 1e-12

    def test_symmetric(self, rng):
        A = _rand_orth(rng, 6, 2)
        B = _rand_orth(rng, 6, 2)
        assert subspace_distance(A, B) == pytest.approx(
            subspace_distance(B, A))


class TestObjective:
    def test_rotation_within_span_invariant(self, rng):
        M1, M2 = _rand_pd(rng, 5), _rand_pd(rng, 5)
        G = _rand_orth(rng, 5, 2)
        O = np.linalg.qr(rng.standard_normal((2, 2)))[0]
        assert envelope_objective(G @ O, M1, M2) == pytest.approx(
            envelope_objective(G, M1, M2), rel=1e-12)

    def test_empty_basis_is_zero(self, rng):
        M = _rand_pd(rng, 3)
        assert envelope_objective(np.empty((3, 0)), M, M) == 0.0

    def test_degenerate_projection_raises(self):
        M1 = np.diag([1.0, 0.0, 1.0]) + 0  # PSD with a null direction
        G = np.array([[0.0], [1.0], [0.0]])
        with pytest.raises(NonPositiveDefinite):
            envelope_objective(G, M1, np.eye(3))


class TestMinimizer:
    def test_grid_oracle_r2(self, rng):
        # exhaustive angle grid in the plane beats any optimizer mistake
        M1, M2 = _rand_pd(rng, 2), _rand_pd(rng, 2)
        theta = np.linspace(0.0, np.pi, 200001)
        W = np.stack([np.cos(theta), np.sin(theta)])
        f = (np.log(np.einsum("it,ij,jt->t", W, M1, W))
             + np.log(np.einsum("it,ij,jt->t", W, M2, W)))
        G = minimize_envelope_objective(M1, M2, 1)
        assert envelope_objective(G, M1, M2) <= f.min() + 1e-8

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_grid_oracle_r3(self, seed):
        rng = np.random.default_rng(seed)
        M1, M2 = _rand_pd(rng, 3), _rand_pd(rng, 3)
        # Fibonacci sphere oracle for the u=1 problem on S^2
        m = 400000
        i = np.arange(m)
        z = 1.0 - 2.0 * (i + 0.5) / m
        phi = i * np.pi * (3.0 - np.sqrt(5.0))
        s = np.sqrt(1.0 - z ** 2)
        W = np.stack([s * np.cos(phi), s * np.sin(phi), z])
        f = (np.log(np.einsum("it,ij,jt->t", W, M1, W))
             + np.log(np.einsum("it,ij,jt->t", W, M2, W)))
        G = minimize_envelope_objective(M1, M2, 1)
        assert envelope_objective(G, M1, M2) <= f.min() + 1e-5

    def test_descent_per_sweep(self, rng):
        M1, M2 = _rand_pd(rng, 8), _rand_pd(rng, 8)
        G = np.array(_rand_orth(rng, 8, 3), order="C")
        f = envelope_objective(G, M1, M2)
        for _ in range(20):
            kernels.sweep(M1, M2, G, 40, 1e-12)
            f_new = envelope_objective(G, M1, M2)
            assert f_new <= f + 1e-10
            f = f_new

    def test_congruence_rotation_equivariance(self, rng):
        M1, M2 = _rand_pd(rng, 5), _rand_pd(rng, 5)
        O = np.linalg.qr(rng.standard_normal((5, 5)))[0]
        G = minimize_envelope_objective(M1, M2, 2)
        G_rot = minimize_envelope_objective(O.T @ M1 @ O, O.T @ M2 @ O, 2)
        assert subspace_distance(O @ G_rot, G) < 1e-6

    def test_u_edges(self, rng):
        M1, M2 = _rand_pd(rng, 4), _rand_pd(rng, 4)
        assert minimize_envelope_objective(M1, M2, 0).shape == (4, 0)
        G = minimize_envelope_objective(M1, M2, 4)
        assert subspace_distance(G, np.eye(4)) < 1e-12

    def test_bad_u_raises(self, rng):
        M = _rand_pd(rng, 4)
        with pytest.raises(DimensionMismatch):
            minimize_envelope_objective(M, M, 5)

    def test_no_convergence_carries_best_iterate(self, rng):
        M1, M2 = _rand_pd(rng, 6), _rand_pd(rng, 6)
        opts = OptimizerOptions(tol=0.0, max_sweeps=1, n_random=0)
        with pytest.raises(NoConvergence) as exc:
            minimize_envelope_objective(M1, M2, 2, opts)
        best = exc.value.best
        assert best.shape == (6, 2)
        assert is_semi_orthogonal(best)
        assert exc.value.objective == pytest.approx(
            envelope_objective(best, M1, M2))

    def test_deterministic_across_calls(self, rng):
        M1, M2 = _rand_pd(rng, 6), _rand_pd(rng, 6)
        G1 = minimize_envelope_objective(M1, M2, 2)
        G2 = minimize_envelope_objective(M1, M2, 2)
        np.testing.assert_array_equal(G1, G2)

    def test_reducing_subspace_recovered_exactly(self, rng):
        # when M1 and M2 share an eigenbasis the minimizer is analytic:
        # pick the u coordinates with the smallest log-eig sums
        vals1 = np.array([0.5, 3.0, 1.0, 8.0])
        vals2 = np.array([2.0, 0.1, 1.0, 0.05])
        Q = np.linalg.qr(rng.standard_normal((4, 4)))[0]
        M1 = (Q * vals1) @ Q.T
        M2 = (Q * vals2) @ Q.T
        score = np.log(vals1) + np.log(vals2)
        target = Q[:, np.argsort(score)[:2]]
        G = minimize_envelope_objective(M1, M2, 2)
        assert subspace_distance(G, target) < 1e-6

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=15, deadline=None)
    def test_not_beaten_by_random_points(self, seed):
        rng = np.random.default_rng(seed)
        M1, M2 = _rand_pd(rng, 5), _rand_pd(rng, 5)
        G = minimize_envelope_objective(M1, M2, 2)
        f = envelope_objective(G, M1, M2)
        for _ in range(10):
            H = _rand_orth(rng, 5, 2)
            assert f <= envelope_objective(H, M1, M2) + 1e-9

    def test_info_dict_populated(self, rng):
        M1, M2 = _rand_pd(rng, 4), _rand_pd(rng, 4)
        info = {}
        minimize_envelope_objective(M1, M2, 1, info=info)
        assert info["backend"] in ("python", "cython")
        assert "objective" in info and not info["jittered"]


@pytest.mark.skipif(_sweep_cy is None, reason="compiled backend unavailable")
class TestBackends:
    def test_sweep_agreement(self):
        rng = np.random.default_rng(7)
        for r, u in ((5, 2), (12, 4), (20, 6)):
            A = rng.standard_normal((r, 2 * r))
            M1 = A @ A.T / (2 * r)
            B = rng.standard_normal((r, 2 * r))
            M2 = np.linalg.inv(B @ B.T / (2 * r))
            G = np.linalg.qr(rng.standard_normal((r, u)))[0]
            Gp = np.array(G, order="C")
            Gc = np.array(G, order="C")
            for _ in range(10):
                _sweep_py.sweep(M1, M2, Gp, 40, 1e-12)
                _sweep_cy.sweep(M1, M2, Gc, 40, 1e-12)
            assert np.abs(Gp - Gc).max() < 1e-6
            assert subspace_distance(Gp, Gc) < 1e-8

    def test_backend_reported(self):
        assert kernels.BACKEND in ("python", "cython")

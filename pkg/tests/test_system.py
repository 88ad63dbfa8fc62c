import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from econlq import matkit
from econlq.errors import InvalidDimensions, NotStabilizable, NotStabilizing, NotSymmetric
from econlq.system import (
    LtiSystem,
    StageCost,
    controllability_rank,
    default_prestabilizer,
    is_stabilizable,
    kalman_decompose,
    prestabilize,
)

seeds = st.integers(0, 2**32 - 1)


def _structured(rng, n, n_c, m):
    """Plant with a known ``n_c``-dimensional reachable subspace, hidden by a random rotation."""
    n_u = n - n_c
    T, _ = np.linalg.qr(rng.standard_normal((n, n)))
    At = rng.standard_normal((n, n))
    At[:n_u, n_u:] = 0.0
    Bt = np.zeros((n, m))
    Bt[n_u:] = rng.standard_normal((n_c, m))
    return LtiSystem(T @ At @ T.T, T @ Bt), At[:n_u, :n_u]


class TestContainers:
    def test_rejects_non_square_A(self):
        with pytest.raises(InvalidDimensions):
            LtiSystem(np.ones((2, 3)), np.ones((2, 1)))

    def test_rejects_B_row_mismatch(self):
        with pytest.raises(InvalidDimensions):
            LtiSystem(np.eye(2), np.ones((3, 1)))

    def test_arrays_are_read_only(self):
        sys = LtiSystem(np.eye(2), np.ones((2, 1)))
        with pytest.raises(ValueError):
            sys.A[0, 0] = 5.0

    def test_cost_defaults_S_to_zero(self):
        c = StageCost(np.eye(3), np.eye(2))
        assert c.S.shape == (2, 3) and not c.S.any()

    def test_cost_rejects_asymmetric_Q(self):
        with pytest.raises(NotSymmetric):
            StageCost(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(1))

    def test_cost_rejects_wrong_S(self):
        with pytest.raises(InvalidDimensions):
            StageCost(np.eye(2), np.eye(1), np.ones((2, 1)))

    def test_stage_matches_block_form(self, rng):
        Q, R, S = np.eye(2), 2 * np.eye(1), np.array([[0.3, -0.1]])
        c = StageCost(Q, R, S)
        x, u = rng.standard_normal(2), rng.standard_normal(1)
        z = np.concatenate([x, u])
        assert np.isclose(c.stage(x, u), z @ c.H @ z)


class TestControllability:
    def test_unstable_example_pair(self):
        sys = LtiSystem(np.array([[2.0, 1.0], [0.0, 1.0]]), np.array([[2.0, 0.0], [1.0, 1.0]]))
        C = np.hstack([sys.B, sys.A @ sys.B])
        assert controllability_rank(sys) == np.linalg.matrix_rank(C) == 2

    def test_zero_input(self):
        assert controllability_rank(LtiSystem(np.eye(2), np.zeros((2, 1)))) == 0

    def test_shift_register(self):
        sys = LtiSystem(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]))
        assert controllability_rank(sys) == 2

    @given(seeds, st.integers(1, 5))
    def test_rank_invariant_under_similarity(self, seed, n):
        rng = np.random.default_rng(seed)
        n_c = int(rng.integers(0, n + 1))
        sys, _ = _structured(rng, n, n_c, int(rng.integers(1, 3)))
        T = rng.standard_normal((n, n)) + 3 * np.eye(n)
        moved = LtiSystem(np.linalg.solve(T, sys.A @ T), np.linalg.solve(T, sys.B))
        assert controllability_rank(sys) == controllability_rank(moved)


class TestKalman:
    def test_controllable_pair_keeps_everything(self):
        sys = LtiSystem(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]))
        kd = kalman_decompose(sys)
        assert kd.n_c == 2 and kd.controllable and kd.stabilizable
        assert np.allclose(kd.A22, kd.T.T @ sys.A @ kd.T)

    def test_stable_uncontrollable_mode(self):
        kd = kalman_decompose(LtiSystem(np.diag([0.5, 2.0]), np.array([[0.0], [1.0]])))
        assert kd.n_c == 1 and kd.stabilizable
        assert np.allclose(kd.uncontrollable_eigs, [0.5])

    def test_unstable_uncontrollable_mode(self):
        kd = kalman_decompose(LtiSystem(np.diag([2.0, 0.5]), np.array([[0.0], [1.0]])))
        assert kd.n_c == 1 and not kd.stabilizable
        assert np.allclose(np.abs(kd.uncontrollable_eigs), [2.0])

    def test_marginal_mode_warns(self):
        with pytest.warns(RuntimeWarning):
            kd = kalman_decompose(LtiSystem(np.diag([1.0, 0.5]), np.array([[0.0], [1.0]])))
        assert not kd.stabilizable

    @given(seeds, st.integers(1, 6), st.integers(1, 3))
    def test_block_structure(self, seed, n, m):
        rng = np.random.default_rng(seed)
        n_c = int(rng.integers(0, n + 1))
        sys, A11 = _structured(rng, n, n_c, m)
        kd = kalman_decompose(sys)
        assert kd.n_c == n_c
        T = kd.T
        assert np.allclose(T.T @ T, np.eye(n), atol=1e-10)
        At, Bt = T.T @ sys.A @ T, T.T @ sys.B
        n_u = kd.n_u
        assert np.linalg.norm(At[:n_u, n_u:]) <= 1e-8 * np.linalg.norm(sys.A)
        assert np.linalg.norm(Bt[:n_u]) <= 1e-8 * max(np.linalg.norm(sys.B), 1e-300)
        assert controllability_rank(LtiSystem(kd.A22, kd.B2)) == n_c
        # the uncontrollable spectrum is a similarity invariant
        assert np.allclose(np.sort(np.abs(kd.uncontrollable_eigs)), np.sort(np.abs(np.linalg.eigvals(A11))), atol=1e-6)


class TestPrestabilize:
    def test_double_integrator_cost_unchanged(self, double_integrator):
        sys, cost = double_integrator
        pre = prestabilize(sys, cost, 0.5 * np.eye(2))
        assert np.array_equal(pre.cost.Q, cost.Q) and not pre.cost.S.any()
        assert np.allclose(pre.system.A, sys.A - 0.5 * sys.B)

    def test_zero_feedback_is_identity(self):
        sys = LtiSystem(np.diag([0.5, 0.2]), np.eye(2))
        cost = StageCost(np.eye(2), np.eye(2), 0.1 * np.ones((2, 2)))
        pre = prestabilize(sys, cost, np.zeros((2, 2)))
        assert np.array_equal(pre.system.A, sys.A)
        assert np.array_equal(pre.cost.Q, cost.Q) and np.array_equal(pre.cost.S, cost.S)

    def test_rejects_non_stabilizing_feedback(self, bg_nonzero):
        sys, cost = bg_nonzero
        with pytest.raises(NotStabilizing):
            prestabilize(sys, cost, np.zeros((2, 2)))

    def test_rejects_wrong_shape(self, bg_nonzero):
        sys, cost = bg_nonzero
        with pytest.raises(InvalidDimensions):
            prestabilize(sys, cost, np.zeros((1, 2)))

    def test_expansion_on_2x2(self):
        # u = -Kx + w expanded by hand for scalar-entry checks
        sys = LtiSystem(np.array([[1.2, 0.3], [0.0, 0.8]]), np.array([[1.0, 0.0], [0.5, 1.0]]))
        Q = np.array([[2.0, 0.5], [0.5, 1.0]])
        R = np.array([[1.0, 0.2], [0.2, 3.0]])
        S = np.array([[0.1, -0.4], [0.7, 0.0]])
        K = np.array([[0.9, 0.2], [0.1, 0.3]])
        pre = prestabilize(sys, StageCost(Q, R, S), K)
        Qh = Q - S.T @ K - K.T @ S + K.T @ R @ K
        assert np.allclose(pre.cost.Q, 0.5 * (Qh + Qh.T))
        assert np.allclose(pre.cost.S, S - R @ K)
        assert np.array_equal(pre.cost.R, R)

    @given(seeds, st.integers(1, 4), st.integers(1, 3))
    def test_stage_cost_preserved_along_trajectories(self, seed, n, m):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, m))
        sys = LtiSystem(A, B)
        if controllability_rank(sys) < n:
            return
        K = default_prestabilizer(sys)
        H = rng.standard_normal((n + m, n + m))
        H = H + H.T
        cost = StageCost(H[:n, :n], H[n:, n:], H[n:, :n])
        pre = prestabilize(sys, cost, K)
        x = rng.standard_normal(n)
        for _ in range(10):
            w = rng.standard_normal(m)
            u = -K @ x + w
            a, b = cost.stage(x, u), pre.cost.stage(x, w)
            assert abs(a - b) <= 1e-9 * max(1.0, abs(a))
            assert np.allclose(sys.step(x, u), pre.system.step(x, w))
            x = sys.step(x, u)


class TestDefaultPrestabilizer:
    def test_keeps_zero_for_stable_nonsingular(self):
        sys = LtiSystem(np.diag([0.5, -0.3]), np.eye(2))
        assert not default_prestabilizer(sys).any()

    def test_unstable_example(self, bg_nonzero):
        sys, _ = bg_nonzero
        F = default_prestabilizer(sys)
        Acl = sys.A - sys.B @ F
        assert matkit.spectral_radius(Acl) < 1 and abs(np.linalg.det(Acl)) > 1e-8

    def test_singular_stable_A_is_made_nonsingular(self):
        sys = LtiSystem(np.diag([0.0, 0.5]), np.eye(2))
        F = default_prestabilizer(sys)
        Acl = sys.A - sys.B @ F
        assert matkit.spectral_radius(Acl) < 1 and abs(np.linalg.det(Acl)) > 1e-8

    def test_not_stabilizable(self):
        with pytest.raises(NotStabilizable):
            default_prestabilizer(LtiSystem(np.diag([2.0, 0.5]), np.array([[0.0], [1.0]])))

    def test_stabilizable_predicate(self):
        assert is_stabilizable(LtiSystem(np.diag([0.5, 2.0]), np.array([[0.0], [1.0]])))

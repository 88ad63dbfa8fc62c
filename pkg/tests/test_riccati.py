import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from instances import cgdare_instance, pencil_solution, rand_sym, scalar_roots, strict_instance

from econlq import matkit
from econlq.errors import (
    InvalidDimensions,
    NoStabilizingSolution,
    NotStabilizable,
    NotSymmetric,
    SingularA,
)
from econlq.riccati import (
    Classification,
    build_reverse,
    cgdare_projector,
    cgdare_residual,
    classify_closed_loop,
    iterate_to_fixed_point,
    kernel_condition,
    newton_refine,
    rcgdare_solve_stabilizing,
    rdare_residual,
    rdare_solve_stabilizing,
    riccati_recursion,
    rotate_cost,
    solve_cgdare,
    structural_projector,
)
from econlq.system import LtiSystem, StageCost, prestabilize

seeds = st.integers(0, 2**32 - 1)
G_HALF = 0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]])


def scalar_problem(a, b, q, r):
    return LtiSystem([[a]], [[b]]), StageCost([[q]], [[r]])


class TestScalarOracle:
    @given(
        st.floats(0.2, 3.0).map(lambda v: v * np.random.default_rng(int(v * 1e6)).choice([-1, 1])),
        st.floats(0.2, 3.0),
        st.floats(0.1, 5.0),
        st.floats(0.1, 5.0),
    )
    def test_both_roots(self, a, b, q, r):
        sys, cost = scalar_problem(a, b, q, r)
        hi, lo = scalar_roots(a, b, q, r)
        zero = np.zeros((1, 1))
        ps = rdare_solve_stabilizing(sys, cost, zero)
        assert abs(ps.P[0, 0] - hi) <= 1e-9 * (1 + abs(hi))
        assert ps.classification is Classification.STABILIZING and ps.solves_cgdare
        pb = rcgdare_solve_stabilizing(sys, cost, G=zero)
        assert abs(pb.P[0, 0] - lo) <= 1e-9 * (1 + abs(lo))
        assert pb.classification is Classification.ANTISTABILIZING
        assert pb.diagnostics["antistabilizing_crosscheck"] is True

    def test_golden_ratio_case(self):
        sys, cost = scalar_problem(2.0, 1.0, 1.0, 1.0)
        ps = rdare_solve_stabilizing(sys, cost, np.zeros((1, 1)))
        pb = rcgdare_solve_stabilizing(sys, cost)
        assert np.isclose(ps.P[0, 0], 2 + np.sqrt(5), atol=1e-10)
        assert np.isclose(pb.P[0, 0], 2 - np.sqrt(5), atol=1e-10)


class TestWorkedProblems:
    def test_unstable_plant(self, bg_nonzero):
        sys, cost = bg_nonzero
        chk = cgdare_residual(sys, cost, np.diag([0.0, 1.0]))
        assert chk.residual <= 1e-12 and chk.kernel_ok
        assert np.allclose(chk.K, [[0, 0.5], [0, 0.5]]) and np.allclose(chk.G, G_HALF)
        ps = rdare_solve_stabilizing(sys, cost, chk.G)
        assert np.allclose(ps.P, np.eye(2), atol=1e-10)
        assert np.allclose(ps.K, [[0.75, 0.5], [-0.25, 0.5]], atol=1e-10)
        # stabilizing for the regularized equation, yet not a CGDARE solution
        assert ps.stabilizing and not ps.solves_cgdare
        assert np.isclose(ps.residual, 1.0)

    def test_unstable_plant_projector_source(self, bg_nonzero):
        sys, cost = bg_nonzero
        G, source = cgdare_projector(sys, cost)
        assert source == "cgdare" and np.allclose(G, G_HALF)
        # the structural projector ignores the state weight and sees no dead input
        assert np.allclose(structural_projector(sys, cost), 0.0)

    def test_destabilizing_inputs(self, destabilizing_inputs):
        sys, cost = destabilizing_inputs
        sol = solve_cgdare(sys, cost)
        assert np.allclose(sol.P, np.diag([0.0, 1.0]), atol=1e-10)
        assert np.allclose(sol.K, [[0, 0.5], [0, 0.5]], atol=1e-10)
        assert sol.classification is Classification.STABILIZING
        assert abs(sol.closed_loop_spectral_radius - 0.9) <= 1e-9

    def test_double_integrator_after_prestabilization(self, double_integrator):
        sys, cost = double_integrator
        pre = prestabilize(sys, cost, 0.5 * np.eye(2))
        sol = solve_cgdare(pre.system, pre.cost)
        assert np.allclose(sol.K, [[-0.25, 0.25], [-0.25, 0.25]], atol=1e-10)
        reg = rdare_solve_stabilizing(pre.system, pre.cost, sol.G)
        assert np.allclose(reg.P, np.diag([0.0, 1.0]), atol=1e-8) and reg.solves_cgdare


class TestResiduals:
    @given(seeds, st.integers(1, 4), st.integers(1, 4))
    def test_constructed_solution_passes(self, seed, n, m):
        inst = cgdare_instance(np.random.default_rng(seed), n, m, psd=False)
        chk = cgdare_residual(inst.system, inst.cost, inst.P)
        assert chk.kernel_ok and chk.residual <= 1e-9 * (1 + matkit.frob(inst.P))
        assert np.allclose(chk.K, inst.K, atol=1e-8 * (1 + matkit.frob(inst.K)))
        assert np.allclose(chk.G, inst.G, atol=1e-9)

    def test_kernel_condition_failure_is_detected(self):
        R_P = np.diag([1.0, 0.0])
        assert kernel_condition(R_P, np.array([[1.0], [0.0]]))
        assert not kernel_condition(R_P, np.array([[0.0], [1.0]]))

    def test_rotation_blocks(self, rng):
        A, B = rng.standard_normal((3, 3)), rng.standard_normal((3, 2))
        sys = LtiSystem(A, B)
        cost = StageCost(np.eye(3), np.eye(2), rng.standard_normal((2, 3)))
        L = rand_sym(rng, 3)
        rc = rotate_cost(sys, cost, L)
        assert np.allclose(rc.Q_P, np.eye(3) + A.T @ L @ A - L)
        assert np.allclose(rc.S_P, cost.S + B.T @ L @ A)
        assert np.allclose(rc.R_P, np.eye(2) + B.T @ L @ B)
        assert rc.H_P.shape == (5, 5)

    def test_rdare_residual_rejects_singular_weight(self, bg_nonzero):
        from econlq.errors import NumericalFailure

        sys, cost = bg_nonzero
        with pytest.raises(NumericalFailure):
            rdare_residual(sys, cost, np.diag([0.0, 1.0]), np.zeros((2, 2)))

    def test_asymmetric_P_is_rejected(self, bg_nonzero):
        sys, cost = bg_nonzero
        with pytest.raises(NotSymmetric):
            cgdare_residual(sys, cost, np.array([[0.0, 1.0], [0.0, 1.0]]))


class TestRecursion:
    @given(seeds, st.integers(1, 4), st.integers(1, 4))
    def test_solutions_are_fixed_points(self, seed, n, m):
        inst = cgdare_instance(np.random.default_rng(seed), n, m, psd=False)
        rec = riccati_recursion(inst.system, inst.cost, inst.P, 1)
        assert matkit.frob(rec.P[-1] - inst.P) <= 1e-8 * (1 + matkit.frob(inst.P))

    def test_zero_steps(self, bg_nonzero):
        sys, cost = bg_nonzero
        rec = riccati_recursion(sys, cost, np.eye(2), 0)
        assert rec.P.shape == (1, 2, 2) and rec.K.shape == (0, 2, 2)
        assert np.array_equal(rec.P[0], np.eye(2))

    def test_negative_steps(self, bg_nonzero):
        with pytest.raises(ValueError):
            riccati_recursion(*bg_nonzero, np.eye(2), -1)

    def test_iterates_shapes_and_kernel_tracking(self, bg_nonzero):
        sys, cost = bg_nonzero
        rec = riccati_recursion(sys, cost, np.diag([0.0, 1.0]), 5)
        assert rec.P.shape == (6, 2, 2) and rec.K.shape == (5, 2, 2) and rec.G.shape == (6, 2, 2)
        assert rec.kernel_constant and not rec.diverged
        assert list(rec)  # iterable over (P, K, G) triples

    def test_value_iteration_from_zero_on_strict_instance(self, rng):
        inst = strict_instance(rng, 3, 2)
        sol = solve_cgdare(inst.system, inst.cost, Lambda=inst.Lambda)
        assert sol.solves_cgdare
        assert np.allclose(sol.P, inst.P_s, atol=1e-7 * (1 + matkit.frob(inst.P_s)))

    def test_fixed_point_iteration_reports_steps(self, destabilizing_inputs):
        P, K, it, changes = iterate_to_fixed_point(*destabilizing_inputs, np.zeros((2, 2)))
        assert np.allclose(P, np.diag([0.0, 1.0])) and it >= 1


class TestSolvers:
    def test_zero_dynamics(self):
        sys = LtiSystem(np.zeros((2, 2)), np.eye(2))
        cost = StageCost(np.eye(2), np.eye(2))
        ps = rdare_solve_stabilizing(sys, cost, np.zeros((2, 2)))
        assert np.allclose(ps.P, np.eye(2)) and np.allclose(ps.K, 0.0)
        assert np.allclose(solve_cgdare(sys, cost).P, np.eye(2))
        # the reverse route needs pre-stabilization, and there is no antistabilizing solution
        with pytest.raises(NoStabilizingSolution) as info:
            rcgdare_solve_stabilizing(sys, cost)
        assert info.value.solution.diagnostics["prestabilized"]

    def test_build_reverse_formulas(self, rng):
        A = rng.standard_normal((3, 3)) + 2 * np.eye(3)
        B = rng.standard_normal((3, 2))
        Q, R, S = np.eye(3), 2 * np.eye(2), rng.standard_normal((2, 3))
        rev = build_reverse(LtiSystem(A, B), StageCost(Q, R, S))
        Ai = np.linalg.inv(A)
        Bb = Ai @ B
        assert np.allclose(rev.A_bar, Ai) and np.allclose(rev.B_bar, Bb)
        assert np.allclose(rev.Q_bar, -Ai.T @ Q @ Ai)
        assert np.allclose(rev.S_bar, S @ Ai - Bb.T @ Q @ Ai)
        assert np.allclose(rev.R_bar, -R + S @ Bb + Bb.T @ S.T - Bb.T @ Q @ Bb)

    def test_build_reverse_singular(self):
        with pytest.raises(SingularA):
            build_reverse(LtiSystem(np.diag([1.0, 0.0]), np.eye(2)), StageCost(np.eye(2), np.eye(2)))

    @given(seeds, st.integers(1, 4), st.integers(1, 4))
    def test_forward_solutions_solve_the_reverse_equation(self, seed, n, m):
        inst = cgdare_instance(np.random.default_rng(seed), n, m, bg_zero=True, min_sv=0.2)
        rev = build_reverse(inst.system, inst.cost)
        chk = cgdare_residual(rev.system, rev.cost(), inst.P)
        assert chk.residual <= 1e-8 * (1 + matkit.frob(inst.P)) ** 2

    def test_not_stabilizable(self):
        sys = LtiSystem(np.diag([2.0, 0.5]), np.array([[0.0], [1.0]]))
        with pytest.raises(NotStabilizable):
            rdare_solve_stabilizing(sys, StageCost(np.eye(2), np.eye(1)), np.zeros((1, 1)))

    def test_projector_shape_checked(self, bg_nonzero):
        with pytest.raises(InvalidDimensions):
            rdare_solve_stabilizing(*bg_nonzero, np.zeros((3, 3)))

    def test_singular_plant_has_no_antistabilizing_solution(self):
        A = np.array([[0.0, 1.0], [0.0, 1.5]])
        sys, cost = LtiSystem(A, np.eye(2)), StageCost(np.eye(2), np.eye(2))
        # the zero eigenvalue of A pairs with an infinite one; nothing to select
        assert pencil_solution(A, np.eye(2), np.eye(2), np.eye(2), np.zeros((2, 2)), stable=False) is None
        with pytest.raises(NoStabilizingSolution) as info:
            rcgdare_solve_stabilizing(sys, cost)
        assert info.value.solution.diagnostics["prestabilized"]

    def test_prestabilization_leaves_the_solution_set_alone(self, rng):
        inst = strict_instance(rng, 3, 2)
        F = rng.standard_normal((2, 3)) * 0.1
        sys = inst.system
        if not matkit.is_schur(sys.A - sys.B @ F):
            F = rdare_solve_stabilizing(sys, inst.cost, inst.G).K
        pre = prestabilize(sys, inst.cost, F)
        for P in (inst.P_s, inst.P_bar_s):
            chk = cgdare_residual(pre.system, pre.cost, P)
            assert chk.kernel_ok and chk.residual <= 1e-8 * (1 + matkit.frob(P))

    @given(seeds, st.integers(1, 4), st.integers(1, 4))
    def test_sandwich_on_strict_instances(self, seed, n, m):
        inst = strict_instance(np.random.default_rng(seed), n, m)
        ps = rdare_solve_stabilizing(inst.system, inst.cost, inst.G)
        pb = rcgdare_solve_stabilizing(inst.system, inst.cost, G=inst.G)
        assert ps.classification is Classification.STABILIZING
        assert pb.classification is Classification.ANTISTABILIZING
        assert np.allclose(ps.P, inst.P_s, atol=1e-8 * (1 + matkit.frob(inst.P_s)))
        assert np.allclose(pb.P, inst.P_bar_s, atol=1e-8 * (1 + matkit.frob(inst.P_bar_s)))
        assert matkit.eigen_margin(ps.P - pb.P)[0] > 0

    def test_newton_refine_keeps_exact_solutions(self, rng):
        inst = strict_instance(rng, 3, 2)
        P = newton_refine(inst.system, inst.cost, inst.P_s, inst.G)
        assert np.allclose(P, inst.P_s, atol=1e-10 * (1 + matkit.frob(inst.P_s)))

    def test_newton_refine_polishes_a_perturbed_solution(self, rng):
        inst = strict_instance(rng, 3, 2)
        P = newton_refine(inst.system, inst.cost, inst.P_s + 1e-5 * np.eye(3), inst.G)
        assert matkit.frob(P - inst.P_s) <= 1e-10 * (1 + matkit.frob(inst.P_s))


class TestClassification:
    def test_labels(self):
        sys = LtiSystem(np.diag([2.0, 3.0]), np.eye(2))
        assert classify_closed_loop(sys, np.diag([1.5, 2.5]))[0] is Classification.STABILIZING
        assert classify_closed_loop(sys, np.zeros((2, 2)))[0] is Classification.ANTISTABILIZING
        assert classify_closed_loop(sys, np.diag([1.5, 0.0]))[0] is Classification.OTHER

    def test_unit_circle_is_other(self):
        sys = LtiSystem(np.eye(1), np.eye(1))
        assert classify_closed_loop(sys, np.zeros((1, 1)))[0] is Classification.OTHER

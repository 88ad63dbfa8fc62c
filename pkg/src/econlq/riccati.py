"""Constrained generalized, regularized and reverse discrete Riccati equations.

Notation follows the rotated-cost shorthand: for a symmetric ``P``

    Q_P = Q + A'PA - P,   S_P = S + B'PA,   R_P = R + B'PB.

A CGDARE solution satisfies ``Q_P = S_P' R_P^+ S_P`` together with
``ker R_P ⊆ ker S_P'``; the rDARE replaces ``R_P^+`` by ``(R_P + G)^{-1}``
where ``G`` projects onto ``ker R_P``.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg

from . import matkit
from ._backend import kernels
from .errors import (
    Diverged,
    InvalidDimensions,
    NoStabilizingSolution,
    NotConverged,
    NotStabilizable,
    NumericalFailure,
    SingularA,
)
from .matkit import DEFAULT_TOL
from .system import LtiSystem, StageCost, default_prestabilizer, is_stabilizable, prestabilize

# largest relative change newton_refine may make to a reverse-route solution
MAX_POLISH_MOVE = 1e-4
DIVERGENCE_LIMIT = 1e12
KERNEL_REL_TOL = 1e-8


class Classification(str, Enum):
    STABILIZING = "Stabilizing"
    ANTISTABILIZING = "Antistabilizing"
    OTHER = "Other"


@dataclass(frozen=True)
class RotatedCost:
    Q_P: np.ndarray
    S_P: np.ndarray
    R_P: np.ndarray
    R_scale: float = None  # ||R|| + ||B'PB||, the rank floor for R_P

    @property
    def H_P(self):
        return np.block([[self.Q_P, self.S_P.T], [self.S_P, self.R_P]])

    def as_stage_cost(self, tol=DEFAULT_TOL):
        return StageCost(self.Q_P, self.R_P, self.S_P, tol)


@dataclass
class RiccatiSolution:
    """A symmetric Riccati solution with its feedback and diagnostics.

    ``residual`` and ``kernel_ok`` always refer to the CGDARE, whichever
    equation produced ``P``; ``rdare_residual`` is the defect of the
    regularized equation for the projector ``G``.
    """

    P: np.ndarray
    K: np.ndarray
    G: np.ndarray
    residual: float
    kernel_ok: bool
    classification: Classification
    closed_loop_spectral_radius: float
    equation: str = "cgdare"
    rdare_residual: float = float("nan")
    iterations: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def solves_cgdare(self):
        return self.kernel_ok and self.residual <= 1e-8 * (1.0 + matkit.frob(self.P))

    @property
    def stabilizing(self):
        return self.classification is Classification.STABILIZING


@dataclass(frozen=True)
class ReverseProblem:
    """Time-reversed problem data built from ``A^{-1}``."""

    A_bar: np.ndarray
    B_bar: np.ndarray
    Q_bar: np.ndarray
    S_bar: np.ndarray
    R_bar: np.ndarray

    @property
    def H_bar(self):
        return np.block([[self.Q_bar, self.S_bar.T], [self.S_bar, self.R_bar]])

    @property
    def system(self):
        return LtiSystem(self.A_bar, self.B_bar)

    def cost(self, tol=DEFAULT_TOL):
        return StageCost(self.Q_bar, self.R_bar, self.S_bar, tol)


class CgdareCheck(tuple):
    """``(residual, K, G, kernel_ok)``; fields also reachable by name."""

    __slots__ = ()

    def __new__(cls, residual, K, G, kernel_ok):
        return super().__new__(cls, (residual, K, G, kernel_ok))

    residual = property(lambda self: self[0])
    K = property(lambda self: self[1])
    G = property(lambda self: self[2])
    kernel_ok = property(lambda self: self[3])


def _check_problem(sys, cost):
    cost.check_against(sys)


def rotate_cost(sys, cost, Lambda):
    """Blocks of ``H_Lambda``: ``Q + A'LA - L``, ``S + B'LA``, ``R + B'LB``."""
    _check_problem(sys, cost)
    L = matkit.as_matrix(Lambda, "Lambda")
    if L.shape != (sys.n, sys.n):
        raise InvalidDimensions(f"Lambda must be {sys.n}x{sys.n}, got {L.shape}")
    A, B = sys.A, sys.B
    Q_L = matkit.symmetrize(cost.Q + A.T @ L @ A - L)
    S_L = cost.S + B.T @ L @ A
    BLB = B.T @ L @ B
    R_L = matkit.symmetrize(cost.R + BLB)
    return RotatedCost(Q_L, S_L, R_L, matkit.frob(cost.R) + matkit.frob(BLB))


def kernel_condition(R_P, S_P, tol=DEFAULT_TOL, scale=None):
    """``ker R_P ⊆ ker S_P'`` up to the relative tolerance used throughout."""
    Z = matkit.null_space_basis(R_P, tol, scale)
    if Z.shape[1] == 0:
        return True
    return matkit.frob(S_P.T @ Z) <= KERNEL_REL_TOL * (1.0 + matkit.frob(S_P))


def cgdare_residual(sys, cost, P, tol=DEFAULT_TOL):
    """Defect of the CGDARE at ``P``.

    Returns ``(residual, K, G, kernel_ok)`` with ``K = R_P^+ S_P``,
    ``G = I - R_P^+ R_P`` and ``residual = ||Q_P - S_P' K||_F``.
    """
    P = matkit.check_symmetric(P, tol, "P")
    rc = rotate_cost(sys, cost, P)
    Rp = matkit.pseudo_inverse(rc.R_P, tol, rc.R_scale)
    K = Rp @ rc.S_P
    G = matkit.kernel_projector(rc.R_P, tol, rc.R_scale)
    residual = matkit.frob(rc.Q_P - rc.S_P.T @ K)
    return CgdareCheck(residual, K, G, kernel_condition(rc.R_P, rc.S_P, tol, rc.R_scale))


def _kernel_of_R_P(sys, cost, P, tol):
    BPB = sys.B.T @ P @ sys.B
    scale = matkit.frob(cost.R) + matkit.frob(BPB)
    return matkit.kernel_projector(matkit.symmetrize(cost.R + BPB), tol, scale)


def rdare_residual(sys, cost, P, G, tol=DEFAULT_TOL):
    """``(||Q_P - S_P'(R_P + G)^{-1} S_P||_F, K)``; raises if ``R_P + G`` is singular."""
    rc = rotate_cost(sys, cost, P)
    Rg = rc.R_P + G
    if sys.m and not np.linalg.matrix_rank(Rg) == sys.m:
        raise NumericalFailure("R_P + G is singular")
    K = np.linalg.solve(Rg, rc.S_P) if sys.m else np.zeros((0, sys.n))
    return matkit.frob(rc.Q_P - rc.S_P.T @ K), K


def structural_projector(sys, cost, tol=DEFAULT_TOL):
    """Projector onto input directions with no effect at all: ``ker [B; R; S']``.

    Whenever ``BG = 0`` holds at a CGDARE solution with ``R_P >= 0`` (in
    particular under strict pre-dissipativity) this is exactly ``G``.
    """
    M = np.vstack([sys.B, cost.R, cost.S.T])
    return matkit.kernel_projector(M, tol)


def classify_closed_loop(sys, K, tol=DEFAULT_TOL):
    lam = matkit.eigenvalues(sys.A - sys.B @ K)
    if lam.size == 0:
        return Classification.STABILIZING, 0.0
    mags = np.abs(lam)
    rho = float(mags.max())
    if rho < 1.0 - tol.spectral_margin:
        return Classification.STABILIZING, rho
    if mags.min() > 1.0 + tol.spectral_margin:
        return Classification.ANTISTABILIZING, rho
    return Classification.OTHER, rho


def _solution_from_P(sys, cost, P, G, tol, equation, iterations=0, diagnostics=None):
    P = matkit.symmetrize(P)
    residual, K_pinv, _, kernel_ok = cgdare_residual(sys, cost, P, tol)
    try:
        rres, K = rdare_residual(sys, cost, P, G, tol)
    except NumericalFailure:
        rres, K = float("nan"), K_pinv
    cls, rho = classify_closed_loop(sys, K, tol)
    return RiccatiSolution(
        P=P,
        K=K,
        G=np.array(G, dtype=float),
        residual=residual,
        kernel_ok=kernel_ok,
        classification=cls,
        closed_loop_spectral_radius=rho,
        equation=equation,
        rdare_residual=rres,
        iterations=iterations,
        diagnostics=dict(diagnostics or {}),
    )


def _rdare_map(sys, cost, P, G):
    rc = rotate_cost(sys, cost, P)
    K = np.linalg.solve(rc.R_P + G, rc.S_P) if sys.m else np.zeros((0, sys.n))
    return matkit.symmetrize(rc.Q_P - rc.S_P.T @ K), K


def newton_refine(sys, cost, P, G, max_steps=4):
    """Polish a regularized-DARE solution with Newton steps.

    Each step solves ``Acl' X Acl - X = -F(P)`` for the residual ``F`` and the
    current closed loop ``Acl = A - BK``; this is well posed whenever no two
    closed-loop eigenvalues multiply to one, which covers stabilizing and
    antistabilizing solutions. A step is kept only if it lowers ``||F||``;
    iterates already at round-off level are returned untouched.
    """
    P = matkit.symmetrize(P)
    try:
        F, K = _rdare_map(sys, cost, P, G)
    except np.linalg.LinAlgError:
        return P
    res = matkit.frob(F)
    floor = 16 * np.finfo(float).eps * (1.0 + matkit.frob(P))
    for _ in range(max_steps):
        if res <= floor:
            break
        try:
            X = scipy.linalg.solve_discrete_lyapunov((sys.A - sys.B @ K).T, F)
            P_new = matkit.symmetrize(P + X)
            F_new, K_new = _rdare_map(sys, cost, P_new, G)
        except (np.linalg.LinAlgError, ValueError):
            break
        res_new = matkit.frob(F_new)
        if not np.isfinite(res_new) or res_new >= res:
            break
        P, F, K, res = P_new, F_new, K_new, res_new
    return P


def _initial_scale(sys, cost):
    return 10.0 * (1.0 + matkit.frob(cost.H)) * (1.0 + matkit.frob(sys.A) ** 2)


def rdare_solve_stabilizing(sys, cost, G, tol=DEFAULT_TOL, P0=None, prefer_sign=1):
    """Stabilizing solution of the regularized DARE with projector ``G``.

    Value iteration ``P <- Q + A'PA - S_P'(R_P + G)^{-1}S_P`` is started from
    ``P0`` if given, otherwise from ``+c I`` and ``-c I`` for a few growing
    ``c`` (order set by ``prefer_sign``) until a stabilizing limit appears.
    The limit is classified and checked against the CGDARE.
    """
    _check_problem(sys, cost)
    G = matkit.as_matrix(G, "G")
    if G.shape != (sys.m, sys.m):
        raise InvalidDimensions(f"G must be {sys.m}x{sys.m}, got {G.shape}")
    if not is_stabilizable(sys, tol):
        raise NotStabilizable("(A, B) is not stabilizable")
    Rg = cost.R + G
    if P0 is not None:
        starts = [matkit.check_symmetric(P0, tol, "P0")]
    else:
        c0 = _initial_scale(sys, cost)
        signs = (prefer_sign, -prefer_sign)
        starts = [s * c * np.eye(sys.n) for s in signs for c in (c0, 1e3 * c0)]

    last = None
    failures = []
    for start in starts:
        P, it, status = kernels.regularized_iteration(
            sys.A, sys.B, cost.Q, cost.S, Rg, start,
            tol.convergence_tol, tol.max_iterations, DIVERGENCE_LIMIT, tol.rank_rel_tol,
        )
        if status != 0:
            failures.append(status)
            continue
        P = newton_refine(sys, cost, P, G)
        sol = _solution_from_P(sys, cost, P, G, tol, "rdare", it)
        sol.diagnostics["BG_norm"] = matkit.frob(sys.B @ G)
        if sol.stabilizing:
            return sol
        last = sol
    if last is not None:
        raise NoStabilizingSolution("value iteration converged only to non-stabilizing solutions", last)
    if failures and all(s == 2 for s in failures):
        raise Diverged(f"value iteration exceeded ||P||_F > {DIVERGENCE_LIMIT:g}")
    if 1 in failures:
        raise NotConverged(f"no convergence within {tol.max_iterations} iterations")
    raise NumericalFailure("R_P + G became singular along the iteration")


def lqr_gain(sys, Q, R, tol=DEFAULT_TOL):
    """Stabilizing LQR gain for positive-definite weights."""
    cost = StageCost(Q, R, None, tol)
    return rdare_solve_stabilizing(sys, cost, np.zeros((sys.m, sys.m)), tol).K


def build_reverse(sys, cost, tol=DEFAULT_TOL):
    """Reverse-time data ``A^-1``, ``A^-1 B`` and the matching cost blocks."""
    _check_problem(sys, cost)
    A, B, Q, S, R = sys.A, sys.B, cost.Q, cost.S, cost.R
    if sys.n:
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] <= tol.rank_rel_tol * s[0] or s[0] == 0:
            raise SingularA(f"A is singular (condition number {s[0] / max(s[-1], 1e-300):.3g})")
    Ab = np.linalg.inv(A)
    Bb = Ab @ B
    Qb = -Ab.T @ Q @ Ab
    Sb = S @ Ab - Bb.T @ Q @ Ab
    Rb = -R + S @ Bb + Bb.T @ S.T - Bb.T @ Q @ Bb
    return ReverseProblem(Ab, Bb, matkit.symmetrize(Qb), Sb, matkit.symmetrize(Rb))


def rcgdare_solve_stabilizing(sys, cost, tol=DEFAULT_TOL, G=None):
    """Stabilizing solution of the reverse equation, i.e. the antistabilizing CGDARE solution.

    ``G`` defaults to :func:`structural_projector`. A singular ``A`` is first
    pre-stabilized with :func:`default_prestabilizer`; the Riccati solution
    is invariant under that substitution, so the result is reported for the
    original ``(sys, cost)`` and ``diagnostics['prestabilized']`` is set.
    """
    _check_problem(sys, cost)
    if G is None:
        G = structural_projector(sys, cost, tol)
    G = matkit.as_matrix(G, "G")
    work_sys, work_cost, F = sys, cost, None
    try:
        rev = build_reverse(sys, cost, tol)
    except SingularA:
        F = default_prestabilizer(sys, tol)
        pre = prestabilize(sys, cost, F, tol)
        work_sys, work_cost = pre.system, pre.cost
        rev = build_reverse(work_sys, work_cost, tol)
    rsys, rcost = rev.system, rev.cost(tol)
    if not is_stabilizable(rsys, tol):
        raise NotStabilizable("reverse pair (A^-1, A^-1 B) is not stabilizable")
    rsol = rdare_solve_stabilizing(rsys, rcost, G, tol, prefer_sign=-1)

    # the reverse equation is solved accurately, but mapping back multiplies
    # its error by powers of ||A^-1||; polish against the forward equation.
    # A large move means Newton left for another solution: keep the candidate.
    Pbar = newton_refine(sys, cost, rsol.P, G)
    if matkit.frob(Pbar - rsol.P) > MAX_POLISH_MOVE * (1.0 + matkit.frob(rsol.P)):
        Pbar = rsol.P
    diag = {
        "prestabilized": F is not None,
        "reverse_spectral_radius": rsol.closed_loop_spectral_radius,
        "reverse_rdare_residual": rsol.rdare_residual,
        "G_bar": _kernel_of_R_P(rsys, rcost, rsol.P, tol),
        "BG_norm": matkit.frob(sys.B @ G),
    }
    if F is not None:
        diag["prestabilizer"] = F
    sol = _solution_from_P(sys, cost, Pbar, G, tol, "rcgdare", rsol.iterations, diag)
    if not (np.isfinite(sol.rdare_residual) and sol.rdare_residual <= 1e-6 * (1.0 + matkit.frob(Pbar))):
        raise NoStabilizingSolution(
            "the reverse stabilizing solution does not solve the forward regularized equation "
            f"(residual {sol.rdare_residual:.3g})",
            sol,
        )
    # R - S A^{-1} B nonsingular: the reverse stabilizing solution must be antistabilizing
    M = work_cost.R - work_cost.S @ np.linalg.solve(work_sys.A, work_sys.B)
    if sys.m and np.linalg.matrix_rank(M) == sys.m:
        sol.diagnostics["antistabilizing_crosscheck"] = (
            sol.classification is Classification.ANTISTABILIZING
        )
    return sol


@dataclass
class RiccatiRecursion:
    """Iterates of the generalized Riccati recursion.

    ``P[k]`` is ``P_k`` (``P[0] = P0``), ``K[k]`` is ``K_{k+1}`` computed from
    ``P[k]``, and ``G[k] = I - R_{P_k}^+ R_{P_k}``.
    """

    P: np.ndarray
    K: np.ndarray
    G: np.ndarray
    kernel_constant: bool
    diverged: bool

    def __len__(self):
        return len(self.P)

    def __iter__(self):
        for k in range(len(self.P)):
            yield self.P[k], (self.K[k - 1] if k else None), self.G[k]


def riccati_recursion(sys, cost, P0, N, tol=DEFAULT_TOL):
    """Run ``N`` steps of the exact pseudo-inverse recursion from ``P0``."""
    _check_problem(sys, cost)
    P0 = matkit.check_symmetric(P0, tol, "P0")
    if int(N) < 0:
        raise ValueError("N must be non-negative")
    P, K, it, status, changes, Ps, Ks = kernels.generalized_recursion(
        sys.A, sys.B, cost.Q, cost.S, cost.R, P0, int(N),
        tol.rank_rel_tol, 0.0, DIVERGENCE_LIMIT, True,
    )
    Gs = np.array([_kernel_of_R_P(sys, cost, Pk, tol) for Pk in Ps]).reshape(len(Ps), sys.m, sys.m)
    constant = all(matkit.frob(Gs[k] - Gs[0]) <= 1e-8 for k in range(len(Gs)))
    return RiccatiRecursion(P=Ps, K=Ks, G=Gs, kernel_constant=constant, diverged=status != 0)


def iterate_to_fixed_point(sys, cost, P0, tol=DEFAULT_TOL, max_iter=None):
    """Generalized recursion from ``P0`` until stationary.

    Returns ``(P, K, iterations, kernel_changes)``; raises on divergence or
    when the iteration cap is reached.
    """
    max_iter = tol.max_iterations if max_iter is None else max_iter
    P, K, it, status, changes, _, _ = kernels.generalized_recursion(
        sys.A, sys.B, cost.Q, cost.S, cost.R, P0, int(max_iter),
        tol.rank_rel_tol, tol.convergence_tol, DIVERGENCE_LIMIT, False,
    )
    if status == 2:
        raise Diverged(f"recursion exceeded ||P||_F > {DIVERGENCE_LIMIT:g}")
    if status == 4:
        raise NumericalFailure("recursion produced non-finite values")
    if status == 1:
        raise NotConverged(f"recursion not stationary after {max_iter} steps")
    return P, K, it, changes


def solve_cgdare(sys, cost, tol=DEFAULT_TOL, Lambda=None):
    """CGDARE solution by value iteration from ``P0 = Lambda`` (default 0).

    With ``H_Lambda >= 0`` this is the rotated problem started from a zero
    terminal cost, whose limit is the optimal cost-to-go.
    """
    _check_problem(sys, cost)
    P0 = np.zeros((sys.n, sys.n)) if Lambda is None else matkit.check_symmetric(Lambda, tol, "Lambda")
    P, _, it, changes = iterate_to_fixed_point(sys, cost, P0, tol)
    chk = cgdare_residual(sys, cost, P, tol)
    sol = _solution_from_P(sys, cost, P, chk.G, tol, "cgdare", it, {"kernel_changes": changes})
    # report the pseudo-inverse gain; it is the CGDARE feedback by definition
    sol.K = chk.K
    sol.classification, sol.closed_loop_spectral_radius = classify_closed_loop(sys, chk.K, tol)
    if not sol.solves_cgdare:
        raise NumericalFailure(
            f"recursion limit does not satisfy the CGDARE (residual {chk.residual:.3g}, "
            f"kernel condition {'holds' if chk.kernel_ok else 'fails'})"
        )
    return sol


def cgdare_projector(sys, cost, tol=DEFAULT_TOL, Lambda=None):
    """``G`` from a CGDARE solution when one can be found, else the structural projector.

    Returns ``(G, source)`` with ``source`` in ``{"cgdare", "structural"}``.
    """
    try:
        return solve_cgdare(sys, cost, tol, Lambda).G, "cgdare"
    except (NumericalFailure, NotStabilizable):
        return structural_projector(sys, cost, tol), "structural"

"""Plant and stage-cost containers, controllability analysis, pre-stabilization."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import matkit
from .errors import InvalidDimensions, NotStabilizable, NotStabilizing, NumericalFailure
from .matkit import DEFAULT_TOL


@dataclass(frozen=True)
class LtiSystem:
    """Discrete-time plant ``x+ = A x + B u``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = matkit.as_matrix(self.A, "A")
        B = matkit.as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise InvalidDimensions(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise InvalidDimensions(f"B must have {A.shape[0]} rows, got {B.shape}")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def step(self, x, u):
        return self.A @ x + self.B @ u


@dataclass(frozen=True)
class StageCost:
    """Quadratic stage cost ``[x; u]' [[Q, S'], [S, R]] [x; u]``.

    ``S`` is ``m x n``. Symmetric blocks are symmetrized on construction once
    they pass the ``psd_tol`` asymmetry check.
    """

    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray = None
    tol: matkit.ToleranceConfig = field(default=DEFAULT_TOL, repr=False, compare=False)

    def __post_init__(self):
        Q = matkit.check_symmetric(self.Q, self.tol, "Q")
        R = matkit.check_symmetric(self.R, self.tol, "R")
        if self.S is None:
            S = np.zeros((R.shape[0], Q.shape[0]))
        else:
            S = matkit.as_matrix(self.S, "S")
        if S.shape != (R.shape[0], Q.shape[0]):
            raise InvalidDimensions(
                f"S must be {R.shape[0]}x{Q.shape[0]} (m x n), got {S.shape[0]}x{S.shape[1]}"
            )
        for arr in (Q, R, S):
            arr.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "S", S)

    @property
    def H(self):
        return np.block([[self.Q, self.S.T], [self.S, self.R]])

    def check_against(self, sys):
        if self.Q.shape != (sys.n, sys.n) or self.R.shape != (sys.m, sys.m):
            raise InvalidDimensions(
                f"cost blocks Q{self.Q.shape}, R{self.R.shape} do not match n={sys.n}, m={sys.m}"
            )
        return self

    def stage(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return float(x @ self.Q @ x + 2.0 * u @ self.S @ x + u @ self.R @ u)

    def regularized(self, G):
        """Cost with ``R`` replaced by ``R + G`` (the rDARE cost)."""
        return StageCost(self.Q, self.R + np.asarray(G, dtype=float), self.S, self.tol)


@dataclass(frozen=True)
class KalmanDecomposition:
    """Orthonormal controllability decomposition.

    In coordinates ``z = T' x`` the first ``n - n_c`` states are uncontrollable:
    ``T' A T = [[A11, 0], [A21, A22]]`` and ``T' B = [0; B2]``.
    """

    T: np.ndarray
    n_c: int
    A11: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    B2: np.ndarray
    stabilizable: bool
    uncontrollable_eigs: np.ndarray

    @property
    def n_u(self):
        return self.T.shape[0] - self.n_c

    @property
    def controllable(self):
        return self.n_u == 0

    @property
    def T_u(self):
        return self.T[:, : self.n_u]

    @property
    def T_c(self):
        return self.T[:, self.n_u :]


@dataclass(frozen=True)
class PreStabilizedProblem:
    K_hat: np.ndarray
    system: LtiSystem
    cost: StageCost


def controllability_matrix(sys):
    blocks = [sys.B]
    for _ in range(1, sys.n):
        blocks.append(sys.A @ blocks[-1])
    return np.hstack(blocks) if blocks else np.zeros((sys.n, 0))


def controllability_rank(sys, tol=DEFAULT_TOL):
    return matkit.numerical_rank(controllability_matrix(sys), tol)


def _controllable_basis(sys, tol):
    """Staircase orthonormal basis of the reachable subspace."""
    n = sys.n
    scale = max(matkit.frob(sys.A), matkit.frob(sys.B), 1.0)
    thr = tol.rank_rel_tol * scale * max(n, sys.m, 1)
    V = np.zeros((n, 0))
    new = sys.B
    for _ in range(n + 1):
        if new.size:
            new = new - V @ (V.T @ new)
            # second pass of Gram-Schmidt keeps the basis orthonormal to working precision
            new = new - V @ (V.T @ new)
            U, s, _ = np.linalg.svd(new, full_matrices=False)
            r = int(np.sum(s > thr))
        else:
            r = 0
        if r == 0 or V.shape[1] == n:
            break
        U = U[:, :r]
        V = np.hstack([V, U])
        new = sys.A @ U
    return V[:, :n]


def kalman_decompose(sys, tol=DEFAULT_TOL):
    """Controllability staircase with the uncontrollable block first.

    Stabilizability requires ``rho(A11) < 1 - spectral_margin``; a marginal
    uncontrollable mode is reported as not stabilizable with a warning.
    """
    Tc = _controllable_basis(sys, tol)
    n_c = Tc.shape[1]
    if n_c < sys.n:
        # complement: kernel of Tc'
        Tu = matkit.null_space_basis(Tc.T) if n_c else np.eye(sys.n)
    else:
        Tu = np.zeros((sys.n, 0))
    T = np.hstack([Tu, Tc])
    At = T.T @ sys.A @ T
    Bt = T.T @ sys.B
    n_u = sys.n - n_c
    A11 = At[:n_u, :n_u]
    eigs = matkit.eigenvalues(A11)
    rho = float(np.max(np.abs(eigs))) if eigs.size else 0.0
    stabilizable = rho < 1.0 - tol.spectral_margin
    if not stabilizable and rho < 1.0 + tol.spectral_margin:
        warnings.warn(
            f"uncontrollable mode on the unit circle (|lambda|={rho:.12g}); classified not stabilizable",
            RuntimeWarning,
            stacklevel=2,
        )
    return KalmanDecomposition(
        T=T,
        n_c=n_c,
        A11=A11,
        A21=At[n_u:, :n_u],
        A22=At[n_u:, n_u:],
        B2=Bt[n_u:],
        stabilizable=stabilizable,
        uncontrollable_eigs=eigs,
    )


def is_stabilizable(sys, tol=DEFAULT_TOL):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return kalman_decompose(sys, tol).stabilizable


def prestabilize(sys, cost, K_hat, tol=DEFAULT_TOL):
    """Substitute ``u = -K_hat x + w`` into plant and cost.

    Returns the plant ``A - B K_hat`` with cost blocks
    ``Q_hat = Q - S'K - K'S + K'RK`` and ``S_hat = S - R K`` (``R`` unchanged).
    """
    cost.check_against(sys)
    K_hat = matkit.as_matrix(K_hat, "K_hat")
    if K_hat.shape != (sys.m, sys.n):
        raise InvalidDimensions(f"K_hat must be {sys.m}x{sys.n}, got {K_hat.shape}")
    Acl = sys.A - sys.B @ K_hat
    rho = matkit.spectral_radius(Acl)
    if not rho < 1.0 - tol.spectral_margin:
        raise NotStabilizing(f"A - B K_hat has spectral radius {rho:.6g}")
    Q, R, S = cost.Q, cost.R, cost.S
    Q_hat = Q - S.T @ K_hat - K_hat.T @ S + K_hat.T @ R @ K_hat
    S_hat = S - R @ K_hat
    return PreStabilizedProblem(
        K_hat=K_hat,
        system=LtiSystem(Acl, sys.B),
        cost=StageCost(matkit.symmetrize(Q_hat), R, S_hat, cost.tol),
    )


def _well_conditioned(M, tol):
    s = np.linalg.svd(M, compute_uv=False)
    return s.size == 0 or s[-1] > tol.rank_rel_tol * s[0]


def default_prestabilizer(sys, tol=DEFAULT_TOL):
    """Feedback ``F`` with ``A - B F`` Schur stable and nonsingular.

    ``F = 0`` is kept when ``A`` already qualifies. Otherwise an LQR gain
    (``Q = I``, ``R = r I``) is computed for a few weights ``r``; if the
    closed loop is singular the gain is nudged along ``pinv(B)`` until it
    is not.
    """
    # local import: riccati depends on this module
    from .riccati import lqr_gain

    if not is_stabilizable(sys, tol):
        raise NotStabilizable("(A, B) is not stabilizable")
    n, m = sys.n, sys.m
    if matkit.is_schur(sys.A, tol) and _well_conditioned(sys.A, tol):
        return np.zeros((m, n))
    Bp = matkit.pseudo_inverse(sys.B, tol)
    for r in (1.0, 0.5, 2.0, 0.25, 4.0):
        try:
            F0 = lqr_gain(sys, np.eye(n), r * np.eye(m), tol)
        except NumericalFailure:
            continue
        for delta in (0.0, 1e-2, -1e-2, 1e-1, -1e-1):
            F = F0 - delta * Bp
            Acl = sys.A - sys.B @ F
            if matkit.is_schur(Acl, tol) and _well_conditioned(Acl, tol):
                return F
    raise NumericalFailure("could not find a stabilizing feedback with nonsingular closed loop")

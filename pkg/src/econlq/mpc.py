"""Finite-horizon receding-horizon LQ control with possibly non-unique optimal inputs.

The horizon-``N`` feedback is ``u = -K_N x + G_N v`` where ``K_N`` is the
last gain of ``N`` generalized Riccati steps from the terminal cost ``P_f``
and ``G_N`` projects onto ``ker R_{P_N}``; ``v`` is free.
"""

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import matkit
from .dissipativity import Tier, certify_strict
from .errors import InvalidDimensions, NotStrictlyDissipative, NumericalFailure
from .matkit import DEFAULT_TOL
from .riccati import riccati_recursion, rotate_cost
from .system import kalman_decompose

MAX_DOUBLING_EXPONENT = 14


class VPolicy:
    """Rule producing the free input component ``v`` at step ``k``."""

    def __call__(self, k, x, m=None):
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError


class ZeroPolicy(VPolicy):
    def __init__(self, m=None):
        self.m = m

    def __call__(self, k, x, m=None):
        return np.zeros(self.m if m is None else m)

    def describe(self):
        return "zero"


class FeedbackPolicy(VPolicy):
    """``v = -L x``."""

    def __init__(self, L):
        self.L = matkit.as_matrix(L, "L")

    def __call__(self, k, x, m=None):
        return -self.L @ x

    def describe(self):
        return f"feedback L={self.L.tolist()}"


class SequencePolicy(VPolicy):
    def __init__(self, values):
        arr = np.array(values, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or not np.all(np.isfinite(arr)):
            raise ValueError("v sequence must be a finite list of equal-length vectors")
        self.values = arr

    def __call__(self, k, x, m=None):
        if k >= len(self.values):
            raise ValueError(f"v sequence has {len(self.values)} entries, step {k} requested")
        return self.values[k]

    def describe(self):
        return f"sequence of {len(self.values)}"


@dataclass
class RhConfig:
    N: int
    P_f: np.ndarray
    v_policy: VPolicy = field(default_factory=ZeroPolicy)

    def validate(self, sys, tol=DEFAULT_TOL):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"horizon N must be a positive integer, got {self.N!r}")
        P_f = matkit.check_symmetric(self.P_f, tol, "P_f")
        if P_f.shape != (sys.n, sys.n):
            raise InvalidDimensions(f"P_f must be {sys.n}x{sys.n}, got {P_f.shape}")
        if isinstance(self.v_policy, FeedbackPolicy) and self.v_policy.L.shape != (sys.m, sys.n):
            raise InvalidDimensions(f"L must be {sys.m}x{sys.n}, got {self.v_policy.L.shape}")
        if isinstance(self.v_policy, SequencePolicy) and self.v_policy.values.shape[1] != sys.m:
            raise InvalidDimensions(f"v vectors must have length {sys.m}")
        return P_f


@dataclass
class RhSolution:
    K_N: np.ndarray
    G_N: np.ndarray
    P_N: np.ndarray
    recursion: object

    def value(self, x0):
        x0 = np.asarray(x0, dtype=float)
        return float(x0 @ self.P_N @ x0)


@dataclass
class Trajectory:
    """States ``x_0..x_T``, inputs/v/stage costs for steps ``0..T-1``."""

    states: np.ndarray
    inputs: np.ndarray
    v_values: np.ndarray
    stage_costs: np.ndarray
    terminal_cost: float = 0.0

    @property
    def steps(self):
        return len(self.inputs)

    @property
    def cumulative_costs(self):
        return np.cumsum(self.stage_costs)

    @property
    def total_cost(self):
        return float(np.sum(self.stage_costs)) + self.terminal_cost

    def to_csv(self, fh=None):
        """Write ``step, x*, u*, v*, stage_cost, cumulative_cost`` rows; returns text if ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        n = self.states.shape[1]
        m = self.inputs.shape[1]
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(
            ["step"]
            + [f"x{i}" for i in range(n)]
            + [f"u{i}" for i in range(m)]
            + [f"v{i}" for i in range(m)]
            + ["stage_cost", "cumulative_cost"]
        )
        cum = self.cumulative_costs
        for k in range(self.steps):
            row = [k]
            row += [repr(float(x)) for x in self.states[k]]
            row += [repr(float(u)) for u in self.inputs[k]]
            row += [repr(float(v)) for v in self.v_values[k]]
            row += [repr(float(self.stage_costs[k])), repr(float(cum[k]))]
            writer.writerow(row)
        if fh is None:
            return out.getvalue()
        return None


@dataclass
class StabilityReport:
    horizon: int
    nominal_radius: float
    nominal_stable: bool
    BG_norm: float
    BG_zero: bool
    probes: list
    worst_probe: str
    worst_probe_radius: float
    min_stable_horizon: int
    verdict: str


@dataclass
class RotationCheck:
    V: float
    V_rotated: float
    defect: float


def solve_rhocp(sys, cost, cfg, tol=DEFAULT_TOL):
    """``N`` generalized Riccati steps from ``P_f``; returns :class:`RhSolution`."""
    cost.check_against(sys)
    P_f = cfg.validate(sys, tol)
    rec = riccati_recursion(sys, cost, P_f, int(cfg.N), tol)
    return RhSolution(K_N=rec.K[-1], G_N=rec.G[-1], P_N=rec.P[-1], recursion=rec)


def design_terminal_cost(sys, cost, margin, tol=DEFAULT_TOL, certificate=None):
    """``P_f = P_bar_s + margin I`` on the controllable block, zero on the uncontrollable blocks.

    Requires a strict pre-dissipativity certificate; ``P_bar_s`` is the
    antistabilizing solution of the controllable subsystem.
    """
    margin = float(margin)
    if not (np.isfinite(margin) and margin > 0):
        raise ValueError(f"margin must be positive, got {margin!r}")
    cert = certificate if certificate is not None else certify_strict(sys, cost, tol)
    if cert.tier is not Tier.STRICT:
        raise NotStrictlyDissipative(
            f"terminal-cost design needs strict pre-dissipativity (tier: {cert.tier.value})"
        )
    if cert.P_bar_s is None:
        reason = cert.diagnostics.get("antistabilizing_failure", "unknown failure")
        raise NumericalFailure(f"antistabilizing solution unavailable: {reason}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        kd = kalman_decompose(sys, tol)
    Tc = kd.T_c
    P_f = matkit.symmetrize(cert.P_bar_s + margin * (Tc @ Tc.T))
    gap = Tc.T @ (P_f - cert.P_bar_s) @ Tc
    if not matkit.definiteness(gap, tol).is_pd:
        raise NumericalFailure("designed terminal cost does not dominate P_bar_s")
    return P_f


def _rollout(sys, cost, gains, G, x0, policy, steps):
    n, m = sys.n, sys.m
    X = np.zeros((steps + 1, n))
    U = np.zeros((steps, m))
    Vv = np.zeros((steps, m))
    ell = np.zeros(steps)
    X[0] = x0
    for k in range(steps):
        x = X[k]
        v = np.asarray(policy(k, x, m), dtype=float).reshape(m)
        K, Gk = gains(k), G(k)
        u = -K @ x + Gk @ v
        U[k], Vv[k] = u, v
        ell[k] = cost.stage(x, u)
        X[k + 1] = sys.step(x, u)
    return X, U, Vv, ell


def _initial_state(sys, x0):
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (sys.n,):
        raise InvalidDimensions(f"x0 must have length {sys.n}, got {x0.size}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 contains NaN or Inf")
    return x0


def simulate(sys, cost, cfg, x0, steps, tol=DEFAULT_TOL, solution=None):
    """Receding-horizon closed loop ``u_k = -K_N x_k + G_N v_k`` under the original stage cost."""
    x0 = _initial_state(sys, x0)
    steps = int(steps)
    if steps < 0:
        raise ValueError("steps must be non-negative")
    sol = solution if solution is not None else solve_rhocp(sys, cost, cfg, tol)
    X, U, Vv, ell = _rollout(sys, cost, lambda k: sol.K_N, lambda k: sol.G_N, x0, cfg.v_policy, steps)
    return Trajectory(X, U, Vv, ell)


def optimal_plan(sys, cost, cfg, x0, tol=DEFAULT_TOL, v_policy=None):
    """Open-loop optimal ``N``-step plan from ``x0`` with terminal cost included.

    Step ``k`` uses the gain computed from ``P_{N-k-1}`` and the projector
    onto ``ker R_{P_{N-k-1}}``, so ``total_cost`` equals ``x0' P_N x0`` for
    every choice of ``v``.
    """
    x0 = _initial_state(sys, x0)
    P_f = cfg.validate(sys, tol)
    N = int(cfg.N)
    rec = riccati_recursion(sys, cost, P_f, N, tol)
    policy = v_policy if v_policy is not None else cfg.v_policy
    X, U, Vv, ell = _rollout(
        sys, cost, lambda k: rec.K[N - k - 1], lambda k: rec.G[N - k - 1], x0, policy, N
    )
    return Trajectory(X, U, Vv, ell, terminal_cost=float(X[-1] @ P_f @ X[-1]))


def probe_set(m, n):
    """Deterministic ``L`` probes: ``+-I`` and ``+-e_i e_j'``."""
    probes = [("+I", np.eye(m, n)), ("-I", -np.eye(m, n))]
    for i in range(m):
        for j in range(n):
            E = np.zeros((m, n))
            E[i, j] = 1.0
            probes.append((f"+e{i}e{j}'", E))
            probes.append((f"-e{i}e{j}'", -E))
    return probes


def minimal_stable_horizon(sys, cost, P_f, tol=DEFAULT_TOL):
    """First ``N`` in ``1, 2, 4, ..., 2^14`` with Schur ``A - B K_N``; ``None`` if none."""
    P = P_f
    done = 0
    for e in range(MAX_DOUBLING_EXPONENT + 1):
        N = 2**e
        rec = riccati_recursion(sys, cost, P, N - done, tol)
        if rec.diverged:
            return None
        P, done = rec.P[-1], N
        if matkit.is_schur(sys.A - sys.B @ rec.K[-1], tol):
            return N
    return None


def stability_report(sys, cost, cfg, tol=DEFAULT_TOL):
    sol = solve_rhocp(sys, cost, cfg, tol)
    Acl = sys.A - sys.B @ sol.K_N
    rho = matkit.spectral_radius(Acl)
    nominal = rho < 1.0 - tol.spectral_margin
    BG = sys.B @ sol.G_N
    bg_norm = matkit.frob(BG)
    bg_zero = bg_norm <= 1e-9 * max(1.0, matkit.frob(sys.B))
    probes = []
    for name, L in probe_set(sys.m, sys.n):
        probes.append((name, matkit.spectral_radius(Acl - BG @ L)))
    worst_name, worst = max(probes, key=lambda p: p[1]) if probes else ("none", rho)
    any_stable = any(r < 1.0 - tol.spectral_margin for _, r in probes)
    min_N = minimal_stable_horizon(sys, cost, cfg.validate(sys, tol), tol)

    if nominal and bg_zero:
        verdict = "exponentially stable"
    elif nominal and worst >= 1.0 - tol.spectral_margin:
        verdict = "stabilizing only for some optimal inputs"
    elif nominal:
        verdict = "stable for v = 0 and all probes; optimal inputs not unique (BG != 0)"
    elif not bg_zero and any_stable:
        verdict = "not stabilizing for v = 0; some optimal inputs stabilize"
    else:
        verdict = "not stabilizing"
    return StabilityReport(
        horizon=int(cfg.N),
        nominal_radius=rho,
        nominal_stable=nominal,
        BG_norm=bg_norm,
        BG_zero=bg_zero,
        probes=probes,
        worst_probe=worst_name,
        worst_probe_radius=worst,
        min_stable_horizon=min_N,
        verdict=verdict,
    )


def rotation_value_check(sys, cost, Lambda, cfg, x0, tol=DEFAULT_TOL, inputs=None):
    """Finite-horizon cost under ``(H, P_f)`` and ``(H_Lambda, P_f - Lambda)`` along one trajectory.

    The trajectory is the optimal plan of ``cfg`` unless ``inputs`` (``N x m``)
    is given. Returns ``(V, V_rotated, V - V_rotated - x0' Lambda x0)``.
    """
    x0 = _initial_state(sys, x0)
    L = matkit.check_symmetric(Lambda, tol, "Lambda")
    P_f = cfg.validate(sys, tol)
    if inputs is None:
        U = optimal_plan(sys, cost, cfg, x0, tol).inputs
    else:
        U = np.array(inputs, dtype=float).reshape(-1, sys.m)
    rc = rotate_cost(sys, cost, L)
    rot = rc.as_stage_cost(tol)
    x = x0
    V = 0.0
    Vr = 0.0
    for u in U:
        V += cost.stage(x, u)
        Vr += rot.stage(x, u)
        x = sys.step(x, u)
    V += float(x @ P_f @ x)
    Vr += float(x @ (P_f - L) @ x)
    return RotationCheck(V, Vr, V - (Vr + float(x0 @ L @ x0)))

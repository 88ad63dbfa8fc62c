"""Quadratic (strict) pre-dissipativity certificates.

A symmetric ``Lambda`` rotates the stage cost into ``H_Lambda`` (see
:func:`econlq.riccati.rotate_cost`). Three checks are offered:

* pre-dissipativity: ``H_Lambda >= 0`` for a given ``Lambda``;
* strict pre-dissipativity in Schur-complement form: ``R_Lambda >= 0`` and
  ``Q_Lambda - S_Lambda' R_Lambda^+ S_Lambda > 0``;
* strict pre-dissipativity in two-rotation form: ``H_L1 >= 0``,
  ``H_L2 >= 0`` and ``L1 - L2 > 0``.

:func:`certify_strict` builds witnesses for the last two from the
stabilizing and antistabilizing Riccati solutions instead of solving an
SDP; :func:`export_sdp` writes the SDP formulations for external solvers.
"""

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg

from . import matkit, sdpa
from .errors import EconLQError, InvalidDimensions, NotStabilizable
from .matkit import DEFAULT_TOL
from .riccati import (
    cgdare_residual,
    kernel_condition,
    rcgdare_solve_stabilizing,
    rdare_solve_stabilizing,
    rotate_cost,
    solve_cgdare,
    structural_projector,
)
from .system import LtiSystem, StageCost, kalman_decompose

MAX_HALVINGS = 40


class Tier(str, Enum):
    NONE = "None"
    PRE_DISSIPATIVE = "PreDissipative"
    STRICT = "StrictPreDissipative"

    @property
    def rank(self):
        return {"None": 0, "PreDissipative": 1, "StrictPreDissipative": 2}[self.value]


class SdpKind(str, Enum):
    TRACE = "TraceObjective"
    SLACK = "SlackObjective"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        for kind in cls:
            if key in (kind.value.lower(), kind.name.lower()):
                return kind
        raise ValueError(f"unknown SDP kind {value!r}; use 'trace' or 'slack'")


@dataclass
class CheckResult:
    """Boolean verdict with the eigenvalue margins behind it."""

    holds: bool
    margins: dict
    Lambda: np.ndarray = None

    def __bool__(self):
        return bool(self.holds)


@dataclass
class DissipativityCertificate:
    tier: Tier
    Lambda: np.ndarray = None
    Lambda1: np.ndarray = None
    Lambda2: np.ndarray = None
    witness_eigs: dict = field(default_factory=dict)
    method: str = "RiccatiPair"
    BG_zero: bool = None
    P_s: np.ndarray = None
    P_bar_s: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class SdpExport:
    kind: SdpKind
    problem: sdpa.SdpaProblem
    variables: list
    bound: float = None
    warnings: list = field(default_factory=list)

    @property
    def block_structure(self):
        return list(self.problem.block_sizes)

    @property
    def objective(self):
        return self.problem.c

    def to_text(self):
        return sdpa.dumps(self.problem)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    def unpack(self, y):
        """Split a solution vector into ``(Lambda1, Lambda2, a)``."""
        y = np.asarray(y, dtype=float)
        k = sum(name.startswith("Lambda1") for name in self.variables)
        n = int(round((np.sqrt(8 * k + 1) - 1) / 2))
        L1 = np.zeros((n, n))
        L2 = np.zeros((n, n))
        a = None
        for value, name in zip(y, self.variables):
            if name == "a":
                a = float(value)
                continue
            head, idx = name.split("[")
            i, j = (int(t) for t in idx.rstrip("]").split(","))
            target = L1 if head == "Lambda1" else L2
            target[i, j] = target[j, i] = value
        return L1, L2, a


def _margin_scale(M):
    lo, hi = matkit.eigen_margin(M)
    return lo, hi, max(1.0, abs(lo), abs(hi))


def _psd(M, tol):
    lo, hi, scale = _margin_scale(M)
    return lo >= -tol.psd_tol * scale, lo


def _pd(M, tol):
    lo, hi, scale = _margin_scale(M)
    return lo >= tol.psd_tol * scale, lo


def _as_lambda(sys, Lambda, tol):
    L = matkit.check_symmetric(Lambda, tol, "Lambda")
    if L.shape != (sys.n, sys.n):
        raise InvalidDimensions(f"Lambda must be {sys.n}x{sys.n}, got {L.shape}")
    return L


def check_pre_dissipativity(sys, cost, Lambda, tol=DEFAULT_TOL):
    """``H_Lambda >= 0``; margins are the extreme eigenvalues of ``H_Lambda``."""
    L = _as_lambda(sys, Lambda, tol)
    H = rotate_cost(sys, cost, L).H_P
    lo, hi = matkit.eigen_margin(H)
    holds = matkit.definiteness(H, tol).is_psd
    return CheckResult(holds, {"lambda_min": lo, "lambda_max": hi}, L)


def check_strict_a4(sys, cost, Lambda, tol=DEFAULT_TOL):
    """Schur-complement form of strict pre-dissipativity at ``Lambda``.

    Holds when ``R_Lambda >= 0``, ``ker R_Lambda`` lies in ``ker S_Lambda'``
    and ``Q_Lambda - S_Lambda' R_Lambda^+ S_Lambda > 0``. Without the kernel
    inclusion ``H_Lambda`` is indefinite and the complement is meaningless.
    """
    L = _as_lambda(sys, Lambda, tol)
    rc = rotate_cost(sys, cost, L)
    r_ok, r_min = _psd(rc.R_P, tol) if sys.m else (True, np.inf)
    schur = rc.Q_P - rc.S_P.T @ matkit.pseudo_inverse(rc.R_P, tol, rc.R_scale) @ rc.S_P
    s_ok, s_min = _pd(schur, tol)
    k_ok = kernel_condition(rc.R_P, rc.S_P, tol, rc.R_scale)
    margins = {"R_min": r_min, "schur_min": s_min, "kernel_ok": k_ok}
    return CheckResult(bool(r_ok and s_ok and k_ok), margins, L)


def check_strict_pair(sys, cost, Lambda1, Lambda2, tol=DEFAULT_TOL):
    """Two-rotation form: ``H_L1 >= 0``, ``H_L2 >= 0`` and ``L1 - L2 > 0``."""
    L1 = _as_lambda(sys, Lambda1, tol)
    L2 = _as_lambda(sys, Lambda2, tol)
    c1 = check_pre_dissipativity(sys, cost, L1, tol)
    c2 = check_pre_dissipativity(sys, cost, L2, tol)
    gap_ok, gap_min = _pd(L1 - L2, tol)
    margins = {
        "H_Lambda1_min": c1.margins["lambda_min"],
        "H_Lambda2_min": c2.margins["lambda_min"],
        "gap_min": gap_min,
    }
    return CheckResult(bool(c1 and c2 and gap_ok), margins)


def _lyapunov_unit(Acl):
    """``V`` with ``Acl' V Acl - V = -I``."""
    n = Acl.shape[0]
    V = scipy.linalg.solve_discrete_lyapunov(Acl.T, np.eye(n))
    return matkit.symmetrize(V)


def _shrinking_witness(check, P_s, V1):
    """First ``a = 2^-k`` for which ``check(P_s - a V1)`` holds."""
    a = 1.0
    for _ in range(MAX_HALVINGS):
        res = check(P_s - a * V1)
        if res:
            return res, a
        a *= 0.5
    return None, None


def _block_problem(sys, cost, kd):
    T = kd.T
    nu = kd.n_u
    Qt = T.T @ cost.Q @ T
    St = cost.S @ T
    bsys = LtiSystem(kd.A22, kd.B2)
    bcost = StageCost(matkit.symmetrize(Qt[nu:, nu:]), cost.R, St[:, nu:], cost.tol)
    return bsys, bcost


def certify_strict(sys, cost, tol=DEFAULT_TOL, Lambda=None):
    """Classify the problem as strictly pre-dissipative, pre-dissipative or neither.

    Strict witnesses come from the stabilizing solution ``P_s`` of the rDARE
    with the structural projector: ``Lambda = P_s - a V`` where
    ``(A - B K_s)' V (A - B K_s) - V = -I`` and ``a`` is halved until the
    Schur-complement test passes. The two-rotation witness is
    ``(P_s, P_bar_s)`` when the pair is controllable and the antistabilizing
    solution exists, otherwise ``(P_s, P_s - a V)``. Failing that, a set of
    candidate rotations (user ``Lambda``, 0, ``P_s``, ``P_bar_s`` and the
    value-iteration CGDARE solution) is screened for ``H_Lambda >= 0``.
    """
    cost.check_against(sys)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        kd = kalman_decompose(sys, tol)
    if not kd.stabilizable:
        raise NotStabilizable("(A, B) is not stabilizable")
    diag = {"n_c": kd.n_c, "controllable": kd.controllable}
    if caught:
        diag["warnings"] = [str(w.message) for w in caught]
    cert = DissipativityCertificate(Tier.NONE, diagnostics=diag)

    G0 = structural_projector(sys, cost, tol)
    ps = None
    try:
        ps = rdare_solve_stabilizing(sys, cost, G0, tol)
        cert.P_s = ps.P
        diag["P_s_residual"] = ps.residual
        if not ps.solves_cgdare:
            diag["strict_failure"] = "rDARE stabilizing solution does not solve the CGDARE"
            ps = None
    except EconLQError as exc:
        diag["strict_failure"] = f"{type(exc).__name__}: {exc}"

    if ps is not None:
        BG = sys.B @ ps.G
        Acl = sys.A - sys.B @ ps.K
        V1 = _lyapunov_unit(Acl)
        a4, a = _shrinking_witness(lambda L: check_strict_a4(sys, cost, L, tol), ps.P, V1)
        if a4 is None:
            diag["strict_failure"] = "no Schur-complement witness found along P_s - a V"
        else:
            diag["lyapunov_scale"] = a
            L1, L2, source = None, None, None
            if kd.controllable:
                try:
                    pbar = rcgdare_solve_stabilizing(sys, cost, tol, G=G0)
                    cert.P_bar_s = pbar.P
                    diag["P_bar_s_residual"] = pbar.residual
                    diag["prestabilized"] = pbar.diagnostics.get("prestabilized", False)
                    pair = check_strict_pair(sys, cost, ps.P, pbar.P, tol)
                    if pair:
                        L1, L2, source = ps.P, pbar.P, "stabilizing/antistabilizing"
                    else:
                        diag["riccati_pair_margins"] = pair.margins
                except EconLQError as exc:
                    diag["antistabilizing_failure"] = f"{type(exc).__name__}: {exc}"
            else:
                cert.P_bar_s = _block_antistabilizing(sys, cost, kd, tol, diag)
            if L1 is None:
                L1, L2, source = ps.P, a4.Lambda, "stabilizing/lyapunov-shift"
            pair = check_strict_pair(sys, cost, L1, L2, tol)
            if pair:
                cert.tier = Tier.STRICT
                cert.Lambda = a4.Lambda
                cert.Lambda1, cert.Lambda2 = L1, L2
                cert.witness_eigs = {**a4.margins, **pair.margins}
                cert.BG_zero = matkit.frob(BG) <= 1e-9 * max(1.0, matkit.frob(sys.B))
                diag["BG_norm"] = matkit.frob(BG)
                diag["pair_source"] = source
                cert.method = "RiccatiPair"
                return cert
            diag["strict_failure"] = "two-rotation check failed"

    for name, cand in _candidates(sys, cost, tol, Lambda, cert):
        res = check_pre_dissipativity(sys, cost, cand, tol)
        if res:
            cert.tier = Tier.PRE_DISSIPATIVE
            cert.Lambda = res.Lambda
            cert.witness_eigs = dict(res.margins)
            cert.method = "UserSupplied" if name == "user" else "RiccatiPair"
            diag["pre_witness"] = name
            break
    return cert


def _block_antistabilizing(sys, cost, kd, tol, diag):
    """Antistabilizing solution of the controllable block, embedded with zero free blocks."""
    bsys, bcost = _block_problem(sys, cost, kd)
    try:
        Gb = structural_projector(bsys, bcost, tol)
        pb = rcgdare_solve_stabilizing(bsys, bcost, tol, G=Gb)
    except EconLQError as exc:
        diag["antistabilizing_failure"] = f"{type(exc).__name__}: {exc}"
        return None
    nu = kd.n_u
    Z = np.zeros((sys.n, sys.n))
    Z[nu:, nu:] = pb.P
    return kd.T @ Z @ kd.T.T


def _candidates(sys, cost, tol, Lambda, cert):
    if Lambda is not None:
        yield "user", Lambda
    yield "zero", np.zeros((sys.n, sys.n))
    if cert.P_s is not None:
        yield "P_s", cert.P_s
    if cert.P_bar_s is not None:
        yield "P_bar_s", cert.P_bar_s
    try:
        sol = solve_cgdare(sys, cost, tol, Lambda)
        yield "cgdare", sol.P
    except EconLQError:
        pass
    if Lambda is not None:
        try:
            yield "cgdare_from_zero", solve_cgdare(sys, cost, tol).P
        except EconLQError:
            pass


def antistabilizing_terminal_base(sys, cost, tol=DEFAULT_TOL):
    """``P_bar_s`` on the controllable block embedded in the full state, free blocks zero.

    Returns ``(P_bar, controllable)``.
    """
    kd = kalman_decompose(sys, tol)
    if not kd.stabilizable:
        raise NotStabilizable("(A, B) is not stabilizable")
    if kd.controllable:
        G0 = structural_projector(sys, cost, tol)
        return rcgdare_solve_stabilizing(sys, cost, tol, G=G0).P, True
    bsys, bcost = _block_problem(sys, cost, kd)
    pb = rcgdare_solve_stabilizing(bsys, bcost, tol, G=structural_projector(bsys, bcost, tol))
    Z = np.zeros((sys.n, sys.n))
    Z[kd.n_u :, kd.n_u :] = pb.P
    return kd.T @ Z @ kd.T.T, False


def check_regularized(sys, cost, G, tol=DEFAULT_TOL):
    """Search ``Lambda`` with ``H_Lambda + diag(0, G) > 0``.

    The regularized cost (``R + G``) is treated as an ordinary LQ problem:
    its stabilizing solution ``P`` gives candidates ``P - a V`` with ``V``
    from the closed-loop Lyapunov equation. Returns a :class:`CheckResult`
    carrying the witness when one is found.
    """
    cost.check_against(sys)
    G = matkit.as_matrix(G, "G")
    if G.shape != (sys.m, sys.m):
        raise InvalidDimensions(f"G must be {sys.m}x{sys.m}, got {G.shape}")
    reg = cost.regularized(G)
    try:
        sol = rdare_solve_stabilizing(sys, reg, np.zeros((sys.m, sys.m)), tol)
    except EconLQError as exc:
        return CheckResult(False, {"failure": f"{type(exc).__name__}: {exc}"})
    V1 = _lyapunov_unit(sys.A - sys.B @ sol.K)

    def strict(L):
        H = rotate_cost(sys, reg, L).H_P
        ok, lo = _pd(H, tol)
        return CheckResult(ok, {"lambda_min": lo}, L)

    res, a = _shrinking_witness(strict, sol.P, V1)
    if res is None:
        return CheckResult(False, {"failure": "no witness along P - a V"})
    res.margins["lyapunov_scale"] = a
    return res


def _sym_basis(n):
    """Index pairs and basis matrices ``E_ij`` for symmetric n x n matrices."""
    out = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            out.append(((i, j), E))
    return out


def _rotation_operator(sys, E):
    A, B = sys.A, sys.B
    return np.block([[A.T @ E @ A - E, A.T @ E @ B], [B.T @ E @ A, B.T @ E @ B]])


def export_sdp(sys, cost, kind="slack", bound_b=None, tol=DEFAULT_TOL):
    """Two-rotation SDP in SDPA sparse form.

    Variables are the upper-triangular entries of ``Lambda1`` then
    ``Lambda2`` (then ``a`` for the slack kind). Blocks: ``H_Lambda1``,
    ``H_Lambda2``, then ``Lambda1 - Lambda2 - a I`` (slack kind) and, when a
    bound ``b`` is active, ``b I - (Lambda1 - Lambda2)``. Without a
    controllable pair the SDP may be unbounded, so ``bound_b`` defaults to
    ``1e6 ||H||_F`` there and a warning is recorded.
    """
    cost.check_against(sys)
    kind = SdpKind.parse(kind)
    notes = []
    if bound_b is not None:
        bound_b = float(bound_b)
        if not (np.isfinite(bound_b) and bound_b > 0):
            raise ValueError(f"bound must be a positive number, got {bound_b!r}")
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            controllable = kalman_decompose(sys, tol).controllable
        if not controllable:
            bound_b = 1e6 * max(matkit.frob(cost.H), 1.0)
            notes.append(
                "pair (A, B) is not controllable: the SDP is unbounded without a bound on "
                f"Lambda1 - Lambda2; applied b = {bound_b:.6g}"
            )

    n, m = sys.n, sys.m
    basis = _sym_basis(n)
    k = len(basis)
    names = [f"Lambda1[{i},{j}]" for (i, j), _ in basis] + [f"Lambda2[{i},{j}]" for (i, j), _ in basis]
    if kind is SdpKind.SLACK:
        names.append("a")
    nv = len(names)

    c = np.zeros(nv)
    if kind is SdpKind.SLACK:
        c[-1] = -1.0
    else:
        for idx, ((i, j), _) in enumerate(basis):
            if i == j:
                c[idx] = -1.0
                c[k + idx] = 1.0

    sizes = [n + m, n + m]
    if kind is SdpKind.SLACK:
        sizes.append(n)
    if bound_b is not None:
        sizes.append(n)
    prob = sdpa.SdpaProblem(sizes, c)
    prob.comments = [f"econlq {kind.value}: variables " + " ".join(names)]
    H = cost.H
    prob.add_matrix(0, 1, -H)
    prob.add_matrix(0, 2, -H)
    for idx, (_, E) in enumerate(basis):
        L = _rotation_operator(sys, E)
        prob.add_matrix(idx + 1, 1, L)
        prob.add_matrix(k + idx + 1, 2, L)
    blk = 3
    if kind is SdpKind.SLACK:
        for idx, (_, E) in enumerate(basis):
            prob.add_matrix(idx + 1, blk, E)
            prob.add_matrix(k + idx + 1, blk, -E)
        prob.add_matrix(nv, blk, -np.eye(n))
        blk += 1
    if bound_b is not None:
        for idx, (_, E) in enumerate(basis):
            prob.add_matrix(idx + 1, blk, -E)
            prob.add_matrix(k + idx + 1, blk, E)
        prob.add_matrix(0, blk, -bound_b * np.eye(n))
    return SdpExport(kind, prob, names, bound_b, notes)


def sdp_point(export, Lambda1, Lambda2, a=None):
    """Variable vector of ``export`` for given rotations (and slack)."""
    n = np.asarray(Lambda1).shape[0]
    y = []
    for L in (Lambda1, Lambda2):
        L = np.asarray(L, dtype=float)
        y.extend(L[i, j] for i in range(n) for j in range(i, n))
    if export.kind is SdpKind.SLACK:
        y.append(0.0 if a is None else float(a))
    return np.array(y)


def verify_cgdare_necessity(sys, cost, P, tol=DEFAULT_TOL):
    """A CGDARE solution with ``R_P >= 0`` must make ``H_P >= 0``.

    Returns ``None`` when ``P`` is not such a solution, else the
    pre-dissipativity check at ``Lambda = P``.
    """
    chk = cgdare_residual(sys, cost, P, tol)
    R_P = rotate_cost(sys, cost, P).R_P
    if not (chk.kernel_ok and chk.residual <= 1e-8 * (1 + matkit.frob(P))):
        return None
    if sys.m and not _psd(R_P, tol)[0]:
        return None
    return check_pre_dissipativity(sys, cost, P, tol)

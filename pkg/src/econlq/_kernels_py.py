"""Pure-NumPy Riccati kernels; drop-in fallback for the compiled ``_kernels``.

Both modules expose the same two functions with identical argument lists and
return tuples. Status codes: 0 converged/finished, 1 iteration cap reached,
2 diverged, 3 singular regularized input weight, 4 non-finite iterate.
"""

import warnings

import numpy as np
import scipy.linalg

TINY = np.finfo(float).tiny

STATUS_OK = 0
STATUS_MAX_ITER = 1
STATUS_DIVERGED = 2
STATUS_SINGULAR = 3
STATUS_NONFINITE = 4


def _sym_pinv_and_kernel(M, rank_rel_tol, floor=0.0):
    lam, V = np.linalg.eigh(0.5 * (M + M.T))
    m = M.shape[0]
    thr = max(rank_rel_tol * max(np.max(np.abs(lam)) if m else 0.0, floor) * m, TINY)
    keep = np.abs(lam) > thr
    Vk = V[:, keep]
    Vz = V[:, ~keep]
    return (Vk / lam[keep]) @ Vk.T, Vz @ Vz.T


def regularized_iteration(A, B, Q, S, Rg, P0, tol, max_iter, div_limit, piv_tol):
    """Value iteration ``P <- Q + A'PA - S_P' (Rg + B'PB)^{-1} S_P``.

    Returns ``(P, iterations, status)``. ``P`` is the last finite iterate.
    """
    A = np.ascontiguousarray(A, dtype=float)
    B = np.ascontiguousarray(B, dtype=float)
    P = np.array(P0, dtype=float)
    it = 0
    while it < max_iter:
        PA = P @ A
        PB = P @ B
        Rk = Rg + B.T @ PB
        Sk = S + B.T @ PA
        if Rk.size:
            with warnings.catch_warnings():
                # exact singularity is reported through the status code
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu, piv = scipy.linalg.lu_factor(Rk, check_finite=False)
            d = np.abs(np.diag(lu))
            if d.min() <= piv_tol * max(np.max(np.abs(Rk)), 1e-300):
                return P, it, STATUS_SINGULAR
            K = scipy.linalg.lu_solve((lu, piv), Sk, check_finite=False)
        else:
            K = np.zeros_like(Sk)
        Pn = Q + A.T @ PA - Sk.T @ K
        Pn = 0.5 * (Pn + Pn.T)
        it += 1
        if not np.all(np.isfinite(Pn)):
            return P, it, STATUS_NONFINITE
        nrm = np.linalg.norm(Pn)
        if nrm > div_limit:
            return Pn, it, STATUS_DIVERGED
        diff = np.linalg.norm(Pn - P)
        scale = 1.0 + np.linalg.norm(P)
        P = Pn
        if diff <= tol * scale:
            return P, it, STATUS_OK
    return P, it, STATUS_MAX_ITER


def generalized_recursion(A, B, Q, S, R, P0, n_steps, rank_rel_tol, conv_tol, div_limit, store):
    """Generalized (pseudo-inverse) Riccati recursion.

    Runs at most ``n_steps`` steps; stops early when ``conv_tol > 0`` and the
    update falls below ``conv_tol * (1 + ||P||_F)``. Returns
    ``(P, K, iterations, status, kernel_changes, Ps, Ks)`` where ``Ps``/``Ks``
    hold every iterate when ``store`` is true and are ``None`` otherwise.
    """
    A = np.ascontiguousarray(A, dtype=float)
    B = np.ascontiguousarray(B, dtype=float)
    n, m = B.shape
    P = np.array(P0, dtype=float)
    K = np.zeros((m, n))
    Ps = [P.copy()] if store else None
    Ks = [] if store else None
    G_prev = None
    changes = 0
    it = 0
    status = STATUS_OK
    while it < n_steps:
        PA = P @ A
        Rk = R + B.T @ P @ B
        Sk = S + B.T @ PA
        # cancellation in R + B'PB is relative to the operands, not the sum
        floor = np.linalg.norm(R) + np.linalg.norm(Rk - R)
        Rpinv, G = _sym_pinv_and_kernel(Rk, rank_rel_tol, floor)
        if G_prev is not None and np.linalg.norm(G - G_prev) > 1e-8:
            changes += 1
        G_prev = G
        K = Rpinv @ Sk
        Pn = Q + A.T @ PA - Sk.T @ K
        Pn = 0.5 * (Pn + Pn.T)
        it += 1
        if not np.all(np.isfinite(Pn)):
            status = STATUS_NONFINITE
            break
        if store:
            Ps.append(Pn.copy())
            Ks.append(K.copy())
        nrm = np.linalg.norm(Pn)
        diff = np.linalg.norm(Pn - P)
        scale = 1.0 + np.linalg.norm(P)
        P = Pn
        if nrm > div_limit:
            status = STATUS_DIVERGED
            break
        if conv_tol > 0 and diff <= conv_tol * scale:
            break
    else:
        if conv_tol > 0 and n_steps > 0:
            status = STATUS_MAX_ITER
    if store:
        Ps = np.array(Ps)
        Ks = np.array(Ks).reshape(len(Ks), m, n)
    return P, K, it, status, changes, Ps, Ks

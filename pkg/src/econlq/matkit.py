"""Dense matrix primitives with explicit rank and definiteness tolerances.

Every higher-level routine makes its rank and sign decisions through this
module so that a single :class:`ToleranceConfig` governs the whole analysis.
"""

from dataclasses import dataclass, fields, replace
from enum import Enum

import numpy as np

from .errors import InvalidMatrix, NotSymmetric, NumericalFailure


@dataclass(frozen=True)
class ToleranceConfig:
    rank_rel_tol: float = 1e-10
    psd_tol: float = 1e-9
    convergence_tol: float = 1e-11
    max_iterations: int = 10000
    spectral_margin: float = 1e-9

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "max_iterations":
                if int(value) != value or value < 1:
                    raise ValueError("max_iterations must be a positive integer")
            elif not (np.isfinite(value) and value > 0):
                raise ValueError(f"{f.name} must be strictly positive, got {value!r}")

    def with_overrides(self, **overrides):
        """Copy with the non-``None`` entries of ``overrides`` applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


TINY = np.finfo(float).tiny

DEFAULT_TOL = ToleranceConfig()


class Definiteness(str, Enum):
    POSITIVE_DEFINITE = "PositiveDefinite"
    POSITIVE_SEMIDEFINITE = "PositiveSemiDefinite"
    INDEFINITE = "Indefinite"
    NEGATIVE_SEMIDEFINITE = "NegativeSemiDefinite"
    NEGATIVE_DEFINITE = "NegativeDefinite"

    @property
    def is_psd(self):
        return self in (Definiteness.POSITIVE_DEFINITE, Definiteness.POSITIVE_SEMIDEFINITE)

    @property
    def is_pd(self):
        return self is Definiteness.POSITIVE_DEFINITE


def as_matrix(M, name="matrix"):
    """Return ``M`` as a finite 2-D float array, raising :class:`InvalidMatrix`."""
    try:
        arr = np.array(M, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidMatrix(f"{name}: not a numeric array ({exc})") from None
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise InvalidMatrix(f"{name}: expected a 2-D array, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix(f"{name}: contains NaN or Inf")
    return arr


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def rank_threshold(s, shape, tol=DEFAULT_TOL, scale=None):
    """Singular values at or below this value count as zero.

    ``scale`` is an optional floor for ``s_max``. Pass the magnitude of the
    operands when ``M`` is a computed sum whose own size says nothing about
    its round-off (e.g. ``R + B'PB`` close to zero). Subnormal values are
    always zero: their reciprocals overflow.
    """
    smax = s[0] if s.size else 0.0
    if scale is not None:
        smax = max(smax, scale)
    return max(tol.rank_rel_tol * smax * max(shape), TINY)


def pseudo_inverse(M, tol=DEFAULT_TOL, scale=None):
    """Moore-Penrose pseudo-inverse by truncated SVD.

    Singular values ``s_i <= rank_rel_tol * max(s_max, scale) * max(rows, cols)``
    are treated as exact zeros.
    """
    M = as_matrix(M)
    U, s, Vt = _svd(M)
    keep = s > rank_threshold(s, M.shape, tol, scale)
    if not np.any(keep):
        return np.zeros(M.shape[::-1])
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def numerical_rank(M, tol=DEFAULT_TOL, scale=None):
    M = as_matrix(M)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > rank_threshold(s, M.shape, tol, scale)))


def null_space_basis(M, tol=DEFAULT_TOL, scale=None):
    """Orthonormal basis ``Z`` of ``ker(M)``; shape ``(cols, k)``, possibly ``k = 0``."""
    M = as_matrix(M)
    _, s, Vt = _svd(M, full=True)
    r = int(np.sum(s > rank_threshold(s, M.shape, tol, scale)))
    return Vt[r:].T.copy()


def range_basis(M, tol=DEFAULT_TOL):
    """Orthonormal basis of the column space of ``M``."""
    M = as_matrix(M)
    U, s, _ = _svd(M)
    r = int(np.sum(s > rank_threshold(s, M.shape, tol)))
    return U[:, :r].copy()


def kernel_projector(M, tol=DEFAULT_TOL, scale=None):
    """Orthogonal projector onto ``ker(M)``, i.e. ``I - M^+ M``."""
    Z = null_space_basis(M, tol, scale)
    return Z @ Z.T


def _svd(M, full=False):
    if M.size == 0:
        m, n = M.shape
        return np.eye(m), np.zeros(0), np.eye(n)
    try:
        return np.linalg.svd(M, full_matrices=full)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from None


def check_symmetric(M, tol=DEFAULT_TOL, name="matrix"):
    """Raise :class:`NotSymmetric` if ``M`` is asymmetric beyond ``psd_tol``."""
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise NotSymmetric(f"{name}: not square, shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    asym = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if asym > tol.psd_tol * scale:
        raise NotSymmetric(f"{name}: asymmetry {asym:.3g} exceeds tolerance")
    return symmetrize(M)


def eigvalsh_sym(M):
    try:
        return np.linalg.eigvalsh(symmetrize(M))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"symmetric eigensolver failed: {exc}") from None


def definiteness(M, tol=DEFAULT_TOL):
    """Classify a symmetric matrix by the sign of its eigenvalues.

    Margins are relative: with ``scale = max(1, max|lambda|)``, the minimum
    eigenvalue must reach ``psd_tol * scale`` for positive definiteness and
    ``-psd_tol * scale`` for semi-definiteness (mirrored for the negative
    cases).
    """
    M = check_symmetric(M, tol)
    if M.size == 0:
        return Definiteness.POSITIVE_DEFINITE
    lam = eigvalsh_sym(M)
    scale = max(1.0, float(np.max(np.abs(lam))))
    eps = tol.psd_tol * scale
    lo, hi = lam[0], lam[-1]
    if lo >= eps:
        return Definiteness.POSITIVE_DEFINITE
    if lo >= -eps:
        return Definiteness.POSITIVE_SEMIDEFINITE
    if hi <= -eps:
        return Definiteness.NEGATIVE_DEFINITE
    if hi <= eps:
        return Definiteness.NEGATIVE_SEMIDEFINITE
    return Definiteness.INDEFINITE


def eigen_margin(M):
    """``(lambda_min, lambda_max)`` of the symmetrized matrix."""
    M = as_matrix(M)
    if M.size == 0:
        return (np.inf, -np.inf)
    lam = eigvalsh_sym(M)
    return float(lam[0]), float(lam[-1])


def eigenvalues(M):
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise InvalidMatrix(f"eigenvalues need a square matrix, got {M.shape}")
    if M.size == 0:
        return np.zeros(0, dtype=complex)
    try:
        return np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigenvalue iteration failed: {exc}") from None


def spectral_radius(M):
    lam = eigenvalues(M)
    return float(np.max(np.abs(lam))) if lam.size else 0.0


def is_schur(M, tol=DEFAULT_TOL):
    return spectral_radius(M) < 1.0 - tol.spectral_margin


def frob(M):
    return float(np.linalg.norm(M)) if np.size(M) else 0.0

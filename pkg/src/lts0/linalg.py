"""Dense real matrix primitives.

Matrices are plain ``float64`` numpy arrays. Factorizations delegate to
LAPACK through :mod:`numpy.linalg`; this module adds the ordering, sign
conventions, residual checks and error types the rest of the package
relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonConvergence, RankDeficient
from .tolerances import TOL

__all__ = [
    "EigenDecomposition",
    "SvdResult",
    "as_matrix",
    "eigen_real",
    "thin_svd",
    "orthonormalize",
    "orthogonal_complement",
    "solve_least_squares",
    "matrix_power",
    "spectral_radius",
    "sigma_min",
    "cond",
    "operator_norm",
    "row_norms",
    "vector_norm",
]


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenpairs of a real square matrix.

    Attributes
    ----------
    eigenvalues : ndarray of complex, shape (n,)
        Sorted by descending modulus, then descending real part, then
        ascending imaginary part. Conjugate pairs are adjacent.
    eigenvectors : ndarray of complex, shape (n, n)
        Column ``i`` pairs with ``eigenvalues[i]``; unit 2-norm, phase fixed
        so the largest-modulus entry is real and positive.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def moduli(self) -> np.ndarray:
        return np.abs(self.eigenvalues)


@dataclass(frozen=True)
class SvdResult:
    """Thin singular value decomposition ``X = U diag(s) V^T``."""

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray


def as_matrix(X, name: str = "matrix") -> np.ndarray:
    """Validate and return ``X`` as a finite 2-D float64 array."""
    M = np.asarray(X, dtype=np.float64)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def _square(X, name: str) -> np.ndarray:
    M = as_matrix(X, name)
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")
    return M


def _eig_order(w: np.ndarray) -> np.ndarray:
    # lexsort keys: last key is primary
    return np.lexsort((w.imag, -w.real, -np.abs(w)))


def eigen_real(A) -> EigenDecomposition:
    """Eigen-decomposition of a real square matrix.

    Parameters
    ----------
    A : array_like, shape (n, n)

    Returns
    -------
    EigenDecomposition

    Raises
    ------
    NonConvergence
        If LAPACK fails or a residual exceeds ``TOL.eig_residual * ||A||``.
    """
    A = _square(A, "A")
    n = A.shape[0]
    if n == 0:
        return EigenDecomposition(np.zeros(0, complex), np.zeros((0, 0), complex))
    # entries below eps^2 * max|A| underflow inside LAPACK; zeroing them is a
    # backward perturbation far below the residual tolerance
    A = np.where(np.abs(A) < np.finfo(float).eps ** 2 * np.abs(A).max(), 0.0, A)
    try:
        w, V = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NonConvergence(str(exc)) from exc
    w = w.astype(complex)
    V = V.astype(complex)
    order = _eig_order(w)
    w = w[order]
    V = V[:, order]
    V = V / np.linalg.norm(V, axis=0)
    # fix the phase so the largest entry is real positive; conjugate columns stay conjugate
    idx = np.argmax(np.abs(V), axis=0)
    ph = V[idx, np.arange(n)]
    V = V * (np.abs(ph) / ph)
    scale = max(np.linalg.norm(A, 2), np.finfo(float).tiny)
    res = np.linalg.norm(A @ V - V * w, axis=0)
    if np.any(res > TOL.eig_residual * scale):
        raise NonConvergence(f"eigen residual {res.max():.3e} exceeds tolerance")
    return EigenDecomposition(w, V)


def thin_svd(X) -> SvdResult:
    """Thin SVD with nonincreasing singular values.

    Raises
    ------
    NonConvergence
    """
    X = as_matrix(X, "X")
    try:
        U, s, Vt = np.linalg.svd(X, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NonConvergence(str(exc)) from exc
    return SvdResult(U, s, Vt.T)


def orthonormalize(X) -> np.ndarray:
    """Orthonormal basis of ``col(X)`` by Householder QR.

    Column signs are fixed so the triangular factor has a nonnegative
    diagonal, which makes the result unique for full-rank input.

    Raises
    ------
    RankDeficient
        If ``sigma_min(X) <= TOL.rank * sigma_max(X)``.
    """
    X = as_matrix(X, "X")
    if X.shape[1] == 0:
        return np.zeros((X.shape[0], 0))
    if X.shape[1] > X.shape[0]:
        raise RankDeficient("more columns than rows")
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= TOL.rank * s[0]:
        raise RankDeficient(f"columns are dependent (sigma ratio {s[-1] / max(s[0], 1e-300):.2e})")
    Q, R = np.linalg.qr(X)
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs


def orthogonal_complement(P) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``col(P)``.

    ``P`` must have orthonormal columns.
    """
    P = as_matrix(P, "P")
    n, k = P.shape
    if k == 0:
        return np.eye(n)
    Q, R = np.linalg.qr(P, mode="complete")
    return Q[:, k:].copy()


def solve_least_squares(A, B) -> np.ndarray:
    """``argmin_X ||A X - B||_F`` for full-column-rank ``A``.

    Raises
    ------
    RankDeficient
    DimensionMismatch
    """
    A = as_matrix(A, "A")
    B = np.asarray(B, dtype=np.float64)
    vec = B.ndim == 1
    B = as_matrix(B, "B")
    if A.shape[0] != B.shape[0]:
        raise DimensionMismatch(f"row mismatch {A.shape} vs {B.shape}")
    if A.shape[1] > A.shape[0]:
        raise RankDeficient("underdetermined system")
    s = np.linalg.svd(A, compute_uv=False)
    if s.size and (s[0] == 0.0 or s[-1] <= TOL.rank * s[0]):
        raise RankDeficient("regression matrix is rank deficient")
    X, *_ = np.linalg.lstsq(A, B, rcond=None)
    return X[:, 0] if vec else X


def matrix_power(X, t: int) -> np.ndarray:
    """``X**t`` by repeated squaring; exact for ``t`` in {0, 1}."""
    X = _square(X, "X")
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = X.shape[0]
    result = np.eye(n)
    if t == 0:
        return result
    if t == 1:
        return X.copy()
    base = X.copy()
    first = True
    while t:
        if t & 1:
            result = base.copy() if first else result @ base
            first = False
        t >>= 1
        if t:
            base = base @ base
    return result


def spectral_radius(X) -> float:
    """Largest eigenvalue modulus."""
    X = _square(X, "X")
    if X.shape[0] == 0:
        return 0.0
    try:
        return float(np.max(np.abs(np.linalg.eigvals(X))))
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NonConvergence(str(exc)) from exc


def _singular_values(X) -> np.ndarray:
    X = as_matrix(X, "X")
    if X.size == 0:
        return np.zeros(0)
    try:
        return np.linalg.svd(X, compute_uv=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NonConvergence(str(exc)) from exc


def sigma_min(X) -> float:
    """Smallest singular value (``min(rows, cols)``-th)."""
    s = _singular_values(X)
    return float(s[-1]) if s.size else 0.0


def operator_norm(X) -> float:
    """Spectral norm; zero for empty matrices."""
    s = _singular_values(X)
    return float(s[0]) if s.size else 0.0


def cond(X) -> float:
    """``sigma_max / sigma_min``; ``inf`` when singular."""
    s = _singular_values(X)
    if not s.size:
        return 1.0
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def row_norms(X) -> np.ndarray:
    """Euclidean norm of each row, scaled so norms up to the float range do not overflow."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] == 0:
        return np.zeros(X.shape[0])
    amax = np.max(np.abs(X), axis=1)
    safe = np.where(amax > 0, amax, 1.0)
    return amax * np.sqrt(np.sum((X / safe[:, None]) ** 2, axis=1))


def vector_norm(x) -> float:
    """Overflow-safe Euclidean norm of a vector."""
    return float(row_norms(np.ravel(x))[0])

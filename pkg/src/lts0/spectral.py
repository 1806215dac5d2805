"""State-space decompositions and perturbation constants.

Two decompositions of a diagonalizable ``A`` with ``k`` unstable modes are
built side by side:

* orthogonal split ``P = [P1 P2]`` with ``P1`` spanning the unstable
  subspace, giving ``P^T A P = [[M1, Delta], [0, M2]]``;
* invariant split ``Q = [Q1 Q2]`` with ``Q1 = P1`` and ``Q2`` spanning the
  stable subspace, giving ``Q^{-1} A Q = blockdiag(N1, N2)``.

``P2`` and ``Q2`` are rotated onto principal vectors so ``P2^T Q2`` is
diagonal with the cosines of the principal angles.
"""

from __future__ import annotations

from dataclasses import dataclass
import warnings

import numpy as np

from . import _kernels
from .errors import (
    DimensionMismatch,
    MarginViolation,
    NotDiagonalizable,
    RankMismatch,
    SingularGain,
    ZeroGap,
)
from .linalg import (
    as_matrix,
    cond,
    eigen_real,
    matrix_power,
    operator_norm,
    orthogonal_complement,
    orthonormalize,
    sigma_min,
    spectral_radius,
)
from .tolerances import TOL

__all__ = [
    "SpectralData",
    "GelfandConstant",
    "ChiConstant",
    "decompose",
    "instability_index",
    "principal_angles",
    "xi_closeness",
    "delta_tau",
    "tau_hop_gain",
    "gelfand_constant",
    "chi_constant",
    "bauer_fike_check",
    "align_bases",
    "eigvec_condition",
]


@dataclass(frozen=True)
class SpectralData:
    """Both decompositions of a system matrix.

    Attributes
    ----------
    k : int
        Number of eigenvalues with modulus above one.
    P1, P2 : ndarray
        Orthonormal bases of the unstable subspace and its orthogonal
        complement.
    M1, Delta, M2 : ndarray
        Blocks of ``P^T A P``.
    Q1, Q2 : ndarray
        Orthonormal bases of the unstable and stable subspaces (``Q1 = P1``).
    R1, R2 : ndarray
        Row blocks of ``Q^{-1}``.
    N1, N2 : ndarray
        Diagonal blocks of ``Q^{-1} A Q`` (``N1 = M1``).
    xi : float
        ``1 - sigma_min(P2^T Q2)``.
    eigenvalues : ndarray of complex
        Spectrum of ``A`` in canonical order.
    """

    k: int
    P1: np.ndarray
    P2: np.ndarray
    M1: np.ndarray
    Delta: np.ndarray
    M2: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    N1: np.ndarray
    N2: np.ndarray
    xi: float
    eigenvalues: np.ndarray

    @property
    def n(self) -> int:
        return self.P1.shape[0]

    @property
    def P(self) -> np.ndarray:
        return np.hstack([self.P1, self.P2])

    @property
    def Q(self) -> np.ndarray:
        return np.hstack([self.Q1, self.Q2])

    @property
    def R(self) -> np.ndarray:
        return np.vstack([self.R1, self.R2])

    @property
    def M(self) -> np.ndarray:
        k = self.k
        out = np.zeros((self.n, self.n))
        out[:k, :k] = self.M1
        out[:k, k:] = self.Delta
        out[k:, k:] = self.M2
        return out

    @property
    def Pi1(self) -> np.ndarray:
        """Orthogonal projector onto the unstable subspace."""
        return self.P1 @ self.P1.T

    @property
    def moduli(self) -> np.ndarray:
        return np.abs(self.eigenvalues)


@dataclass(frozen=True)
class GelfandConstant:
    """Finite-horizon Gelfand multiplier ``max_t ||X^t|| / (rho + eps)^t``."""

    epsilon: float
    t_max: int
    value: float
    attained_t: int
    rho: float


@dataclass(frozen=True)
class ChiConstant:
    """Block perturbation coefficient ``kappa(A) kappa(A+E) / min_gap``."""

    kappa_A: float
    kappa_AE: float
    min_gap: float
    chi: float
    bound: float


def _real_basis(w: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Real spanning vectors for a set of eigenpairs closed under conjugation."""
    cols = []
    i = 0
    while i < w.size:
        if w[i].imag == 0.0:
            cols.append(V[:, i].real)
            i += 1
        else:
            # v and conj(v) span the same real plane as Re(v), Im(v)
            cols.append(V[:, i].real)
            cols.append(V[:, i].imag)
            i += 2
    if not cols:
        return np.zeros((V.shape[0], 0))
    return np.column_stack(cols)


def eigvec_condition(A) -> float:
    """Condition number of the unit-column eigenvector matrix of ``A``."""
    A = as_matrix(A, "A")
    if A.shape[0] == 0:
        return 1.0
    w, V = np.linalg.eig(A)
    V = V / np.linalg.norm(V, axis=0)
    s = np.linalg.svd(V, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def _check_margin(moduli: np.ndarray, margin: float) -> None:
    near = np.abs(moduli - 1.0) <= margin
    if np.any(near):
        raise MarginViolation(
            f"eigenvalue modulus {moduli[near][0]:.6g} within {margin} of the unit circle"
        )


def instability_index(A, margin: float = TOL.margin) -> int:
    """Number of eigenvalues with modulus above one.

    Raises
    ------
    MarginViolation
    """
    ed = eigen_real(A)
    _check_margin(ed.moduli, margin)
    return int(np.sum(ed.moduli > 1.0))


def decompose(A, margin: float = TOL.margin) -> SpectralData:
    """Build the orthogonal and invariant decompositions of ``A``.

    Parameters
    ----------
    A : array_like, shape (n, n)
        Diagonalizable system matrix.
    margin : float
        No eigenvalue modulus may lie in ``[1 - margin, 1 + margin]``.

    Returns
    -------
    SpectralData

    Raises
    ------
    MarginViolation
    NotDiagonalizable
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    ed = eigen_real(A)
    moduli = ed.moduli
    _check_margin(moduli, margin)
    V = ed.eigenvectors
    sv = np.linalg.svd(V, compute_uv=False)
    if sv[-1] == 0 or sv[0] / sv[-1] > TOL.diag_cond:
        raise NotDiagonalizable("eigenvector matrix is too ill-conditioned")
    k = int(np.sum(moduli > 1.0))
    w = ed.eigenvalues

    P1 = orthonormalize(_real_basis(w[:k], V[:, :k]))
    Q2_raw = orthonormalize(_real_basis(w[k:], V[:, k:]))
    P2_raw = orthogonal_complement(P1)
    if n - k > 0:
        U, s, Vt = np.linalg.svd(P2_raw.T @ Q2_raw)
        P2 = P2_raw @ U
        Q2 = Q2_raw @ Vt.T
        xi = float(np.clip(1.0 - s[-1], 0.0, 1.0))
    else:
        P2 = P2_raw
        Q2 = Q2_raw
        xi = 0.0

    P = np.hstack([P1, P2])
    M = P.T @ A @ P
    M1 = M[:k, :k].copy()
    Delta = M[:k, k:].copy()
    M2 = M[k:, k:].copy()
    Q = np.hstack([P1, Q2])
    R = np.linalg.solve(Q, np.eye(n))
    R1 = R[:k].copy()
    R2 = R[k:].copy()
    N2 = R2 @ A @ Q2
    return SpectralData(
        k=k, P1=P1, P2=P2, M1=M1, Delta=Delta, M2=M2,
        Q1=P1.copy(), Q2=Q2, R1=R1, R2=R2, N1=M1.copy(), N2=N2,
        xi=xi, eigenvalues=w,
    )


def principal_angles(U, V) -> np.ndarray:
    """Principal angles between ``col(U)`` and ``col(V)``, nondecreasing.

    Raises
    ------
    DimensionMismatch
    """
    U = as_matrix(U, "U")
    V = as_matrix(V, "V")
    if U.shape != V.shape:
        raise DimensionMismatch(f"shapes differ: {U.shape} vs {V.shape}")
    s = np.linalg.svd(U.T @ V, compute_uv=False)
    return np.arccos(np.clip(s, 0.0, 1.0))


def xi_closeness(P2, Q2) -> float:
    """Smallest ``xi`` with ``sigma_min(P2^T Q2) > 1 - xi`` (the tight value).

    Raises
    ------
    DimensionMismatch
    """
    P2 = as_matrix(P2, "P2")
    Q2 = as_matrix(Q2, "Q2")
    if P2.shape != Q2.shape:
        raise DimensionMismatch(f"shapes differ: {P2.shape} vs {Q2.shape}")
    if P2.shape[1] == 0:
        return 0.0
    return float(np.clip(1.0 - sigma_min(P2.T @ Q2), 0.0, 1.0))


def delta_tau(M1, Delta, M2, tau: int) -> np.ndarray:
    """Top-right block of ``M^tau``: ``sum_i M1^i Delta M2^(tau-1-i)``."""
    if tau < 1:
        raise ValueError("tau must be at least 1")
    M1 = as_matrix(M1, "M1")
    Delta = np.asarray(Delta, dtype=float).reshape(M1.shape[0], -1)
    M2 = np.asarray(M2, dtype=float).reshape(Delta.shape[1], Delta.shape[1])
    out = np.zeros_like(Delta)
    left = np.eye(M1.shape[0])
    for i in range(tau):
        out += left @ Delta @ matrix_power(M2, tau - 1 - i)
        left = left @ M1
    return out


def tau_hop_gain(A, B, P1, M1, tau: int) -> tuple[np.ndarray, np.ndarray]:
    """Effective gain ``B_tau = P1^T A^(tau-1) B`` and ``K1 = -B_tau^{-1} M1^tau``.

    Raises
    ------
    SingularGain
        If ``B_tau`` is not square or is numerically singular.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    B_tau = P1.T @ matrix_power(A, tau - 1) @ B
    if B_tau.shape[0] != B_tau.shape[1]:
        raise SingularGain(f"B_tau has shape {B_tau.shape}; need m = k")
    _check_gain(B_tau)
    K1 = -np.linalg.solve(B_tau, matrix_power(M1, tau))
    return B_tau, K1


def _check_gain(B_tau: np.ndarray) -> None:
    if B_tau.size == 0:
        return
    s = np.linalg.svd(B_tau, compute_uv=False)
    if not s[-1] > TOL.gain * s[0]:
        raise SingularGain(f"sigma_min(B_tau) = {s[-1]:.3e} is too small")


def gelfand_constant(X, epsilon: float, t_max: int = 200) -> GelfandConstant:
    """Finite-horizon Gelfand constant of ``X``.

    Computed on ``X / (rho + eps)`` so that large powers do not overflow.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    X = as_matrix(X, "X")
    rho = spectral_radius(X)
    Y = np.ascontiguousarray(X / (rho + epsilon))
    norms = _kernels.power_norms(Y, int(t_max))
    t = int(np.argmax(norms))
    return GelfandConstant(float(epsilon), int(t_max), float(norms[t]), t, rho)


def gelfand_tail_check(X, g: GelfandConstant, extra: int = 10) -> bool:
    """Whether ``||X^t|| <= zeta (rho + eps)^t`` also holds for ``t_max < t <= t_max + extra``.

    Emits a :class:`RuntimeWarning` when the finite sweep under-approximates.
    """
    X = as_matrix(X, "X")
    Y = np.ascontiguousarray(X / (g.rho + g.epsilon))
    norms = _kernels.power_norms(Y, g.t_max + extra)[g.t_max + 1:]
    ok = bool(np.all(norms <= g.value * (1 + 1e-12)))
    if not ok:
        warnings.warn("Gelfand sweep exceeded beyond its horizon", RuntimeWarning, stacklevel=2)
    return ok


def chi_constant(A_blockdiag, E_offdiag, split: int) -> ChiConstant:
    """Coefficient of the block perturbation bound.

    Parameters
    ----------
    A_blockdiag : array_like, shape (n, n)
        Block-diagonal matrix with leading block of size ``split``.
    E_offdiag : array_like, shape (n, n)
        Perturbation supported on the off-diagonal blocks.
    split : int
        Size of the leading block.

    Returns
    -------
    ChiConstant
        ``bound = chi * ||E12|| * ||E21||``.

    Raises
    ------
    ZeroGap
        If the two blocks share an eigenvalue.
    """
    A = as_matrix(A_blockdiag, "A")
    E = as_matrix(E_offdiag, "E")
    if A.shape != E.shape or A.shape[0] != A.shape[1]:
        raise DimensionMismatch("A and E must be square and of equal shape")
    s = int(split)
    w1 = np.linalg.eigvals(A[:s, :s]) if s else np.zeros(0)
    w2 = np.linalg.eigvals(A[s:, s:]) if s < A.shape[0] else np.zeros(0)
    e12 = operator_norm(E[:s, s:])
    e21 = operator_norm(E[s:, :s])
    if w1.size == 0 or w2.size == 0:
        return ChiConstant(eigvec_condition(A), eigvec_condition(A + E), float("inf"), 0.0, 0.0)
    gap = float(np.min(np.abs(w1[:, None] - w2[None, :])))
    if gap <= TOL.gap * max(1.0, operator_norm(A)):
        raise ZeroGap("diagonal blocks share an eigenvalue")
    kA = eigvec_condition(A)
    kAE = eigvec_condition(A + E)
    chi = kA * kAE / gap
    return ChiConstant(kA, kAE, gap, chi, chi * e12 * e21)


def bauer_fike_check(A, E) -> tuple[float, float, bool]:
    """Compare the eigenvalue displacement under ``E`` with ``kappa(A) ||E||``.

    Returns
    -------
    lhs, rhs : float
    holds : bool

    Raises
    ------
    NotDiagonalizable
    """
    A = as_matrix(A, "A")
    E = as_matrix(E, "E")
    kA = eigvec_condition(A)
    if not np.isfinite(kA) or kA > TOL.diag_cond:
        raise NotDiagonalizable("A is not numerically diagonalizable")
    w = np.linalg.eigvals(A)
    w_pert = np.linalg.eigvals(A + E)
    lhs = float(np.max(np.min(np.abs(w_pert[:, None] - w[None, :]), axis=1)))
    rhs = kA * operator_norm(E)
    return lhs, rhs, lhs <= rhs + 1e-9


def align_bases(Phat1, Pi1) -> np.ndarray:
    """Orthonormal basis of ``col(Pi1)`` matched column-wise to ``Phat1``.

    Takes any orthonormal basis ``B`` of ``col(Pi1)``, forms the SVD
    ``B^T Phat1 = U S V^T`` and returns ``B U V^T``, the basis of
    ``col(Pi1)`` closest to ``Phat1``.

    Raises
    ------
    RankMismatch
    """
    Phat1 = as_matrix(Phat1, "Phat1")
    Pi1 = as_matrix(Pi1, "Pi1")
    n, k = Phat1.shape
    if Pi1.shape != (n, n):
        raise DimensionMismatch("projector shape does not match basis")
    sym = 0.5 * (Pi1 + Pi1.T)
    evals, evecs = np.linalg.eigh(sym)
    rank = int(np.sum(evals > 0.5))
    if rank != k:
        raise RankMismatch(f"projector rank {rank} != basis width {k}")
    base = evecs[:, ::-1][:, :k]
    U, _, Vt = np.linalg.svd(base.T @ Phat1)
    return base @ U @ Vt

"""Centralized numerical tolerances.

All thresholds are relative to the scale of the operands they guard unless
the name says otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    """Default numerical thresholds.

    Attributes
    ----------
    eig_residual : float
        Max ``||Av - lambda v|| / ||A||`` accepted from the eigensolver.
    svd : float
        Orthogonality and reconstruction tolerance per unit of dimension.
    rank : float
        Relative singular value below which columns count as dependent.
    lstsq : float
        Relative normal-equation residual for least squares.
    margin : float
        Exclusion band around the unit circle.
    diag_cond : float
        Largest eigenvector-matrix condition number treated as diagonalizable.
    gain : float
        Relative singular value below which an input gain is singular.
    stability : float
        Spectral radius must be below ``1 - stability`` to count as stable.
    overflow : float
        State norm guard.
    cond_limit : float
        Largest accepted ``cond(D^T D)`` in subspace learning.
    gap : float
        Smallest spectral gap (relative to block scale) accepted by chi.
    """

    eig_residual: float = 1e-9
    svd: float = 1e-10
    rank: float = 1e-12
    lstsq: float = 1e-9
    margin: float = 0.02
    diag_cond: float = 1e8
    gain: float = 1e-10
    stability: float = 1e-9
    overflow: float = 1e300
    cond_limit: float = 1e12
    gap: float = 1e-12


TOL = Tolerances()

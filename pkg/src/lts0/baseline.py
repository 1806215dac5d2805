"""Full-identification baseline.

Identifies ``[A_hat B_hat]`` by least squares from ``n + m`` probed steps,
then cancels the unstable modes of the identified model. A full model
gives access to the left unstable invariant subspace, so the default
controller places the unstable poles at zero with a one-step gain; the
learner's tau-hop cancellation on the model is available for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import IllConditioned, MarginViolation, SearchExhausted, SingularGain
from .learner import run_controlled
from .linalg import matrix_power, row_norms, spectral_radius, vector_norm
from .plant import LinearSystem, Plant, Trajectory
from .rng import TAG_PROBE, Stream
from .tolerances import TOL

__all__ = [
    "IdentifiedSystem",
    "BaselineController",
    "BaselineConfig",
    "identify_full",
    "baseline_controller",
    "run_baseline",
]


@dataclass(frozen=True)
class IdentifiedSystem:
    """Least-squares model of a plant.

    Attributes
    ----------
    A_hat : ndarray, shape (n, n)
    B_hat : ndarray, shape (n, m)
    id_steps : int
        Transitions consumed by identification.
    residual : float
        Largest relative equation error over the regression rows.
    rank : int
        Numerical rank of the regressor matrix.
    """

    A_hat: np.ndarray
    B_hat: np.ndarray
    id_steps: int
    residual: float
    rank: int


@dataclass(frozen=True)
class BaselineController:
    """Tau-hop gain ``K`` (shape ``(m, n)``) built on an identified model."""

    K: np.ndarray
    tau: int
    k: int


@dataclass(frozen=True)
class BaselineConfig:
    """Knobs of :func:`run_baseline`.

    Attributes
    ----------
    probe_scale : float
        Probe input norm relative to the current state norm.
    margin : float
        Unit-circle exclusion band for the identified eigenvalues.
    tau_max : int
    tau_margin : float
        Spectral-radius margin of the ``tau-hop`` method on the model.
    method : str
        ``"modal"`` or ``"tau-hop"``; see :func:`baseline_controller`.
    control_steps : int
        Controlled transitions simulated after identification.
    rcond : float
        Relative singular-value cutoff of the truncated least squares.
    """

    probe_scale: float = 1.0
    margin: float = TOL.margin
    tau_max: int = 64
    tau_margin: float = 0.1
    control_steps: int = 60
    rcond: float = 1e-10
    method: str = "modal"


def identify_full(plant: Plant, probe_scale: float = 1.0, rcond: float = 1e-10,
                  seed: int = 0) -> IdentifiedSystem:
    """Identify ``[A B]`` from ``n + m`` probed steps.

    Every step applies ``u_t = probe_scale * ||x_t|| * g_t`` with ``g_t`` a
    uniformly random unit direction (probe substream of ``seed``). Fresh
    input directions on every step keep the regressors ``[x_t; u_t]``
    from collapsing onto the unstable subspace, which is what makes ``B``
    recoverable from a single noiseless run. Each regression row is
    divided by ``||x_t||`` and the system is solved by truncated SVD least
    squares; directions the run never excited are left at zero
    (minimum-norm solution).

    Raises
    ------
    IllConditioned
        If the regressors have rank at most ``m`` (no state information).
    """
    n, m = plant.n, plant.m
    start = plant.t
    stream = Stream(seed, TAG_PROBE)
    for _ in range(n + m):
        g = stream.normal(m)
        g /= np.linalg.norm(g)
        plant.apply(probe_scale * vector_norm(plant.state) * g, "probe")
    traj = plant.trajectory()
    X = traj.states[start:]
    U = traj.inputs[start:]
    # each equation may be rescaled freely; dividing by ||x_t|| stops the
    # late, exponentially large rows from swamping the early ones
    w = 1.0 / np.maximum(row_norms(X[:-1]), np.finfo(float).tiny)
    Z = np.hstack([X[:-1], U]) * w[:, None]  # rows [x_t, u_t] / ||x_t||
    Y = X[1:] * w[:, None]
    s = np.linalg.svd(Z, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        raise IllConditioned("regressor matrix is zero")
    rank = int(np.sum(s > rcond * s[0]))
    if rank <= m:
        raise IllConditioned(f"regressor rank {rank} carries no state information")
    theta, *_ = np.linalg.lstsq(Z, Y, rcond=rcond)
    AB = theta.T
    A_hat = AB[:, :n].copy()
    B_hat = AB[:, n:].copy()
    err = row_norms(Y - Z @ theta)
    scale = np.maximum(row_norms(Y), np.finfo(float).tiny)
    return IdentifiedSystem(A_hat, B_hat, int(plant.t - start), float(np.max(err / scale)), rank)


def _ordered_schur(A_hat: np.ndarray, margin: float):
    """Real Schur form with the unstable block first.

    Works for defective matrices as well (a minimum-norm ``A_hat`` is often
    defective on unexcited directions).
    """
    w = np.linalg.eigvals(A_hat)
    near = np.abs(np.abs(w) - 1.0) <= margin
    if np.any(near):
        raise MarginViolation(
            f"identified eigenvalue modulus {np.abs(w[near][0]):.6g} within {margin} of the unit circle"
        )
    T, Z, sdim = scipy.linalg.schur(A_hat, output="real", sort="ouc")
    return T, Z, int(sdim)


def _modal_gain(T: np.ndarray, Z: np.ndarray, k: int, B: np.ndarray) -> np.ndarray:
    # rows R1 with R1 A_hat = T11 R1 come from block-diagonalizing T:
    # T11 Y - Y T22 = -T12 gives R1 = [I, -Y] Z^T
    Y = scipy.linalg.solve_sylvester(T[:k, :k], -T[k:, k:], -T[:k, k:])
    R1 = np.hstack([np.eye(k), -Y]) @ Z.T
    G = R1 @ B
    s = np.linalg.svd(G, compute_uv=False)
    if not s[-1] > TOL.gain * s[0]:
        raise SingularGain("inputs do not reach the identified unstable modes")
    return -np.linalg.solve(G, T[:k, :k] @ R1)


def baseline_controller(idsys: IdentifiedSystem, margin: float = TOL.margin,
                        tau_max: int = 64, tau_margin: float = 0.0,
                        method: str = "modal") -> BaselineController:
    """Cancel the unstable modes of the identified model.

    ``method="modal"`` (default) uses the rows ``R1`` spanning the left
    unstable invariant subspace of ``A_hat`` (``R1 A_hat = N1 R1``) and
    returns ``K = -(R1 B_hat)^{-1} N1 R1`` with ``tau = 1``; the closed
    loop then satisfies ``R1 (A_hat + B_hat K) = 0``, so the unstable
    eigenvalues move to zero and the stable ones are untouched.

    ``method="tau-hop"`` applies the learner's rule to the model: with
    ``P1`` an orthonormal basis of the unstable subspace and
    ``M1 = P1^T A_hat P1``, the smallest ``tau`` for which
    ``K = -(P1^T A_hat^(tau-1) B_hat)^{-1} M1^tau P1^T`` brings the model
    closed loop below ``1 - tau_margin``.

    Only the first ``k`` inputs are used.

    Raises
    ------
    MarginViolation
    SingularGain
        The model has more unstable modes than inputs, or the gain is singular.
    SearchExhausted
        ``tau-hop`` only: invertible gains exist but none stabilizes the model.
    """
    if method not in ("modal", "tau-hop"):
        raise ValueError(f"unknown method {method!r}")
    A_hat, B_hat = idsys.A_hat, idsys.B_hat
    n, m = B_hat.shape
    T, Z, k = _ordered_schur(A_hat, margin)
    if k == 0:
        return BaselineController(np.zeros((m, n)), 1, 0)
    if k > m:
        raise SingularGain(f"identified model has k={k} unstable modes but only m={m} inputs")
    B = B_hat[:, :k]
    K = np.zeros((m, n))
    if method == "modal":
        K[:k] = _modal_gain(T, Z, k, B)
        return BaselineController(K, 1, k)
    P1 = Z[:, :k]
    M1 = P1.T @ A_hat @ P1
    invertible = False
    A_pre = np.eye(n)
    for tau in range(1, tau_max + 1):
        if tau > 1:
            A_pre = A_pre @ A_hat
        B_tau = P1.T @ A_pre @ B
        s = np.linalg.svd(B_tau, compute_uv=False)
        if not s[-1] > TOL.gain * s[0]:
            continue
        invertible = True
        K1 = -np.linalg.solve(B_tau, matrix_power(M1, tau) @ P1.T)
        closed = A_pre @ A_hat + A_pre @ B @ K1
        if spectral_radius(closed) < 1.0 - max(tau_margin, TOL.stability):
            K[:k] = K1
            return BaselineController(K, tau, k)
    if not invertible:
        raise SingularGain(f"no tau <= {tau_max} gives an invertible effective gain")
    raise SearchExhausted(f"no stabilizing tau <= {tau_max} on the identified model")


def run_baseline(sys: LinearSystem, config: BaselineConfig = BaselineConfig(), x0=None,
                 seed: int | None = None) -> tuple[IdentifiedSystem, BaselineController, Trajectory]:
    """Identify, design and run the baseline on one trajectory.

    Returns
    -------
    idsys : IdentifiedSystem
    controller : BaselineController
    trajectory : Trajectory
        Identification steps followed by ``config.control_steps`` controlled
        steps.

    Raises
    ------
    IllConditioned, MarginViolation, SingularGain, SearchExhausted, Overflow
    """
    plant = Plant(sys, x0, seed)
    probe_seed = sys.seed if seed is None else seed
    idsys = identify_full(plant, config.probe_scale, config.rcond, probe_seed)
    ctrl = baseline_controller(idsys, config.margin, config.tau_max, config.tau_margin,
                               config.method)
    run_controlled(plant, ctrl.K, ctrl.tau, config.control_steps)
    return idsys, ctrl, plant.trajectory()

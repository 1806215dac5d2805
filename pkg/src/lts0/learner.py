"""The four-stage single-trajectory stabilizing learner.

The learner sees the plant only through :class:`~lts0.plant.Plant`: the
observed states, the dimensions, and the inputs it chooses. Ground truth
enters only in :func:`adapt_params`, which is an oracle-mode helper for
experiment harnesses.

Time indexing: ``x_0`` is the initial state. Stage 1 runs ``t0 + k`` open
loop steps and uses ``D = [x_{t0+1} .. x_{t0+k}]``. Stage 2 regresses on the
pairs ``(x_t, x_{t+1})`` for ``t = t0+1 .. t0+k``; its last target
``x_{t0+k+1}`` is the first heat-up step of Stage 3, which is therefore
always at least one open-loop step long.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    IllConditioned,
    Lts0Error,
    RankDeficient,
    SearchExhausted,
    SingularGain,
    StageError,
)
from .linalg import matrix_power, solve_least_squares, spectral_radius, thin_svd, vector_norm
from .plant import LinearSystem, Plant, Trajectory
from .spectral import SpectralData, decompose, _check_gain
from .tolerances import TOL

__all__ = [
    "Lts0Params",
    "LearnedModel",
    "AdaptTargets",
    "stage1_learn_subspace",
    "stage2_learn_M1",
    "stage3_learn_Btau",
    "stage4_build_controller",
    "run_lts0",
    "adapt_params",
    "projector_errors",
    "tau_hop_policy",
    "run_controlled",
]


@dataclass(frozen=True)
class Lts0Params:
    """Algorithm knobs.

    Attributes
    ----------
    t0 : int
        Initial open-loop steps before the subspace window.
    k : int
        Number of unstable modes (given).
    tau : int
        Hop length of the controller.
    omega : int
        Maximum heat-up steps before each probe.
    alpha : float
        Probe scale relative to the current state norm.
    delta : float
        Target projector error (used by the parameter search).
    early_stop_ratio : float
        Heat-up ends once ``||P1_hat^T x|| / ||x||`` reaches this value.
    cond_limit : float
        Largest accepted ``cond(D^T D)``.
    early_stop : bool
        Whether heat-up may end early.
    """

    t0: int
    k: int
    tau: int = 1
    omega: int = 0
    alpha: float = 1.0
    delta: float = 1e-4
    early_stop_ratio: float = 0.999
    cond_limit: float = TOL.cond_limit
    early_stop: bool = True

    def __post_init__(self):
        if self.t0 < 0 or self.k < 1 or self.tau < 1 or self.omega < 0:
            raise ValueError("need t0 >= 0, k >= 1, tau >= 1, omega >= 0")
        if not self.alpha > 0 or not self.delta > 0:
            raise ValueError("alpha and delta must be positive")
        if not 0 < self.early_stop_ratio <= 1:
            raise ValueError("early_stop_ratio must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Lts0Params":
        return cls(**d)


@dataclass(frozen=True)
class LearnedModel:
    """Artifacts produced by one learning run.

    Attributes
    ----------
    P1_hat : ndarray, shape (n, k)
    Pi1_hat : ndarray, shape (n, n)
    M1_hat : ndarray, shape (k, k)
    B_tau_hat : ndarray, shape (k, k)
    K_hat : ndarray, shape (k, n)
        ``-B_tau_hat^{-1} M1_hat^tau P1_hat^T``; rows beyond ``k`` (when the
        plant has extra inputs) are implicitly zero.
    steps_used : int
        Transitions consumed by learning.
    tau : int
    omega_total : int
        Heat-up steps actually taken across all probes.
    """

    P1_hat: np.ndarray
    Pi1_hat: np.ndarray
    M1_hat: np.ndarray
    B_tau_hat: np.ndarray
    K_hat: np.ndarray
    steps_used: int
    tau: int = 1
    omega_total: int = 0

    @property
    def K1_hat(self) -> np.ndarray:
        return -np.linalg.solve(self.B_tau_hat, matrix_power(self.M1_hat, self.tau))

    def gain(self, m: int) -> np.ndarray:
        """Full ``m x n`` gain, padding unused input channels with zeros."""
        k, n = self.K_hat.shape
        out = np.zeros((m, n))
        out[:k] = self.K_hat
        return out

    def to_dict(self) -> dict:
        def mat(X):
            return [[float(v) for v in row] for row in np.atleast_2d(X)]

        return {
            "P1_hat": mat(self.P1_hat),
            "M1_hat": mat(self.M1_hat),
            "B_tau_hat": mat(self.B_tau_hat),
            "K_hat": mat(self.K_hat),
            "steps_used": int(self.steps_used),
            "tau": int(self.tau),
            "omega_total": int(self.omega_total),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LearnedModel":
        P1 = np.asarray(d["P1_hat"], dtype=float)
        return cls(
            P1_hat=P1,
            Pi1_hat=P1 @ P1.T,
            M1_hat=np.asarray(d["M1_hat"], dtype=float),
            B_tau_hat=np.asarray(d["B_tau_hat"], dtype=float),
            K_hat=np.asarray(d["K_hat"], dtype=float),
            steps_used=int(d["steps_used"]),
            tau=int(d.get("tau", 1)),
            omega_total=int(d.get("omega_total", 0)),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LearnedModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# stages


def stage1_learn_subspace(D, k: int, cond_limit: float = TOL.cond_limit):
    """Estimate the unstable subspace from ``k`` consecutive states.

    Parameters
    ----------
    D : array_like, shape (n, k)
        Columns ``x_{t0+1} .. x_{t0+k}``.
    k : int
    cond_limit : float

    Returns
    -------
    P1_hat : ndarray, shape (n, k)
        Left singular vectors of ``D``.
    Pi1_hat : ndarray, shape (n, n)
        ``D (D^T D)^{-1} D^T``, formed as ``P1_hat P1_hat^T``.

    Raises
    ------
    IllConditioned
        If ``cond(D^T D) > cond_limit``.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[1] != k:
        raise ValueError(f"D must have k={k} columns")
    svd = thin_svd(D)
    s = svd.s
    if s[-1] == 0 or (s[0] / s[-1]) ** 2 > cond_limit:
        c = float("inf") if s[-1] == 0 else (s[0] / s[-1]) ** 2
        raise IllConditioned(f"cond(D^T D) = {c:.3e} exceeds {cond_limit:.1e}")
    P1_hat = svd.U[:, :k]
    return P1_hat, P1_hat @ P1_hat.T


def stage2_learn_M1(P1_hat, X) -> np.ndarray:
    """Least-squares estimate of the unstable block.

    Parameters
    ----------
    P1_hat : ndarray, shape (n, k)
    X : array_like, shape (k + 1, n)
        Rows ``x_{t0+1} .. x_{t0+k+1}``.

    Returns
    -------
    ndarray, shape (k, k)
        ``argmin_M sum_t ||P1_hat^T x_{t+1} - M P1_hat^T x_t||^2``.

    Raises
    ------
    RankDeficient
    """
    Y = np.asarray(X, dtype=float) @ P1_hat  # rows are P1_hat^T x_t
    regress, target = Y[:-1], Y[1:]
    # M Y0^T = Y1^T  <=>  Y0 M^T = Y1
    return solve_least_squares(regress, target).T


def stage3_learn_Btau(plant: Plant, P1_hat, M1_hat, params: Lts0Params,
                      heatup_done: int = 0):
    """Estimate ``B_tau`` column by column with scaled unit probes.

    Parameters
    ----------
    plant : Plant
        Session positioned after the Stage 2 target state.
    P1_hat, M1_hat : ndarray
    params : Lts0Params
    heatup_done : int
        Heat-up steps of the first column already taken by the caller; they
        count against ``omega`` and are never cut short.

    Returns
    -------
    B_tau_hat : ndarray, shape (k, k)
    omega_total : int
        Heat-up steps actually taken.

    Raises
    ------
    Overflow
    """
    k, tau, alpha = params.k, params.tau, params.alpha
    M1_tau = matrix_power(M1_hat, tau)
    B_hat = np.zeros((k, k))
    omega_total = 0
    m = plant.m
    for i in range(k):
        forced = heatup_done if i == 0 else 0
        budget = max(params.omega, forced)
        taken = forced
        while taken < budget:
            if taken >= forced and params.early_stop:
                x = plant.state
                nx = vector_norm(x)
                if nx > 0 and vector_norm(P1_hat.T @ x) / nx >= params.early_stop_ratio:
                    break
            plant.run_open_loop(1, "heat-up")
            taken += 1
        omega_total += taken
        x_ti = plant.state
        scale = alpha * vector_norm(x_ti)
        if scale == 0:
            raise RankDeficient("zero state at probe time")
        u = np.zeros(m)
        u[i] = scale
        plant.apply(u, "probe")
        if tau > 1:
            plant.run_open_loop(tau - 1, "probe")
        x_end = plant.state
        B_hat[:, i] = (P1_hat.T @ x_end - M1_tau @ (P1_hat.T @ x_ti)) / scale
    return B_hat, omega_total


def stage4_build_controller(P1_hat, M1_hat, B_tau_hat, tau: int) -> np.ndarray:
    """``K_hat = -B_tau_hat^{-1} M1_hat^tau P1_hat^T``.

    Raises
    ------
    SingularGain
    """
    B_tau_hat = np.asarray(B_tau_hat, dtype=float)
    _check_gain(B_tau_hat)
    return -np.linalg.solve(B_tau_hat, matrix_power(M1_hat, tau) @ P1_hat.T)


def run_lts0(plant: Plant, params: Lts0Params) -> tuple[LearnedModel, Trajectory]:
    """Run all four stages on one trajectory.

    Returns
    -------
    model : LearnedModel
    trajectory : Trajectory
        The learning segment (no controlled steps).

    Raises
    ------
    StageError
        Wraps the stage's original error in ``.cause``.
    """
    k = params.k
    if plant.m < k:
        raise StageError("setup", SingularGain(f"m={plant.m} < k={k}; pack the system first"))
    start = plant.t
    try:
        plant.run_open_loop(params.t0 + k, "open-loop")
    except Lts0Error as exc:
        raise StageError("stage1", exc) from exc
    window = plant.states(start + params.t0 + 1, start + params.t0 + k + 1)
    try:
        P1_hat, Pi1_hat = stage1_learn_subspace(window.T, k, params.cond_limit)
    except Lts0Error as exc:
        raise StageError("stage1", exc) from exc
    # x_{t0+k+1} is produced by the first (forced) heat-up step
    try:
        plant.run_open_loop(1, "heat-up")
    except Lts0Error as exc:
        raise StageError("stage2", exc) from exc
    X = plant.states(start + params.t0 + 1, start + params.t0 + k + 2)
    try:
        M1_hat = stage2_learn_M1(P1_hat, X)
    except Lts0Error as exc:
        raise StageError("stage2", exc) from exc
    try:
        B_tau_hat, omega_total = stage3_learn_Btau(plant, P1_hat, M1_hat, params, heatup_done=1)
    except Lts0Error as exc:
        raise StageError("stage3", exc) from exc
    try:
        K_hat = stage4_build_controller(P1_hat, M1_hat, B_tau_hat, params.tau)
    except Lts0Error as exc:
        raise StageError("stage4", exc) from exc
    model = LearnedModel(
        P1_hat=P1_hat, Pi1_hat=Pi1_hat, M1_hat=M1_hat, B_tau_hat=B_tau_hat,
        K_hat=K_hat, steps_used=plant.t - start, tau=params.tau,
        omega_total=omega_total,
    )
    return model, plant.trajectory()


# ---------------------------------------------------------------------------
# control phase


def run_controlled(plant: Plant, gain: np.ndarray, tau: int, steps: int) -> None:
    """Apply the tau-hop policy ``u = gain x`` every ``tau`` steps, zero otherwise.

    Parameters
    ----------
    plant : Plant
    gain : ndarray, shape (m, n)
    tau : int
    steps : int
        Total transitions to run (a final partial hop is allowed).

    Raises
    ------
    Overflow
    """
    done = 0
    while done < steps:
        plant.apply(gain @ plant.state, "controlled")
        rest = min(tau - 1, steps - done - 1)
        if rest > 0:
            plant.run_open_loop(rest, "controlled")
        done += 1 + max(rest, 0)


def tau_hop_policy(gain: np.ndarray, tau: int, start: int = 0):
    """Policy for :func:`~lts0.plant.rollout` injecting ``gain x`` every ``tau`` steps."""

    def policy(t, states):
        if (t - start) % tau == 0:
            return gain @ states[-1]
        return np.zeros(gain.shape[0])

    return policy


# ---------------------------------------------------------------------------
# oracle-mode parameter search (harness only)


@dataclass(frozen=True)
class AdaptTargets:
    """Targets for :func:`adapt_params`.

    Attributes
    ----------
    delta : float
        Required projector error ``||Pi1_hat - Pi1||``.
    omega_max : int
        Heat-up cap per probe when the orthogonal and invariant splits differ.
    alpha, early_stop_ratio, cond_limit : float
        Passed through to the returned parameters.
    tau_max : int
    tau_margin : float
        Spectral-radius margin the exact-quantity controller must meet.
    t0_cap_factor : int
        ``t0`` may not exceed ``t0_cap_factor * n``.
    """

    delta: float = 1e-4
    omega_max: int = 20
    alpha: float = 1.0
    early_stop_ratio: float = 0.999
    cond_limit: float = TOL.cond_limit
    tau_max: int = 64
    tau_margin: float = 0.1
    t0_cap_factor: int = 10


class _OpenLoopOracle:
    """Lazily extended open-loop replay of a run's first states."""

    def __init__(self, system: LinearSystem, x0=None, seed=None):
        self.plant = Plant(system, x0, seed)

    def window(self, t0: int, k: int) -> np.ndarray:
        need = t0 + k
        if self.plant.t < need:
            self.plant.run_open_loop(need - self.plant.t)
        return self.plant.states(t0 + 1, t0 + k + 1).T


def projector_errors(system: LinearSystem, Pi1: np.ndarray, k: int, t0_values,
                     x0=None, seed=None) -> np.ndarray:
    """``||Pi1_hat(t0) - Pi1||`` along one open-loop trajectory.

    No conditioning limit is applied; windows that are numerically rank
    deficient report ``nan``.
    """
    oracle = _OpenLoopOracle(system, x0, seed)
    out = []
    for t0 in t0_values:
        try:
            _, Pi_hat = stage1_learn_subspace(oracle.window(int(t0), k), k, np.inf)
            out.append(np.linalg.norm(Pi_hat - Pi1, 2))
        except IllConditioned:
            out.append(np.nan)
    return np.array(out)


def exact_tau_search(system: LinearSystem, spec: SpectralData, tau_max: int = 64,
                     margin: float = 0.0) -> int:
    """Smallest ``tau`` whose exact-quantity controller stabilizes the plant.

    With ``margin > 0`` the exact closed loop must reach a spectral radius
    below ``1 - margin``, leaving room for estimation error.

    Raises
    ------
    SearchExhausted
    """
    from .spectral import tau_hop_gain

    A = system.A
    k = spec.k
    B = system.B[:, :k]
    for tau in range(1, tau_max + 1):
        try:
            _, K1 = tau_hop_gain(A, B, spec.P1, spec.M1, tau)
        except SingularGain:
            continue
        A_tau = matrix_power(A, tau - 1)
        closed = A_tau @ A + A_tau @ B @ K1 @ spec.P1.T
        if spectral_radius(closed) < 1.0 - max(margin, TOL.stability):
            return tau
    raise SearchExhausted(f"no stabilizing tau up to {tau_max}")


def adapt_params(system: LinearSystem, targets: AdaptTargets = AdaptTargets(),
                 spec: SpectralData | None = None, x0=None, seed=None) -> Lts0Params:
    """Choose ``(t0, tau, omega)`` using ground truth.

    ``t0`` is the smallest value whose projector error on this run's own
    open-loop prefix is below ``targets.delta`` (doubling, then bisection).
    ``tau`` is the smallest hop length for which the exact-quantity
    controller stabilizes. ``omega`` is zero when the unstable subspace is
    orthogonal to the stable one (no coupling block) and ``omega_max``
    otherwise, with heat-up ended early by the ratio rule.

    Raises
    ------
    SearchExhausted
        No unstable modes, or a cap was hit.
    IllConditioned
        The window became ill-conditioned before reaching the target.
    """
    from .errors import Overflow

    if spec is None:
        spec = decompose(system.A)
    k = spec.k
    if k == 0:
        raise SearchExhausted("system has no unstable modes")
    n = system.n
    tau = exact_tau_search(system, spec, targets.tau_max, targets.tau_margin)
    coupled = np.linalg.norm(spec.Delta) > 1e-10 * np.linalg.norm(system.A)
    omega = targets.omega_max if coupled else 0

    Pi1 = spec.Pi1
    oracle = _OpenLoopOracle(system, x0, seed)
    cap = targets.t0_cap_factor * n

    def ok(t0: int) -> bool:
        _, Pi_hat = stage1_learn_subspace(oracle.window(t0, k), k, targets.cond_limit)
        return np.linalg.norm(Pi_hat - Pi1, 2) < targets.delta

    def ok_soft(t0: int) -> bool:
        try:
            return ok(t0)
        except IllConditioned:
            return False

    try:
        if ok(0):
            t0 = 0
        else:
            hi = 1
            while not ok(hi):
                if hi >= cap:
                    raise SearchExhausted(f"t0 cap {cap} reached")
                hi = min(2 * hi, cap)
            lo = hi // 2  # ok(lo) is false (or lo == 0, checked above)
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if ok_soft(mid):
                    hi = mid
                else:
                    lo = mid
            t0 = hi
    except Overflow as exc:
        raise SearchExhausted(f"open loop overflowed at t={exc.step} during t0 search") from exc
    return Lts0Params(
        t0=t0, k=k, tau=tau, omega=omega, alpha=targets.alpha, delta=targets.delta,
        early_stop_ratio=targets.early_stop_ratio, cond_limit=targets.cond_limit,
    )

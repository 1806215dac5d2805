"""Simulated plants: random generation, packing, and trajectory interaction.

The learner interacts with a system only through :class:`Plant`, which
exposes the current state, the dimensions, and an ``apply`` method. The
system matrices stay private to this module.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import DegenerateDraw, DimensionMismatch, NotNeeded, Overflow
from .linalg import as_matrix, matrix_power, row_norms
from .rng import TAG_INITIAL, TAG_NOISE, TAG_SYSTEM, Stream
from .tolerances import TOL

__all__ = [
    "LinearSystem",
    "GenSpec",
    "Trajectory",
    "PackedSystem",
    "Plant",
    "PHASES",
    "generate_system",
    "sample_initial_state",
    "step",
    "rollout",
    "pack_system",
    "packed_inputs",
    "save_system",
    "load_system",
]

PHASES = ("open-loop", "probe", "heat-up", "controlled")


def _frozen(X) -> np.ndarray:
    M = np.array(X, dtype=np.float64, order="C")
    M.setflags(write=False)
    return M


@dataclass(frozen=True)
class LinearSystem:
    """Plant ``x_{t+1} = A x_t + B u_t + sigma_w g_t``.

    Attributes
    ----------
    A : ndarray, shape (n, n)
    B : ndarray, shape (n, m)
    sigma_w : float
        Standard deviation of the additive Gaussian noise.
    seed : int
        Seed echoed into trajectories and used for the initial state and
        noise streams.
    k : int or None
        Instability index when known (set by the generator).
    """

    A: np.ndarray
    B: np.ndarray
    sigma_w: float = 0.0
    seed: int = 0
    k: int | None = None

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"inconsistent shapes A{A.shape} B{B.shape}")
        if not self.sigma_w >= 0:
            raise ValueError("sigma_w must be nonnegative")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "sigma_w", float(self.sigma_w))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def with_noise(self, sigma_w: float) -> "LinearSystem":
        return LinearSystem(self.A, self.B, sigma_w, self.seed, self.k)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "seed": self.seed,
            "sigma_w": self.sigma_w,
            "m": self.m,
            "A": [float(v) for v in self.A.ravel()],
            "B": [float(v) for v in self.B.ravel()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearSystem":
        n = int(d["n"])
        A = np.asarray(d["A"], dtype=float).reshape(n, n)
        B = np.asarray(d["B"], dtype=float)
        m = int(d.get("m") or (B.size // n))
        return cls(A, B.reshape(n, m), float(d.get("sigma_w", 0.0)), int(d.get("seed", 0)), d.get("k"))


@dataclass(frozen=True)
class GenSpec:
    """Recipe for a random system.

    Attributes
    ----------
    n, k : int
        State dimension and number of unstable eigenvalues.
    lambda_max : float
        Upper end of the unstable eigenvalue range ``(1, lambda_max)``.
    eigvec_perturbation : float
        Entry-wise ``U(-p, p)`` perturbation added to the orthogonal
        eigenvector matrix.
    seed : int
    m : int or None
        Number of inputs; defaults to ``k``.
    sigma_w : float
        Noise level attached to the generated system.
    """

    n: int
    k: int
    lambda_max: float = 2.0
    eigvec_perturbation: float = 0.3
    seed: int = 0
    m: int | None = None
    sigma_w: float = 0.0

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError("need 1 <= k <= n")
        if not self.lambda_max > 1:
            raise ValueError("lambda_max must exceed 1")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be positive")


@dataclass
class Trajectory:
    """Recorded interaction.

    Attributes
    ----------
    states : ndarray, shape (T + 1, n)
    inputs : ndarray, shape (T, m)
    phases : list of str
        One tag per input.
    seed : int
    """

    states: np.ndarray
    inputs: np.ndarray
    phases: list = field(default_factory=list)
    seed: int = 0

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]

    def norms(self) -> np.ndarray:
        return row_norms(self.states)

    def max_norm(self) -> float:
        return float(self.norms().max())

    def to_csv(self, path, include_states: bool = False) -> None:
        """Write ``t, phase, norm, [x_i...], u_j...``; the final state has no input."""
        n = self.states.shape[1]
        m = self.inputs.shape[1]
        header = ["t", "phase", "norm"]
        if include_states:
            header += [f"x{i}" for i in range(n)]
        header += [f"u{j}" for j in range(m)]
        norms = self.norms()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t in range(self.states.shape[0]):
                row = [t, self.phases[t] if t < len(self.phases) else "", repr(float(norms[t]))]
                if include_states:
                    row += [repr(float(v)) for v in self.states[t]]
                if t < self.horizon:
                    row += [repr(float(v)) for v in self.inputs[t]]
                else:
                    row += [""] * m
                w.writerow(row)


@dataclass(frozen=True)
class PackedSystem:
    """``d``-step packing of a system with fewer inputs than unstable modes.

    Packed state ``xt_s = [x_{sd}; ...; x_{sd+d-1}]`` and packed input
    ``ut_s = [u_{(s+1)d-1}; ...; u_{(s+2)d-2}]`` satisfy
    ``xt_{s+1} = A_tilde xt_s + B_tilde ut_s``.
    """

    original: LinearSystem
    d: int
    A_tilde: np.ndarray
    B_tilde: np.ndarray

    def as_system(self) -> LinearSystem:
        return LinearSystem(self.A_tilde, self.B_tilde, 0.0, self.original.seed, self.original.k)


def _random_orthogonal(stream: Stream, n: int) -> np.ndarray:
    G = stream.normal_matrix(n, n)
    Q, R = np.linalg.qr(G)
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def generate_system(spec: GenSpec) -> LinearSystem:
    """Draw ``A = V diag(lambda) V^{-1}`` and ``B`` with i.i.d. ``U(0, 1)`` entries.

    Unstable eigenvalues are i.i.d. ``U(1, lambda_max)`` sorted descending.
    Stable ones are ``(|lambda_k| / |lambda_1|^2) U(-1, 1)``, which enforces
    ``|lambda_1|^2 |lambda_{k+1}| < |lambda_k|``.

    Raises
    ------
    DegenerateDraw
        If 16 consecutive eigenvector draws are near-singular.
    """
    n, k = spec.n, spec.k
    m = spec.k if spec.m is None else spec.m
    stream = Stream(spec.seed, TAG_SYSTEM)
    unstable = np.sort(stream.uniform(k, 1.0, spec.lambda_max))[::-1]
    scale = unstable[-1] / unstable[0] ** 2
    stable = scale * stream.uniform(n - k, -1.0, 1.0)
    stable = stable[np.argsort(-np.abs(stable), kind="stable")]
    lam = np.concatenate([unstable, stable])
    for _ in range(16):
        V = _random_orthogonal(stream, n)
        if spec.eigvec_perturbation:
            V = V + spec.eigvec_perturbation * stream.uniform(n * n, -1.0, 1.0).reshape(n, n)
        s = np.linalg.svd(V, compute_uv=False)
        if s[-1] > 0 and s[0] / s[-1] <= 1e6:
            break
    else:
        raise DegenerateDraw("eigenvector matrix near-singular in 16 draws")
    # A = V diag(lam) V^{-1}, via a solve rather than an explicit inverse
    A = np.linalg.solve(V.T, (V * lam).T).T
    if spec.eigvec_perturbation == 0:
        A = 0.5 * (A + A.T)
    B = stream.uniform(n * m).reshape(n, m)
    return LinearSystem(A, B, spec.sigma_w, spec.seed, k)


def sample_initial_state(n: int, seed: int) -> np.ndarray:
    """Uniform draw from the unit sphere in ``R^n`` (normalized Gaussian)."""
    if n < 1:
        raise ValueError("n must be positive")
    stream = Stream(seed, TAG_INITIAL)
    while True:
        g = stream.normal(n)
        nrm = np.linalg.norm(g)
        if nrm > 0:
            return g / nrm


def step(sys: LinearSystem, x, u, noise_draw=None) -> np.ndarray:
    """One transition ``A x + B u + sigma_w g``."""
    x_next = sys.A @ np.asarray(x, dtype=float) + sys.B @ np.asarray(u, dtype=float)
    if sys.sigma_w and noise_draw is not None:
        x_next = x_next + sys.sigma_w * np.asarray(noise_draw, dtype=float)
    return x_next


class Plant:
    """Interactive single-trajectory session over a hidden system.

    Parameters
    ----------
    system : LinearSystem
    x0 : array_like, optional
        Initial state; defaults to :func:`sample_initial_state` with the
        system seed.
    seed : int, optional
        Seed of the noise stream; defaults to the system seed.
    """

    def __init__(self, system: LinearSystem, x0=None, seed: int | None = None):
        self._system = system
        self._seed = system.seed if seed is None else int(seed)
        self._noise = Stream(self._seed, TAG_NOISE)
        if x0 is None:
            x0 = sample_initial_state(system.n, self._seed)
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        if x0.shape[0] != system.n:
            raise DimensionMismatch("x0 has the wrong dimension")
        self._states = [x0.copy()]
        self._inputs: list = []
        self._phases: list = []

    @property
    def n(self) -> int:
        return self._system.n

    @property
    def m(self) -> int:
        return self._system.m

    @property
    def t(self) -> int:
        return len(self._inputs)

    @property
    def state(self) -> np.ndarray:
        return self._states[-1].copy()

    def states(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Observed states ``x_start .. x_{stop-1}`` as rows."""
        return np.array(self._states[start:stop])

    def _advance(self, U: np.ndarray, phase: str) -> np.ndarray:
        sysm = self._system
        steps = U.shape[0]
        if sysm.sigma_w:
            G = self._noise.normal_matrix(steps, sysm.n)
        else:
            G = np.zeros((steps, sysm.n))
        X, stop = _kernels.simulate(sysm.A, sysm.B, self._states[-1], U, G, sysm.sigma_w, TOL.overflow)
        done = steps if stop < 0 else stop - 1
        for i in range(done):
            self._states.append(X[i + 1].copy())
            self._inputs.append(U[i].copy())
            self._phases.append(phase)
        if stop >= 0:
            t_blow = self.t + 1
            raise Overflow(f"state norm exceeded {TOL.overflow:g} at t={t_blow}", t_blow, self.trajectory())
        return X[1:]

    def apply(self, u, phase: str = "controlled") -> np.ndarray:
        """Apply one input and return the next state.

        Raises
        ------
        Overflow
        """
        u = np.ascontiguousarray(np.asarray(u, dtype=float).reshape(1, self.m))
        return self._advance(u, phase)[0].copy()

    def run_open_loop(self, steps: int, phase: str = "open-loop") -> np.ndarray:
        """Apply ``steps`` zero inputs; return the new states as rows."""
        if steps <= 0:
            return np.zeros((0, self.n))
        return self._advance(np.zeros((int(steps), self.m)), phase)

    def trajectory(self) -> Trajectory:
        m = self.m
        inputs = np.array(self._inputs) if self._inputs else np.zeros((0, m))
        return Trajectory(np.array(self._states), inputs, list(self._phases), self._seed)


def rollout(sys: LinearSystem, x0, policy: Callable | None, horizon: int,
            phase: str = "controlled", seed: int | None = None) -> Trajectory:
    """Simulate ``horizon`` steps under ``policy(t, states) -> u``.

    ``policy`` may also return ``(u, phase)``. ``None`` means zero input.

    Raises
    ------
    Overflow
        Carries the blow-up step and the partial trajectory.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    plant = Plant(sys, x0, seed)
    if policy is None:
        plant.run_open_loop(horizon, phase)
        return plant.trajectory()
    for t in range(horizon):
        out = policy(t, plant.states())
        tag = phase
        if isinstance(out, tuple):
            out, tag = out
        plant.apply(out, tag)
    return plant.trajectory()


def pack_system(sys: LinearSystem, k: int | None = None) -> PackedSystem:
    """Pack ``d = ceil(k / m)`` consecutive steps into one.

    Raises
    ------
    NotNeeded
        If ``m >= k``.
    """
    if k is None:
        k = sys.k
    if k is None:
        from .spectral import instability_index

        k = instability_index(sys.A)
    n, m = sys.n, sys.m
    if m >= k:
        raise NotNeeded(f"m={m} already covers k={k}")
    d = math.ceil(k / m)
    powers = [matrix_power(sys.A, i) for i in range(d + 1)]
    At = np.zeros((n * d, n * d))
    Bt = np.zeros((n * d, m * d))
    for j in range(d):
        At[j * n:(j + 1) * n, (d - 1) * n:] = powers[j + 1]
        for i in range(j + 1):
            Bt[j * n:(j + 1) * n, i * m:(i + 1) * m] = powers[j - i] @ sys.B
    return PackedSystem(sys, d, At, Bt)


def packed_inputs(inputs: np.ndarray, d: int, s: int) -> np.ndarray:
    """Packed input ``ut_s`` from a raw input sequence (rows ``u_t``)."""
    lo = (s + 1) * d - 1
    return np.asarray(inputs[lo:lo + d]).reshape(-1)


def save_system(sys: LinearSystem, path) -> None:
    Path(path).write_text(json.dumps(sys.to_dict(), indent=1) + "\n")


def load_system(path) -> LinearSystem:
    return LinearSystem.from_dict(json.loads(Path(path).read_text()))

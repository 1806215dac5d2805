"""Experiment grid: seeded trials over ``(n, sigma_w)`` cells.

Each trial is reproducible from ``(n, k, sigma_w, seed)`` and the config
alone: the seed fixes the system draw, the initial state and the noise.
Trials whose draw is numerically unusable are resampled with the next
seed and counted in ``retries``; stability failures are data.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..baseline import BaselineConfig, run_baseline
from ..certify import certify_stability
from ..errors import (
    DegenerateDraw,
    EmptyInput,
    IllConditioned,
    IoError,
    MarginViolation,
    NonConvergence,
    NotDiagonalizable,
    Overflow,
    RankDeficient,
    SearchExhausted,
    SingularGain,
    StageError,
)
from ..learner import AdaptTargets, Lts0Params, adapt_params, run_controlled, run_lts0
from ..plant import GenSpec, LinearSystem, Plant, Trajectory, generate_system
from ..spectral import decompose

__all__ = [
    "CSV_HEADER",
    "ExperimentConfig",
    "ResultRow",
    "GridResult",
    "TrialOutcome",
    "run_trial",
    "run_grid",
    "compare_trajectories",
    "emit_csv",
    "emit_norms_csv",
    "zigzag_profile",
]

CSV_HEADER = (
    "method,n,k,sigma_w,seed,steps_used,t0,tau,omega_total,"
    "rho_closed,max_state_norm,stable,retries"
)

METHODS = ("lts0", "baseline")

# errors that make a draw unusable; the trial is repeated with a fresh seed
RESAMPLE = (
    IllConditioned,
    MarginViolation,
    DegenerateDraw,
    SearchExhausted,
    NotDiagonalizable,
    RankDeficient,
    NonConvergence,
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Experiment grid.

    Attributes
    ----------
    n_grid, sigma_w_grid : tuple
        Cells are the Cartesian product.
    k : int
        Unstable modes of every generated system.
    trials_per_cell : int
        Retained runs per cell and method.
    base_seed : int
        Seeds are tried in order ``base_seed, base_seed + 1, ...``.
    adaptive : bool
        Choose ``(t0, tau, omega)`` by the oracle search; otherwise use
        ``params``.
    output_dir : str
    methods : tuple of str
        Subset of ``("lts0", "baseline")``.
    lambda_max, eigvec_perturbation : float
        System generator knobs.
    control_steps : int
        Controlled transitions appended after learning.
    retry_factor : int
        A cell fails after ``retry_factor * trials_per_cell`` attempts.
    workers : int
        Process-pool size; cells run in parallel when above one.
    params : dict
        Fixed ``t0``, ``tau``, ``omega``, ``alpha`` for non-adaptive runs.
    targets : dict
        Overrides for :class:`~lts0.learner.AdaptTargets`.
    baseline : dict
        Overrides for :class:`~lts0.baseline.BaselineConfig`.
    """

    n_grid: tuple = (8, 16, 32, 64, 128)
    sigma_w_grid: tuple = (0.0, 0.01, 0.1)
    k: int = 3
    trials_per_cell: int = 30
    base_seed: int = 0
    adaptive: bool = True
    output_dir: str = "out"
    methods: tuple = ("lts0",)
    lambda_max: float = 2.0
    eigvec_perturbation: float = 0.3
    control_steps: int = 60
    retry_factor: int = 10
    workers: int = 1
    params: dict = field(default_factory=dict)
    targets: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(v) for v in self.n_grid))
        object.__setattr__(self, "sigma_w_grid", tuple(float(v) for v in self.sigma_w_grid))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.n_grid or not self.sigma_w_grid:
            raise ValueError("grids must be nonempty")
        if any(not (w >= 0.0 and np.isfinite(w)) for w in self.sigma_w_grid):
            raise ValueError("noise levels must be finite and nonnegative")
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be at least 1")
        if any(n <= self.k for n in self.n_grid):
            raise ValueError("every n must exceed k")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ValueError(f"unknown methods {sorted(bad)}")
        if self.retry_factor < 1:
            raise ValueError("retry_factor must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def gen_spec(self, n: int, sigma_w: float, seed: int) -> GenSpec:
        return GenSpec(
            n=n, k=self.k, lambda_max=self.lambda_max,
            eigvec_perturbation=self.eigvec_perturbation, seed=seed, sigma_w=sigma_w,
        )

    def adapt_targets(self) -> AdaptTargets:
        return AdaptTargets(**self.targets)

    def baseline_config(self) -> BaselineConfig:
        return replace(BaselineConfig(control_steps=self.control_steps), **self.baseline)


@dataclass(frozen=True)
class ResultRow:
    """One retained run."""

    method: str
    n: int
    k: int
    sigma_w: float
    seed: int
    steps_used: int
    t0: int
    tau: int
    omega_total: int
    rho_closed: float
    max_state_norm: float
    stable: bool
    retries: int

    def sort_key(self) -> tuple:
        return (METHODS.index(self.method), self.n, self.sigma_w, self.seed)

    def csv_fields(self) -> list:
        return [
            self.method, str(self.n), str(self.k), repr(float(self.sigma_w)), str(self.seed),
            str(self.steps_used), str(self.t0), str(self.tau), str(self.omega_total),
            repr(float(self.rho_closed)), repr(float(self.max_state_norm)),
            "true" if self.stable else "false", str(self.retries),
        ]


@dataclass
class TrialOutcome:
    """A completed trial: the row, the full trajectory and what was learned."""

    row: ResultRow
    trajectory: Trajectory
    system: LinearSystem | None = None
    model: object = None


@dataclass
class GridResult:
    """Rows in canonical order plus the cells that exhausted their retry budget."""

    rows: list
    failed_cells: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, i):
        return self.rows[i]


class _Resample(Exception):
    def __init__(self, cause: Exception):
        super().__init__(str(cause))
        self.cause = cause


def _unwrap(exc: Exception) -> Exception:
    return exc.cause if isinstance(exc, StageError) else exc


def _fixed_params(config: ExperimentConfig) -> Lts0Params:
    p = dict(config.params)
    p.setdefault("t0", 10)
    p.setdefault("k", config.k)
    return Lts0Params(**p)


def _run_lts0_trial(system: LinearSystem, config: ExperimentConfig, retries: int) -> TrialOutcome:
    try:
        spec = decompose(system.A)
        if config.adaptive:
            params = adapt_params(system, config.adapt_targets(), spec=spec)
        else:
            params = _fixed_params(config)
    except RESAMPLE as exc:
        raise _Resample(exc) from exc
    plant = Plant(system)
    n, k, seed = system.n, config.k, system.seed
    try:
        model, _ = run_lts0(plant, params)
    except StageError as exc:
        cause = _unwrap(exc)
        if isinstance(cause, RESAMPLE):
            raise _Resample(cause) from exc
        if isinstance(cause, (SingularGain, Overflow)):
            traj = cause.trajectory if isinstance(cause, Overflow) else plant.trajectory()
            row = ResultRow("lts0", n, k, system.sigma_w, seed, plant.t, params.t0, params.tau,
                            0, math.inf, _max_norm(traj), False, retries)
            return TrialOutcome(row, traj)
        raise
    verdict = certify_stability(system, model.K_hat, model.tau, seed=seed)
    try:
        run_controlled(plant, model.gain(system.m), model.tau, config.control_steps)
        traj = plant.trajectory()
    except Overflow as exc:
        traj = exc.trajectory
    row = ResultRow("lts0", n, k, system.sigma_w, seed, model.steps_used, params.t0, model.tau,
                    model.omega_total, verdict.rho, _max_norm(traj), verdict.stable, retries)
    return TrialOutcome(row, traj, system, model)


def _run_baseline_trial(system: LinearSystem, config: ExperimentConfig, retries: int) -> TrialOutcome:
    n, k, seed = system.n, config.k, system.seed
    bcfg = config.baseline_config()
    try:
        idsys, ctrl, traj = run_baseline(system, bcfg)
    except RESAMPLE as exc:
        raise _Resample(exc) from exc
    except Overflow as exc:
        traj = exc.trajectory
        row = ResultRow("baseline", n, k, system.sigma_w, seed, traj.horizon, 0, 0, 0,
                        math.inf, _max_norm(traj), False, retries)
        return TrialOutcome(row, traj)
    except SingularGain:
        plant_traj = Plant(system).trajectory()
        row = ResultRow("baseline", n, k, system.sigma_w, seed, n + system.m, 0, 0, 0,
                        math.inf, _max_norm(plant_traj), False, retries)
        return TrialOutcome(row, plant_traj)
    verdict = certify_stability(system, ctrl.K, ctrl.tau, seed=seed)
    row = ResultRow("baseline", n, k, system.sigma_w, seed, idsys.id_steps, 0, ctrl.tau, 0,
                    verdict.rho, _max_norm(traj), verdict.stable, retries)
    return TrialOutcome(row, traj, system, ctrl)


def _max_norm(traj: Trajectory) -> float:
    return float(np.max(traj.norms()))


def run_trial(method: str, n: int, sigma_w: float, seed: int, config: ExperimentConfig,
              retries: int = 0) -> TrialOutcome:
    """Run one method on the system drawn from ``(n, k, sigma_w, seed)``.

    Raises
    ------
    Lts0Error
        A resample-class error (the draw is unusable), re-raised as its
        original type.
    """
    try:
        system = generate_system(config.gen_spec(n, sigma_w, seed))
        if method == "lts0":
            return _run_lts0_trial(system, config, retries)
        if method == "baseline":
            return _run_baseline_trial(system, config, retries)
    except _Resample as exc:
        raise exc.cause from None
    except DegenerateDraw:
        raise
    raise ValueError(f"unknown method {method!r}")


def _run_cell(args) -> tuple[list, bool]:
    method, n, sigma_w, config = args
    rows = []
    budget = config.retry_factor * config.trials_per_cell
    seed = config.base_seed
    retries = 0
    attempts = 0
    while len(rows) < config.trials_per_cell and attempts < budget:
        attempts += 1
        try:
            out = run_trial(method, n, sigma_w, seed, config, retries)
        except RESAMPLE:
            retries += 1
            seed += 1
            continue
        rows.append(out.row)
        retries = 0
        seed += 1
    return rows, len(rows) == config.trials_per_cell


def run_grid(config: ExperimentConfig) -> GridResult:
    """Collect ``trials_per_cell`` retained runs for every cell and method.

    Returns
    -------
    GridResult
        Rows sorted by ``(method, n, sigma_w, seed)``; ``failed_cells``
        lists ``(method, n, sigma_w)`` cells that ran out of attempts.
    """
    jobs = [(method, n, s, config) for method in config.methods
            for n in config.n_grid for s in config.sigma_w_grid]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(job) for job in jobs]
    rows = []
    failed = []
    for (method, n, s, _), (cell_rows, ok) in zip(jobs, results):
        rows.extend(cell_rows)
        if not ok:
            failed.append((method, n, s))
    rows.sort(key=ResultRow.sort_key)
    return GridResult(rows, failed)


def zigzag_profile(norms, start: int, tau: int) -> dict:
    """Shape of a tau-hop controlled norm series.

    Parameters
    ----------
    norms : array_like
        ``||x_t||`` for the whole run.
    start : int
        Index of the first controlled state.
    tau : int

    Returns
    -------
    dict
        ``within_nonmonotone``: some hop has a norm increase inside it;
        ``boundary_decreasing``: fraction of hop boundaries where the norm
        fell relative to the previous boundary; ``boundary_log_slope``:
        least-squares slope of ``log10 ||x||`` per hop across boundaries
        (negative when the boundary norms decay overall).
    """
    x = np.asarray(norms, dtype=float)[start:]
    bounds = x[::tau]
    falls = np.diff(bounds) < 0
    inside = False
    for h in range(0, x.size - 1, tau):
        seg = x[h:h + tau + 1]
        if seg.size > 2 and np.any(np.diff(seg[1:]) > 0):
            inside = True
            break
    logs = np.log10(np.maximum(bounds, 1e-300))
    slope = float(np.polyfit(np.arange(logs.size), logs, 1)[0]) if logs.size > 1 else 0.0
    return {
        "within_nonmonotone": bool(inside),
        "boundary_decreasing": float(falls.mean()) if falls.size else 1.0,
        "boundary_log_slope": slope,
    }


def compare_trajectories(n: int, seed: int, config: ExperimentConfig | None = None,
                         sigma_w: float = 0.0) -> tuple[ResultRow, ResultRow, dict]:
    """Run both methods on the identical system and return their norm series.

    Returns
    -------
    lts0_row, baseline_row : ResultRow
    series : dict
        ``method -> (norms, phases)``.

    Raises
    ------
    Lts0Error
        If either method rejects the draw.
    """
    if config is None:
        config = ExperimentConfig(n_grid=(n,), sigma_w_grid=(sigma_w,), trials_per_cell=1,
                                  base_seed=seed, methods=METHODS)
    a = run_trial("lts0", n, sigma_w, seed, config)
    b = run_trial("baseline", n, sigma_w, seed, config)
    series = {
        "lts0": (a.trajectory.norms(), list(a.trajectory.phases)),
        "baseline": (b.trajectory.norms(), list(b.trajectory.phases)),
    }
    return a.row, b.row, series


def _open_for_write(path):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def emit_csv(rows, path) -> None:
    """Write rows under :data:`CSV_HEADER`, byte-deterministically.

    Raises
    ------
    EmptyInput
    IoError
    """
    rows = list(rows)
    if not rows:
        raise EmptyInput("no rows to write")
    with _open_for_write(path) as fh:
        fh.write(CSV_HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for r in rows:
            w.writerow(r.csv_fields())


def emit_norms_csv(series: dict, path) -> None:
    """Per-step norm series as ``method,t,phase,norm``.

    Raises
    ------
    EmptyInput
    IoError
    """
    if not series:
        raise EmptyInput("no series to write")
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "t", "phase", "norm"])
        for method in sorted(series, key=lambda m: METHODS.index(m) if m in METHODS else 99):
            norms, phases = series[method]
            for t, v in enumerate(norms):
                w.writerow([method, t, phases[t] if t < len(phases) else "end", repr(float(v))])


def output_path(config: ExperimentConfig, name: str) -> str:
    return os.path.join(config.output_dir, name)

"""Command-line entry point: ``lts0 {gen,run,bench,compare,certify}``.

Exit status is 0 when every requested run completed; unstable closed loops
are reported as data. Lts0 errors exit with 2, bad usage with argparse's 2
as well, and grid cells that exhausted their retry budget with 3.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from ..certify import certify_stability, closed_loop_hat_L, theorem_constraints
from ..errors import IoError, Lts0Error
from ..learner import LearnedModel, Lts0Params
from ..plant import GenSpec, generate_system, load_system, save_system
from ..spectral import decompose
from .grid import (
    ExperimentConfig,
    compare_trajectories,
    emit_csv,
    emit_norms_csv,
    run_grid,
    run_trial,
    zigzag_profile,
)
from .svg import emit_svg, emit_trace_svg

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["main", "load_config"]

SEED_ENV = "LTS0_SEED"


def load_config(path, env=None) -> ExperimentConfig:
    """Read a JSON or TOML experiment config; ``LTS0_SEED`` overrides ``base_seed``.

    TOML files may keep the fields at top level or under ``[experiment]``.

    Raises
    ------
    IoError
    ValueError
        Unknown keys or invalid values.
    """
    env = os.environ if env is None else env
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if p.suffix.lower() == ".toml":
        data = tomllib.loads(raw.decode())
    else:
        data = json.loads(raw)
    data = dict(data.get("experiment", data))
    if env.get(SEED_ENV):
        data["base_seed"] = int(env[SEED_ENV])
    return ExperimentConfig.from_dict(data)


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True))


def _cmd_gen(args) -> int:
    system = generate_system(GenSpec(n=args.n, k=args.k, lambda_max=args.lambda_max,
                                     eigvec_perturbation=args.perturbation, seed=args.seed,
                                     m=args.m, sigma_w=args.sigma_w))
    if args.out:
        save_system(system, args.out)
    else:
        _print_json(system.to_dict())
    return 0


def _single_config(args) -> ExperimentConfig:
    params = {}
    for name in ("t0", "tau", "omega", "alpha"):
        v = getattr(args, name)
        if v is not None:
            params[name] = v
    return ExperimentConfig(n_grid=(args.n,), sigma_w_grid=(args.sigma_w,), k=args.k,
                            trials_per_cell=1, base_seed=args.seed, adaptive=args.adaptive,
                            params=params, control_steps=args.control_steps)


def _cmd_run(args) -> int:
    if not args.adaptive and args.t0 is None:
        raise SystemExit("run: --t0 is required unless --adaptive is given")
    config = _single_config(args)
    out = run_trial("lts0", args.n, args.sigma_w, args.seed, config)
    _print_json(out.row.__dict__)
    if args.out:
        out.trajectory.to_csv(args.out)
    if args.system_out:
        save_system(out.system, args.system_out)
    if args.model_out and out.model is not None:
        out.model.save(args.model_out)
    return 0


def _cmd_bench(args) -> int:
    config = load_config(args.config)
    if args.output_dir:
        config = replace(config, output_dir=args.output_dir)
    if args.workers:
        config = replace(config, workers=args.workers)
    result = run_grid(config)
    out = Path(config.output_dir)
    if result.rows:
        emit_csv(result.rows, out / "results.csv")
        emit_svg(result.rows, out / "steps.svg")
    for cell in result.failed_cells:
        print(f"cell failed after retry budget: method={cell[0]} n={cell[1]} sigma_w={cell[2]}",
              file=sys.stderr)
    print(f"{len(result.rows)} rows written to {out / 'results.csv'}")
    return 3 if result.failed_cells else 0


def _cmd_compare(args) -> int:
    seed = int(os.environ.get(SEED_ENV) or args.seed)
    config = ExperimentConfig(n_grid=(args.n,), sigma_w_grid=(args.sigma_w,), k=args.k,
                              trials_per_cell=1, base_seed=seed, methods=("lts0", "baseline"),
                              control_steps=args.control_steps)
    a, b, series = compare_trajectories(args.n, seed, config, args.sigma_w)
    out = Path(args.output_dir)
    emit_csv([a, b], out / "compare.csv")
    emit_norms_csv(series, out / "norms.csv")
    emit_trace_svg(series, out / "norms.svg")
    norms, phases = series["lts0"]
    start = phases.index("controlled") if "controlled" in phases else len(phases)
    _print_json({"lts0": a.__dict__, "baseline": b.__dict__,
                 "lts0_zigzag": zigzag_profile(norms, start, a.tau)})
    return 0


def _cmd_certify(args) -> int:
    system = load_system(args.system)
    model = LearnedModel.load(args.model)
    spec = decompose(system.A)
    report = closed_loop_hat_L(spec, system, model)
    verdict = certify_stability(system, model.gain(system.m), model.tau, seed=system.seed)
    out = {"hat_L": report.to_dict(), "stability": verdict.to_dict()}
    if args.constraints:
        params = Lts0Params(t0=args.t0, k=spec.k, tau=model.tau, omega=args.omega, alpha=args.alpha)
        out["constraints"] = theorem_constraints(spec, system, model, params).to_dict()
    text = json.dumps(out, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lts0", description="Single-trajectory stabilization experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a system and write it as JSON")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--k", type=int, default=3)
    g.add_argument("--m", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--sigma-w", type=float, default=0.0)
    g.add_argument("--lambda-max", type=float, default=2.0)
    g.add_argument("--perturbation", type=float, default=0.3)
    g.add_argument("--out", default=None)
    g.set_defaults(func=_cmd_gen)

    r = sub.add_parser("run", help="one learning run followed by control")
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--k", type=int, default=3)
    r.add_argument("--sigma-w", type=float, default=0.0)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--t0", type=int, default=None)
    r.add_argument("--tau", type=int, default=None)
    r.add_argument("--omega", type=int, default=None)
    r.add_argument("--alpha", type=float, default=None)
    r.add_argument("--adaptive", action="store_true")
    r.add_argument("--control-steps", type=int, default=60)
    r.add_argument("--out", default=None, help="trajectory CSV")
    r.add_argument("--system-out", default=None, help="system JSON")
    r.add_argument("--model-out", default=None, help="learned model JSON")
    r.set_defaults(func=_cmd_run)

    b = sub.add_parser("bench", help="run a grid from a JSON or TOML config")
    b.add_argument("config")
    b.add_argument("--output-dir", default=None)
    b.add_argument("--workers", type=int, default=None)
    b.set_defaults(func=_cmd_bench)

    c = sub.add_parser("compare", help="learner and baseline on the same system")
    c.add_argument("--n", type=int, default=128)
    c.add_argument("--k", type=int, default=3)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--sigma-w", type=float, default=0.0)
    c.add_argument("--control-steps", type=int, default=60)
    c.add_argument("--output-dir", default="out")
    c.set_defaults(func=_cmd_compare)

    z = sub.add_parser("certify", help="stability report for a saved system and model")
    z.add_argument("--system", required=True)
    z.add_argument("--model", required=True)
    z.add_argument("--constraints", action="store_true", help="also evaluate the parameter constraints")
    z.add_argument("--t0", type=int, default=0)
    z.add_argument("--omega", type=int, default=0)
    z.add_argument("--alpha", type=float, default=1.0)
    z.add_argument("--out", default=None)
    z.set_defaults(func=_cmd_certify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Lts0Error as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2

"""Command-line interface: ``robustbandit {evaluate,learn,experiment,boundary,simulate}``.

Outputs go to ``--output-dir`` (default: ``$ROBUSTBANDIT_OUTPUT_DIR`` or the
current directory). Exit status is 0 on success, 1 on validation errors and
2 on I/O or parse errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import io
from .core import ConstantPolicy, LoggedDataset, Policy, RobustBanditError, ValidationError
from .dual import SolverConfig, evaluate_policy
from .experiments import (
    DEFAULT_REPLICATIONS, FULL_REPLICATIONS, ComparisonConfig, boundary_grid, build_env,
    clt_coverage, policy_from_name, regret_sweep, run_comparison,
)
from .fdiv import evaluate_policy_fdiv
from .learn import GdConfig, learn_dro, learn_lin
from .sim import generate_dataset, make_testsets

OUTPUT_ENV = "ROBUSTBANDIT_OUTPUT_DIR"
EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2

log = logging.getLogger("robustbandit")


class IOFailure(Exception):
    """Raised for unreadable or unwritable files."""


def _positive(kind=float):
    def parse(s):
        v = kind(s)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v
    return parse


def _int_list(s):
    try:
        out = [int(t) for t in s.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("sample sizes must be positive")
    return out


def _float_list(s):
    try:
        return [float(t) for t in s.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")


def output_dir(args) -> Path:
    d = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _add_data_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="dataset CSV with columns x1..xp,action,reward,propensity")
    src.add_argument("--env", choices=["linear", "nonlinear"], help="simulate a dataset instead")
    p.add_argument("--n", type=_positive(int), default=5000, help="simulated sample size")
    p.add_argument("--clip", choices=["shift", "zero"], default=None,
                   help="reward clipping convention of the nonlinear environment")
    p.add_argument("--num-actions", type=_positive(int), help="number of actions (CSV input)")
    p.add_argument("--reward-bound", type=_positive(float), help="reward bound M (CSV input)")
    p.add_argument("--eta", type=float, default=None, help="overlap bound checked on CSV input")


def _load_data(args):
    """``(dataset, environment or None)``."""
    if args.data:
        eta = 1e-12 if args.eta is None else args.eta
        return io.read_dataset(args.data, args.num_actions, args.reward_bound, eta=eta), None
    env, table = build_env(args.env, args.clip)
    return generate_dataset(env, table, args.n, args.seed), env


def _load_policy(spec: str, data: LoggedDataset, env, delta: float) -> Policy:
    if spec.startswith("constant:"):
        return ConstantPolicy(int(spec.split(":", 1)[1]), data.num_actions)
    if spec in ("bayes", "bayes-dro"):
        if env is None:
            raise ValidationError(f"policy {spec!r} needs --env")
        return policy_from_name(spec, env, delta)
    return io.read_theta(spec)


def cmd_evaluate(args) -> dict:
    data, env = _load_data(args)
    policy = _load_policy(args.policy, data, env, args.delta)
    if args.fdiv is not None:
        rep = evaluate_policy_fdiv(data, policy, args.fdiv, args.delta)
    else:
        rep = evaluate_policy(data, policy, args.delta, SolverConfig(tol=args.tol))
    out = rep.shifted(data.reward_offset).to_dict()
    out.update(delta=args.delta, policy=args.policy)
    io.write_json(out, output_dir(args) / "evaluate.json")
    return out


def _gd(args) -> GdConfig:
    return GdConfig(learning_rate=args.learning_rate, max_epochs=args.epochs,
                    temperature=args.temperature, seed=args.seed)


def cmd_learn(args) -> dict:
    data, env = _load_data(args)
    gd = _gd(args)
    if args.nonrobust:
        policy = learn_lin(data, gd).policy
        extra = {}
    else:
        fit = learn_dro(data, args.delta, gd)
        policy = fit.policy
        extra = {"outer_iterations": fit.outer_iterations, "converged": fit.converged,
                 "q_trace": [v - data.reward_offset for v in fit.q_trace],
                 "alpha_trace": fit.alpha_trace}
    out_dir = output_dir(args)
    stem = "lin" if args.nonrobust else "dro"
    io.write_theta(policy, out_dir / f"theta_{stem}.csv")
    rep = evaluate_policy(data, policy, args.delta).shifted(data.reward_offset)
    out = {"learner": stem, "delta": args.delta, "report": rep.to_dict(), **extra}
    if data.p >= 2:
        xs, ys, acts = boundary_grid(policy, data.p, args.resolution)
        io.write_grid(xs, ys, acts, out_dir / f"boundary_{stem}.csv")
    io.write_json(out, out_dir / f"learn_{stem}.json")
    return out


EXPERIMENT_KEYS = ("kind", "env", "clip", "n_grid", "delta", "n_prime", "m_sets", "replications",
                   "full", "workers", "seed", "n", "learning_rate", "epochs", "temperature")


def _apply_config(args, path: str):
    """Overlay a JSON config onto parsed arguments; unknown keys are rejected."""
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise io.ParseError(exc.msg, exc.lineno) from None
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a JSON object")
    unknown = sorted(set(cfg) - set(EXPERIMENT_KEYS))
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    for k, v in cfg.items():
        setattr(args, k, v)


def _write_records(rows: List[dict], path: Path):
    if not rows:
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: (" ".join(map(str, v)) if isinstance(v, list) else v) for k, v in r.items()})


def cmd_experiment(args) -> dict:
    if args.config:
        _apply_config(args, args.config)
    reps = args.replications or (FULL_REPLICATIONS if args.full else DEFAULT_REPLICATIONS)
    out_dir = output_dir(args)
    if args.kind == "comparison":
        cfg = ComparisonConfig(env=args.env, clip=args.clip, n_grid=tuple(args.n_grid), delta=args.delta,
                           n_prime=args.n_prime, m_sets=args.m_sets, replications=reps,
                           master_seed=args.seed, gd=_gd(args))
        report = run_comparison(cfg, workers=args.workers)
        out = report.to_dict()
        _write_records(report.rows(), out_dir / "experiment_records.csv")
    elif args.kind == "coverage":
        out = clt_coverage(replications=reps, n=args.n, delta=args.delta,
                           master_seed=args.seed).to_dict()
    else:
        out = regret_sweep(n_grid=args.n_grid, replications=reps, delta=args.delta,
                           master_seed=args.seed, gd=_gd(args)).to_dict()
    out["kind"] = args.kind
    io.write_json(out, out_dir / f"experiment_{args.kind}.json")
    return out


def cmd_boundary(args) -> dict:
    env, _ = build_env(args.env, args.clip)
    if args.sigmas:
        if len(args.sigmas) != env.num_actions:
            raise ValidationError(f"--sigmas needs {env.num_actions} values")
        env = env.with_sigmas(args.sigmas)
    if args.policy in ("bayes", "bayes-dro"):
        policy = policy_from_name(args.policy, env, args.delta)
    else:
        policy = io.read_theta(args.policy)
    xs, ys, acts = boundary_grid(policy, env.p, args.resolution)
    path = output_dir(args) / args.out
    io.write_grid(xs, ys, acts, path)
    counts = np.bincount(acts, minlength=env.num_actions + 1)[1:]
    return {"file": str(path), "resolution": args.resolution, "action_counts": counts.tolist()}


def cmd_simulate(args) -> dict:
    env, table = build_env(args.env, args.clip)
    data = generate_dataset(env, table, args.n, args.seed)
    out_dir = output_dir(args)
    io.write_dataset(data, out_dir / args.out)
    out = {"file": str(out_dir / args.out), "n": data.n, "reward_offset": data.reward_offset,
           "reward_bound": data.reward_bound, "eta": data.eta}
    if args.full_info:
        ts = make_testsets(env, 1, args.full_info, args.seed + 1)[0]
        io.write_full_info(ts, out_dir / "full_info.csv")
        out["full_info"] = str(out_dir / "full_info.csv")
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustbandit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("--output-dir", default=None, help=f"output directory (env {OUTPUT_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--delta", type=_positive(float), default=0.2, help="KL radius")
        p.add_argument("--seed", type=int, default=0, help="master seed")

    def learner(p):
        p.add_argument("--learning-rate", type=_positive(float), default=0.05)
        p.add_argument("--epochs", type=int, default=500, help="gradient steps per theta-step")
        p.add_argument("--temperature", type=_positive(float), default=0.1, help="softmax temperature")

    p = sub.add_parser("evaluate", help="robust value of a policy on logged data")
    _add_data_args(p)
    common(p)
    p.add_argument("--policy", required=True,
                   help="theta CSV, 'bayes', 'bayes-dro' or 'constant:<action>'")
    p.add_argument("--fdiv", type=float, default=None, metavar="K",
                   help="use the Cressie-Read divergence with exponent K > 1")
    p.add_argument("--tol", type=_positive(float), default=1e-8, help="dual solver tolerance")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("learn", help="learn a linear policy")
    _add_data_args(p)
    common(p)
    learner(p)
    p.add_argument("--nonrobust", action="store_true", help="maximise the IPW value instead")
    p.add_argument("--resolution", type=int, default=101, help="decision map resolution")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("experiment", help="replicated simulation studies")
    common(p)
    learner(p)
    p.add_argument("--kind", choices=["comparison", "coverage", "regret"], default="comparison")
    p.add_argument("--env", choices=["linear", "nonlinear"], default="nonlinear")
    p.add_argument("--clip", choices=["shift", "zero"], default=None)
    p.add_argument("--n-grid", type=_int_list, default=[500, 1000, 1500, 2000, 2500])
    p.add_argument("--n", type=_positive(int), default=5000, help="sample size for coverage runs")
    p.add_argument("--n-prime", type=_positive(int), default=2500, help="test set size")
    p.add_argument("--m-sets", type=_positive(int), default=100, help="perturbed test sets")
    p.add_argument("--replications", type=_positive(int), default=None,
                   help=f"default {DEFAULT_REPLICATIONS}")
    p.add_argument("--full", action="store_true", help=f"{FULL_REPLICATIONS} replications")
    p.add_argument("--workers", type=_positive(int), default=1)
    p.add_argument("--config", default=None, help="JSON file overriding these options")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("boundary", help="decision map over the first two coordinates")
    p.add_argument("--env", choices=["linear", "nonlinear"], default="linear")
    p.add_argument("--clip", choices=["shift", "zero"], default=None)
    p.add_argument("--policy", default="bayes", help="'bayes', 'bayes-dro' or a theta CSV")
    p.add_argument("--delta", type=_positive(float), default=0.2)
    p.add_argument("--sigmas", type=_float_list, default=None, help="override reward stds")
    p.add_argument("--resolution", type=int, default=101)
    p.add_argument("--out", default="boundary.csv")
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("simulate", help="export a simulated logged dataset")
    p.add_argument("--env", choices=["linear", "nonlinear"], default="linear")
    p.add_argument("--clip", choices=["shift", "zero"], default=None)
    p.add_argument("--n", type=_positive(int), default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="dataset.csv")
    p.add_argument("--full-info", type=int, default=0, metavar="N",
                   help="also write a full-information test set of N rows")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        out = args.func(args)
    except io.ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (IOFailure, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RobustBanditError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(io.dumps(out))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

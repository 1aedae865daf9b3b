"""Seeded experiment runners: adversarial comparison table, decision maps,
interval coverage and regret sweeps.

Every random stream is derived from ``SeedSequence([master, replication,
purpose, n])`` so any single replication can be rerun on its own and gives
bit-identical results. Records are keyed by replication index and sorted
before aggregation, so reports do not depend on worker scheduling.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence

import numpy as np

from .bayes import bayes_dro_policy, bayes_oracle, population_qdro
from .core import LinearPolicy, Policy, RobustBanditError
from .dual import SolverConfig, evaluate_policy
from .learn import GdConfig, learn_dro, learn_lin
from .sim import generate_dataset, make_linear_env, make_nonlinear_env, make_qmin_testsets, q_min
from . import sim

log = logging.getLogger(__name__)

TRAIN, TEST, QMIN, LEARNER, AGREE = range(5)
FULL_REPLICATIONS = 100
DEFAULT_REPLICATIONS = 30


def seed_for(master: int, replication: int, purpose: int, n: int = 0) -> np.random.SeedSequence:
    """Seed of one random stream; ``purpose`` is one of the module constants."""
    return np.random.SeedSequence([int(master), int(replication), int(purpose), int(n)])


def int_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


def build_env(name: str, clip: Optional[str] = None):
    """``(environment, logging table)``; ``clip`` only applies to the nonlinear environment."""
    if name == "linear":
        return make_linear_env(), sim.LINEAR_TABLE
    if name == "nonlinear":
        return make_nonlinear_env(clip=clip or "shift"), sim.NONLINEAR_TABLE
    raise ValueError(f"unknown environment {name!r}; choose 'linear' or 'nonlinear'")


@lru_cache(maxsize=8)
def _oracles(env_name: str, clip: Optional[str], delta: float, mc_contexts: int):
    env, _ = build_env(env_name, clip)
    dro, alpha = bayes_dro_policy(env, delta, mc_contexts=mc_contexts, seed=0,
                                  closed_form=env_name == "linear")
    return bayes_oracle(env), dro, alpha


def agreement(a: Policy, b: Policy, contexts: np.ndarray) -> float:
    return float(np.mean(a.act(contexts) == b.act(contexts)))


@dataclass
class ReplicationRecord:
    replication: int
    n: int
    policy: str
    seed: List[int]
    q_dro: float = math.nan
    alpha: float = math.nan
    std_error: float = math.nan
    q_min: float = math.nan
    agreement: float = math.nan
    wall_time: float = 0.0
    error: Optional[str] = None


@dataclass
class RunReport:
    config: dict
    records: List[ReplicationRecord] = field(default_factory=list)

    def sorted_records(self) -> List[ReplicationRecord]:
        return sorted(self.records, key=lambda r: (r.n, r.policy, r.replication))

    def aggregate(self) -> Dict[str, Dict[str, dict]]:
        """Mean and sample std of every metric per ``(n, policy)`` over successful records."""
        out: Dict[str, Dict[str, dict]] = {}
        for rec in self.sorted_records():
            if rec.error is None:
                out.setdefault(str(rec.n), {}).setdefault(rec.policy, []).append(rec)
        for n, by_policy in out.items():
            for name, recs in by_policy.items():
                cell = {"replications": len(recs)}
                for key in ("q_dro", "q_min", "agreement", "alpha", "std_error"):
                    v = np.array([getattr(r, key) for r in recs], dtype=float)
                    cell[key] = {"mean": float(v.mean()),
                                 "std": float(v.std(ddof=1)) if v.size > 1 else math.nan}
                by_policy[name] = cell
        return out

    def to_dict(self) -> dict:
        return {"config": self.config,
                "records": [asdict(r) for r in self.sorted_records()],
                "aggregate": self.aggregate(),
                "failures": sum(r.error is not None for r in self.records)}

    def rows(self) -> List[dict]:
        return [asdict(r) for r in self.sorted_records()]


@dataclass(frozen=True)
class ComparisonConfig:
    env: str = "nonlinear"
    clip: Optional[str] = None
    n_grid: tuple = (500, 1000, 1500, 2000, 2500)
    delta: float = 0.2
    n_prime: int = 2500
    m_sets: int = 100
    replications: int = DEFAULT_REPLICATIONS
    master_seed: int = 0
    agreement_contexts: int = 10_000
    oracle_contexts: int = 100_000
    gd: GdConfig = GdConfig()
    solver: SolverConfig = SolverConfig()

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.replications < 1 or self.m_sets < 1 or self.n_prime < 1:
            raise ValueError("replications, m_sets and n_prime must be >= 1")
        if not self.n_grid or min(self.n_grid) < 1:
            raise ValueError("n_grid must hold positive sample sizes")

    def describe(self) -> dict:
        d = asdict(self)
        d["n_grid"] = list(self.n_grid)
        return d


def comparison_replication(cfg: ComparisonConfig, rep: int) -> List[ReplicationRecord]:
    """Train both learners at every ``n``, then score them on fresh data."""
    env, table = build_env(cfg.env, cfg.clip)
    bayes, bayes_dro, _ = _oracles(cfg.env, cfg.clip, cfg.delta, cfg.oracle_contexts)
    out = []
    for n in cfg.n_grid:
        seed = [cfg.master_seed, rep, n]
        try:
            train = generate_dataset(env, table, n, seed_for(cfg.master_seed, rep, TRAIN, n))
            test = generate_dataset(env, table, cfg.n_prime, seed_for(cfg.master_seed, rep, TEST, n))
            sets = make_qmin_testsets(env, cfg.m_sets, cfg.n_prime, cfg.delta,
                                      seed_for(cfg.master_seed, rep, QMIN, n))
            ctx = env.sample_contexts(np.random.default_rng(seed_for(cfg.master_seed, rep, AGREE, n)),
                                      cfg.agreement_contexts)
            gd = GdConfig(**{**asdict(cfg.gd), "seed": int_seed(seed_for(cfg.master_seed, rep, LEARNER, n))})
        except RobustBanditError as exc:
            for name in ("lin", "dro"):
                out.append(ReplicationRecord(rep, n, name, seed, error=repr(exc)))
            continue
        for name, learner, oracle in (("lin", lambda d: learn_lin(d, gd).policy, bayes),
                                      ("dro", lambda d: learn_dro(d, cfg.delta, gd, cfg.solver).policy,
                                       bayes_dro)):
            rec = ReplicationRecord(rep, n, name, seed)
            t0 = time.perf_counter()
            try:
                policy = learner(train)
                report = evaluate_policy(test, policy, cfg.delta, cfg.solver)
                rec.q_dro = report.value - test.reward_offset
                rec.alpha = report.alpha_star
                rec.std_error = report.std_error
                rec.q_min = q_min(policy, sets)
                rec.agreement = agreement(policy, oracle, ctx)
            except RobustBanditError as exc:
                rec.error = repr(exc)
                log.warning("replication %d, n=%d, %s failed: %r", rep, n, name, exc)
            rec.wall_time = time.perf_counter() - t0
            out.append(rec)
    return out


def _comparison_job(args):
    return comparison_replication(*args)


def run_comparison(cfg: ComparisonConfig, workers: int = 1) -> RunReport:
    report = RunReport(cfg.describe())
    jobs = [(cfg, rep) for rep in range(cfg.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for recs in pool.map(_comparison_job, jobs):
                report.records.extend(recs)
    else:
        for job in jobs:
            report.records.extend(_comparison_job(job))
    return report


def grid_contexts(p: int, resolution: int, lo: float = -1.0, hi: float = 1.0):
    """Contexts on a ``resolution x resolution`` grid over the first two coordinates.

    Rows run over ``x1`` (outer) then ``x2`` (inner); other coordinates are 0.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if p < 2:
        raise ValueError("decision maps need at least two context coordinates")
    xs = np.linspace(lo, hi, resolution)
    g1, g2 = np.meshgrid(xs, xs, indexing="ij")
    ctx = np.zeros((resolution * resolution, p))
    ctx[:, 0], ctx[:, 1] = g1.ravel(), g2.ravel()
    return xs, ctx


def boundary_grid(policy: Policy, p: int, resolution: int = 101):
    """``(xs, ys, actions)`` of ``policy`` over ``[-1, 1]^2``."""
    xs, ctx = grid_contexts(p, resolution)
    return xs, xs, policy.act(ctx)


@dataclass
class CoverageResult:
    coverage: float
    target: float
    values: np.ndarray
    std_errors: np.ndarray
    level: float

    def to_dict(self) -> dict:
        return {"coverage": self.coverage, "target": self.target, "level": self.level,
                "replications": int(self.values.size),
                "mean_value": float(self.values.mean()),
                "mean_std_error": float(self.std_errors.mean()),
                "empirical_std": float(self.values.std(ddof=1)) if self.values.size > 1 else math.nan}


def clt_coverage(replications: int = 500, n: int = 5000, delta: float = 0.2,
                 master_seed: int = 0, policy: Optional[Policy] = None,
                 target_contexts: int = 400_000, level: float = 0.95) -> CoverageResult:
    """Fraction of normal intervals ``value +- z se`` that cover the population robust value.

    Uses the linear environment; the default policy is the Bayes rule.
    """
    from scipy.stats import norm

    env, table = build_env("linear")
    policy = policy or bayes_oracle(env)
    target = population_qdro(env, policy, delta, mc_contexts=target_contexts, seed=master_seed)
    z = norm.ppf(0.5 + level / 2.0)
    vals, ses = np.empty(replications), np.empty(replications)
    for r in range(replications):
        data = generate_dataset(env, table, n, seed_for(master_seed, r, TRAIN, n))
        rep = evaluate_policy(data, policy, delta)
        vals[r], ses[r] = rep.value - data.reward_offset, rep.std_error
    covered = np.abs(vals - target) <= z * ses
    return CoverageResult(float(covered.mean()), target, vals, ses, level)


@dataclass
class RegretResult:
    n_grid: List[int]
    regrets: np.ndarray  # (replications, len(n_grid))
    optimum: float

    @property
    def mean(self) -> np.ndarray:
        return self.regrets.mean(axis=0)

    @property
    def scaled(self) -> np.ndarray:
        return self.mean * np.sqrt(np.asarray(self.n_grid, dtype=float))

    def to_dict(self) -> dict:
        return {"n_grid": list(self.n_grid), "optimum": self.optimum,
                "mean_regret": self.mean, "std_regret": self.regrets.std(axis=0, ddof=1),
                "sqrt_n_scaled": self.scaled, "regrets": self.regrets}


def regret_sweep(n_grid: Sequence[int] = (500, 1000, 2000, 4000, 8000), replications: int = 30,
                 delta: float = 0.2, master_seed: int = 0, env_name: str = "linear",
                 mc_contexts: int = 100_000, gd: Optional[GdConfig] = None) -> RegretResult:
    """Population robust regret of the learned robust policy against the robust oracle.

    Every population value uses the same Monte Carlo contexts, so the
    oracle's sampling error cancels in the difference.
    """
    env, table = build_env(env_name)
    _, oracle, _ = _oracles(env_name, None, delta, mc_contexts)
    best = population_qdro(env, oracle, delta, mc_contexts=mc_contexts, seed=master_seed)
    gd = gd or GdConfig()
    regrets = np.empty((replications, len(n_grid)))
    for r in range(replications):
        for j, n in enumerate(n_grid):
            data = generate_dataset(env, table, n, seed_for(master_seed, r, TRAIN, n))
            cfg = GdConfig(**{**asdict(gd), "seed": int_seed(seed_for(master_seed, r, LEARNER, n))})
            policy = learn_dro(data, delta, cfg).policy
            regrets[r, j] = best - population_qdro(env, policy, delta, mc_contexts=mc_contexts,
                                                   seed=master_seed)
    return RegretResult(list(n_grid), regrets, best)


def policy_from_name(name: str, env, delta: float, mc_contexts: int = 100_000) -> Policy:
    """Named oracle policy: ``bayes`` or ``bayes-dro``."""
    if name == "bayes":
        return bayes_oracle(env)
    if name == "bayes-dro":
        return bayes_dro_policy(env, delta, mc_contexts=mc_contexts,
                                closed_form=env.name == "linear")[0]
    raise ValueError(f"unknown policy {name!r}; choose 'bayes', 'bayes-dro' or a theta CSV")


__all__ = [
    "TRAIN", "TEST", "QMIN", "LEARNER", "AGREE", "seed_for", "int_seed", "build_env",
    "agreement", "ReplicationRecord", "RunReport", "ComparisonConfig", "comparison_replication",
    "run_comparison", "grid_contexts", "boundary_grid", "CoverageResult", "clt_coverage",
    "RegretResult", "regret_sweep", "policy_from_name", "LinearPolicy",
]

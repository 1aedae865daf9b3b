"""Synthetic logged datasets and adversarially shifted full-information test sets."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .bayes import GaussianEnvironment, bayes_actions
from .core import LoggedDataset, Policy

log = logging.getLogger(__name__)

SQRT3_2 = math.sqrt(3.0) / 2.0


@dataclass(frozen=True, eq=False)
class LoggingPolicyTable:
    """``probs[a - 1, r - 1]`` = probability of logging action ``a`` in Bayes region ``r``."""

    probs: np.ndarray

    def __post_init__(self):
        t = np.array(self.probs, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError("logging table must be square (actions x regions)")
        if not np.allclose(t.sum(axis=0), 1.0, atol=1e-12):
            raise ValueError("logging table columns must sum to 1")
        if not np.all(t > 0):
            raise ValueError("logging table entries must be positive")
        t.setflags(write=False)
        object.__setattr__(self, "probs", t)

    @property
    def eta(self) -> float:
        return float(self.probs.min())

    @property
    def num_actions(self) -> int:
        return self.probs.shape[0]


LINEAR_TABLE = LoggingPolicyTable([[0.50, 0.25, 0.25],
                                   [0.25, 0.50, 0.25],
                                   [0.25, 0.25, 0.50]])

# the published nonlinear table is only stochastic along rows, so rows are
# read as regions: region r logs actions with probabilities row r
NONLINEAR_TABLE = LoggingPolicyTable(np.array([[0.50, 0.25, 0.25],
                                               [0.30, 0.40, 0.30],
                                               [0.30, 0.30, 0.40]]).T)


def unit_ball_sampler(p: int):
    def sample(rng: np.random.Generator, m: int) -> np.ndarray:
        z = rng.standard_normal((m, p))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        return z * rng.random((m, 1)) ** (1.0 / p)
    return sample


def cube_sampler(p: int):
    def sample(rng: np.random.Generator, m: int) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=(m, p))
    return sample


def _six_sigma_clip(mu_lo: float, mu_hi: float, sigmas) -> tuple:
    s = 6.0 * float(np.max(sigmas))
    return mu_lo - s, mu_hi + s


def make_linear_env(p: int = 5) -> GaussianEnvironment:
    """Linear Gaussian environment on the unit ball with three actions."""
    betas = np.zeros((3, p))
    betas[0, 0] = 1.0
    betas[1, :2] = (-0.5, SQRT3_2)
    betas[2, :2] = (-0.5, -SQRT3_2)
    sig = np.array([0.2, 0.5, 0.8])
    lo, hi = _six_sigma_clip(-1.0, 1.0, sig)
    betas.setflags(write=False)
    return GaussianEnvironment("linear", p, 3, lambda x: x @ betas.T, sig,
                               unit_ball_sampler(p), lo, hi, betas=betas)


def nonlinear_means(x: np.ndarray) -> np.ndarray:
    return np.stack([
        0.2 * x[:, 0],
        1.0 - np.hypot(x[:, 0] + 0.5, x[:, 1] - 1.0),
        1.0 - np.hypot(x[:, 0] + 0.5, x[:, 1] + 1.0),
    ], axis=1)


def make_nonlinear_env(p: int = 5, clip: str = "shift") -> GaussianEnvironment:
    """Three-action environment with curved Bayes boundaries on ``[-1, 1]^p``.

    ``clip="shift"`` (default) clips six standard deviations outside the mean
    range and shifts into ``[0, M]``; ``clip="zero"`` clips rewards to
    ``[0, 1 + 6 max sigma]`` in native units instead.
    """
    sig = np.array([0.8, 0.2, 0.4])
    if clip == "zero":
        lo, hi = 0.0, 1.0 + 6.0 * sig.max()
    elif clip == "shift":
        lo, hi = _six_sigma_clip(-1.5, 1.0, sig)
    else:
        raise ValueError(f"unknown clip convention {clip!r}")
    return GaussianEnvironment("nonlinear", p, 3, nonlinear_means, sig,
                               cube_sampler(p), lo, hi)


ENVIRONMENTS = {"linear": (make_linear_env, LINEAR_TABLE),
                "nonlinear": (make_nonlinear_env, NONLINEAR_TABLE)}


def make_env(name: str):
    """``(environment, logging table)`` by name."""
    try:
        factory, table = ENVIRONMENTS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}")
    return factory(), table


def _draw_rewards(env, rng, contexts, actions=None):
    mu = env.means(contexts)
    if actions is not None:
        idx = np.arange(contexts.shape[0])
        mu = mu[idx, actions - 1]
        sig = env.sigmas[actions - 1]
    else:
        sig = env.sigmas[None, :]
    z = mu + sig * rng.standard_normal(mu.shape)
    return z, env.clip(z)


def generate_dataset(env: GaussianEnvironment, table: LoggingPolicyTable, n: int,
                     seed) -> LoggedDataset:
    """Draw ``n`` logged records; the logging column is the Bayes region of ``x``."""
    if not env.bounded:
        raise ValueError("dataset generation needs a finite clip range")
    if table.num_actions != env.num_actions:
        raise ValueError("logging table size does not match the environment")
    rng = np.random.default_rng(seed)
    x = env.sample_contexts(rng, n)
    region = bayes_actions(env, x) - 1
    cdf = np.cumsum(table.probs[:, region].T, axis=1)
    u = rng.random(n)
    actions = np.minimum((u[:, None] >= cdf).sum(axis=1), env.num_actions - 1) + 1
    props = table.probs[actions - 1, region]
    z, y = _draw_rewards(env, rng, x, actions)
    clipped = np.count_nonzero(z != y)
    if clipped:
        log.debug("clipped %d of %d rewards (%.2e)", clipped, n, clipped / n)
    return LoggedDataset(x, actions, y + env.reward_offset, props, env.num_actions,
                         env.reward_bound, eta=table.eta, reward_offset=env.reward_offset)


@dataclass(frozen=True, eq=False)
class FullInfoSet:
    """Contexts with every action's reward (native units)."""

    contexts: np.ndarray
    rewards: np.ndarray
    shift: np.ndarray

    @property
    def n(self) -> int:
        return self.contexts.shape[0]


def make_testsets(env: GaussianEnvironment, M_sets: int, n_prime: int, seed) -> List[FullInfoSet]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(M_sets):
        x = env.sample_contexts(rng, n_prime)
        _, y = _draw_rewards(env, rng, x)
        out.append(FullInfoSet(x, y, np.zeros(env.num_actions)))
    return out


def kl_mean_shifts(env: GaussianEnvironment, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Downward mean shifts whose Gaussian KL cost sums to ``delta``.

    The budget is split uniformly on the simplex; shifting ``N(mu, s^2)`` by
    ``s sqrt(2 d)`` costs exactly ``d`` nats.
    """
    split = rng.dirichlet(np.ones(env.num_actions)) * delta
    return env.sigmas * np.sqrt(2.0 * split)


def perturb_testsets(env: GaussianEnvironment, testsets: Sequence[FullInfoSet], delta: float,
                     seed) -> List[FullInfoSet]:
    rng = np.random.default_rng(seed)
    out = []
    for ts in testsets:
        s = kl_mean_shifts(env, delta, rng)
        out.append(FullInfoSet(ts.contexts, env.clip(ts.rewards - s[None, :]), s))
    return out


def make_qmin_testsets(env: GaussianEnvironment, M_sets: int, n_prime: int, delta: float,
                       seed) -> List[FullInfoSet]:
    """``M_sets`` independent full-information sets, each shifted inside the KL budget."""
    if M_sets < 1:
        raise ValueError("M_sets must be >= 1")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    base_seed, shift_seed = ss.spawn(2)
    return perturb_testsets(env, make_testsets(env, M_sets, n_prime, base_seed), delta, shift_seed)


def set_value(policy: Policy, ts: FullInfoSet) -> float:
    acts = policy.act(ts.contexts)
    return float(ts.rewards[np.arange(ts.n), acts - 1].mean())


def q_min(policy: Policy, testsets: Sequence[FullInfoSet]) -> float:
    """Worst mean realised reward of ``policy`` across the test sets."""
    if not testsets:
        raise ValueError("need at least one test set")
    return min(set_value(policy, ts) for ts in testsets)

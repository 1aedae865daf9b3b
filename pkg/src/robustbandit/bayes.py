"""Gaussian synthetic environments, Bayes oracle policies and population robust values.

Rewards are ``Y(a) | X = x ~ N(mu_a(x), sigma_a^2)``, optionally clipped to
``[clip_low, clip_high]`` in native units. All moment generating functions
below are exact for the clipped law, so population values computed here are
ground truth for datasets produced by :mod:`robustbandit.sim`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import log_ndtr, logsumexp, ndtr

from .core import NonPositiveAlpha, OraclePolicy, Policy
from .scalar import grid_then_golden


@dataclass(frozen=True, eq=False)
class GaussianEnvironment:
    """Synthetic contextual bandit with Gaussian conditional rewards.

    ``mean_fn`` maps contexts ``(m, p)`` to means ``(m, d)``; ``sampler(rng, m)``
    draws ``m`` contexts. Datasets store ``clip(Y) - clip_low`` so rewards lie
    in ``[0, clip_high - clip_low]``.
    """

    name: str
    p: int
    num_actions: int
    mean_fn: Callable[[np.ndarray], np.ndarray]
    sigmas: np.ndarray
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    clip_low: float = -math.inf
    clip_high: float = math.inf
    betas: Optional[np.ndarray] = None

    def __post_init__(self):
        sig = np.array(self.sigmas, dtype=float)
        if sig.shape != (self.num_actions,) or not np.all(sig > 0):
            raise ValueError("sigmas must be positive, one per action")
        sig.setflags(write=False)
        object.__setattr__(self, "sigmas", sig)
        if not self.clip_low < self.clip_high:
            raise ValueError("clip_low must be below clip_high")

    def means(self, contexts) -> np.ndarray:
        x = np.atleast_2d(np.asarray(contexts, dtype=float))
        return np.asarray(self.mean_fn(x), dtype=float)

    def sample_contexts(self, rng: np.random.Generator, m: int) -> np.ndarray:
        return self.sampler(rng, m)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.clip_low) and math.isfinite(self.clip_high)

    @property
    def reward_offset(self) -> float:
        return -self.clip_low

    @property
    def reward_bound(self) -> float:
        return self.clip_high - self.clip_low

    def with_clip(self, low: float, high: float) -> "GaussianEnvironment":
        return replace(self, clip_low=low, clip_high=high)

    def with_sigmas(self, sigmas) -> "GaussianEnvironment":
        return replace(self, sigmas=np.asarray(sigmas, dtype=float))

    def clip(self, y: np.ndarray) -> np.ndarray:
        return np.clip(y, self.clip_low, self.clip_high)


def _log_diff_ndtr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``log(Phi(b) - Phi(a))`` for ``a <= b``, stable in both tails."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    out = np.empty(a.shape)
    upper = a > 0
    with np.errstate(divide="ignore"):
        la, lb = log_ndtr(-a[upper]), log_ndtr(-b[upper])
        out[upper] = la + np.log1p(-np.exp(lb - la))
        la, lb = log_ndtr(a[~upper]), log_ndtr(b[~upper])
        out[~upper] = lb + np.log1p(-np.exp(la - lb))
    return out


def log_mgf(env: GaussianEnvironment, actions, contexts, alpha: float) -> np.ndarray:
    """``log E[exp(-Y(a)/alpha) | X = x]`` for 1-based ``actions`` row-wise."""
    if not alpha > 0:
        raise NonPositiveAlpha(f"alpha must be positive, got {alpha}")
    x = np.atleast_2d(np.asarray(contexts, dtype=float))
    a = np.broadcast_to(np.asarray(actions), (x.shape[0],)) - 1
    mu = env.means(x)[np.arange(x.shape[0]), a]
    sig = env.sigmas[a]
    return _log_mgf(mu, sig, alpha, env.clip_low, env.clip_high)


def _log_mgf(mu, sig, alpha, lo, hi):
    shifted = mu - sig ** 2 / alpha
    terms = [-mu / alpha + sig ** 2 / (2.0 * alpha ** 2)
             + _log_diff_ndtr((lo - shifted) / sig, (hi - shifted) / sig)]
    if math.isfinite(lo):
        terms.append(log_ndtr((lo - mu) / sig) - lo / alpha)
    if math.isfinite(hi):
        terms.append(log_ndtr((mu - hi) / sig) - hi / alpha)
    return logsumexp(np.stack(terms), axis=0)


def all_log_mgf(env: GaussianEnvironment, contexts, alpha: float) -> np.ndarray:
    """Log mgf for every action, shape ``(m, d)``."""
    if not alpha > 0:
        raise NonPositiveAlpha(f"alpha must be positive, got {alpha}")
    mu = env.means(contexts)
    return _log_mgf(mu, env.sigmas[None, :], alpha, env.clip_low, env.clip_high)


def conditional_mgf(env: GaussianEnvironment, a: int, x, alpha: float) -> float:
    """``E[exp(-Y(a)/alpha) | X = x]``; ``exp(-mu/alpha + sigma^2/(2 alpha^2))`` without clipping."""
    return float(np.exp(log_mgf(env, a, np.atleast_2d(x), alpha)[0]))


def bayes_policy(env: GaussianEnvironment, x) -> int:
    return int(bayes_actions(env, np.atleast_2d(x))[0])


def bayes_actions(env: GaussianEnvironment, contexts) -> np.ndarray:
    return np.argmax(env.means(contexts), axis=1) + 1


def bayes_oracle(env: GaussianEnvironment) -> OraclePolicy:
    return OraclePolicy(lambda x: bayes_actions(env, x), env.num_actions, name="bayes")


def gaussian_dro_actions(env: GaussianEnvironment, contexts, alpha: float) -> np.ndarray:
    """Closed form ``argmax_a mu_a(x) - sigma_a^2 / (2 alpha)`` for unclipped Gaussians."""
    score = env.means(contexts) - env.sigmas[None, :] ** 2 / (2.0 * alpha)
    return np.argmax(score, axis=1) + 1


def _alpha_top(env: GaussianEnvironment, delta: float, x: np.ndarray) -> float:
    if env.bounded:
        spread = env.reward_bound
    else:
        mu = env.means(x)
        spread = float(mu.max() - mu.min() + 12.0 * env.sigmas.max())
    return 2.0 * max(spread, 1e-6) / delta


def _mc_contexts(env, mc_contexts, seed):
    return env.sample_contexts(np.random.default_rng(seed), int(mc_contexts))


def bayes_dro_policy(env: GaussianEnvironment, delta: float, mc_contexts: int = 100_000,
                     seed=0, closed_form: bool = False):
    """Robust-optimal policy over all measurable rules.

    Maximises ``-alpha log E_X[min_a E[exp(-Y(a)/alpha) | X]] - alpha delta``
    with the outer expectation a seeded Monte Carlo average, then acts by
    ``argmin_a`` of the conditional mgf at the maximiser. Returns
    ``(policy, alpha_star)``.
    """
    if mc_contexts < 1000:
        raise ValueError("mc_contexts must be at least 1000")
    x = _mc_contexts(env, mc_contexts, seed)
    n = x.shape[0]

    def objective(alpha):
        inner = all_log_mgf(env, x, alpha).min(axis=1)
        return -alpha * (logsumexp(inner) - math.log(n)) - alpha * delta

    alpha, _, _, _ = grid_then_golden(objective, 1e-4, _alpha_top(env, delta, x), num=80)

    if closed_form:
        rule = lambda c: gaussian_dro_actions(env, c, alpha)
    else:
        rule = lambda c: np.argmin(all_log_mgf(env, c, alpha), axis=1) + 1
    policy = OraclePolicy(rule, env.num_actions, name="bayes-dro",
                          info={"alpha_star": alpha, "mc_contexts": int(mc_contexts)})
    return policy, alpha


def population_dual(env: GaussianEnvironment, policy: Policy, delta: float,
                    mc_contexts: int = 100_000, seed=0):
    """Population robust value of ``policy`` in native units and its dual optimum."""
    x = _mc_contexts(env, mc_contexts, seed)
    acts = policy.act(x)
    n = x.shape[0]

    def objective(alpha):
        return -alpha * (logsumexp(log_mgf(env, acts, x, alpha)) - math.log(n)) - alpha * delta

    alpha, value, _, _ = grid_then_golden(objective, 1e-8, _alpha_top(env, delta, x), num=80)
    if env.bounded:
        # the alpha -> 0 limit is the essential infimum of the clipped law
        value = max(value, env.clip_low)
    return float(value), float(alpha)


def population_qdro(env: GaussianEnvironment, policy: Policy, delta: float,
                    mc_contexts: int = 100_000, seed=0) -> float:
    return population_dual(env, policy, delta, mc_contexts, seed)[0]


def conditional_means(env: GaussianEnvironment, contexts) -> np.ndarray:
    """``E[Y(a) | X = x]`` of the (possibly clipped) reward law, shape ``(m, d)``."""
    mu = env.means(contexts)
    sig = env.sigmas[None, :]
    lo, hi = env.clip_low, env.clip_high
    if not (math.isfinite(lo) or math.isfinite(hi)):
        return mu
    a, b = (lo - mu) / sig, (hi - mu) / sig
    out = mu * (ndtr(b) - ndtr(a)) + sig * (norm_pdf(a) - norm_pdf(b))
    if math.isfinite(lo):
        out = out + lo * ndtr(a)
    if math.isfinite(hi):
        out = out + hi * ndtr(-b)
    return out


def norm_pdf(z):
    return np.exp(-0.5 * np.square(z)) / math.sqrt(2.0 * math.pi)


def population_value(env: GaussianEnvironment, policy: Policy, mc_contexts: int = 100_000,
                     seed=0) -> float:
    """Non-robust value ``E[Y(pi(X))]`` in native units."""
    x = _mc_contexts(env, mc_contexts, seed)
    acts = policy.act(x)
    return float(conditional_means(env, x)[np.arange(x.shape[0]), acts - 1].mean())

"""KL-ball robust policy evaluation through the one-dimensional dual.

For a fixed policy the worst-case value over a KL ball of radius ``delta``
equals ``sup_{alpha > 0} -alpha log W(alpha) - alpha delta`` where ``W`` is the
self-normalised IPW average of ``exp(-Y / alpha)`` over records on which the
policy agrees with the logged action.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import logsumexp

from .core import (
    BoundarySolution, EvaluationReport, LoggedDataset, MaxIterExceeded,
    NoMatch, NonPositiveAlpha, Policy, match_weights, std_error,
)


@dataclass(frozen=True)
class SolverConfig:
    """Safeguarded Newton settings.

    ``alpha_init=None`` starts from ``M / (2 delta)`` clipped below at 1e-3.
    The upper clamp of the bracket is ``alpha_max_factor * M / delta``.
    """

    alpha_init: Optional[float] = None
    tol: float = 1e-8
    max_iter: int = 100
    alpha_min: float = 1e-6
    alpha_max_factor: float = 2.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.alpha_min > 0:
            raise ValueError("alpha_min must be positive")
        if self.alpha_init is not None and not self.alpha_init > self.alpha_min:
            raise ValueError("alpha_init must exceed alpha_min")


class DualCurve:
    """Empirical dual objective of one (dataset, policy) pair.

    Only matched records carry weight, so the curve keeps their rewards and
    IPW weights together with the total record count ``n``.
    """

    def __init__(self, rewards, weights, delta: float, n: Optional[int] = None,
                 reward_bound: Optional[float] = None):
        y = np.asarray(rewards, dtype=float)
        w = np.asarray(weights, dtype=float)
        keep = w > 0
        if not keep.any():
            raise NoMatch("policy matches no logged action")
        self.rewards = y[keep]
        self.weights = w[keep]
        self.n = int(n if n is not None else y.size)
        self.delta = float(delta)
        self.s_n = float(self.weights.sum() / self.n)
        self.reward_bound = float(self.rewards.max() if reward_bound is None else reward_bound)
        self.y_min = float(self.rewards.min())
        self._log_wbar = np.log(self.weights) - math.log(self.weights.sum())

    @classmethod
    def from_policy(cls, data: LoggedDataset, policy: Policy, delta: float) -> "DualCurve":
        mw = match_weights(data, policy)
        return cls(data.rewards, mw.ipw, delta, n=data.n, reward_bound=data.reward_bound)

    def tilt(self, alpha: float):
        """Shifted log normaliser and tilted probabilities at ``alpha``.

        Returns ``(log_w_shift, q)`` with ``log W_n = log_w_shift - y_min / alpha``.
        """
        if not alpha > 0:
            raise NonPositiveAlpha(f"alpha must be positive, got {alpha}")
        z = self._log_wbar - (self.rewards - self.y_min) / alpha
        lw = float(logsumexp(z))
        return lw, np.exp(z - lw)


def phi_hat(curve: DualCurve, alpha: float) -> float:
    lw, _ = curve.tilt(alpha)
    return curve.y_min - alpha * lw - alpha * curve.delta


def log_w_hat(curve: DualCurve, alpha: float) -> float:
    lw, _ = curve.tilt(alpha)
    return lw - curve.y_min / alpha


class PhiDerivs(NamedTuple):
    d1: float
    d2: float


def phi_derivs(curve: DualCurve, alpha: float) -> PhiDerivs:
    """First and second alpha-derivatives of the empirical dual.

    With ``q`` the tilted distribution these are
    ``-E_q[Y]/alpha - log W - delta`` and ``-Var_q(Y)/alpha^3``.
    """
    lw, q = curve.tilt(alpha)
    y = curve.rewards
    mean = float(q @ y)
    var = float(q @ (y - mean) ** 2)
    d1 = -(mean - curve.y_min) / alpha - lw - curve.delta
    d2 = -var / alpha ** 3
    return PhiDerivs(d1, d2)


def clt_variance(curve: DualCurve, alpha: float) -> float:
    """Plug-in asymptotic variance of the robust value at ``alpha``.

    Estimates ``alpha^2 E[(1/pi0)(e - E e)^2] / E[e]^2`` with
    ``e = exp(-Y(pi(X)) / alpha)``; under the logging measure the ``1/pi0``
    factor turns into a squared IPW weight.
    """
    lw, _ = curve.tilt(alpha)
    ratio = np.exp(-(curve.rewards - curve.y_min) / alpha - lw)
    w = curve.weights
    second = float(np.sum(w ** 2 * (ratio - 1.0) ** 2)) / curve.n
    return alpha ** 2 * second / curve.s_n ** 2


def _bracket_top(curve: DualCurve, cfg: SolverConfig, delta: float, M: float) -> float:
    top = cfg.alpha_max_factor * max(M, curve.reward_bound) / delta
    return max(top, 10.0 * cfg.alpha_min)


def newton_step(curve: DualCurve, alpha: float, cfg: Optional[SolverConfig] = None) -> float:
    """One safeguarded Newton update of ``alpha`` inside the solver bracket."""
    cfg = cfg or SolverConfig()
    lo, hi = cfg.alpha_min, _bracket_top(curve, cfg, curve.delta, curve.reward_bound)
    alpha = min(max(alpha, lo), hi)
    d1, d2 = phi_derivs(curve, alpha)
    if d2 < 0:
        new = alpha - d1 / d2
    else:
        new = alpha * (2.0 if d1 > 0 else 0.5)
    return min(max(new, lo), hi)


def solve_dual(curve: DualCurve, cfg: Optional[SolverConfig] = None,
               delta: Optional[float] = None, M: Optional[float] = None) -> EvaluationReport:
    """Maximise the empirical dual over ``alpha`` with safeguarded Newton.

    The iterate lives in ``[alpha_min, alpha_max_factor * M / delta]``; a
    Newton step leaving the current sign-change bracket, or a flat curve,
    falls back to geometric bisection. When the derivative is already
    non-positive at ``alpha_min`` the supremum is the ``alpha -> 0`` limit,
    i.e. the smallest matched reward.
    """
    cfg = cfg or SolverConfig()
    if delta is not None and delta != curve.delta:
        curve = DualCurve(curve.rewards, curve.weights, delta, curve.n, curve.reward_bound)
    delta = curve.delta
    M = curve.reward_bound if M is None else M
    lo = cfg.alpha_min
    hi = _bracket_top(curve, cfg, delta, M)

    if np.ptp(curve.rewards) == 0 or phi_derivs(curve, lo).d1 <= 0:
        return EvaluationReport(curve.y_min, 0.0, 0.0, 0.0, 0, True, True, curve.n)

    for _ in range(200):
        if phi_derivs(curve, hi).d1 < 0:
            break
        hi *= 2.0

    alpha = cfg.alpha_init if cfg.alpha_init is not None else max(M / (2.0 * delta), 1e-3)
    alpha = min(max(alpha, lo), hi)
    converged = False
    it = 0
    while it < cfg.max_iter:
        it += 1
        d1, d2 = phi_derivs(curve, alpha)
        if abs(d1) < cfg.tol:
            converged = True
            break
        if d1 > 0:
            lo = alpha
        else:
            hi = alpha
        new = alpha - d1 / d2 if d2 < 0 else math.nan
        if not (lo < new < hi):
            new = math.sqrt(lo * hi)
        step = abs(new - alpha)
        alpha = new
        if step < cfg.tol * max(1.0, alpha) or (hi - lo) < cfg.tol * max(1.0, alpha):
            converged = True
            break
    if not converged:
        warnings.warn(f"dual solver hit max_iter={cfg.max_iter}", MaxIterExceeded)
    var = clt_variance(curve, alpha)
    return EvaluationReport(phi_hat(curve, alpha), alpha, var, std_error(var, curve.n),
                            it, converged, False, curve.n)


def evaluate_policy(data: LoggedDataset, policy: Policy, delta: float,
                    cfg: Optional[SolverConfig] = None) -> EvaluationReport:
    return solve_dual(DualCurve.from_policy(data, policy, delta), cfg, M=data.reward_bound)


class WorstCase(NamedTuple):
    weights: np.ndarray
    achieved_kl: float


def worst_case_weights(curve: DualCurve, alpha_star: float) -> WorstCase:
    """Exponentially tilted weights on matched records at the dual optimum.

    ``achieved_kl`` is the KL divergence of the tilted measure from the
    self-normalised IPW measure; it equals ``delta`` at an interior optimum.
    """
    if not alpha_star > 0:
        raise BoundarySolution("worst case weights need an interior alpha")
    _, q = curve.tilt(alpha_star)
    pos = q > 0
    kl = float(np.sum(q[pos] * (np.log(q[pos]) - curve._log_wbar[pos])))
    return WorstCase(q, kl)


def primal_oracle(rewards, probs, delta: float) -> float:
    """Brute-force ``min sum q_i y_i`` over ``KL(q || p) <= delta``.

    The minimiser is an exponential tilt ``q ∝ p exp(-t y)``; ``t`` is found by
    a dense grid followed by bisection on the KL constraint.
    """
    y = np.asarray(rewards, dtype=float)
    p = np.asarray(probs, dtype=float)
    keep = p > 0
    y, p = y[keep], p[keep] / p[keep].sum()
    base = float(np.dot(p, y))
    ymin = y.min()
    if delta <= 0 or np.ptp(y) == 0:
        return base if delta <= 0 else float(ymin)
    mass_min = p[y == ymin].sum()
    if delta >= -math.log(mass_min):
        return float(ymin)

    def tilted(t):
        logits = np.log(p) - t * (y - ymin)
        logits -= logits.max()
        q = np.exp(logits)
        q /= q.sum()
        pos = q > 0
        return q, float(np.sum(q[pos] * np.log(q[pos] / p[pos])))

    grid = np.concatenate([[0.0], np.logspace(-8, 12, 4001)])
    prev = 0.0
    for t in grid[1:]:
        _, kl = tilted(t)
        if kl >= delta:
            lo, hi = prev, t
            break
        prev = t
    else:
        return float(ymin)
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if tilted(mid)[1] < delta:
            lo = mid
        else:
            hi = mid
    q, _ = tilted(hi)
    return float(np.dot(q, y))

"""Cressie-Read f-divergence robust value estimator.

For ``k > 1`` the worst-case value over the ball ``D_k(P || P0) <= delta`` is

    sup_alpha  alpha - c_k(delta) * E[(alpha - Y)_+^{k*}]^{1/k*}

with ``k* = k / (k - 1)`` and ``c_k(delta) = (1 + k (k - 1) delta)^{1/k}``.
The expectation is the self-normalised IPW average over matched records.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .core import DomainError, EvaluationReport, LoggedDataset, NoMatch, Policy, match_weights
from .scalar import golden_section_max


def c_k(k: float, delta: float) -> float:
    if not k > 1:
        raise DomainError(f"Cressie-Read exponent must exceed 1, got {k}")
    if delta < 0:
        raise DomainError("delta must be non-negative")
    return (1.0 + k * (k - 1.0) * delta) ** (1.0 / k)


class CressieReadCurve:
    """Dual objective ``g(alpha)`` for one (dataset, policy) pair."""

    def __init__(self, rewards, weights, k: float, delta: float,
                 n: Optional[int] = None, reward_bound: Optional[float] = None):
        y = np.asarray(rewards, dtype=float)
        w = np.asarray(weights, dtype=float)
        keep = w > 0
        if not keep.any():
            raise NoMatch("policy matches no logged action")
        self.rewards = y[keep]
        self.wbar = w[keep] / w[keep].sum()
        self.n = int(n if n is not None else y.size)
        self.k = float(k)
        self.delta = float(delta)
        self.c = c_k(k, delta)
        self.k_star = self.k / (self.k - 1.0)
        self.y_min = float(self.rewards.min())
        self.reward_bound = float(self.rewards.max() if reward_bound is None else reward_bound)

    @classmethod
    def from_policy(cls, data: LoggedDataset, policy: Policy, k: float,
                    delta: float) -> "CressieReadCurve":
        mw = match_weights(data, policy)
        return cls(data.rewards, mw.ipw, k, delta, n=data.n, reward_bound=data.reward_bound)

    def norm(self, alpha: float) -> float:
        """``E[(alpha - Y)_+^{k*}]^{1/k*}``, scaled to avoid overflow for large ``k*``."""
        z = np.maximum(alpha - self.rewards, 0.0)
        top = z.max()
        if top <= 0:
            return 0.0
        s = float(self.wbar @ (z / top) ** self.k_star)
        return top * math.exp(math.log(s) / self.k_star)

    def __call__(self, alpha: float) -> float:
        return alpha - self.c * self.norm(alpha)


def solve_fdiv(curve: CressieReadCurve, cfg=None, tol: float = 1e-10,
               max_iter: int = 200) -> EvaluationReport:
    """Maximise the concave dual by golden-section search.

    ``g(alpha) = alpha`` below the smallest matched reward, so the bracket
    starts there; the upper end ``M + c_k M`` is doubled until ``g`` turns
    down, which can take many doublings as ``k -> 1``.
    """
    lo = curve.y_min
    M = max(curve.reward_bound, 1e-12)
    hi = max(M + curve.c * M, lo + 1.0)
    for _ in range(100):
        nxt = lo + 2.0 * (hi - lo)
        if curve(nxt) <= curve(hi):
            hi = nxt
            break
        hi = nxt
    alpha, value, it, conv = golden_section_max(curve, lo, hi, tol=tol, max_iter=max_iter)
    g_lo = curve(lo)
    if g_lo >= value - 1e-12 * (1.0 + abs(value)):
        # flat top (e.g. delta = 0): report the smallest maximiser
        alpha, value = lo, g_lo
    return EvaluationReport(float(value), float(alpha), math.nan, math.nan, it, conv, alpha <= lo, curve.n,
                            divergence=f"cressie-read(k={curve.k:g})")


def evaluate_policy_fdiv(data: LoggedDataset, policy: Policy, k: float,
                         delta: float) -> EvaluationReport:
    return solve_fdiv(CressieReadCurve.from_policy(data, policy, k, delta))

"""Linear policy learning with a softmax relaxation of the argmax indicator.

Two smoothed objectives over ``theta`` (shape ``(p + 1, d)``):

* ``"ipw"``: ``(1/n) sum_i y_i softmax_{a_i}(x_i) / pi0_i``, maximised by
  :func:`learn_lin`;
* ``"w"``: ``sum_i p_i e_i / sum_i p_i`` with ``p_i = softmax_{a_i}(x_i) / pi0_i``
  and ``e_i = exp(-y_i / alpha)``, minimised inside :func:`learn_dro`.

Rewards enter in native units (stored reward minus ``reward_offset``).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .core import DimensionMismatch, EvaluationReport, LinearPolicy, LoggedDataset, NoMatch
from .dual import DualCurve, SolverConfig, newton_step, solve_dual

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GdConfig:
    learning_rate: float = 0.05
    max_epochs: int = 500
    temperature: float = 0.1
    grad_tol: float = 1e-10
    seed: int = 0
    init_scale: float = 0.01

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")


def augment(contexts: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((contexts.shape[0], 1)), contexts])


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


class SmoothedObjective:
    """Smoothed policy objective and its exact gradient in ``theta``."""

    def __init__(self, data: LoggedDataset, temperature: float = 0.1, mode: str = "ipw"):
        if mode not in ("ipw", "w"):
            raise ValueError(f"mode must be 'ipw' or 'w', got {mode!r}")
        self.mode = mode
        self.tau = float(temperature)
        self.x = augment(data.contexts)
        self.n = data.n
        self.d = data.num_actions
        self.idx = np.arange(data.n)
        self.a = data.actions - 1
        self.onehot = np.zeros((data.n, data.num_actions))
        self.onehot[self.idx, self.a] = 1.0
        self.inv_prop = 1.0 / data.propensities
        self.y = data.rewards - data.reward_offset

    def _check(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.x.shape[1], self.d):
            raise DimensionMismatch(f"theta has shape {theta.shape}, expected {(self.x.shape[1], self.d)}")
        return theta

    def smoothed_weights(self, theta) -> np.ndarray:
        """``p_i(theta) = softmax_{a_i}(x_i) / pi0_i``."""
        s = softmax(self.x @ self._check(theta) / self.tau)
        return s[self.idx, self.a] * self.inv_prop

    def value_grad(self, theta, alpha: Optional[float] = None):
        theta = self._check(theta)
        s = softmax(self.x @ theta / self.tau)
        s_a = s[self.idx, self.a]
        if self.mode == "ipw":
            c = self.y * self.inv_prop / self.n
            value = float(c @ s_a)
            coef = c * s_a
        else:
            if alpha is None or not alpha > 0:
                raise ValueError("mode 'w' needs a positive alpha")
            p = s_a * self.inv_prop
            y0 = self.y.min()
            e = np.exp(-(self.y - y0) / alpha)
            sp, spe = p.sum(), p @ e
            scale = np.exp(-y0 / alpha)
            value = float(scale * spe / sp)
            coef = value * p * (e / spe - 1.0 / sp)
        g = coef[:, None] * (self.onehot - s)
        return value, self.x.T @ g / self.tau


def smoothed_value_grad(obj: SmoothedObjective, theta, alpha: Optional[float] = None):
    return obj.value_grad(theta, alpha)


def _init_theta(p1: int, d: int, cfg: GdConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-cfg.init_scale, cfg.init_scale, size=(p1, d))


def _descend(obj: SmoothedObjective, theta, cfg: GdConfig, sign: float, alpha=None):
    """Plain fixed-step gradient steps; ``sign=+1`` ascends, ``-1`` descends."""
    trace = []
    for _ in range(cfg.max_epochs):
        value, grad = obj.value_grad(theta, alpha)
        trace.append(value)
        if np.sqrt(np.sum(grad * grad)) < cfg.grad_tol:
            break
        theta = theta + sign * cfg.learning_rate * grad
    return theta, trace


class LinFit(NamedTuple):
    policy: LinearPolicy
    objective_trace: List[float]


def learn_lin(data: LoggedDataset, cfg: Optional[GdConfig] = None) -> LinFit:
    """Non-robust linear policy by gradient ascent on the smoothed IPW value."""
    cfg = cfg or GdConfig()
    rng = np.random.default_rng(cfg.seed)
    obj = SmoothedObjective(data, cfg.temperature, "ipw")
    theta = _init_theta(data.p + 1, data.num_actions, cfg, rng)
    theta, trace = _descend(obj, theta, cfg, +1.0)
    return LinFit(LinearPolicy(theta), trace)


@dataclass
class DroFit:
    policy: LinearPolicy
    report: EvaluationReport
    q_trace: List[float] = field(default_factory=list)
    alpha_trace: List[float] = field(default_factory=list)
    outer_iterations: int = 0
    converged: bool = False
    restarts: int = 0

    def __iter__(self):
        return iter((self.policy, self.report))


def learn_dro(data: LoggedDataset, delta: float, cfg: Optional[GdConfig] = None,
              solver: Optional[SolverConfig] = None, outer_max_iter: int = 50,
              alpha_tol: float = 1e-6, single_newton: bool = False,
              max_restarts: int = 5, monotone: bool = True) -> DroFit:
    """Robust linear policy by alternating a smoothed theta-step and an alpha-step.

    The theta-step runs ``cfg.max_epochs`` gradient steps on the smoothed
    W objective at the current alpha, warm-started from the previous theta.
    The alpha-step re-solves the dual at the resulting hard policy (or takes
    one safeguarded Newton step with ``single_newton=True``). Stops once
    alpha moves by less than ``alpha_tol``, or, with ``monotone=True``, as
    soon as a theta-step would lower the hard-policy robust value (that step
    is discarded, so ``q_trace`` never decreases). Reported values are in stored
    units, like any :func:`solve_dual` report.
    """
    cfg = cfg or GdConfig()
    solver = solver or SolverConfig()
    rng = np.random.default_rng(cfg.seed)
    obj = SmoothedObjective(data, cfg.temperature, "w")

    def curve_of(theta):
        return DualCurve.from_policy(data, LinearPolicy(theta), delta)

    for restart in range(max_restarts + 1):
        theta = _init_theta(data.p + 1, data.num_actions, cfg, rng)
        try:
            rep = solve_dual(curve_of(theta), solver, M=data.reward_bound)
            alpha = rep.alpha_star if rep.alpha_star > 0 else solver.alpha_min
            fit = DroFit(LinearPolicy(theta), rep, restarts=restart)
            for it in range(1, outer_max_iter + 1):
                # alpha is in stored units; the native-unit objective shares it
                cand, _ = _descend(obj, theta, cfg, -1.0, alpha)
                curve = curve_of(cand)
                rep = solve_dual(curve, solver, M=data.reward_bound)
                if monotone and rep.value < fit.report.value:
                    # smoothing made the hard policy worse: keep the previous one
                    fit.converged = True
                    break
                theta = cand
                if single_newton:
                    new_alpha = newton_step(curve, alpha, solver)
                else:
                    new_alpha = rep.alpha_star if rep.alpha_star > 0 else solver.alpha_min
                fit.q_trace.append(rep.value)
                fit.alpha_trace.append(new_alpha)
                fit.policy, fit.report, fit.outer_iterations = LinearPolicy(theta), rep, it
                done = abs(new_alpha - alpha) < alpha_tol
                alpha = new_alpha
                if done:
                    fit.converged = True
                    break
            return fit
        except NoMatch:
            log.info("learned policy matched no logged action; restart %d", restart + 1)
    raise NoMatch(f"no matching policy after {max_restarts} restarts")

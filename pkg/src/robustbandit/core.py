"""Logged bandit data, deterministic policies and uncertainty-set configuration.

Action ids are 1-based everywhere in the public API. Contexts are stored
without the intercept coordinate; :class:`LinearPolicy` prepends the constant
1 itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Optional

import numpy as np


class RobustBanditError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(RobustBanditError, ValueError):
    """Input data violates a modelling assumption."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class OverlapViolation(ValidationError):
    pass


class RewardRangeViolation(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NoMatch(RobustBanditError):
    """The evaluated policy agrees with no logged action."""


class NonPositiveAlpha(RobustBanditError, ValueError):
    pass


class DomainError(RobustBanditError, ValueError):
    pass


class BoundarySolution(RobustBanditError):
    """The dual supremum sits at the alpha -> 0 boundary."""


class MaxIterExceeded(RuntimeWarning):
    """Solver stopped at its iteration cap; the best iterate was returned."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LoggedDataset:
    """``n`` logged records ``(x_i, a_i, y_i, pi0(a_i | x_i))``.

    Parameters
    ----------
    contexts : array-like, shape (n, p)
    actions : array-like, shape (n,)
        Logged action ids in ``1..num_actions``.
    rewards : array-like, shape (n,)
        Observed rewards, expected in ``[0, reward_bound]``.
    propensities : array-like, shape (n,)
        Logging probabilities of the logged actions.
    num_actions : int
    reward_bound : float
        Upper end ``M`` of the reward support.
    eta : float
        Overlap floor; every propensity must be at least ``eta``.
    reward_offset : float
        Stored rewards equal native rewards plus this offset. Simulated
        Gaussian environments shift their rewards into ``[0, M]``; reports
        subtract the offset to get back to native units.
    """

    contexts: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    propensities: np.ndarray
    num_actions: int
    reward_bound: float
    eta: float = 1e-12
    reward_offset: float = 0.0

    def __post_init__(self):
        contexts = np.asarray(self.contexts, dtype=float)
        if contexts.ndim == 1:
            contexts = contexts[:, None]
        if contexts.ndim != 2:
            raise ShapeMismatch("contexts must be a 2-d array")
        n = contexts.shape[0]
        if n < 1:
            raise ShapeMismatch("dataset must hold at least one record")
        actions = np.asarray(self.actions)
        if actions.size and not np.all(np.equal(np.mod(actions, 1), 0)):
            raise ShapeMismatch("actions must be integers")
        cols = {
            "actions": actions,
            "rewards": np.asarray(self.rewards, dtype=float),
            "propensities": np.asarray(self.propensities, dtype=float),
        }
        for name, col in cols.items():
            if col.shape != (n,):
                raise ShapeMismatch(f"{name} has shape {col.shape}, expected ({n},)")
        if int(self.num_actions) < 1:
            raise ShapeMismatch("num_actions must be >= 1")
        bad = np.flatnonzero((actions < 1) | (actions > self.num_actions))
        if bad.size:
            raise ShapeMismatch(f"invalid action id at record {bad[0]}", int(bad[0]))
        object.__setattr__(self, "contexts", _frozen(contexts))
        object.__setattr__(self, "actions", _frozen(actions, dtype=np.int64))
        object.__setattr__(self, "rewards", _frozen(cols["rewards"]))
        object.__setattr__(self, "propensities", _frozen(cols["propensities"]))
        object.__setattr__(self, "num_actions", int(self.num_actions))
        object.__setattr__(self, "reward_bound", float(self.reward_bound))

    @property
    def n(self) -> int:
        return self.contexts.shape[0]

    @property
    def p(self) -> int:
        return self.contexts.shape[1]

    def subset(self, index) -> "LoggedDataset":
        return LoggedDataset(
            self.contexts[index], self.actions[index], self.rewards[index],
            self.propensities[index], self.num_actions, self.reward_bound,
            self.eta, self.reward_offset,
        )


def validate_dataset(data: LoggedDataset, eta: Optional[float] = None,
                     M: Optional[float] = None) -> LoggedDataset:
    """Check overlap and bounded-reward assumptions.

    Returns the dataset unchanged when it is valid; otherwise raises on the
    first offending record, whose position is available as ``err.index``.
    """
    eta = data.eta if eta is None else eta
    M = data.reward_bound if M is None else M
    if not np.all(np.isfinite(data.contexts)):
        row = int(np.flatnonzero(~np.isfinite(data.contexts).all(axis=1))[0])
        raise ShapeMismatch(f"non-finite context at record {row}", row)
    bad = np.flatnonzero(~(data.propensities >= eta) | (data.propensities > 1.0))
    if bad.size:
        i = int(bad[0])
        raise OverlapViolation(
            f"record {i}: propensity {data.propensities[i]:g} outside [{eta:g}, 1]", i)
    bad = np.flatnonzero(~((data.rewards >= 0.0) & (data.rewards <= M)))
    if bad.size:
        i = int(bad[0])
        raise RewardRangeViolation(
            f"record {i}: reward {data.rewards[i]:g} outside [0, {M:g}]", i)
    return data


class Policy:
    """Deterministic map from contexts to 1-based action ids."""

    num_actions: int

    def act(self, contexts) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, context) -> int:
        return int(self.act(np.atleast_2d(np.asarray(context, dtype=float)))[0])


def _as_contexts(contexts, p: Optional[int]) -> np.ndarray:
    x = np.asarray(contexts, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if p is not None and x.shape[1] != p:
        raise DimensionMismatch(f"context has length {x.shape[1]}, expected {p}")
    return x


@dataclass(frozen=True, eq=False)
class LinearPolicy(Policy):
    """``x -> argmax_a theta_a^T [1, x]``, ties to the lowest action id.

    ``theta`` has shape ``(p + 1, d)``; row 0 multiplies the intercept.
    """

    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 2 or theta.shape[0] < 1:
            raise ShapeMismatch("theta must have shape (p + 1, d)")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def p(self) -> int:
        return self.theta.shape[0] - 1

    @property
    def num_actions(self) -> int:
        return self.theta.shape[1]

    def scores(self, contexts) -> np.ndarray:
        x = _as_contexts(contexts, self.p)
        return self.theta[0] + x @ self.theta[1:]

    def act(self, contexts) -> np.ndarray:
        # np.argmax returns the first maximiser, i.e. the lowest action id
        return np.argmax(self.scores(contexts), axis=1) + 1


@dataclass(frozen=True, eq=False)
class TablePolicy(Policy):
    """Explicit lookup keyed by the context tuple."""

    table: Mapping[tuple, int]
    num_actions: int
    default: Optional[int] = None

    def act(self, contexts) -> np.ndarray:
        x = _as_contexts(contexts, None)
        out = np.empty(x.shape[0], dtype=np.int64)
        for i, row in enumerate(x):
            a = self.table.get(tuple(float(v) for v in row), self.default)
            if a is None:
                raise DimensionMismatch(f"context {tuple(row)} not in policy table")
            out[i] = a
        return out


@dataclass(frozen=True, eq=False)
class ConstantPolicy(Policy):
    action: int
    num_actions: int

    def act(self, contexts) -> np.ndarray:
        x = _as_contexts(contexts, None)
        return np.full(x.shape[0], self.action, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class OraclePolicy(Policy):
    """Wraps a vectorised decision rule ``contexts -> action ids``."""

    rule: Callable[[np.ndarray], np.ndarray]
    num_actions: int
    name: str = "oracle"
    info: dict = field(default_factory=dict)

    def act(self, contexts) -> np.ndarray:
        x = _as_contexts(contexts, None)
        return np.asarray(self.rule(x), dtype=np.int64)


def apply_policy(policy: Policy, context) -> int:
    return policy(context)


class MatchWeights(NamedTuple):
    indicator: np.ndarray
    ipw: np.ndarray
    s_n: float


def match_weights(data: LoggedDataset, policy: Policy) -> MatchWeights:
    """Indicators ``1{pi(x_i) = a_i}``, IPW weights and their mean ``S_n``."""
    indicator = (policy.act(data.contexts) == data.actions).astype(float)
    if not indicator.any():
        raise NoMatch("policy matches no logged action")
    ipw = indicator / data.propensities
    return MatchWeights(indicator, ipw, float(ipw.mean()))


@dataclass(frozen=True)
class UncertaintySet:
    """KL ball of radius ``delta`` or a Cressie-Read ball with exponent ``k``."""

    kind: str
    delta: float
    k: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("kl", "cressie-read"):
            raise DomainError(f"unknown divergence {self.kind!r}")
        if not self.delta > 0:
            raise DomainError("delta must be positive")
        if self.kind == "cressie-read" and (self.k is None or not self.k > 1):
            raise DomainError("Cressie-Read exponent k must exceed 1")

    @classmethod
    def kl(cls, delta: float) -> "UncertaintySet":
        return cls("kl", delta)

    @classmethod
    def cressie_read(cls, k: float, delta: float) -> "UncertaintySet":
        return cls("cressie-read", delta, k)

    @property
    def k_star(self) -> float:
        return self.k / (self.k - 1.0)

    @property
    def c_k(self) -> float:
        return (1.0 + self.k * (self.k - 1.0) * self.delta) ** (1.0 / self.k)


@dataclass(frozen=True)
class EvaluationReport:
    """Result of a robust evaluation.

    ``alpha_star`` is 0 when the supremum is attained at the boundary, in
    which case ``value`` is the smallest matched reward and the variance is
    reported as 0.
    """

    value: float
    alpha_star: float
    variance: float
    std_error: float
    iterations: int
    converged: bool
    boundary: bool
    n: int
    divergence: str = "kl"

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "alpha_star": self.alpha_star,
            "variance": self.variance,
            "std_error": self.std_error,
            "iterations": self.iterations,
            "converged": self.converged,
            "boundary": self.boundary,
            "n": self.n,
            "divergence": self.divergence,
        }

    def shifted(self, offset: float) -> "EvaluationReport":
        """Same report with ``offset`` subtracted from the value."""
        return EvaluationReport(
            self.value - offset, self.alpha_star, self.variance, self.std_error,
            self.iterations, self.converged, self.boundary, self.n, self.divergence)


def std_error(variance: float, n: int) -> float:
    return math.sqrt(max(variance, 0.0) / n)

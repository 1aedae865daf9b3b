"""CSV and JSON serialisation for datasets, policy matrices, grids and reports.

Dataset CSV: header ``x1..xp,action,reward,propensity``; actions are 1-based.
Theta CSV: header ``a1..ad``, one row per coefficient, row 0 the intercept.
Floats are written with ``repr`` so a round trip is exact.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import LinearPolicy, LoggedDataset, ShapeMismatch, ValidationError, validate_dataset


class ParseError(ShapeMismatch):
    """Malformed CSV input; ``line`` is the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _fmt(v) -> str:
    return repr(float(v))


def write_dataset(data: LoggedDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(data.p)] + ["action", "reward", "propensity"])
        for x, a, y, pr in zip(data.contexts, data.actions, data.rewards, data.propensities):
            w.writerow([_fmt(v) for v in x] + [int(a), _fmt(y), _fmt(pr)])


def read_dataset(path, num_actions: int = None, reward_bound: float = None,
                 eta: float = 1e-12, reward_offset: float = 0.0,
                 validate: bool = True) -> LoggedDataset:
    """Parse a dataset CSV.

    ``num_actions`` and ``reward_bound`` default to the largest action id and
    the largest reward in the file. With ``validate=True`` the overlap and
    reward-range checks run too, and their errors name the offending line.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", 1)
    header = [h.strip() for h in rows[0]]
    xcols = [h for h in header if h.startswith("x")]
    expected = [f"x{j + 1}" for j in range(len(xcols))] + ["action", "reward", "propensity"]
    if header != expected:
        raise ParseError(f"header must be {','.join(expected)}", 1)
    p = len(xcols)
    X, A, Y, P, lines = [], [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != p + 3:
            raise ParseError(f"expected {p + 3} fields, got {len(row)}", lineno)
        try:
            X.append([float(c) for c in row[:p]])
            a = float(row[p])
            if a != int(a):
                raise ValueError("non-integer action")
            A.append(int(a))
            Y.append(float(row[p + 1]))
            P.append(float(row[p + 2]))
            lines.append(lineno)
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    if not A:
        raise ParseError("no records", 2)
    try:
        data = LoggedDataset(
            np.array(X).reshape(len(A), p), A, Y, P,
            num_actions if num_actions is not None else max(A),
            reward_bound if reward_bound is not None else max(Y),
            eta=eta, reward_offset=reward_offset,
        )
        return validate_dataset(data) if validate else data
    except ValidationError as exc:
        if exc.index is None:
            raise
        raise type(exc)(f"line {lines[exc.index]}: {exc}", exc.index) from None


def write_theta(policy: LinearPolicy, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"a{j + 1}" for j in range(policy.num_actions)])
        for row in policy.theta:
            w.writerow([_fmt(v) for v in row])


def read_theta(path) -> LinearPolicy:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise ParseError("theta file needs a header and at least one row", 1)
    d = len(rows[0])
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != d:
            raise ParseError(f"expected {d} fields, got {len(row)}", lineno)
        try:
            out.append([float(c) for c in row])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    return LinearPolicy(np.array(out))


def write_full_info(testset, path) -> None:
    p, d = testset.contexts.shape[1], testset.rewards.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(p)] + [f"y{a + 1}" for a in range(d)])
        for x, y in zip(testset.contexts, testset.rewards):
            w.writerow([_fmt(v) for v in x] + [_fmt(v) for v in y])


def write_grid(xs: Sequence[float], ys: Sequence[float], actions: np.ndarray, path) -> None:
    """Decision map as long-format CSV ``x1,x2,action``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "action"])
        k = 0
        for x1 in xs:
            for x2 in ys:
                w.writerow([_fmt(x1), _fmt(x2), int(actions[k])])
                k += 1


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2)


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")

import numpy as np
import pytest

from robustbandit.core import LoggedDataset

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def make_data(rewards, actions=None, props=None, contexts=None, d=None, M=None):
    y = np.asarray(rewards, dtype=float)
    n = y.size
    a = np.ones(n, dtype=int) if actions is None else np.asarray(actions)
    pr = np.ones(n) if props is None else np.asarray(props, dtype=float)
    x = np.zeros((n, 1)) if contexts is None else np.asarray(contexts, dtype=float)
    return LoggedDataset(x, a, y, pr, d or int(a.max()), M if M is not None else max(float(y.max()), 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("abcdefgh")), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")

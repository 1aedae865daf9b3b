import math

import numpy as np
import pytest

from robustbandit.core import ConstantPolicy
from robustbandit.experiments import (
    ReplicationRecord, RunReport, ComparisonConfig, boundary_grid, build_env, clt_coverage,
    grid_contexts, run_comparison, seed_for, comparison_replication,
)
from robustbandit.learn import GdConfig

SMALL = ComparisonConfig(n_grid=(300, 600), n_prime=400, m_sets=4, replications=3, oracle_contexts=5000,
                     agreement_contexts=1000, gd=GdConfig(max_epochs=40))


@pytest.fixture(scope="module")
def small_report():
    return run_comparison(SMALL)


def test_seed_streams_distinct():
    a = np.random.default_rng(seed_for(0, 1, 0, 500)).random()
    b = np.random.default_rng(seed_for(0, 1, 1, 500)).random()
    c = np.random.default_rng(seed_for(0, 1, 0, 500)).random()
    assert a != b and a == c


def test_replication_rerun_is_identical(small_report):
    again = comparison_replication(SMALL, 1)
    old = [r for r in small_report.records if r.replication == 1]
    for x, y in zip(sorted(again, key=lambda r: (r.n, r.policy)), sorted(old, key=lambda r: (r.n, r.policy))):
        assert (x.q_dro, x.q_min, x.alpha, x.agreement) == (y.q_dro, y.q_min, y.alpha, y.agreement)


def test_order_independent(small_report):
    shuffled = RunReport(small_report.config, list(reversed(small_report.records)))
    assert shuffled.to_dict()["records"] == small_report.to_dict()["records"]


def test_aggregates_recompute(small_report):
    agg = small_report.aggregate()
    for rec_n in (300, 600):
        for pol in ("lin", "dro"):
            vals = [r.q_dro for r in small_report.records if r.n == rec_n and r.policy == pol]
            cell = agg[str(rec_n)][pol]["q_dro"]
            assert abs(cell["mean"] - np.mean(vals)) < 1e-12
            assert abs(cell["std"] - np.std(vals, ddof=1)) < 1e-12


def test_failures_recorded():
    rep = RunReport({}, [ReplicationRecord(0, 10, "lin", [0], q_dro=1.0),
                         ReplicationRecord(1, 10, "lin", [1], error="NoMatch()")])
    out = rep.to_dict()
    assert out["failures"] == 1 and out["aggregate"]["10"]["lin"]["replications"] == 1


def test_config_validation():
    with pytest.raises(ValueError):
        ComparisonConfig(delta=0)
    with pytest.raises(ValueError):
        ComparisonConfig(n_grid=())


def test_grid():
    xs, ctx = grid_contexts(5, 7)
    assert ctx.shape == (49, 5) and np.all(ctx[:, 2:] == 0)
    env, _ = build_env("linear")
    _, _, acts = boundary_grid(ConstantPolicy(2, 3), 5, 4)
    assert acts.shape == (16,) and set(acts) == {2}
    with pytest.raises(ValueError):
        grid_contexts(1, 5)


def test_coverage_smoke():
    res = clt_coverage(replications=5, n=500, target_contexts=20_000)
    assert 0 <= res.coverage <= 1 and math.isfinite(res.target)
    assert res.to_dict()["replications"] == 5

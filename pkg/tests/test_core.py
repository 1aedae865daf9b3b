import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robustbandit.core import (
    ConstantPolicy, DimensionMismatch, EvaluationReport, LinearPolicy, LoggedDataset, NoMatch,
    OraclePolicy, OverlapViolation, RewardRangeViolation, ShapeMismatch, TablePolicy,
    UncertaintySet, apply_policy, match_weights, validate_dataset,
)
from robustbandit.sim import LINEAR_TABLE, generate_dataset, make_linear_env

from conftest import make_data

S3 = math.sqrt(3) / 2


def unit_vectors_policy(p=5):
    theta = np.zeros((p + 1, 3))
    theta[1, 0] = 1.0
    theta[1:3, 1] = (-0.5, S3)
    theta[1:3, 2] = (-0.5, -S3)
    return LinearPolicy(theta)


class TestValidate:
    def test_accepts_valid(self):
        d = make_data([0.0, 0.5, 1.0], actions=[1, 2, 3], props=[0.5, 0.25, 0.25], M=1.0)
        assert validate_dataset(d, eta=0.2, M=1.0) is d

    def test_overlap_violation_index(self):
        d = make_data([0.1, 0.2, 0.3], props=[0.5, 0.01, 0.4], M=1.0)
        with pytest.raises(OverlapViolation) as err:
            validate_dataset(d, eta=0.05, M=1.0)
        assert err.value.index == 1

    def test_reward_range_violation(self):
        d = make_data([0.1, 1.3], M=1.0)
        with pytest.raises(RewardRangeViolation) as err:
            validate_dataset(d, eta=0.5, M=1.0)
        assert err.value.index == 1

    def test_negative_reward(self):
        with pytest.raises(RewardRangeViolation):
            validate_dataset(make_data([-0.1, 0.5], M=1.0))

    def test_propensity_above_one(self):
        with pytest.raises(OverlapViolation):
            validate_dataset(make_data([0.1], props=[1.5]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            LoggedDataset(np.zeros((3, 2)), [1, 1], [0, 0, 0], [1, 1, 1], 1, 1.0)

    def test_invalid_action(self):
        with pytest.raises(ShapeMismatch):
            LoggedDataset(np.zeros((2, 1)), [1, 4], [0, 0], [1, 1], 3, 1.0)

    def test_non_finite_context(self):
        d = LoggedDataset(np.array([[0.0], [np.nan]]), [1, 1], [0, 0], [1, 1], 1, 1.0)
        with pytest.raises(ShapeMismatch):
            validate_dataset(d)

    def test_arrays_read_only(self):
        d = make_data([0.1, 0.2])
        with pytest.raises(ValueError):
            d.rewards[0] = 3.0

    def test_sim_datasets_validate(self):
        d = generate_dataset(make_linear_env(), LINEAR_TABLE, 2000, seed=3)
        validate_dataset(d, eta=LINEAR_TABLE.eta, M=d.reward_bound)


class TestPolicies:
    def test_apply_examples(self):
        pol = unit_vectors_policy()
        assert apply_policy(pol, [1, 0, 0, 0, 0]) == 1
        assert apply_policy(pol, [0, 1, 0, 0, 0]) == 2
        assert apply_policy(LinearPolicy(np.zeros((6, 3))), [0.3, -0.2, 0, 0, 0]) == 1

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            apply_policy(unit_vectors_policy(), [1.0, 0.0])

    def test_intercept_row(self):
        theta = np.zeros((2, 2))
        theta[0, 1] = 1.0
        assert LinearPolicy(theta).act(np.array([[5.0], [-5.0]])).tolist() == [2, 2]

    @given(st.lists(st.floats(-5, 5), min_size=5, max_size=5))
    @settings(max_examples=50, deadline=None)
    def test_pure(self, x):
        pol = unit_vectors_policy()
        assert apply_policy(pol, x) == apply_policy(pol, x)

    def test_table_constant_oracle(self):
        tp = TablePolicy({(0.0,): 2}, num_actions=3, default=1)
        assert tp.act(np.array([[0.0], [1.0]])).tolist() == [2, 1]
        assert ConstantPolicy(3, 3).act(np.zeros((4, 2))).tolist() == [3] * 4
        op = OraclePolicy(lambda x: np.where(x[:, 0] > 0, 2, 1), 2)
        assert op.act(np.array([[1.0], [-1.0]])).tolist() == [2, 1]


class TestMatchWeights:
    def test_on_policy(self):
        d = make_data([0.1, 0.2, 0.3])
        mw = match_weights(d, ConstantPolicy(1, 1))
        assert mw.s_n == 1.0

    def test_partial(self):
        d = make_data([0.1, 0.2], actions=[1, 2], props=[0.5, 0.5], d=2)
        mw = match_weights(d, ConstantPolicy(1, 2))
        assert mw.ipw.tolist() == [2.0, 0.0]
        assert mw.indicator.tolist() == [1, 0]
        assert mw.s_n == 1.0

    def test_no_match(self):
        d = make_data([0.1, 0.2], actions=[2, 2], d=2)
        with pytest.raises(NoMatch):
            match_weights(d, ConstantPolicy(1, 2))

    def test_sn_near_one(self):
        d = generate_dataset(make_linear_env(), LINEAR_TABLE, 100_000, seed=7)
        for a in (1, 2, 3):
            assert abs(match_weights(d, ConstantPolicy(a, 3)).s_n - 1.0) < 0.05


class TestUncertaintySet:
    def test_derived(self):
        u = UncertaintySet.cressie_read(2.0, 1.0)
        assert u.k_star == 2.0
        assert u.c_k == pytest.approx(math.sqrt(3), abs=1e-12)
        assert UncertaintySet.kl(0.2).kind == "kl"

    @pytest.mark.parametrize("kw", [dict(kind="kl", delta=0.0), dict(kind="cressie-read", delta=0.1, k=1.0),
                                    dict(kind="other", delta=0.1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            UncertaintySet(**kw)


def test_report_dict_and_shift():
    r = EvaluationReport(1.5, 0.3, 0.01, 0.001, 4, True, False, 10)
    assert r.shifted(1.0).value == 0.5
    assert set(r.to_dict()) >= {"value", "alpha_star", "variance", "std_error", "boundary"}

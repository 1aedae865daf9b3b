"""Distributionally robust evaluation and learning for batch contextual bandits."""
from .core import (
    BoundarySolution, ConstantPolicy, DimensionMismatch, DomainError, EvaluationReport,
    LinearPolicy, LoggedDataset, MaxIterExceeded, NoMatch, NonPositiveAlpha, OraclePolicy,
    OverlapViolation, Policy, RewardRangeViolation, RobustBanditError, ShapeMismatch,
    TablePolicy, UncertaintySet, ValidationError, apply_policy, match_weights, validate_dataset,
)
from .dual import (
    DualCurve, SolverConfig, clt_variance, evaluate_policy, phi_derivs, phi_hat,
    primal_oracle, solve_dual, worst_case_weights,
)
from .fdiv import CressieReadCurve, c_k, evaluate_policy_fdiv, solve_fdiv
from .learn import GdConfig, SmoothedObjective, learn_dro, learn_lin, smoothed_value_grad
from .bayes import (
    GaussianEnvironment, bayes_dro_policy, bayes_oracle, bayes_policy, conditional_mgf,
    population_qdro,
)
from .sim import (
    LINEAR_TABLE, NONLINEAR_TABLE, LoggingPolicyTable, generate_dataset, make_linear_env,
    make_nonlinear_env, make_qmin_testsets, q_min,
)

__version__ = "0.1.0"

"""Stationary multi-type mean-field equilibria: an exact fixed-point solver and
a model-free random-horizon policy-gradient learner."""

from .core import (
    ActionSet,
    FeatureMap,
    PolicyParams,
    PopulationDistribution,
    StateGrid,
    boltzmann_probs,
    feature_map,
    grad_log_policy,
    joint_w1,
    policy_distance,
    policy_table,
    w1_distance,
)
from .envs import (
    CyberGame,
    CyberParams,
    GameModel,
    TabularGame,
    cyber_reward,
    cyber_transition,
    make_cyber_env,
    make_env,
    make_identity_env,
    make_test_env,
)
from .exact import (
    ContractionReport,
    EquilibriumProfile,
    FixedPointMMFE,
    ValueTable,
    best_response,
    evaluate_policy,
    gamma_map,
    lemma1_constants,
    population_step,
    solve_fixed_point,
)
from .learner import (
    RHPGMMFE,
    LearnerConfig,
    PopulationSimulator,
    StepSchedule,
    empirical_population_update,
    est_q,
    exact_gradient,
    pg_step,
    rhpg_mmfe,
)
from .trace import RunTrace

__version__ = "0.1.0"

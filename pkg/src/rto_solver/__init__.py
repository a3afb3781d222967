"""Solver toolkit for the remanufacture-to-order core acquisition MDP."""

__version__ = "0.1.0"

from .adp import AdpConfig, SampleBatch, basis, blend_theta, lstd_solve, run_api
from .analysis import t1_cost_by_level, theta_trends, value_vector_from_theta
from .exact import (
    PolicyTable,
    SolveReport,
    StructureReport,
    ValueTable,
    check_structure,
    extract_policy,
    value_iteration,
)
from .harness import InstanceSpec, build_params, build_testbed, run_all
from .model import (
    Action,
    Event,
    EventType,
    ModelParams,
    StateSpace,
    apply_T1,
    apply_T2,
    bellman_apply,
    holding_rate,
    immediate_cost,
    sample_transition,
    state_space_size,
)
from .sim import RolloutConfig, greedy_policy_from_theta, heuristic_policy, rollout_cost

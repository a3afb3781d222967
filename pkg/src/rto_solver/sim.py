"""Monte Carlo estimation of the discounted cost of stationary policies.

Replications are vectorized: all of them step through event epochs
together, looking actions up in a dense per-state policy table. The cost
of the sojourn ending at epoch j is discounted by alpha^(j+1), which
makes the estimator the exact Monte Carlo counterpart of the uniformized
Bellman recursion (the expected time-weighted holding cost then carries
weight alpha^j, matching the recursion's undiscounted holding term).

Event draws do not depend on the policy, so two policies evaluated with
the same seed see common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .adp import basis_matrix
from .exact import PolicyTable, policy_from_values
from .model import ModelParams, State, StateSpace, check_state

HEURISTICS = ("never-acquire", "greedy-acquire", "order-up-to")

_MAX_CODE_TABLE = 1 << 26


@dataclass(frozen=True)
class RolloutConfig:
    initial_state: State
    replications: int = 1000
    tail_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0.0 < self.tail_tol < 1.0:
            raise ValueError("tail_tol must lie in (0, 1)")


@dataclass
class RolloutEstimate:
    mean: float
    half_width: float
    replications: int
    horizon: int


def greedy_policy_from_theta(
    params: ModelParams, space: StateSpace, theta: np.ndarray
) -> PolicyTable:
    """Dense greedy policy under the basis-weight value function."""
    values = basis_matrix(params, space) @ np.asarray(theta, dtype=float)
    return policy_from_values(params, space, values)


def heuristic_policy(
    params: ModelParams,
    space: StateSpace,
    name: str,
    order_up_to: int | None = None,
) -> PolicyTable:
    """Named benchmark policies.

    never-acquire: reject everything, never acquire.
    greedy-acquire: acquire whenever below capacity, fulfill with the
        highest-quality core on hand.
    order-up-to: acquire while total inventory is below a fixed level,
        fulfill with the cheapest (= highest quality) core on hand.
    """
    states = space.states
    levels = states.sum(axis=1)
    fulfill_best = np.where(
        levels > 0, np.argmax(states >= 1, axis=1) + 1, 0
    ).astype(np.int64)
    zeros = np.zeros(space.size, dtype=np.int64)
    if name == "never-acquire":
        return PolicyTable(params, zeros, zeros.copy())
    if name == "greedy-acquire":
        tau = (levels < params.b).astype(np.int64)
        return PolicyTable(params, tau, fulfill_best)
    if name == "order-up-to":
        level = min(params.b, 5) if order_up_to is None else order_up_to
        tau = ((levels < level) & (levels < params.b)).astype(np.int64)
        return PolicyTable(params, tau, fulfill_best)
    raise ValueError(f"unknown heuristic {name!r}; choose from {HEURISTICS}")


def _state_indexer(space: StateSpace):
    """Vectorized state -> dense index map via mixed-radix codes, falling
    back to dict lookups when the code table would be too large."""
    params = space.params
    K, b = params.K, params.b
    radix = np.array([(b + 1) ** (K - 1 - i) for i in range(K)], dtype=np.int64)
    table_size = (b + 1) ** K
    if table_size <= _MAX_CODE_TABLE:
        table = np.full(table_size, -1, dtype=np.int64)
        table[space.states @ radix] = np.arange(space.size)

        def to_index(states: np.ndarray) -> np.ndarray:
            return table[states @ radix]

        return to_index

    lookup = space.lookup

    def to_index_slow(states: np.ndarray) -> np.ndarray:
        return np.fromiter(
            (lookup(tuple(int(v) for v in row)) for row in states),
            dtype=np.int64,
            count=len(states),
        )

    return to_index_slow


def rollout_cost(
    params: ModelParams,
    space: StateSpace,
    policy: PolicyTable,
    config: RolloutConfig,
) -> RolloutEstimate:
    """Mean discounted cost of a dense policy table from a fixed state,
    with a 95% normal-approximation confidence half-width."""
    check_state(params, config.initial_state)
    alpha = params.alpha
    # epochs whose discount weight alpha^(j+1) still exceeds the tail tolerance
    horizon = max(1, math.ceil(math.log(config.tail_tol) / math.log(alpha)))
    reps = config.replications
    rng = np.random.default_rng(config.seed)

    to_index = _state_indexer(space)
    states = np.tile(np.asarray(config.initial_state, dtype=np.int64), (reps, 1))
    totals = np.zeros(reps)
    h_arr = np.asarray(params.h)
    r_arr = np.asarray(params.r)
    cum_p = np.cumsum(params.p)
    weight = alpha
    for _ in range(horizon):
        idx = to_index(states)
        tau = policy.tau[idx]
        eta = policy.eta[idx]
        t_w = rng.exponential(1.0 / params.event_rate, size=reps)
        u_kind = rng.random(reps)
        u_quality = rng.random(reps)
        is_demand = u_kind < params.demand_prob
        cost = t_w * (states @ h_arr)
        fulfill = is_demand & (eta > 0)
        cost[is_demand & (eta == 0)] += params.c_l
        cost[fulfill] += r_arr[eta[fulfill] - 1]
        acquiring = ~is_demand & (tau == 1)
        cost[acquiring] += params.c_a
        quality = np.searchsorted(cum_p, u_quality, side="right")  # K = discard
        added = acquiring & (quality < params.K)
        rows = np.nonzero(fulfill)[0]
        states[rows, eta[rows] - 1] -= 1
        rows = np.nonzero(added)[0]
        states[rows, quality[rows]] += 1
        totals += weight * cost
        weight *= alpha
    mean = float(totals.mean())
    if reps > 1:
        half = float(1.96 * totals.std(ddof=1) / math.sqrt(reps))
    else:
        half = float("inf")
    return RolloutEstimate(mean, half, reps, horizon)

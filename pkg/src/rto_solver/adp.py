"""Approximate policy iteration with LSTD policy evaluation.

The value function is approximated by K+1 basis functions: a decreasing
convex function of total inventory, g(x) = (lambda/(lambda+mu))^sum(x),
plus the scaled per-type counts x_i / b. Each outer iteration collects Z
simulated one-step samples under the epsilon-greedy policy implied by the
current weights, fits new weights by the instrumental-variables LSTD
solve with ridge regularization, and blends them in with a polynomial
step size 1/n^delta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    Action,
    ModelParams,
    State,
    StateSpace,
    apply_T1,
    apply_T2,
    immediate_cost,
    sample_transition,
)


class LstdSingularError(RuntimeError):
    """The LSTD system was singular; use a positive ridge term beta."""


@dataclass
class SampleBatch:
    """Z recorded inner-loop samples: pre-decision basis rows, post-event
    basis rows, and the immediate cost of each step."""

    omega: np.ndarray
    omega_prime: np.ndarray
    costs: np.ndarray

    def __post_init__(self) -> None:
        z = len(self.costs)
        if self.omega.shape[0] != z or self.omega_prime.shape[0] != z:
            raise ValueError("omega, omega_prime and costs must have equal row counts")
        if self.omega.shape != self.omega_prime.shape:
            raise ValueError("omega and omega_prime shapes differ")


@dataclass(frozen=True)
class AdpConfig:
    n_outer: int = 10
    n_inner: int = 1000
    beta: float = 10.0
    delta: float = 0.5
    epsilon: float = 0.05
    seed: int = 0
    theta_init: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.n_outer < 1:
            raise ValueError("n_outer must be >= 1")
        if self.n_inner < 1:
            raise ValueError("n_inner must be >= 1")
        # 0.5 itself is allowed: it is the baseline testbed setting
        if not 0.5 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0.5, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


def default_theta(params: ModelParams) -> np.ndarray:
    """Standard initialization: 1 for the g-term, holding rates for the rest."""
    return np.array([1.0, *params.h])


def basis(params: ModelParams, x: State) -> np.ndarray:
    """Feature vector [g(x), x_1/b, ..., x_K/b]; every entry in [0, 1]."""
    phi = np.empty(params.K + 1)
    phi[0] = (params.lam / params.event_rate) ** sum(x)
    scale = 1.0 / params.b if params.b > 0 else 0.0
    phi[1:] = np.multiply(x, scale)
    return phi


def basis_matrix(params: ModelParams, space: StateSpace) -> np.ndarray:
    """Basis rows for every state in the space, shape (|X|, K+1)."""
    states = space.states
    ratio = params.lam / params.event_rate
    phi = np.empty((space.size, params.K + 1))
    phi[:, 0] = ratio ** states.sum(axis=1)
    scale = 1.0 / params.b if params.b > 0 else 0.0
    phi[:, 1:] = states * scale
    return phi


def approx_value(theta: np.ndarray, phi: np.ndarray) -> float:
    if len(theta) != len(phi):
        raise ValueError("theta and basis dimensions differ")
    return float(np.dot(theta, phi))


def theta_value_fn(params: ModelParams, theta: np.ndarray):
    """Closure evaluating the approximate value at any state."""
    theta = np.asarray(theta, dtype=float)
    t0 = float(theta[0])
    rest = theta[1:]
    ratio = params.lam / params.event_rate
    scale = 1.0 / params.b if params.b > 0 else 0.0
    # powers of the g-ratio by total inventory, precomputed once
    g_pow = [ratio**s for s in range(params.b + 1)]

    def value(x: State) -> float:
        acc = 0.0
        total = 0
        for w, xi in zip(rest, x):
            acc += w * xi
            total += xi
        return t0 * g_pow[total] + acc * scale

    return value


def greedy_action(
    params: ModelParams,
    theta: np.ndarray,
    x: State,
    epsilon: float,
    rng: np.random.Generator,
) -> Action:
    """Epsilon-greedy action under the approximate value function.

    The acquisition and fulfillment components draw independent
    exploration coins; exploration is uniform over the admissible choices
    for that component.
    """
    value = theta_value_fn(params, theta)
    return _greedy_action_with(params, value, x, epsilon, rng)


def _greedy_action_with(params, value, x, epsilon, rng) -> Action:
    if epsilon > 0 and rng.random() < epsilon:
        tau = int(rng.integers(2)) if sum(x) < params.b else 0
    else:
        _, tau = apply_T1(params, value, x)
    if epsilon > 0 and rng.random() < epsilon:
        options = [0] + [i + 1 for i in range(params.K) if x[i] >= 1]
        eta = options[int(rng.integers(len(options)))]
    else:
        _, eta = apply_T2(params, value, x)
    return Action(tau, eta)


def policy_evaluation(
    params: ModelParams,
    space: StateSpace,
    theta: np.ndarray,
    config: AdpConfig,
    rng: np.random.Generator,
) -> SampleBatch:
    """Inner loop: Z one-step samples from uniformly drawn states.

    States are sampled uniformly over the whole feasible space (unranked
    from a uniform index) so high-inventory states are covered.
    """
    z_total = config.n_inner
    m = params.K + 1
    omega = np.empty((z_total, m))
    omega_prime = np.empty((z_total, m))
    costs = np.empty(z_total)
    tuples = space.state_tuples
    value = theta_value_fn(params, theta)
    indices = rng.integers(space.size, size=z_total)
    for z in range(z_total):
        x = tuples[int(indices[z])]
        omega[z] = basis(params, x)
        action = _greedy_action_with(params, value, x, config.epsilon, rng)
        nxt, event, t_w = sample_transition(params, x, action, rng)
        costs[z] = immediate_cost(params, x, action, event, t_w)
        omega_prime[z] = basis(params, nxt)
    return SampleBatch(omega, omega_prime, costs)


def lstd_solve(batch: SampleBatch, alpha: float, beta: float) -> np.ndarray:
    """Instrumental-variables LSTD fit of the weights.

    Solves [sum_z phi_z (phi_z - alpha phi'_z)^T + beta I] theta =
    sum_z phi_z c_z, accumulating the normal equations by streaming
    rank-1 updates so the sample matrices never need to be materialized.
    """
    if len(batch.costs) == 0:
        raise ValueError("batch is empty")
    m = batch.omega.shape[1]
    a_mat = beta * np.eye(m)
    rhs = np.zeros(m)
    for phi, phi_next, cost in zip(batch.omega, batch.omega_prime, batch.costs):
        a_mat += np.outer(phi, phi - alpha * phi_next)
        rhs += cost * phi
    try:
        return np.linalg.solve(a_mat, rhs)
    except np.linalg.LinAlgError as exc:
        raise LstdSingularError(
            "LSTD system is singular; rerun with a regularizer beta > 0"
        ) from exc


def blend_theta(
    theta_prev: np.ndarray, theta_hat: np.ndarray, n: int, delta: float
) -> np.ndarray:
    """Polynomial step-size blend: gamma_n = 1/n^delta, gamma_1 = 1."""
    if n < 1:
        raise ValueError("iteration number must be >= 1")
    gamma = float(n) ** (-delta)
    return (1.0 - gamma) * np.asarray(theta_prev, dtype=float) + gamma * np.asarray(
        theta_hat, dtype=float
    )


def run_api(
    params: ModelParams,
    space: StateSpace,
    config: AdpConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Full approximate-policy-iteration run for one seed.

    Returns the final weights and the (N, K+1) trace of blended weights
    after each outer iteration. Deterministic given config.seed.
    """
    # the regression needs more samples than unknowns
    if config.n_inner < params.K + 2:
        raise ValueError(f"n_inner must be >= K+2 = {params.K + 2}")
    rng = np.random.default_rng(config.seed)
    theta = (
        np.array(config.theta_init, dtype=float)
        if config.theta_init is not None
        else default_theta(params)
    )
    if len(theta) != params.K + 1:
        raise ValueError(f"theta_init must have length K+1 = {params.K + 1}")
    trace = np.empty((config.n_outer, params.K + 1))
    for n in range(1, config.n_outer + 1):
        batch = policy_evaluation(params, space, theta, config, rng)
        try:
            theta_hat = lstd_solve(batch, params.alpha, config.beta)
        except LstdSingularError as exc:
            raise LstdSingularError(f"outer iteration {n}: {exc}") from exc
        theta = blend_theta(theta, theta_hat, n, config.delta)
        trace[n - 1] = theta
    return theta, trace

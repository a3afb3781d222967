"""Exact solution of the acquisition MDP by synchronous value iteration.

Sweeps are Jacobi-style over the dense state enumeration, so results do
not depend on state order and are bit-identical across runs. The sweep
itself is vectorized through precomputed neighbor index tables; a test
pins it to the per-state scalar operators in :mod:`rto_solver.model`.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, State, StateSpace


class ConvergenceError(RuntimeError):
    """Value iteration hit max_iter before reaching tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass
class ValueTable:
    """Converged value function over the dense state index."""

    params: ModelParams
    values: np.ndarray


@dataclass
class PolicyTable:
    """Per-state greedy action: tau in {0,1}, eta in {0..K} (0 = reject)."""

    params: ModelParams
    tau: np.ndarray
    eta: np.ndarray


@dataclass
class SolveReport:
    iterations: int
    residual: float
    duration: float


@dataclass
class Finding:
    name: str
    passed: bool
    counterexample: State | None = None


@dataclass
class StructureReport:
    findings: list[Finding] = field(default_factory=list)

    def passed_all(self) -> bool:
        return all(f.passed for f in self.findings)

    def by_name(self, name: str) -> Finding:
        for f in self.findings:
            if f.name == name:
                return f
        raise KeyError(name)


class BellmanKernel:
    """Vectorized form of the two operators over a whole state space.

    up[i, s] / down[i, s] hold the index of state s with one type-(i+1)
    core added / removed; invalid moves are masked.
    """

    def __init__(self, params: ModelParams, space: StateSpace):
        self.params = params
        self.space = space
        states = space.states
        n = space.size
        K = params.K
        self.levels = states.sum(axis=1)
        self.at_cap = self.levels >= params.b
        self.h_vec = states.astype(float) @ np.asarray(params.h)
        up = np.zeros((K, n), dtype=np.int64)
        down = np.zeros((K, n), dtype=np.int64)
        down_ok = states >= 1  # (n, K)
        tuples = space.state_tuples
        lookup = space.lookup
        for s, x in enumerate(tuples):
            if not self.at_cap[s]:
                for i in range(K):
                    up[i, s] = lookup(x[:i] + (x[i] + 1,) + x[i + 1 :])
            for i in range(K):
                if x[i] >= 1:
                    down[i, s] = lookup(x[:i] + (x[i] - 1,) + x[i + 1 :])
        self.up = up
        self.down = down
        self.down_ok = down_ok.T  # (K, n)

    def t1_costs(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Keep and acquire branch costs; acquire is +inf where inadmissible."""
        p = self.params
        acquire = p.c_a + p.p_bar * values
        for i in range(p.K):
            acquire = acquire + p.p[i] * values[self.up[i]]
        acquire = np.where(self.at_cap, np.inf, acquire)
        return values, acquire

    def t2_costs(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Reject branch cost and per-core fulfillment costs (K, n)."""
        p = self.params
        reject = values + p.c_l
        core = np.empty((p.K, len(values)))
        for i in range(p.K):
            core[i] = np.where(self.down_ok[i], values[self.down[i]] + p.r[i], np.inf)
        return reject, core

    def sweep(self, values: np.ndarray) -> np.ndarray:
        p = self.params
        keep, acquire = self.t1_costs(values)
        t1 = np.minimum(keep, acquire)
        reject, core = self.t2_costs(values)
        t2 = np.minimum(reject, core.min(axis=0))
        return p.mu * t1 + p.lam * t2 + self.h_vec

    def greedy(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Argmin actions with the scalar tie-breaking rules: ties keep
        tau=0, fulfill only when strictly cheaper than rejecting, and the
        smallest core index wins among equal cores."""
        keep, acquire = self.t1_costs(values)
        tau = (acquire < keep).astype(np.int64)
        reject, core = self.t2_costs(values)
        best_core = core.argmin(axis=0)
        best_core_cost = core[best_core, np.arange(len(values))]
        eta = np.where(best_core_cost < reject, best_core + 1, 0).astype(np.int64)
        return tau, eta


def get_kernel(params: ModelParams, space: StateSpace) -> BellmanKernel:
    """Kernel construction is the expensive part; cache it on the space."""
    cached = getattr(space, "_bellman_kernel", None)
    if cached is None or cached.params != params:
        cached = BellmanKernel(params, space)
        space._bellman_kernel = cached  # type: ignore[attr-defined]
    return cached


def value_iteration(
    params: ModelParams,
    space: StateSpace,
    tol: float = 1e-8,
    max_iter: int = 100_000,
) -> tuple[ValueTable, SolveReport]:
    """Iterate the Bellman map from V=0 to a sup-norm residual <= tol.

    The map is an alpha-contraction (lambda + mu = alpha < 1), so the
    fixed-point error of the result is at most tol * alpha / (1 - alpha).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    kernel = get_kernel(params, space)
    start = time.perf_counter()
    values = np.zeros(space.size)
    residual = np.inf
    for it in range(1, max_iter + 1):
        new = kernel.sweep(values)
        residual = float(np.max(np.abs(new - values)))
        values = new
        if residual <= tol:
            return (
                ValueTable(params, values),
                SolveReport(it, residual, time.perf_counter() - start),
            )
    raise ConvergenceError(
        f"value iteration did not reach tol={tol} in {max_iter} sweeps "
        f"(residual {residual:.3e})",
        residual=residual,
    )


def policy_from_values(
    params: ModelParams, space: StateSpace, values: np.ndarray
) -> PolicyTable:
    """Greedy policy with respect to any value vector over the space."""
    tau, eta = get_kernel(params, space).greedy(np.asarray(values, dtype=float))
    return PolicyTable(params, tau, eta)


def extract_policy(params: ModelParams, space: StateSpace, table: ValueTable) -> PolicyTable:
    return policy_from_values(params, space, table.values)


def check_structure(
    params: ModelParams,
    space: StateSpace,
    table: ValueTable,
    policy: PolicyTable,
) -> StructureReport:
    """Evaluate the expected optimal-policy structure state by state.

    - fulfill_when_stocked: demand is never rejected when any core is held
    - highest_quality_first: the fulfillment core is the smallest
      available index
    - acquire_set_downward_closed: removing a core from an acquiring
      state never leaves the acquire region
    """
    kernel = get_kernel(params, space)
    states = space.states
    nonzero = kernel.levels > 0
    report = StructureReport()

    bad = nonzero & (policy.eta == 0)
    report.findings.append(_finding("fulfill_when_stocked", bad, space))

    smallest = np.argmax(states >= 1, axis=1) + 1
    bad = nonzero & (policy.eta != smallest)
    report.findings.append(_finding("highest_quality_first", bad, space))

    acquiring = policy.tau == 1
    bad = np.zeros(space.size, dtype=bool)
    for i in range(params.K):
        ok = kernel.down_ok[i]
        bad |= acquiring & ok & (policy.tau[kernel.down[i]] == 0)
    report.findings.append(_finding("acquire_set_downward_closed", bad, space))
    return report


def _finding(name: str, bad: np.ndarray, space: StateSpace) -> Finding:
    idx = np.nonzero(bad)[0]
    if idx.size == 0:
        return Finding(name, True)
    return Finding(name, False, space.unindex(int(idx[0])))


def write_values_csv(space: StateSpace, table: ValueTable, path) -> None:
    """One row per state index: index, x_1..x_K, value."""
    K = space.params.K
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index"] + [f"x{i+1}" for i in range(K)] + ["value"])
        for idx, x in enumerate(space.state_tuples):
            writer.writerow([idx, *x, repr(float(table.values[idx]))])


def write_policy_csv(space: StateSpace, policy: PolicyTable, path) -> None:
    """One row per state index: index, x_1..x_K, tau, eta."""
    K = space.params.K
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index"] + [f"x{i+1}" for i in range(K)] + ["tau", "eta"])
        for idx, x in enumerate(space.state_tuples):
            writer.writerow([idx, *x, int(policy.tau[idx]), int(policy.eta[idx])])

"""Core MDP for single-product remanufacture-to-order inventory control.

The system holds used cores of K quality types (type 1 is best) under a
shared capacity bound b. Two decisions are made at event epochs: whether
to start acquiring one more core (``tau``) and, on a demand arrival,
which core type to remanufacture or whether to reject (``eta``). The
continuous-time chain is uniformized so that the total event rate equals
the discount parameter (lambda + mu = alpha), which lets the discounted
Bellman recursion be written without an explicit discount factor.

Everything here is a pure function of its inputs; random sampling takes
an explicit numpy Generator.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

State = tuple[int, ...]
ValueFn = Callable[[State], float]

_RATE_TOL = 1e-12

# Dense enumeration beyond this is a configuration mistake, not a solve.
_MAX_DENSE_STATES = 2**31


class ConfigurationError(ValueError):
    """Parameter set violates the model assumptions."""


class DomainError(ValueError):
    """State lies outside the feasible inventory region."""


class AdmissibilityError(ValueError):
    """Action is not admissible in the given state."""


@dataclass(frozen=True)
class ModelParams:
    """All scalars and per-type vectors defining one problem instance.

    Vectors ``h`` (holding cost rates), ``r`` (remanufacturing costs) and
    ``p`` (quality probabilities) are indexed by core type, best quality
    first. ``p_bar`` is the probability an inspected item is uneconomical
    and discarded.
    """

    K: int
    b: int
    lam: float
    mu: float
    alpha: float
    c_a: float
    c_l: float
    h: tuple[float, ...]
    r: tuple[float, ...]
    p: tuple[float, ...]
    p_bar: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "h", tuple(float(v) for v in self.h))
        object.__setattr__(self, "r", tuple(float(v) for v in self.r))
        object.__setattr__(self, "p", tuple(float(v) for v in self.p))
        if self.K < 1:
            raise ConfigurationError(f"K must be >= 1, got {self.K}")
        if self.b < 0:
            raise ConfigurationError(f"b must be >= 0, got {self.b}")
        if self.lam <= 0 or self.mu <= 0:
            raise ConfigurationError("lambda and mu must be positive")
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha must lie in (0,1), got {self.alpha}")
        if abs(self.lam + self.mu - self.alpha) > _RATE_TOL:
            raise ConfigurationError(
                f"time scale requires lambda + mu = alpha; "
                f"got {self.lam} + {self.mu} != {self.alpha}"
            )
        if self.c_a < 0:
            raise ConfigurationError("c_a must be nonnegative")
        for name, vec in (("h", self.h), ("r", self.r), ("p", self.p)):
            if len(vec) != self.K:
                raise ConfigurationError(f"{name} must have length K={self.K}")
        if any(a < b_ for a, b_ in zip(self.h, self.h[1:])) or self.h[-1] < 0:
            raise ConfigurationError("h must satisfy h[1] >= ... >= h[K] >= 0")
        if any(a > b_ for a, b_ in zip(self.r, self.r[1:])):
            raise ConfigurationError("r must be non-decreasing in quality index")
        if self.c_l < self.r[-1]:
            raise ConfigurationError("c_l must be >= r[K]")
        if any(pi < 0 for pi in self.p) or self.p_bar < 0:
            raise ConfigurationError("quality probabilities must be nonnegative")
        if abs(self.p_bar + sum(self.p) - 1.0) > _RATE_TOL:
            raise ConfigurationError("p_bar + sum(p) must equal 1")

    @property
    def event_rate(self) -> float:
        return self.lam + self.mu

    @property
    def demand_prob(self) -> float:
        return self.lam / (self.lam + self.mu)


@dataclass(frozen=True)
class Action:
    """Joint decision: tau=1 starts an acquisition, eta picks the core
    type used to fulfill a demand (0 = reject)."""

    tau: int
    eta: int


class EventType(enum.Enum):
    ACQUISITION = "acquisition"
    DEMAND = "demand"


@dataclass(frozen=True)
class Event:
    """Realized exogenous event.

    ``quality`` is attached to acquisition events only: the realized core
    type in 1..K, 0 for a discarded (uneconomical) item, or None when no
    acquisition was in progress (tau=0).
    """

    kind: EventType
    quality: int | None = None


def check_state(params: ModelParams, x: State) -> None:
    if len(x) != params.K:
        raise DomainError(f"state has {len(x)} components, expected K={params.K}")
    if any(v < 0 for v in x):
        raise DomainError(f"negative core count in state {x}")
    if sum(x) > params.b:
        raise DomainError(f"state {x} exceeds capacity b={params.b}")


def check_action(params: ModelParams, x: State, action: Action) -> None:
    if action.tau not in (0, 1):
        raise AdmissibilityError(f"tau must be 0 or 1, got {action.tau}")
    if action.tau == 1 and sum(x) >= params.b:
        raise AdmissibilityError(f"cannot acquire at full capacity in state {x}")
    if not 0 <= action.eta <= params.K:
        raise AdmissibilityError(f"eta must lie in 0..K, got {action.eta}")
    if action.eta >= 1 and x[action.eta - 1] < 1:
        raise AdmissibilityError(
            f"no type-{action.eta} core available in state {x}"
        )


def state_space_size(params: ModelParams) -> int:
    """Number of feasible inventory vectors, binomial(b+K, K)."""
    return math.comb(params.b + params.K, params.K)


def _lex_states(K: int, b: int) -> Iterator[State]:
    # Lexicographic successor: grow the last slot while capacity remains,
    # otherwise carry into the previous nonzero position.
    x = [0] * K
    while True:
        yield tuple(x)
        if sum(x) < b:
            x[K - 1] += 1
            continue
        j = K - 1
        while j >= 0 and x[j] == 0:
            j -= 1
        if j <= 0:
            return
        x[j] = 0
        x[j - 1] += 1


class StateSpace:
    """Bijection between feasible states and dense indices in [0, |X|).

    Indices are lexicographic ranks of the inventory vector (component 1
    most significant), computed in O(K) from cumulative binomial counts.
    """

    def __init__(self, params: ModelParams):
        self.params = params
        self.size = state_space_size(params)
        if self.size > _MAX_DENSE_STATES:
            raise ConfigurationError(
                f"state space of size {self.size} exceeds the dense enumeration limit"
            )
        self._states: np.ndarray | None = None
        self._tuples: list[State] | None = None
        self._lookup: dict[State, int] | None = None

    def index(self, x: State) -> int:
        check_state(self.params, x)
        rank = 0
        rem = self.params.b
        K = self.params.K
        for pos, v in enumerate(x):
            d = K - pos - 1
            # states sharing the prefix but with a smaller value at pos
            rank += math.comb(rem + d + 1, d + 1) - math.comb(rem - v + d + 1, d + 1)
            rem -= v
        return rank

    def unindex(self, idx: int) -> State:
        if not 0 <= idx < self.size:
            raise DomainError(f"index {idx} outside [0, {self.size})")
        K, b = self.params.K, self.params.b
        x = []
        rem = b
        r = idx
        for pos in range(K):
            d = K - pos - 1
            v = 0
            while True:
                cnt = math.comb(rem - v + d, d)
                if r < cnt:
                    break
                r -= cnt
                v += 1
            x.append(v)
            rem -= v
        return tuple(x)

    @property
    def states(self) -> np.ndarray:
        """All feasible states in lexicographic order, shape (|X|, K)."""
        if self._states is None:
            self._states = np.array(self.state_tuples, dtype=np.int64).reshape(
                self.size, self.params.K
            )
        return self._states

    @property
    def state_tuples(self) -> list[State]:
        if self._tuples is None:
            self._tuples = list(_lex_states(self.params.K, self.params.b))
        return self._tuples

    def lookup(self, x: State) -> int:
        """Dict-backed rank, O(1) after first use."""
        if self._lookup is None:
            self._lookup = {s: i for i, s in enumerate(self.state_tuples)}
        return self._lookup[x]


def holding_rate(params: ModelParams, x: State) -> float:
    """Total holding cost per unit time in state x."""
    return float(sum(hi * xi for hi, xi in zip(params.h, x)))


def _bump(x: State, i: int) -> State:
    return x[:i] + (x[i] + 1,) + x[i + 1 :]


def _drop(x: State, i: int) -> State:
    return x[:i] + (x[i] - 1,) + x[i + 1 :]


def apply_T1(params: ModelParams, value_fn: ValueFn, x: State) -> tuple[float, int]:
    """Acquisition operator: min of keeping the current value versus paying
    c_a for an item of uncertain quality. Returns (cost, best_tau).

    At full capacity the acquire branch is inadmissible. Ties resolve to
    tau=0.
    """
    keep = value_fn(x)
    if sum(x) >= params.b:
        return keep, 0
    acquire = params.c_a + params.p_bar * keep
    for i, pi in enumerate(params.p):
        acquire += pi * value_fn(_bump(x, i))
    if acquire < keep:
        return acquire, 1
    return keep, 0


def apply_T2(params: ModelParams, value_fn: ValueFn, x: State) -> tuple[float, int]:
    """Fulfillment operator: min of rejecting (cost c_l) versus
    remanufacturing an available core. Returns (cost, best_eta).

    Ties among cores resolve to the smallest index (highest quality); a
    tie with the reject branch resolves to rejection.
    """
    best = value_fn(x) + params.c_l
    best_eta = 0
    for i in range(params.K):
        if x[i] < 1:
            continue
        cost = value_fn(_drop(x, i)) + params.r[i]
        if cost < best:
            best = cost
            best_eta = i + 1
    return best, best_eta


def bellman_apply(params: ModelParams, value_fn: ValueFn, x: State) -> float:
    """One application of the optimality recursion at state x."""
    t1, _ = apply_T1(params, value_fn, x)
    t2, _ = apply_T2(params, value_fn, x)
    return params.mu * t1 + params.lam * t2 + holding_rate(params, x)


def sample_transition(
    params: ModelParams,
    x: State,
    action: Action,
    rng: np.random.Generator,
) -> tuple[State, Event, float]:
    """Draw the next event and resulting state.

    The event kind is acquisition-completion with probability
    mu/(lambda+mu) and demand arrival otherwise; the sojourn time t_w is
    exponential with the total event rate. Draw order is fixed (t_w,
    kind, then quality if an acquisition is in progress) so runs are
    reproducible for a given generator state.
    """
    check_state(params, x)
    check_action(params, x, action)
    t_w = float(rng.exponential(1.0 / params.event_rate))
    if rng.random() < params.mu / params.event_rate:
        if action.tau == 1:
            u = rng.random()
            acc = 0.0
            quality = 0
            nxt = x
            for i, pi in enumerate(params.p):
                acc += pi
                if u < acc:
                    quality = i + 1
                    nxt = _bump(x, i)
                    break
            return nxt, Event(EventType.ACQUISITION, quality), t_w
        return x, Event(EventType.ACQUISITION, None), t_w
    if action.eta >= 1:
        return _drop(x, action.eta - 1), Event(EventType.DEMAND), t_w
    return x, Event(EventType.DEMAND), t_w


def immediate_cost(
    params: ModelParams,
    x: State,
    action: Action,
    event: Event,
    t_w: float,
) -> float:
    """Cost accrued over one sojourn: time-weighted holding plus the
    acquisition fee or the fulfillment/lost-sale charge of the event."""
    cost = t_w * holding_rate(params, x)
    if event.kind is EventType.ACQUISITION:
        if action.tau == 1:
            cost += params.c_a
    else:
        if action.eta == 0:
            cost += params.c_l
        else:
            cost += params.r[action.eta - 1]
    return cost

"""Shared fixtures and parameter factories for the test suite."""

import numpy as np
import pytest

from rto_solver.model import ModelParams, StateSpace


def make_params(
    K=2,
    b=3,
    lam=0.5,
    alpha=0.99,
    c_a=5.0,
    c_l=100.0,
    h=None,
    r=None,
    p=None,
    p_bar=None,
):
    """Small valid instance with overridable pieces; mu is derived so the
    uniformization constraint lambda + mu = alpha always holds."""
    if h is None:
        h = tuple(float(K - i) for i in range(K))
    if r is None:
        r = tuple(float(10 * (i + 1)) for i in range(K))
    if p is None:
        p = tuple(1.0 / (K + 1) for _ in range(K))
    if p_bar is None:
        p_bar = 1.0 - sum(p)
    return ModelParams(
        K=K,
        b=b,
        lam=lam,
        mu=alpha - lam,
        alpha=alpha,
        c_a=c_a,
        c_l=c_l,
        h=h,
        r=r,
        p=p,
        p_bar=p_bar,
    )


def tabulated(space: StateSpace, values):
    """Value function backed by a dense array over the space's indices."""
    values = np.asarray(values, dtype=float)

    def fn(x):
        return float(values[space.lookup(x)])

    return fn


@pytest.fixture
def small_params():
    return make_params()


@pytest.fixture
def small_space(small_params):
    return StateSpace(small_params)

"""Analyses: acquisition threshold by inventory level, weight trends."""

import csv
import math

import numpy as np
import pytest

from rto_solver.analysis import (
    t1_cost_by_level,
    theta_trends,
    value_vector_from_theta,
    write_t1_levels_csv,
    write_theta_trends_csv,
)
from rto_solver.exact import extract_policy, get_kernel, value_iteration
from rto_solver.harness import build_params
from rto_solver.model import StateSpace

from conftest import make_params


# ---------------------------------------------------------------------------
# T1 cost by level


def test_level_counts_k2():
    p = build_params(2, 0.5)
    space = StateSpace(p)
    report = t1_cost_by_level(p, space, np.zeros(space.size))
    # stars and bars: level n has n+1 states for K=2
    for stat in report.levels:
        assert stat.n_states == stat.level + 1
    assert sum(s.n_states for s in report.levels) == space.size
    assert len(report.levels) == p.b + 1


def test_level_counts_sum_to_space_size():
    for K in (3, 4):
        p = build_params(K, 0.25)
        space = StateSpace(p)
        report = t1_cost_by_level(p, space, np.zeros(space.size))
        assert sum(s.n_states for s in report.levels) == space.size
        for stat in report.levels:
            assert stat.n_states == math.comb(stat.level + K - 1, K - 1)


def test_capacity_level_has_no_acquire_branch():
    p = make_params(K=2, b=4)
    space = StateSpace(p)
    report = t1_cost_by_level(p, space, np.zeros(space.size))
    top = report.levels[-1]
    assert top.level == p.b
    assert math.isnan(top.mean_acquire)
    for stat in report.levels[:-1]:
        assert math.isfinite(stat.mean_acquire)


def test_zero_value_function_never_acquires():
    # acquire branch always costs c_a more than keeping under V = 0
    p = make_params(K=2, b=4, c_a=5.0)
    space = StateSpace(p)
    report = t1_cost_by_level(p, space, np.zeros(space.size))
    assert report.threshold == -1


def test_threshold_consistent_with_exact_policy():
    p = build_params(2, 0.75)
    space = StateSpace(p)
    table, _ = value_iteration(p, space)
    policy = extract_policy(p, space, table)
    report = t1_cost_by_level(p, space, table.values)

    levels = get_kernel(p, space).levels
    acquiring = policy.tau == 1
    assert acquiring.any()
    acq_levels = levels[acquiring]
    # highest level where every state acquires and highest with any acquirer
    all_acquire = max(
        lvl
        for lvl in range(p.b)
        if np.all(acquiring[levels == lvl])
    )
    assert all_acquire <= report.threshold <= int(acq_levels.max())


def test_threshold_from_theta_value_function():
    # a value function dominated by the decreasing-in-inventory g term makes
    # acquiring attractive at low levels only
    p = build_params(2, 0.75)
    space = StateSpace(p)
    theta = np.array([1000.0, 10.0, 10.0])
    values = value_vector_from_theta(p, space, theta)
    assert values.shape == (space.size,)
    report = t1_cost_by_level(p, space, values)
    assert 0 <= report.threshold < p.b


# ---------------------------------------------------------------------------
# theta trends


def test_trends_single_repetition():
    table = theta_trends([((2, 0.5), np.array([1.0, 2.0, 3.0]))])
    rows = {r.coeff: r for r in table.rows}
    assert rows[0].mean == 1.0 and rows[0].std == 0.0
    assert rows[2].mean == 3.0 and rows[2].std == 0.0


def test_trends_mean_and_std():
    runs = [
        ((2, 0.5), np.array([1.0, 4.0, 0.0])),
        ((2, 0.5), np.array([3.0, 6.0, 0.0])),
    ]
    table = theta_trends(runs)
    rows = {r.coeff: r for r in table.rows}
    assert rows[0].mean == 2.0 and rows[0].std == 1.0
    assert rows[1].mean == 5.0


def test_trends_permutation_invariant():
    rng = np.random.default_rng(23)
    runs = [((3, 0.25), rng.normal(size=4)) for _ in range(6)]
    a = theta_trends(runs)
    b = theta_trends(list(reversed(runs)))
    assert [(r.K, r.lam, r.coeff) for r in a.rows] == [
        (r.K, r.lam, r.coeff) for r in b.rows
    ]
    for row_a, row_b in zip(a.rows, b.rows):
        assert row_a.mean == pytest.approx(row_b.mean, abs=1e-12)
        assert row_a.std == pytest.approx(row_b.std, abs=1e-12)


def test_trends_empty_raises():
    with pytest.raises(ValueError):
        theta_trends([])


def test_trend_verdicts_on_synthetic_data():
    runs = []
    # theta0 grows with lambda; theta_i shrink with lambda and with i
    for lam, t0 in zip((0.25, 0.5, 0.75), (10.0, 20.0, 30.0)):
        runs.append(((2, lam), np.array([t0, 100.0 - 50 * lam, 50.0 - 50 * lam])))
    table = theta_trends(runs)
    assert table.verdicts.theta0_increasing_in_lambda[2] is True
    assert table.verdicts.theta_i_decreasing_in_lambda[2] is True
    for lam in (0.25, 0.5, 0.75):
        assert table.verdicts.quality_ordering[(2, lam)] is True


def test_trend_verdicts_detect_violations():
    runs = [
        ((2, 0.25), np.array([30.0, 10.0, 50.0])),  # quality order broken
        ((2, 0.75), np.array([10.0, 60.0, 55.0])),  # theta0 decreasing
    ]
    table = theta_trends(runs)
    assert table.verdicts.theta0_increasing_in_lambda[2] is False
    assert table.verdicts.quality_ordering[(2, 0.25)] is False
    assert table.verdicts.theta_i_decreasing_in_lambda[2] is False


def test_trends_means_accessor():
    runs = [((2, 0.5), np.array([1.0, 2.0, 3.0]))]
    table = theta_trends(runs)
    assert np.array_equal(table.means((2, 0.5)), [1.0, 2.0, 3.0])


# ---------------------------------------------------------------------------
# CSV exports


def test_theta_trends_csv(tmp_path):
    runs = [((2, 0.5), np.array([1.0, 2.0, 3.0]))]
    path = tmp_path / "theta_trends.csv"
    write_theta_trends_csv(path, theta_trends(runs))
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["instance", "lambda", "K", "i", "mean", "std"]
    assert len(rows) == 4
    assert rows[1][0] == "K2_L0.5"
    assert float(rows[1][4]) == 1.0


def test_t1_levels_csv(tmp_path):
    p = make_params(K=2, b=3)
    space = StateSpace(p)
    report = t1_cost_by_level(p, space, np.zeros(space.size))
    path = tmp_path / "t1_levels.csv"
    write_t1_levels_csv(path, "demo", report)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["instance", "level", "mean_keep", "mean_acquire", "n_states"]
    assert len(rows) == p.b + 2
    assert rows[1][0] == "demo"
    assert rows[-1][3] == "nan"

"""Post-hoc analyses: acquisition-threshold extraction by total inventory
level and weight-coefficient trend tables across instances/repetitions."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .adp import basis_matrix
from .exact import get_kernel
from .model import ModelParams, StateSpace

InstanceKey = tuple[int, float]  # (K, lambda)


@dataclass
class LevelStat:
    level: int
    n_states: int
    mean_keep: float
    mean_acquire: float  # nan where acquiring is inadmissible (level == b)


@dataclass
class ThresholdReport:
    levels: list[LevelStat]
    threshold: int  # largest level where acquiring is mean-preferred, -1 if never


@dataclass
class TrendVerdicts:
    theta0_increasing_in_lambda: dict[int, bool] = field(default_factory=dict)
    theta_i_decreasing_in_lambda: dict[int, bool] = field(default_factory=dict)
    quality_ordering: dict[InstanceKey, bool] = field(default_factory=dict)


@dataclass
class ThetaTrendRow:
    K: int
    lam: float
    coeff: int
    mean: float
    std: float


@dataclass
class ThetaTrendTable:
    rows: list[ThetaTrendRow]
    verdicts: TrendVerdicts

    def means(self, key: InstanceKey) -> np.ndarray:
        vals = [r.mean for r in self.rows if (r.K, r.lam) == key]
        return np.array(vals)


def value_vector_from_theta(
    params: ModelParams, space: StateSpace, theta: np.ndarray
) -> np.ndarray:
    """Approximate value at every state of the space."""
    return basis_matrix(params, space) @ np.asarray(theta, dtype=float)


def t1_cost_by_level(
    params: ModelParams, space: StateSpace, values: np.ndarray
) -> ThresholdReport:
    """Average both acquisition branches over all states at each total
    inventory level and read off the mean-cost crossover threshold."""
    values = np.asarray(values, dtype=float)
    kernel = get_kernel(params, space)
    keep, acquire = kernel.t1_costs(values)
    levels = kernel.levels
    stats: list[LevelStat] = []
    threshold = -1
    for lvl in range(params.b + 1):
        mask = levels == lvl
        n = int(mask.sum())
        if n == 0:
            continue
        mean_keep = float(keep[mask].mean())
        if lvl >= params.b:
            mean_acq = float("nan")
        else:
            mean_acq = float(acquire[mask].mean())
            if mean_acq < mean_keep:
                threshold = max(threshold, lvl)
        stats.append(LevelStat(lvl, n, mean_keep, mean_acq))
    return ThresholdReport(stats, threshold)


def theta_trends(
    runs: Iterable[tuple[InstanceKey, np.ndarray]]
) -> ThetaTrendTable:
    """Per-instance per-coefficient mean/std over repetitions, plus the
    monotonicity verdicts on the means."""
    grouped: dict[InstanceKey, list[np.ndarray]] = {}
    for key, theta in runs:
        grouped.setdefault(key, []).append(np.asarray(theta, dtype=float))
    if not grouped:
        raise ValueError("no repetitions supplied")

    rows: list[ThetaTrendRow] = []
    means: dict[InstanceKey, np.ndarray] = {}
    for key in sorted(grouped):
        stack = np.vstack(grouped[key])
        mean = stack.mean(axis=0)
        std = stack.std(axis=0)
        means[key] = mean
        K, lam = key
        for i in range(stack.shape[1]):
            rows.append(ThetaTrendRow(K, lam, i, float(mean[i]), float(std[i])))

    verdicts = TrendVerdicts()
    for key, mean in means.items():
        verdicts.quality_ordering[key] = bool(
            np.all(mean[1:-1] >= mean[2:] - 1e-12)
        )
    ks = sorted({k for k, _ in means})
    for K in ks:
        lams = sorted(lam for kk, lam in means if kk == K)
        if len(lams) < 2:
            continue
        theta0_seq = [means[(K, lam)][0] for lam in lams]
        verdicts.theta0_increasing_in_lambda[K] = bool(
            all(a < b for a, b in zip(theta0_seq, theta0_seq[1:]))
        )
        decreasing = True
        for i in range(1, K + 1):
            seq = [means[(K, lam)][i] for lam in lams]
            if any(a < b - 1e-12 for a, b in zip(seq, seq[1:])):
                decreasing = False
        verdicts.theta_i_decreasing_in_lambda[K] = decreasing
    return ThetaTrendTable(rows, verdicts)


def write_theta_trends_csv(path, table: ThetaTrendTable, instance_labels=None) -> None:
    """Columns: instance, lambda, K, i, mean, std."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "lambda", "K", "i", "mean", "std"])
        for row in table.rows:
            label = (
                instance_labels[(row.K, row.lam)]
                if instance_labels
                else f"K{row.K}_L{row.lam:g}"
            )
            writer.writerow(
                [label, repr(row.lam), row.K, row.coeff, repr(row.mean), repr(row.std)]
            )


def write_t1_levels_csv(path, instance: str, report: ThresholdReport) -> None:
    """Columns: instance, level, mean_keep, mean_acquire, n_states."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "level", "mean_keep", "mean_acquire", "n_states"])
        for stat in report.levels:
            writer.writerow(
                [
                    instance,
                    stat.level,
                    repr(stat.mean_keep),
                    repr(stat.mean_acquire),
                    stat.n_states,
                ]
            )

"""Experiment harness: 12-instance testbed, seeded repetitions, CLI.

The testbed crosses K in {2,3,4,5} with lambda in {0.25,0.5,0.75}; all
remaining parameters follow the baseline rules (h_i = K-i+1, r_i = 10i,
b = 20, mu = 0.99 - lambda, c_a = 5, c_l = 100, p_i = p_bar = 1/(K+1),
alpha = 0.99). Each instance is solved exactly, trained 10 times with
derived seeds, simulated against benchmark policies, and analyzed; every
artifact lands in a per-instance directory and a manifest is written
last so a partial run directory is never mistaken for a complete one.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .adp import AdpConfig, run_api
from .analysis import (
    ThresholdReport,
    t1_cost_by_level,
    theta_trends,
    value_vector_from_theta,
    write_t1_levels_csv,
    write_theta_trends_csv,
)
from .exact import (
    PolicyTable,
    StructureReport,
    ValueTable,
    check_structure,
    extract_policy,
    value_iteration,
    write_policy_csv,
    write_values_csv,
)
from .model import ModelParams, StateSpace
from .sim import (
    HEURISTICS,
    RolloutConfig,
    RolloutEstimate,
    greedy_policy_from_theta,
    heuristic_policy,
    rollout_cost,
)

TESTBED_KS = (2, 3, 4, 5)
TESTBED_LAMBDAS = (0.25, 0.5, 0.75)
DEFAULT_REPS = 10

MODEL_KEYS = ("K", "b", "lambda", "mu", "c_a", "c_l", "alpha")
ALGO_KEYS = ("N", "Z", "beta", "delta", "epsilon")


@dataclass(frozen=True)
class InstanceSpec:
    K: int
    lam: float

    @property
    def label(self) -> str:
        return f"instance_K{self.K}_L{self.lam:g}"


def build_params(K: int, lam: float, overrides: dict | None = None) -> ModelParams:
    """Baseline parameters for an instance, with optional overrides from a
    key=value config file."""
    ov = dict(overrides or {})
    K = int(ov.get("K", K))
    lam = float(ov.get("lambda", lam))
    alpha = float(ov.get("alpha", 0.99))
    mu = float(ov.get("mu", alpha - lam))
    return ModelParams(
        K=K,
        b=int(ov.get("b", 20)),
        lam=lam,
        mu=mu,
        alpha=alpha,
        c_a=float(ov.get("c_a", 5.0)),
        c_l=float(ov.get("c_l", 100.0)),
        h=tuple(float(K - i + 1) for i in range(1, K + 1)),
        r=tuple(float(10 * i) for i in range(1, K + 1)),
        p=tuple(1.0 / (K + 1) for _ in range(K)),
        p_bar=1.0 / (K + 1),
    )


def build_adp_config(overrides: dict | None = None, **kwargs) -> AdpConfig:
    ov = dict(overrides or {})
    return AdpConfig(
        n_outer=int(ov.get("N", 10)),
        n_inner=int(ov.get("Z", 1000)),
        beta=float(ov.get("beta", 10.0)),
        delta=float(ov.get("delta", 0.5)),
        epsilon=float(ov.get("epsilon", 0.05)),
        **kwargs,
    )


def build_testbed() -> list[InstanceSpec]:
    """The 12 baseline instances, K ascending then lambda ascending."""
    return [InstanceSpec(K, lam) for K in TESTBED_KS for lam in TESTBED_LAMBDAS]


def derive_seed(master_seed: int, instance_index: int, rep_index: int) -> int:
    """Stable, collision-free per-(instance, repetition) seed."""
    digest = hashlib.sha256(
        f"{master_seed}/{instance_index}/{rep_index}".encode()
    ).digest()
    return int.from_bytes(digest[:8], "big")


def parse_config_file(path) -> dict:
    """Plain-text overrides: one `key = value` per line, `#` comments."""
    overrides: dict[str, float] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected `key = value`, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in MODEL_KEYS + ALGO_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        overrides[key] = float(value)
    return overrides


@dataclass
class InstanceResult:
    spec: InstanceSpec
    params: ModelParams
    space: StateSpace
    value_table: ValueTable | None = None
    policy: PolicyTable | None = None
    solve_residual: float = float("nan")
    solve_iterations: int = 0
    structure: StructureReport | None = None
    thetas: np.ndarray | None = None  # (reps, K+1)
    theta_mean: np.ndarray | None = None
    threshold: ThresholdReport | None = None
    rollouts: list[dict] = field(default_factory=list)


@dataclass
class RunResult:
    manifest: dict
    instances: dict[str, InstanceResult]

    @property
    def failures(self) -> list[dict]:
        return self.manifest["failures"]


def _write_trace_csv(path, trace: np.ndarray, seed: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        k1 = trace.shape[1]
        writer.writerow(["n"] + [f"theta_{i}" for i in range(k1)] + ["seed"])
        for n, row in enumerate(trace, start=1):
            writer.writerow([n] + [repr(float(v)) for v in row] + [seed])


def _write_rollouts_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "mean", "half_width", "replications", "seed"])
        for row in rows:
            writer.writerow(
                [
                    row["policy"],
                    repr(row["mean"]),
                    repr(row["half_width"]),
                    row["replications"],
                    row["seed"],
                ]
            )


def _structure_payload(report: StructureReport) -> list[dict]:
    return [
        {
            "name": f.name,
            "passed": f.passed,
            "counterexample": list(f.counterexample) if f.counterexample else None,
        }
        for f in report.findings
    ]


def run_all(
    master_seed: int,
    out_dir,
    reps: int = DEFAULT_REPS,
    rollout_reps: int = 1000,
    tail_tol: float = 1e-6,
    vi_tol: float = 1e-8,
    model_overrides: dict | None = None,
    adp_overrides: dict | None = None,
    instances: list[InstanceSpec] | None = None,
    progress: bool = False,
) -> RunResult:
    """Run the full reproduction pipeline and write all artifacts.

    Failures in one instance are recorded in the manifest and do not stop
    the remaining instances. The manifest is written only at the end.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    specs = instances if instances is not None else build_testbed()
    started = time.time()
    failures: list[dict] = []
    results: dict[str, InstanceResult] = {}
    manifest_instances = []
    all_trend_runs = []

    for inst_idx, spec in enumerate(specs):
        if progress:
            print(f"[{spec.label}] starting", flush=True)
        inst_dir = out / spec.label
        inst_dir.mkdir(parents=True, exist_ok=True)
        params = build_params(spec.K, spec.lam, model_overrides)
        space = StateSpace(params)
        result = InstanceResult(spec, params, space)
        results[spec.label] = result
        seeds = [derive_seed(master_seed, inst_idx, rep) for rep in range(reps)]
        entry = {
            "label": spec.label,
            "K": params.K,
            "lambda": params.lam,
            "state_count": space.size,
            "adp_seeds": seeds,
        }
        manifest_instances.append(entry)

        try:
            table, report = value_iteration(params, space, tol=vi_tol)
            result.value_table = table
            result.solve_residual = report.residual
            result.solve_iterations = report.iterations
            result.policy = extract_policy(params, space, table)
            write_values_csv(space, table, inst_dir / "exact_value.csv")
            write_policy_csv(space, result.policy, inst_dir / "exact_policy.csv")
            result.structure = check_structure(params, space, table, result.policy)
            (inst_dir / "structure.json").write_text(
                json.dumps(_structure_payload(result.structure), indent=2) + "\n"
            )
        except Exception as exc:  # noqa: BLE001 - recorded, run continues
            failures.append(
                {"instance": spec.label, "stage": "exact", "error": _describe(exc)}
            )

        thetas = []
        for rep, seed in enumerate(seeds):
            try:
                config = build_adp_config(adp_overrides, seed=seed)
                theta, trace = run_api(params, space, config)
                thetas.append(theta)
                _write_trace_csv(inst_dir / f"adp_rep{rep}.csv", trace, seed)
            except Exception as exc:  # noqa: BLE001
                failures.append(
                    {
                        "instance": spec.label,
                        "stage": f"adp_rep{rep}",
                        "error": _describe(exc),
                    }
                )
        if thetas:
            result.thetas = np.vstack(thetas)
            result.theta_mean = result.thetas.mean(axis=0)
            trend_runs = [((params.K, params.lam), t) for t in thetas]
            all_trend_runs.extend(trend_runs)
            write_theta_trends_csv(
                inst_dir / "theta_trends.csv", theta_trends(trend_runs)
            )
            try:
                v_approx = value_vector_from_theta(params, space, result.theta_mean)
                result.threshold = t1_cost_by_level(params, space, v_approx)
                write_t1_levels_csv(
                    inst_dir / "t1_levels.csv", spec.label, result.threshold
                )
            except Exception as exc:  # noqa: BLE001
                failures.append(
                    {"instance": spec.label, "stage": "analysis", "error": _describe(exc)}
                )

        try:
            result.rollouts = _instance_rollouts(
                params,
                space,
                result,
                seed=derive_seed(master_seed, inst_idx, 10_000),
                reps=rollout_reps,
                tail_tol=tail_tol,
            )
            _write_rollouts_csv(inst_dir / "rollouts.csv", result.rollouts)
        except Exception as exc:  # noqa: BLE001
            failures.append(
                {"instance": spec.label, "stage": "rollouts", "error": _describe(exc)}
            )
        if progress:
            print(f"[{spec.label}] done", flush=True)

    if all_trend_runs:
        write_theta_trends_csv(out / "theta_trends.csv", theta_trends(all_trend_runs))

    manifest = {
        "tool_version": __version__,
        "master_seed": master_seed,
        "repetitions": reps,
        "rollout_replications": rollout_reps,
        "tail_tol": tail_tol,
        "vi_tol": vi_tol,
        "model_overrides": model_overrides or {},
        "adp_overrides": adp_overrides or {},
        "instances": manifest_instances,
        "failures": failures,
        "started_at": started,
        "finished_at": time.time(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return RunResult(manifest, results)


def _instance_rollouts(params, space, result, seed, reps, tail_tol) -> list[dict]:
    zero = tuple(0 for _ in range(params.K))
    config = RolloutConfig(zero, replications=reps, tail_tol=tail_tol, seed=seed)
    policies: list[tuple[str, PolicyTable]] = []
    if result.policy is not None:
        policies.append(("exact", result.policy))
    if result.theta_mean is not None:
        policies.append(
            ("adp-greedy", greedy_policy_from_theta(params, space, result.theta_mean))
        )
    for name in HEURISTICS:
        policies.append((name, heuristic_policy(params, space, name)))
    rows = []
    for name, policy in policies:
        est = rollout_cost(params, space, policy, config)
        rows.append(
            {
                "policy": name,
                "mean": est.mean,
                "half_width": est.half_width,
                "replications": est.replications,
                "seed": seed,
            }
        )
    return rows


def _describe(exc: Exception) -> str:
    return "".join(traceback.format_exception_only(exc)).strip()


# ---------------------------------------------------------------------------
# CLI


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, default=2, help="number of core types")
    parser.add_argument(
        "--lambda", dest="lam", type=float, default=0.75, help="demand arrival rate"
    )
    parser.add_argument("--seed", type=int, default=0, help="random seed")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument(
        "--config", type=Path, default=None, help="key=value overrides file"
    )


def _overrides(args) -> dict:
    return parse_config_file(args.config) if args.config else {}


def _model_overrides(ov: dict) -> dict:
    return {k: v for k, v in ov.items() if k in MODEL_KEYS}


def _algo_overrides(ov: dict) -> dict:
    return {k: v for k, v in ov.items() if k in ALGO_KEYS}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rto-solver",
        description="Exact and approximate solvers for the remanufacture-to-order MDP",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("testbed", help="run the full 12-instance reproduction")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--reps", type=int, default=DEFAULT_REPS)
    p.add_argument("--rollout-reps", type=int, default=1000)

    p = sub.add_parser("solve-exact", help="value iteration for one instance")
    _add_common(p)
    p.add_argument("--tol", type=float, default=1e-8)

    p = sub.add_parser("train-adp", help="one seeded approximate-PI run")
    _add_common(p)

    p = sub.add_parser("simulate", help="Monte Carlo rollout of a policy")
    _add_common(p)
    p.add_argument(
        "--policy",
        choices=("exact", "adp") + HEURISTICS,
        default="exact",
    )
    p.add_argument("--replications", type=int, default=1000)

    p = sub.add_parser("analyze", help="theta trends and acquisition threshold")
    _add_common(p)
    p.add_argument("--reps", type=int, default=DEFAULT_REPS)

    args = parser.parse_args(argv)
    return _dispatch(args)


def _dispatch(args) -> int:
    if args.command == "testbed":
        ov = parse_config_file(args.config) if args.config else {}
        result = run_all(
            args.seed,
            args.out,
            reps=args.reps,
            rollout_reps=args.rollout_reps,
            model_overrides=_model_overrides(ov),
            adp_overrides=_algo_overrides(ov),
            progress=True,
        )
        if result.failures:
            for failure in result.failures:
                print(f"FAILED {failure['instance']}/{failure['stage']}: "
                      f"{failure['error']}", file=sys.stderr)
            return 1
        print(f"testbed complete: {len(result.instances)} instances -> {args.out}")
        return 0

    ov = _overrides(args)
    params = build_params(args.k, args.lam, _model_overrides(ov))
    space = StateSpace(params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.command == "solve-exact":
        table, report = value_iteration(params, space, tol=args.tol)
        policy = extract_policy(params, space, table)
        write_values_csv(space, table, out / "exact_value.csv")
        write_policy_csv(space, policy, out / "exact_policy.csv")
        structure = check_structure(params, space, table, policy)
        (out / "structure.json").write_text(
            json.dumps(_structure_payload(structure), indent=2) + "\n"
        )
        print(
            f"solved {space.size} states in {report.iterations} sweeps "
            f"(residual {report.residual:.3e}); V(0) = {table.values[0]:.4f}"
        )
        return 0

    if args.command == "train-adp":
        config = build_adp_config(_algo_overrides(ov), seed=args.seed)
        theta, trace = run_api(params, space, config)
        _write_trace_csv(out / f"adp_seed{args.seed}.csv", trace, args.seed)
        print("final theta:", " ".join(f"{v:.4f}" for v in theta))
        return 0

    if args.command == "simulate":
        policy = _build_policy(args, params, space, ov)
        zero = tuple(0 for _ in range(params.K))
        config = RolloutConfig(zero, replications=args.replications, seed=args.seed)
        est = rollout_cost(params, space, policy, config)
        _write_rollouts_csv(
            out / "rollouts.csv",
            [
                {
                    "policy": args.policy,
                    "mean": est.mean,
                    "half_width": est.half_width,
                    "replications": est.replications,
                    "seed": args.seed,
                }
            ],
        )
        print(f"{args.policy}: {est.mean:.2f} +/- {est.half_width:.2f} (95%)")
        return 0

    if args.command == "analyze":
        runs = []
        for rep in range(args.reps):
            config = build_adp_config(
                _algo_overrides(ov), seed=derive_seed(args.seed, 0, rep)
            )
            theta, _ = run_api(params, space, config)
            runs.append(((params.K, params.lam), theta))
        table = theta_trends(runs)
        write_theta_trends_csv(out / "theta_trends.csv", table)
        theta_mean = np.vstack([t for _, t in runs]).mean(axis=0)
        report = t1_cost_by_level(
            params, space, value_vector_from_theta(params, space, theta_mean)
        )
        write_t1_levels_csv(out / "t1_levels.csv", f"K{params.K}_L{params.lam:g}", report)
        print(f"acquisition threshold (mean-cost crossover): {report.threshold}")
        return 0

    raise AssertionError(f"unhandled command {args.command}")


def _build_policy(args, params, space, ov) -> PolicyTable:
    if args.policy == "exact":
        table, _ = value_iteration(params, space)
        return extract_policy(params, space, table)
    if args.policy == "adp":
        config = build_adp_config(_algo_overrides(ov), seed=args.seed)
        theta, _ = run_api(params, space, config)
        return greedy_policy_from_theta(params, space, theta)
    return heuristic_policy(params, space, args.policy)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver.

    groupsync generate --config gen.json --out instance.json
    groupsync solve instance.json --out results/ [--init spectral|groundtruth|file]
    groupsync experiment --config sweep.json --out results/
    groupsync check

Exit codes: 0 success, 1 solver or diagnostic failure, 2 I/O or config error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations
from pathlib import Path
from typing import List

import numpy as np

from .analysis import (
    contraction_check,
    contraction_samples,
    estimation_error,
    master_report,
    projection_inequality_gap,
    recovery_rate,
)
from .blocklin import ConvergenceError
from .gen import GraphConfig, GraphGenerationError, NoiseConfig, gen_instance
from .groups import CYCLIC, PERMUTATION, GroupSpec, cyclic_element, project, rho, sample_uniform
from .model import block_column_from_dict, block_column_to_dict, load_instance, save_instance
from .solver import SolveConfig, gpm, spectral_estimator

log = logging.getLogger("groupsync")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _section(config: dict, name: str, parse):
    if name not in config:
        raise ConfigError(f"config is missing '{name}'")
    try:
        return parse(config[name])
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid '{name}' section: {exc}") from exc


def _solve_config(config: dict, args=None) -> SolveConfig:
    raw = dict(config.get("solve", {}))
    unknown = set(raw) - {"max_iters", "tol"}
    if unknown:
        raise ConfigError(f"unknown solve config fields: {sorted(unknown)}")
    if args is not None and args.max_iters is not None:
        raw["max_iters"] = args.max_iters
    if args is not None and args.tol is not None:
        raw["tol"] = args.tol
    try:
        return SolveConfig(int(raw.get("max_iters", 200)), float(raw.get("tol", 1e-10)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_generate(args) -> int:
    config = read_json(args.config)
    spec = _section(config, "spec", GroupSpec.from_dict)
    graph = _section(config, "graph", GraphConfig.from_dict)
    noise = _section(config, "noise", NoiseConfig.from_dict)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    try:
        instance = gen_instance(spec, graph, noise, int(seed))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    save_instance(instance, args.out)
    log.info("wrote %s: %s, n=%d, %d edges", args.out, spec, instance.n, instance.graph.num_edges)
    return EXIT_OK


def cmd_solve(args) -> int:
    try:
        instance = load_instance(args.instance)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{args.instance}: {exc}") from exc
    cfg = _solve_config({}, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.init == "spectral":
        G0 = spectral_estimator(instance)
    elif args.init == "groundtruth":
        if instance.ground_truth is None:
            raise ConfigError("--init groundtruth needs an instance with ground truth")
        G0 = instance.ground_truth
    else:
        if not args.init_file:
            raise ConfigError("--init file needs --init-file")
        G0 = block_column_from_dict(read_json(args.init_file))
        if G0.shape != (instance.n, instance.d, instance.d):
            raise ConfigError(f"initial estimate has shape {G0.shape}, expected {(instance.n, instance.d, instance.d)}")

    G, trace = gpm(instance, G0, cfg)
    with open(out / "estimate.json", "w") as fh:
        json.dump(block_column_to_dict(G), fh)
        fh.write("\n")
    trace.write_csv(out / "trace.csv")
    summary = {"iterations": trace.iterations, "converged": trace.converged}
    if instance.ground_truth is not None:
        report = master_report(instance, trace)
        report.write_json(out / "report.json")
        summary["epsilon"] = trace.epsilon[-1]
        summary["recovery_rate"] = recovery_rate(instance.spec, G, instance.ground_truth)
        summary["all_conditions_hold"] = report.all_conditions_hold
        summary["envelope_violations"] = len(report.envelope_violations)
    print(json.dumps(summary))
    return EXIT_OK


SWEEP_PARAMS = ("spec.d", "spec.m", "graph.n", "graph.p", "noise.outlier_fraction") + tuple(
    f"noise.{name}" for name in ("sigma", "bound", "q", "gamma", "delta")
)

TRIAL_COLUMNS = [
    "sweep_value",
    "trial",
    "seed",
    "eps_spectral",
    "eps_gpm",
    "recovery_spectral",
    "recovery_gpm",
    "iterations",
    "time_spectral",
    "time_gpm",
    "time_total",
    "failed",
    "error",
]
MEAN_COLUMNS = TRIAL_COLUMNS[3:11]


@dataclass
class ExperimentConfig:
    base: dict
    param: str
    values: List[float]
    trials: int = 30
    seed_base: int = 0
    solve: SolveConfig = field(default_factory=SolveConfig)

    @classmethod
    def from_dict(cls, config: dict) -> "ExperimentConfig":
        for key in ("spec", "graph", "noise", "sweep"):
            if key not in config:
                raise ConfigError(f"experiment config is missing '{key}'")
        sweep = config["sweep"]
        if not isinstance(sweep, dict) or set(sweep) != {"param", "values"}:
            raise ConfigError("'sweep' must be an object with exactly 'param' and 'values'")
        if sweep["param"] not in SWEEP_PARAMS:
            raise ConfigError(f"unknown sweep parameter {sweep['param']!r}; expected one of {SWEEP_PARAMS}")
        if not isinstance(sweep["values"], list) or not sweep["values"]:
            raise ConfigError("'sweep.values' must be a non-empty list")
        trials = int(config.get("trials", 30))
        if trials < 1:
            raise ConfigError("'trials' must be >= 1")
        exp = cls(
            {k: config[k] for k in ("spec", "graph", "noise")},
            sweep["param"],
            list(sweep["values"]),
            trials,
            int(config.get("seed_base", 0)),
            _solve_config(config),
        )
        for value in exp.values:
            exp.point(value)
        return exp

    def point(self, value):
        """Spec, graph and noise configs with the sweep parameter set to ``value``."""
        cfg = copy.deepcopy(self.base)
        section, name = self.param.split(".")
        if self.param == "noise.outlier_fraction":
            cfg["noise"]["q"] = 1.0 - float(value)
        else:
            cfg[section][name] = value
        return (
            _section(cfg, "spec", GroupSpec.from_dict),
            _section(cfg, "graph", GraphConfig.from_dict),
            _section(cfg, "noise", NoiseConfig.from_dict),
        )


def run_trial(exp: ExperimentConfig, value, trial: int) -> dict:
    seed = exp.seed_base + trial
    row = {"sweep_value": value, "trial": trial, "seed": seed, "failed": 0, "error": ""}
    try:
        spec, graph, noise = exp.point(value)
        instance = gen_instance(spec, graph, noise, seed)
        start = time.perf_counter()
        G0 = spectral_estimator(instance)
        mid = time.perf_counter()
        G, trace = gpm(instance, G0, exp.solve)
        end = time.perf_counter()
        truth = instance.ground_truth
        row.update(
            eps_spectral=estimation_error(spec, G0, truth)[0],
            eps_gpm=estimation_error(spec, G, truth)[0],
            recovery_spectral=recovery_rate(spec, G0, truth),
            recovery_gpm=recovery_rate(spec, G, truth),
            iterations=trace.iterations,
            time_spectral=mid - start,
            time_gpm=end - mid,
            time_total=end - start,
        )
    except (ConvergenceError, GraphGenerationError, ValueError, np.linalg.LinAlgError) as exc:
        row.update({name: float("nan") for name in MEAN_COLUMNS}, failed=1, error=str(exc))
    return row


def aggregate(rows: List[dict], values) -> List[dict]:
    out = []
    for value in values:
        group = [r for r in rows if r["sweep_value"] == value and not r["failed"]]
        agg = {"sweep_value": value, "trials": len(group)}
        for name in MEAN_COLUMNS:
            agg[name] = float(np.mean([r[name] for r in group])) if group else float("nan")
        out.append(agg)
    return out


def _fmt(x):
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return x


def write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def run_experiment(exp: ExperimentConfig, threads: int = 1):
    jobs = [(value, trial) for value in exp.values for trial in range(exp.trials)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(lambda job: run_trial(exp, *job), jobs))
    else:
        rows = [run_trial(exp, *job) for job in jobs]
    return rows, aggregate(rows, exp.values)


def cmd_experiment(args) -> int:
    exp = ExperimentConfig.from_dict(read_json(args.config))
    if args.seed is not None:
        exp.seed_base = args.seed
    if args.max_iters is not None or args.tol is not None:
        exp.solve = SolveConfig(
            args.max_iters if args.max_iters is not None else exp.solve.max_iters,
            args.tol if args.tol is not None else exp.solve.tol,
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, agg = run_experiment(exp, args.threads)
    write_rows(out / "trials.csv", TRIAL_COLUMNS, rows)
    write_rows(out / "aggregate.csv", ["sweep_value", "trials"] + MEAN_COLUMNS, agg)
    failed = sum(r["failed"] for r in rows)
    log.info("%d trials, %d failed; wrote %s", len(rows), failed, out)
    return EXIT_OK


def check_suite(samples: int, seed: int):
    """Projection optimality, contraction and rho-inequality checks; yields (name, ok)."""
    rng = np.random.default_rng(seed)
    specs = [
        GroupSpec.orthogonal(2),
        GroupSpec.orthogonal(3),
        GroupSpec.special_orthogonal(2),
        GroupSpec.special_orthogonal(3),
        GroupSpec.permutation(4),
        GroupSpec.cyclic(1),
        GroupSpec.cyclic(2),
        GroupSpec.cyclic(5),
        GroupSpec.cyclic(12),
    ]
    for spec in specs:
        if spec.kind == PERMUTATION:
            candidates = np.array([np.eye(spec.d)[list(p)] for p in permutations(range(spec.d))])
        elif spec.kind == CYCLIC:
            candidates = cyclic_element(np.arange(spec.m), spec.m)
        else:
            candidates = sample_uniform(spec, rng, size=2000)
        ok = True
        for _ in range(samples):
            X = rng.standard_normal((spec.d, spec.d))
            best = np.einsum("ij,kij->k", X, candidates).max()
            ok &= np.sum(X * project(spec, X)) >= best - 1e-9
        yield f"projection optimality {spec}", bool(ok)
        yield f"contraction {spec}", contraction_check(spec, contraction_samples(spec, samples, rng))
        n = 20
        ok = True
        for _ in range(samples):
            A = np.einsum("nji,njk->ik", sample_uniform(spec, rng, size=n), sample_uniform(spec, rng, size=n))
            ok &= projection_inequality_gap(spec, A, n, rho(spec)) <= 1e-6
        yield f"rho inequality {spec}", bool(ok)


def cmd_check(args) -> int:
    failures = 0
    for name, ok in check_suite(args.samples, args.seed if args.seed is not None else 0):
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += not ok
    return EXIT_FAILURE if failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groupsync", description="Group synchronization via spectral + GPM.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic instance")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="run GPM on an instance")
    p.add_argument("instance")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--init", choices=["spectral", "groundtruth", "file"], default="spectral")
    p.add_argument("--init-file")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--tol", type=float)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("experiment", help="run a parameter sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override seed_base")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("check", help="run projection and contraction property checks")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (OSError, ConfigError) as exc:
        print(f"groupsync: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"groupsync: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

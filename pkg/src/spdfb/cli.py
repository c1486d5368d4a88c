"""Experiment runner: ``spdfb run <config>``, ``spdfb validate <config>``, ``spdfb version``.

``run`` writes one CSV trace per seed (``seed_<seed>.csv``) and a
``summary.txt`` with one ``name=value`` metric per line into the configured
output directory. Exit status is 0 on success, 1 on configuration errors and
2 when a run aborts.
"""

from __future__ import annotations

import argparse
import logging
import math
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .engine import EngineAbort, RunConfig, RunRecord, run
from .oracle import OracleScaleError, brute_force_saddle, fixed_point_residual

logger = logging.getLogger("spdfb")


def csv_header(d: int, k: int) -> list[str]:
    return (
        ["n"]
        + [f"x_{i}" for i in range(d)]
        + [f"lambda_{j}" for j in range(k)]
        + [f"xbar_{i}" for i in range(d)]
        + [f"lambdabar_{j}" for j in range(k)]
        + ["primal_residual", "dual_residual", "constraint_gap", "dist_to_oracle"]
    )


def _fmt(value) -> str:
    value = float(value)
    return "nan" if math.isnan(value) else repr(value)


def oracle_point(config: ExperimentConfig, det):
    """Grid-search saddle point, or ``None`` when disabled or out of scale."""
    if not config.oracle.enabled:
        return None
    try:
        return brute_force_saddle(
            det,
            config.oracle.grid_resolution,
            dual_box=config.oracle.dual_box,
            primal_box=config.oracle.primal_box,
            gamma_ref=config.oracle.gamma_ref,
        )
    except OracleScaleError as exc:
        logger.info("oracle skipped: %s", exc)
        return None


def make_metrics(config: ExperimentConfig, det, reference):
    gamma_ref = config.oracle.gamma_ref

    def metrics(raw, avg):
        rep = fixed_point_residual(det, avg, gamma_ref)
        raw_rep = fixed_point_residual(det, raw, gamma_ref)
        dist = math.nan if reference is None else float(np.linalg.norm(avg.x - reference.x))
        return {
            "primal_residual": rep.primal_residual,
            "dual_residual": rep.dual_residual,
            "constraint_gap": rep.constraint_gap,
            "dist_to_oracle": dist,
            "residual": rep.total,
            "raw_residual": raw_rep.total,
        }

    return metrics


def run_seed(config: ExperimentConfig, seed: int, reference=None) -> RunRecord:
    """Run one seed of the experiment with checkpoint metrics attached."""
    stoch, det = config.build_problem()
    run_config = RunConfig(
        n_iters=config.n_iters,
        seed=seed,
        record_every=config.record_every,
        initial_point=config.initial_point(stoch.d, stoch.k),
        schedule=config.schedule,
    )
    return run(stoch, stoch.distribution, run_config, metrics=make_metrics(config, det, reference))


def write_csv(path: Path, record: RunRecord, d: int, k: int) -> None:
    lines = [",".join(csv_header(d, k))]
    for cp in record.checkpoints:
        m = cp.metrics
        row = [str(cp.n)]
        row += [_fmt(v) for v in (*cp.raw.x, *cp.raw.lam, *cp.average.x, *cp.average.lam)]
        row += [_fmt(m[key]) for key in ("primal_residual", "dual_residual", "constraint_gap", "dist_to_oracle")]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _median(values):
    values = [v for v in values if not math.isnan(v)]
    return statistics.median(values) if values else math.nan


def summarize(config: ExperimentConfig, records: dict[int, RunRecord], reference, d: int, k: int) -> list[str]:
    finals = [rec.checkpoints[-1].metrics for rec in records.values()]
    # improvement is judged against the first checkpoint after the start
    improved = sum(
        1 for rec in records.values()
        if rec.checkpoints[-1].metrics["residual"] < rec.checkpoints[1].metrics["residual"]
    )
    items = [
        ("generator", config.problem["generator"]),
        ("d", d),
        ("k", k),
        ("n_iters", config.n_iters),
        ("n_seeds", len(records)),
        ("gamma0", config.schedule.gamma0),
        ("exponent", config.schedule.exponent),
        ("offset", config.schedule.offset),
        ("median_final_avg_residual", _fmt(_median([m["residual"] for m in finals]))),
        ("max_final_avg_residual", _fmt(max(m["residual"] for m in finals))),
        ("median_final_raw_residual", _fmt(_median([m["raw_residual"] for m in finals]))),
        ("median_final_constraint_gap", _fmt(_median([m["constraint_gap"] for m in finals]))),
        ("median_final_dist_to_oracle", _fmt(_median([m["dist_to_oracle"] for m in finals]))),
        ("seeds_improved", f"{improved}/{len(records)}"),
    ]
    if reference is not None:
        items.append(("oracle_x", " ".join(_fmt(v) for v in reference.x)))
        items.append(("oracle_lambda", " ".join(_fmt(v) for v in reference.lam)))
    return [f"{name}={value}" for name, value in items]


def _seed_worker(args):
    config, seed, reference = args
    return seed, run_seed(config, seed, reference)


def execute(config: ExperimentConfig, jobs: int = 1) -> list[Path]:
    """Run every seed, write the CSV traces and the summary, return the paths.

    Files written by a failed execution are removed before the error propagates.
    """
    stoch, det = config.build_problem()
    d, k = stoch.d, stoch.k
    reference = oracle_point(config, det)
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        tasks = [(config, seed, reference) for seed in config.seeds]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_seed_worker, tasks))
        else:
            results = [_seed_worker(t) for t in tasks]
        records = {}
        for seed, record in results:
            path = out / f"seed_{seed}.csv"
            written.append(path)
            write_csv(path, record, d, k)
            records[seed] = record
        summary = out / "summary.txt"
        written.append(summary)
        with open(summary, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(summarize(config, records, reference, d, k)) + "\n")
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spdfb", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a seed sweep and write CSV traces plus a summary")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("-o", "--output", type=Path, help="override run.output")
    p_run.add_argument("-j", "--jobs", type=int, default=1, help="seeds to run in parallel")
    p_val = sub.add_parser("validate", help="check a configuration without running it")
    p_val.add_argument("config", type=Path)
    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "version":
        print(f"spdfb {__version__}")
        return 0
    try:
        config = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.command == "validate":
        stoch, _ = config.build_problem()
        print(f"ok: {config.problem['generator']} d={stoch.d} k={stoch.k} "
              f"n_iters={config.n_iters} seeds={len(config.seeds)}")
        return 0
    if args.output is not None:
        config = ExperimentConfig(**{**config.__dict__, "output": args.output})
    try:
        paths = execute(config, jobs=args.jobs)
    except EngineAbort as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 2
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Usage::

    mflaser SCENARIO [--config FILE] [--out DIR] [--seed N] [--trajectories M]
                     [--dt DT] [--t-final T] [--n-max N] [--workers W]

Every scenario writes ``summary.json`` (schema ``mfl-1``) holding the fully
resolved configuration, so ``mflaser SCENARIO --config out/summary.json``
repeats a run. Time series go to ``master.csv``, ``lorenz.csv`` or
``sse.csv``; ``verify-all`` also writes ``report.json`` and ``report.txt``.

Exit status: 0 on success, 1 if an applicable check fails, 2 for a
configuration error, 3 if a run aborts (leakage, non-finite state or
ensemble collapse).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .config import SCENARIOS, SCHEMA_VERSION, ConfigError, SimConfig, initial_density, load_config
from .hilbert import build_operators
from .errors import EnsembleCollapseError, InvalidDensityError, LeakageError, NonFiniteStateError
from .lorenz import LorenzState, drive_from_lorenz, integrate_lorenz, write_lorenz_csv
from .master import (integrate_meanfield_direct, integrate_meanfield_via_lorenz, run_summary,
                     write_master_csv)
from .sse import NoisePlan, dump_ensemble, simulate_linear_sse, simulate_meanfield_sse, write_sse_csv

log = logging.getLogger("mflaser")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mflaser", description="Mean-field laser model: master equation, "
                                "Maxwell–Bloch system and stochastic unravelings.")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--config", help="key = value text file or JSON (a previous summary.json works)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--trajectories", "-M", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-final", type=float)
    p.add_argument("--n-max", type=int)
    p.add_argument("--workers", type=int, help="threads for independent SSE chunks")
    p.add_argument("--dump-ensemble", action="store_true", help="write the final SSE ensemble as sse_final.bin")
    p.add_argument("--quiet", "-q", action="store_true")
    return p


def resolve_config(args: argparse.Namespace) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig()
    return cfg.replace(scenario=args.scenario, out=args.out, seed=args.seed, trajectories=args.trajectories,
                       dt=args.dt, t_final=args.t_final, n_max=args.n_max, workers=args.workers)


def _sse_summary(run) -> dict:
    dev = abs(run.mean_norm2 - 1)
    return dict(route=run.route, M=run.plan.M, seed=run.plan.seed, points=len(run.times),
                max_norm2_deviation=float(dev.max()), final_norm2=float(run.mean_norm2[-1]))


def run(cfg: SimConfig, dump_ensemble_file: bool = False) -> tuple[int, dict]:
    """Execute ``cfg.scenario``; returns the exit status and the summary document."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    params, space = cfg.params, cfg.space
    rho0 = initial_density(cfg.initial_state, space, params)
    summary = dict(schema=SCHEMA_VERSION, scenario=cfg.scenario, config=cfg.to_dict())
    status = EXIT_OK
    t0 = time.perf_counter()
    files = []

    if cfg.scenario in ("master-direct", "master-lorenz"):
        integrate = integrate_meanfield_direct if cfg.scenario == "master-direct" else integrate_meanfield_via_lorenz
        mrun = integrate(params, rho0, cfg.dt, cfg.t_final, space, cfg.leakage_threshold, store_every=0)
        write_master_csv(mrun, out / "master.csv")
        files.append("master.csv")
        summary["result"] = run_summary(mrun)
    elif cfg.scenario == "lorenz":
        series = integrate_lorenz(params, LorenzState.from_density(rho0, build_operators(space)), cfg.dt, cfg.t_final)
        write_lorenz_csv(series, out / "lorenz.csv")
        files.append("lorenz.csv")
        last = series.state(len(series.times) - 1)
        summary["result"] = dict(final=dict(A=[last.A.real, last.A.imag], S=[last.S.real, last.S.imag], D=last.D),
                                 V_final=float(series.lyapunov()[-1]))
    elif cfg.scenario in ("sse-linear", "sse-meanfield"):
        plan = NoisePlan(cfg.seed, cfg.trajectories, cfg.dt)
        if cfg.scenario == "sse-linear":
            series = integrate_lorenz(params, LorenzState.from_density(rho0, build_operators(space)), cfg.dt, cfg.t_final)
            srun = simulate_linear_sse(params, rho0, drive_from_lorenz(series), cfg.dt, cfg.t_final, plan, space,
                                       workers=cfg.workers)
        else:
            srun = simulate_meanfield_sse(params, rho0, cfg.dt, cfg.t_final, plan, space, workers=cfg.workers)
        write_sse_csv(srun, out / "sse.csv")
        files.append("sse.csv")
        if dump_ensemble_file:
            dump_ensemble(srun.final, out / "sse_final.bin")
            files.append("sse_final.bin")
        summary["result"] = _sse_summary(srun)
    else:
        from .verify import run_all

        report, runs = run_all(cfg, log=log.info)
        write_master_csv(runs["direct"], out / "master.csv")
        write_lorenz_csv(runs["lorenz"], out / "lorenz.csv")
        write_sse_csv(runs["sse_linear"], out / "sse.csv")
        (out / "report.json").write_text(report.to_json())
        (out / "report.txt").write_text(report.to_text() + "\n")
        files += ["master.csv", "lorenz.csv", "sse.csv", "report.json", "report.txt"]
        summary["result"] = dict(passed=report.passed, checks=len(report.checks),
                                 failed=[c.name for c in report.checks if c.passed is False])
        if not report.passed:
            status = EXIT_CHECK_FAILED

    summary["files"] = files
    summary["wall_seconds"] = time.perf_counter() - t0
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=str) + "\n")
    return status, summary


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = resolve_config(args)
        status, summary = run(cfg, args.dump_ensemble)
    except (ConfigError, InvalidDensityError) as exc:
        print(f"mflaser: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LeakageError, NonFiniteStateError, EnsembleCollapseError) as exc:
        print(f"mflaser: run aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    if not args.quiet:
        print(json.dumps(summary["result"], indent=2, default=str))
    return status


if __name__ == "__main__":
    sys.exit(main())

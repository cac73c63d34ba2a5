"""Command-line front end.

Exit codes: 0 success, 2 configuration or usage error, 3 failed verdict.
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .diagnostics import diagnostics_csv, mild_finiteness_report
from .experiments import (
    ExperimentReport,
    TestResult,
    run_haar_bench,
    run_law_uniqueness,
    run_moment_bounds,
    run_pathwise_uniqueness,
    run_prm_law_tests,
    samples_csv,
    trajectory,
)
from .nls import write_field

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 2, 3


def simulate(cfg: RunConfig, out: Path) -> ExperimentReport:
    """One trajectory: diagnostics CSV, point measure, binary snapshots, report."""
    start = time.perf_counter()
    eta, sol = trajectory(cfg, cfg.experiment.seed, 0, store_fields=True)
    snaps = out / "snapshots"
    snaps.mkdir(parents=True, exist_ok=True)
    (out / "diagnostics.csv").write_text(diagnostics_csv(sol.diagnostics))
    if eta is not None:
        (out / "eta.txt").write_text(eta.to_text())
    index = ["index,t,jump_flag"]
    for i, (t, flag, u) in enumerate(zip(sol.times, sol.flags, sol.fields)):
        with open(snaps / f"snap_{i:05d}.bin", "wb") as fh:
            write_field(fh, u, cfg.grid)
        index.append(f"{i},{float(t)!r},{int(flag)}")
    (snaps / "index.csv").write_text("\n".join(index) + "\n")
    s = cfg.solver
    fin = mild_finiteness_report(sol.times, sol.fields, cfg.grid, s.alpha, s.noise, s.layer, s.pair,
                                 stride=max(1, 50 // s.snapshot_every))
    rep = ExperimentReport("simulate", cfg.config_hash)
    rep.statistics.update(seed=cfg.experiment.seed, atoms=0 if eta is None else len(eta),
                          snapshots=len(sol.times), final_mass=sol.at_end("mass"),
                          final_energy=sol.at_end("energy"), **{f"mild_{k}": v for k, v in fin.terms.items()})
    rep.tests.append(TestResult("not_aborted", not sol.aborted,
                                detail="" if not sol.aborted else f"blow-up at t={sol.abort_time}"))
    rep.tests.append(TestResult("mild_terms_finite", fin.all_finite, detail=",".join(fin.flagged)))
    rep.runtime = time.perf_counter() - start
    return rep


COMMANDS = {
    "simulate": None,
    "prm-test": run_prm_law_tests,
    "uniqueness": run_pathwise_uniqueness,
    "law-test": run_law_uniqueness,
    "moment-test": run_moment_bounds,
    "haar-bench": run_haar_bench,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI file with [grid] [solver] [noise] [experiment]")
    common.add_argument("--seed", type=int, metavar="N", help="base seed of the trajectory family")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--ensemble", type=int, metavar="K", help="ensemble size")
    parser = argparse.ArgumentParser(prog="jumpnls", description="Stochastic NLS simulator and verification lab")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "integrate one trajectory and write diagnostics and snapshots",
        "prm-test": "statistical law tests of the point-measure sampler",
        "uniqueness": "replay, Gronwall and exit-time experiments",
        "law-test": "two-basis KS tests of solution functionals",
        "moment-test": "ensemble moment bounds with bootstrap intervals",
        "haar-bench": "Haar projection convergence table",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
        if args.seed == cfg.experiment.second_seed:
            changes["second_seed"] = args.seed + 1
    if args.ensemble is not None:
        if args.ensemble < 1:
            raise ConfigError("--ensemble must be positive")
        changes["ensemble"] = args.ensemble
    if args.out is not None:
        changes["out"] = args.out
    if not changes:
        return cfg
    cfg = cfg.with_experiment(**changes)
    # overrides are part of the provenance
    extra = "".join(f"override {k} = {v}\n" for k, v in sorted(changes.items()))
    return replace(cfg, text=cfg.text + extra)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.experiment.out) / args.command
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "simulate":
            rep = simulate(cfg, out)
        else:
            rep = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = rep.to_text()
    (out / "report.txt").write_text(text)
    if rep.samples:
        (out / "samples.csv").write_text(samples_csv(rep.samples))
    print(text, end="")
    return EXIT_OK if rep.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())

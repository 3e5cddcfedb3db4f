"""Command line entry point: ``nlkpp <command> [--scenario FILE ...]``.

Commands ``simulate``, ``lyapunov``, ``eigen`` and ``entire`` run one
experiment on each scenario; ``verify`` (alias ``verify-all``) runs every experiment listed
in each scenario, or, with no scenario, the acceptance suite.

Exit status: 0 when every check passes, 1 when a check fails (named on
stderr), 2 for unreadable scenarios or bad arguments.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from ._backend import backend_name
from .scenario import EXPERIMENTS, ScenarioError, load_scenario

OUT_ENV = "NLKPP_OUT"
DEFAULT_OUT = "nlkpp-runs"


def _out_root(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _run_one(job):
    from .runner import run_scenario

    path, experiments, out, seed = job
    scn = load_scenario(path)
    exps = experiments or scn.experiments
    results, failures = run_scenario(scn, exps, out, seed)
    return scn.name, exps, [str(f) for f in failures]


def _run_scenarios(paths, command: str, out: Path, seed, jobs: int) -> int:
    scns = []
    for p in paths:
        try:
            scns.append((p, load_scenario(p)))
        except ScenarioError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    experiments = None if command == "verify" else [command]
    if command != "verify":
        for p, scn in scns:
            if command in ("simulate", "entire") and scn.b is None:
                print(f"error: {p}: b: required by the {command} experiment", file=sys.stderr)
                return 2
            if command == "eigen" and not scn.a.is_static:
                print(f"error: {p}: a: the eigen experiment needs a time-independent a", file=sys.stderr)
                return 2
    work = [(p, experiments, out, seed) for p, _ in scns]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_one, work))
    else:
        outcomes = [_run_one(w) for w in work]
    status = 0
    for name, exps, failures in outcomes:
        for f in failures:
            print(f"FAIL {name}: {f}", file=sys.stderr)
        if failures:
            status = 1
        else:
            print(f"PASS {name} ({', '.join(exps)}) -> {out / name}")
    return status


def _run_acceptance(criteria, jobs: int, out: Path, fail_fast: bool = False) -> int:
    from .acceptance import run_all

    results = run_all(criteria, jobs=jobs, out=out, fail_fast=fail_fast)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    for r in failed:
        print(f"FAIL criterion {r.number}: {r.title}", file=sys.stderr)
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlkpp", description="Nonlocal-dispersal Fisher-KPP experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({backend_name()})")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS + ("verify",):
        p = sub.add_parser(name, aliases=["verify-all"] if name == "verify" else [],
                           help=f"run the {name} experiment" if name != "verify" else "run all checks")
        p.add_argument("--scenario", action="append", default=[], metavar="PATH",
                       help="scenario file or shipped scenario name (repeatable)")
        p.add_argument("--out", metavar="DIR", help=f"output root (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--seed", type=int, metavar="N", help="override the scenario seed")
        p.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel scenarios or criteria")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "verify":
            p.add_argument("--criteria", metavar="LIST", help="comma-separated acceptance criteria (default all)")
            p.add_argument("--fail-fast", action="store_true", help="stop at the first failing criterion")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify-all":
        args.command = "verify"
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be nonnegative", file=sys.stderr)
        return 2
    out = _out_root(args.out)
    jobs = max(1, args.jobs)
    if args.command == "verify" and not args.scenario:
        criteria = None
        if args.criteria:
            try:
                criteria = [int(c) for c in args.criteria.split(",") if c.strip()]
            except ValueError:
                print(f"error: --criteria expects integers, got {args.criteria!r}", file=sys.stderr)
                return 2
        return _run_acceptance(criteria, jobs, out, args.fail_fast)
    if not args.scenario:
        print(f"error: {args.command} needs --scenario", file=sys.stderr)
        return 2
    return _run_scenarios(args.scenario, args.command, out, args.seed, jobs)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

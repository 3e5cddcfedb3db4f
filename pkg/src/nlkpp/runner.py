"""Experiments behind the CLI subcommands and the embedded scenario assertions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .dynamics import pullback_entire_solution
from .evolution import domain_comparison, solve
from .kernel_domain import iterated_kernel_lower_bound
from .scenario import Scenario
from .spectral import (
    default_initials,
    dense_principal_eigenvalue,
    lyapunov_exponent,
    pe_lower_bounds,
    principal_eigenvalue_static,
    relation_audit,
)


def _decay_rate(times: np.ndarray, sups: np.ndarray) -> float:
    sel = times >= times[0] + 0.5 * (times[-1] - times[0])
    if np.any(sups[sel] <= 0) or sel.sum() < 2:
        return -math.inf
    return float(np.polyfit(times[sel], np.log(sups[sel]), 1)[0])


def run_simulate(scn: Scenario, out: Path, seed: int) -> dict:
    model = scn.model()
    t0, t1 = float(scn.get("simulate", "t0", 0.0)), float(scn.get("simulate", "t1", 50.0))
    u0 = scn.initial_field(seed)
    traj = solve(model, u0, t0, t1, dt=scn.get("simulate", "dt"), save_dt=scn.get("simulate", "save_dt", 1.0))
    sups = traj.sup_norms()
    bound = max(float(u0.max()), model.u_cap + 1e-6)
    summary = {
        "final_sup": float(sups[-1]),
        "final_min": float(traj.final.min()),
        "min_over_run": float(traj.values.min()),
        "nonnegative": bool(traj.values.min() >= 0),
        "bounded": bool(sups[1:].max() <= bound) if len(sups) > 1 else True,
        "decay_rate": _decay_rate(traj.times, sups),
        "u_cap": model.u_cap,
        "dt": traj.meta["step_dt"],
        "dt_max": model.dt_max,
    }
    sub = scn.get("simulate", "sub_domain")
    if sub:
        dom_sub = scn.domain.sub_box(sub["lower"], sub["upper"])
        rep = domain_comparison(model, dom_sub, u0, t0, t1)
        summary["domain_comparison"] = {
            "passed": rep.passed, "max_excess": rep.max_excess,
            "min_interior_gap": rep.min_interior_gap, "strict_interior": rep.strict_interior,
        }
    it = scn.get("simulate", "iterated")
    if it:
        summary["iterated_mu"] = iterated_kernel_lower_bound(
            model.kernel, u0, it["r0"], it["delta0"], int(it["k"]), center=it.get("center", 0.0)
        )
    stride = int(scn.get("simulate", "csv_stride", 1))
    io.write_trajectory_csv(out / "trajectory.csv", scn.domain, traj.times, traj.values, stride=stride)
    io.write_json(out / "simulate.json", summary, "simulate")
    return summary


def run_lyapunov(scn: Scenario, out: Path, seed: int) -> dict:
    model = scn.model(linear=True)
    n = int(scn.get("lyapunov", "initials", 3))
    rep = lyapunov_exponent(
        model,
        default_initials(scn.domain, n, seed),
        horizon=float(scn.get("lyapunov", "horizon", 200.0)),
        renorm_dt=float(scn.get("lyapunov", "renorm_dt", 1.0)),
        dt=scn.get("lyapunov", "dt"),
    )
    summary = {
        "estimate": rep.estimate,
        "windows": rep.windows,
        "per_initial": rep.per_initial,
        "spread": rep.spread,
        "converged": rep.converged,
    }
    if scn.get("lyapunov", "audit", True):
        window = scn.get("lyapunov", "certificate_window", [0.0, 100.0])
        audit = relation_audit(model, rep, window=tuple(window))
        summary.update(
            audit_passed=audit.passed,
            best_lower=audit.lower.value,
            best_upper=audit.upper.value if audit.upper else math.inf,
            lower_bounds={b.provenance: b.value for b in audit.lower_bounds},
            upper_bounds={b.provenance: b.value for b in audit.upper_bounds},
        )
    ends = [rep.meta["horizon"] * j / 8 for j in (5, 6, 7, 8)]
    io.write_trace_csv(out / "lyapunov_windows.csv", ends, {"estimate": rep.windows})
    io.write_json(out / "lyapunov.json", {**rep.to_dict(), **summary}, "lyapunov")
    return summary


def run_eigen(scn: Scenario, out: Path, seed: int) -> dict:
    model = scn.model(linear=True)
    rep = principal_eigenvalue_static(model)
    summary = {
        "estimate": rep.estimate,
        "residual": rep.residual,
        "iterations": rep.iterations,
        "eigenvector_min": float(rep.eigenvector.min()),
        "collatz_lower": rep.lower[0].value,
        "collatz_upper": rep.upper[0].value,
        "lower_bounds": {b.provenance: b.value for b in pe_lower_bounds(model)},
    }
    if scn.get("eigen", "dense_check", int(np.prod(scn.domain.shape)) <= 1024):
        lam, _ = dense_principal_eigenvalue(model)
        summary["dense"] = lam
        summary["dense_diff"] = abs(lam - rep.estimate)
    io.write_field_csv(out / "eigenvector.csv", scn.domain, rep.eigenvector)
    io.write_json(out / "eigen.json", {**rep.to_dict(), **summary}, "eigen")
    return summary


def run_entire(scn: Scenario, out: Path, seed: int) -> dict:
    model = scn.model()
    window = tuple(scn.get("entire", "window", [0.0, 50.0]))
    ent = pullback_entire_solution(
        model,
        window,
        tol=float(scn.get("entire", "tol", 1e-6)),
        save_dt=scn.get("entire", "save_dt", 0.1),
        lam=scn.get("entire", "lam"),
    )
    summary = {
        **ent.to_dict(),
        "sup": float(ent.values.max()),
        "min": float(ent.values.min()),
        "mean": float(ent.values.mean()),
    }
    stride = int(scn.get("entire", "csv_stride", 10))
    io.write_trajectory_csv(out / "entire.csv", scn.domain, ent.times, ent.values, stride=stride)
    io.write_json(out / "entire.json", summary, "entire")
    return summary


RUNNERS = {"simulate": run_simulate, "lyapunov": run_lyapunov, "eigen": run_eigen, "entire": run_entire}


@dataclass
class CheckFailure:
    key: str
    observed: object
    expected: dict

    def __str__(self) -> str:
        return f"{self.key}: observed {self.observed!r}, expected {self.expected}"


def _lookup(results: dict, key: str):
    node = results
    for part in key.split("."):
        if not isinstance(node, dict) or part not in node:
            raise KeyError(key)
        node = node[part]
    return node


def check_expectations(results: dict, expect: dict) -> list[CheckFailure]:
    """Evaluate ``[expect]`` entries against experiment summaries keyed by experiment name."""
    failures = []
    for key, rule in expect.items():
        if key.split(".", 1)[0] not in results:
            continue
        try:
            obs = _lookup(results, key)
        except KeyError:
            failures.append(CheckFailure(key, "<missing>", rule))
            continue
        ok = True
        if "value" in rule:
            want = rule["value"]
            if isinstance(want, bool) or isinstance(obs, bool):
                ok = bool(obs) == bool(want)
            else:
                ok = abs(float(obs) - float(want)) <= float(rule.get("tol", 1e-9))
        if "min" in rule:
            ok = ok and float(obs) >= float(rule["min"])
        if "max" in rule:
            ok = ok and float(obs) <= float(rule["max"])
        if not ok:
            failures.append(CheckFailure(key, obs, rule))
    return failures


def run_scenario(scn: Scenario, experiments: list[str], out_root: Path, seed: int | None = None) -> tuple[dict, list[CheckFailure]]:
    seed = scn.seed if seed is None else seed
    out = Path(out_root) / scn.name
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for exp in experiments:
        results[exp] = RUNNERS[exp](scn, out, seed)
    failures = check_expectations(results, scn.expect)
    io.write_json(
        out / "checks.json",
        {"scenario": scn.name, "seed": seed, "experiments": experiments,
         "failures": [str(f) for f in failures], "passed": not failures},
        "checks",
    )
    return results, failures

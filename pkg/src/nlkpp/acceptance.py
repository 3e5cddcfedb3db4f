"""The acceptance suite: thirteen numbered checks shared by ``nlkpp verify`` and the tests.

Each check returns a :class:`CriterionResult` with the measured quantities in
``detail``. Expensive objects (the quasi-periodic entire solution in
particular) are cached per process.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from . import io
from .almost_periodic import APCoefficient
from .dynamics import (
    almost_periodicity_diagnostic,
    contraction_check,
    extinction_check,
    pullback_entire_solution,
    random_positive_pairs,
    stability_check,
    uniqueness_check,
)
from .evolution import Model, check_ordering, domain_comparison, linear_propagate, solve
from .kernel_domain import Gaussian, build_domain, iterated_kernel_lower_bound, sample_kernel
from .scenario import load_scenario, shipped_scenarios
from .spectral import (
    default_initials,
    dense_principal_eigenvalue,
    lyapunov_exponent,
    pe_lower_bounds,
    principal_eigenvalue_static,
    relation_audit,
)

AGREE = 2e-2


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] criterion {self.number:2d}: {self.title} ({self.seconds:.1f} s)"


# ---------------------------------------------------------------------------
# shared setups
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def scenario(name: str):
    return load_scenario(name)


@lru_cache(maxsize=None)
def quasi_model() -> Model:
    return scenario("quasi_periodic").model()


QUASI_WINDOW = (0.0, 260.0)


@lru_cache(maxsize=None)
def quasi_u_star():
    """u* of the quasi-periodic scenario, saved at every step (shifts need the fine grid)."""
    return pullback_entire_solution(quasi_model(), QUASI_WINDOW, lam=1.3)


def torus_constant(a0: float, b: float | None = None, counts: int = 128) -> Model:
    dom = build_domain("torus", [(0.0, 2 * math.pi)], [counts])
    return Model(sample_kernel(Gaussian(1.0), dom), APCoefficient.const(a0),
                 APCoefficient.const(b) if b is not None else None)


def _timed(fn):
    def wrapper() -> CriterionResult:
        t = time.perf_counter()
        res = fn()
        res.seconds = time.perf_counter() - t
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


@_timed
def criterion_1() -> CriterionResult:
    t0 = time.perf_counter()
    rows = []
    ok = True
    for a0 in (-1.2, -0.5, 0.0, 0.5):
        m = torus_constant(a0)
        ly = lyapunov_exponent(m, horizon=100.0)
        ev = principal_eigenvalue_static(m)
        e1, e2 = abs(ly.estimate - (1 + a0)), abs(ev.estimate - (1 + a0))
        ok &= e1 <= 1e-3 and e2 <= 1e-10
        rows.append({"a0": a0, "lyapunov": ly.estimate, "eigen": ev.estimate, "lyapunov_err": e1, "eigen_err": e2})
    elapsed = time.perf_counter() - t0
    return CriterionResult(1, "constant coefficients: rates equal 1 + a0", bool(ok and elapsed < 30.0),
                           {"rows": rows, "runtime": elapsed, "budget": 30.0})


@_timed
def criterion_2() -> CriterionResult:
    lin = quasi_model().linearization()
    rep = lyapunov_exponent(lin, default_initials(lin.domain, 3, seed=0), horizon=500.0)
    return CriterionResult(2, "Lyapunov estimate independent of the initial", rep.spread <= AGREE,
                           {"per_initial": rep.per_initial, "spread": rep.spread, "windows": rep.windows})


def _audit_scenario(name: str):
    scn = scenario(name)
    lin = scn.model(linear=True)
    horizon = float(scn.get("lyapunov", "horizon", 200.0))
    ly = lyapunov_exponent(lin, default_initials(lin.domain, 3, scn.seed), horizon=min(horizon, 200.0))
    return lin, ly, relation_audit(lin, ly)


@lru_cache(maxsize=None)
def _audits():
    return {name: _audit_scenario(name) for name in shipped_scenarios()}


@_timed
def criterion_3() -> CriterionResult:
    rows, ok = {}, True
    for name, (_, ly, audit) in _audits().items():
        ok &= audit.passed
        rows[name] = {"lower": audit.lower.value, "estimate": ly.estimate,
                      "upper": audit.upper.value if audit.upper else None, "message": audit.message}
    return CriterionResult(3, "certified lower <= Lyapunov estimate <= certified upper", bool(ok), rows)


@_timed
def criterion_4() -> CriterionResult:
    rows, ok = {}, True
    for name, (lin, ly, _) in _audits().items():
        bounds = {b.provenance: b.value for b in pe_lower_bounds(lin)}
        ok &= all(v <= ly.estimate + AGREE for v in bounds.values())
        rows[name] = {"estimate": ly.estimate, **bounds}
    lin = scenario("static_cosine").model(linear=True)
    lam = principal_eigenvalue_static(lin).estimate
    bounds = {b.provenance: b.value for b in pe_lower_bounds(lin)}
    cos_ok = abs(bounds["space_mean_plus_one"] - 2.0) < 1e-12 and lam >= 2.0
    rows["static_cosine_eigen"] = {"lambda": lam, **bounds}
    return CriterionResult(4, "mean-based lower bounds below the estimate", bool(ok and cos_ok), rows)


@_timed
def criterion_5() -> CriterionResult:
    t0 = time.perf_counter()
    full = build_domain("box", [(0.0, 1.0)], [201])
    rows, vals, ok = [], [], True
    for w in (0.1, 0.2, 0.3, 0.4, 0.5):
        dom = full.sub_box([0.5 - w], [0.5 + w])
        m = Model(sample_kernel(Gaussian(1.0), dom), APCoefficient.const(0.0))
        lam = principal_eigenvalue_static(m).estimate
        dense, _ = dense_principal_eigenvalue(m)
        ok &= abs(lam - dense) <= 1e-8
        vals.append(lam)
        rows.append({"w": w, "lambda": lam, "dense": dense, "diff": abs(lam - dense)})
    ok &= all(v1 <= v2 for v1, v2 in zip(vals, vals[1:]))
    elapsed = time.perf_counter() - t0
    return CriterionResult(5, "principal eigenvalue grows with the domain", bool(ok and elapsed < 60.0),
                           {"rows": rows, "runtime": elapsed, "budget": 60.0})


@_timed
def criterion_6() -> CriterionResult:
    m = quasi_model()
    lo, hi = random_positive_pairs(m.domain, 100, seed=6, delta=0.0, M=2 * m.u_cap, ordered=True)
    t1 = solve(m, lo, 0.0, 20.0, save_dt=0.5)
    t2 = solve(m, hi, 0.0, 20.0, save_dt=0.5)
    order = check_ordering(t1, t2, tol=1e-9)
    nest = scenario("nested_domain")
    nm = nest.model()
    sub = nest.get("simulate", "sub_domain")
    dc = domain_comparison(nm, nest.domain.sub_box(sub["lower"], sub["upper"]), nest.initial_field(), 0.0,
                           float(nest.get("simulate", "t1", 20.0)), tol=1e-9)
    return CriterionResult(6, "comparison principle and domain comparison", bool(order.passed and dc.passed),
                           {"max_excess": order.max_excess, "domain_max_excess": dc.max_excess,
                            "domain_min_interior_gap": dc.min_interior_gap})


@_timed
def criterion_7() -> CriterionResult:
    m = quasi_model()
    u, v = random_positive_pairs(m.domain, 100, seed=7, delta=0.05, M=2 * m.u_cap)
    rand = contraction_check(m, u, v, tau=0.5, repetitions=40)
    const = torus_constant(0.5, 1.0)
    pair = contraction_check(const, np.full(const.domain.shape, 0.5), np.full(const.domain.shape, 1.5),
                             tau=0.5, repetitions=100, sigma=0.1)
    ok = rand.non_expansive and pair.non_expansive and (pair.decrement or 0) > 0 and pair.rho[-1] < 1e-6
    return CriterionResult(7, "part metric does not expand and contracts strictly", bool(ok),
                           {"random_max_increase": rand.max_increase, "pair_decrement": pair.decrement,
                            "pair_rho_initial": float(pair.rho[0]), "pair_rho_t50": float(pair.rho[-1])})


@_timed
def criterion_8() -> CriterionResult:
    const = pullback_entire_solution(torus_constant(0.5, 1.0), (0.0, 20.0), lam=1.5)
    quasi = quasi_u_star()
    ext_model = torus_constant(-1.2, 1.0)
    ext = extinction_check(ext_model, np.ones(ext_model.domain.shape), horizon=200.0, lam=-0.2)
    ok = const.floor > 1e-3 and quasi.floor > 1e-3 and ext.passed and abs(ext.rate + 0.2) <= 1e-2
    return CriterionResult(8, "persistence for positive rate, extinction for negative", bool(ok),
                           {"constant_floor": const.floor, "quasi_floor": quasi.floor,
                            "extinction_rate": ext.rate, "extinction_final_sup": ext.final_sup})


@_timed
def criterion_9() -> CriterionResult:
    rep = uniqueness_check(quasi_model(), window=(0.0, 50.0), tol=1e-6, shift=10.0)
    return CriterionResult(9, "pullback limit independent of cap and window", rep.passed, rep.to_dict())


@_timed
def criterion_10() -> CriterionResult:
    t0 = time.perf_counter()
    m = quasi_model()
    ustar = quasi_u_star()
    rng = np.random.default_rng(10)
    initials = 0.05 + 3 * m.u_cap * rng.random((20,) + m.domain.shape)
    rep = stability_check(m, ustar, initials, horizon=200.0, tol=1e-4)
    elapsed = time.perf_counter() - t0
    return CriterionResult(10, "random positive initials converge to u*", bool(rep.passed and elapsed < 300.0),
                           {"max_distance": max(rep.distances), "rho_monotone": rep.rho_monotone,
                            "runtime": elapsed, "budget": 300.0})


@_timed
def criterion_11() -> CriterionResult:
    rep = almost_periodicity_diagnostic(quasi_model(), quasi_u_star(), eps_list=(0.1, 0.05, 0.025))
    return CriterionResult(11, "u* recurs at translation numbers; spectrum on the frequency module", rep.passed,
                           {"errors": rep.errors, "constants": rep.constants, "taus": rep.taus,
                            "peaks": rep.module["peaks"] if rep.module else None,
                            "unexplained": rep.module["unexplained"] if rep.module else None})


def indicator_oracle(x: float, tol: float = 1e-16) -> float:
    """``sum_j (K^j 1_[-1/2, 1/2])(x) / j!`` on the line for the standard Gaussian kernel.

    ``K^j`` of an indicator is a difference of normal CDFs with variance ``j``.
    """
    total = 1.0 if abs(x) < 0.5 else (0.5 if abs(x) == 0.5 else 0.0)
    fact = 1.0
    for j in range(1, 200):
        fact *= j
        s = math.sqrt(j)
        term = (ndtr((x + 0.5) / s) - ndtr((x - 0.5) / s)) / fact
        total += term
        if term < tol:
            break
    return total


@_timed
def criterion_12() -> CriterionResult:
    scn = scenario("indicator_mass")
    it = scn.get("simulate", "iterated")
    k = scn.kernel()
    mu = iterated_kernel_lower_bound(k, scn.initial_field(), it["r0"], it["delta0"], int(it["k"]))
    reach = it["k"] * it["r0"]
    xs = np.linspace(-reach, reach, 401)
    oracle = min(indicator_oracle(float(x)) for x in xs)
    rel = abs(mu - oracle) / oracle
    return CriterionResult(12, "iterated-kernel lower bound matches quadrature", bool(mu > 0 and rel <= 1e-6),
                           {"mu": mu, "oracle": oracle, "relative_error": rel})


@_timed
def criterion_13() -> CriterionResult:
    m = torus_constant(0.5, 1.0)
    x = m.domain.axes[0]
    u0 = 1.0 + 0.5 * np.cos(x)
    T = 2.0
    errs = []
    for dt in (0.1, 0.05):
        ref = solve(m, u0, 0.0, T, dt=dt / 100, save=False).final
        errs.append(float(np.abs(solve(m, u0, 0.0, T, dt=dt, save=False).final - ref).max()))
    ratio = errs[0] / errs[1]
    q = quasi_model().linearization()
    v0 = default_initials(q.domain, 3, seed=13)[2]
    direct = linear_propagate(q, v0, 0.0, 7.0)
    split = linear_propagate(q, linear_propagate(q, v0, 0.0, 3.0), 3.0, 7.0)
    cocycle = float(np.abs(direct - split).max() / np.abs(direct).max())
    ok = abs(ratio - 16.0) <= 3.0 and cocycle <= 1e-9
    return CriterionResult(13, "fourth-order convergence and cocycle identity", bool(ok),
                           {"errors": errs, "ratio": ratio, "cocycle_rel": cocycle})


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 14)}


def run_criterion(number: int) -> CriterionResult:
    try:
        return CRITERIA[number]()
    except Exception as exc:  # a crash is a failure of that criterion, not of the suite
        return CriterionResult(number, f"raised {type(exc).__name__}: {exc}", False)


def run_all(criteria=None, jobs: int = 1, out: Path | None = None, fail_fast: bool = False) -> list[CriterionResult]:
    """Run the numbered criteria (default all); ``fail_fast`` stops a serial run at the first failure."""
    numbers = sorted(criteria or CRITERIA)
    unknown = [n for n in numbers if n not in CRITERIA]
    if unknown:
        raise ValueError(f"unknown criteria {unknown}")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_criterion, numbers))
    else:
        results = []
        for n in numbers:
            results.append(run_criterion(n))
            if fail_fast and not results[-1].passed:
                break
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        io.write_json(Path(out) / "acceptance.json",
                      {"results": [{"number": r.number, "title": r.title, "passed": r.passed,
                                    "seconds": r.seconds, "detail": r.detail} for r in results]},
                      "acceptance")
    return results

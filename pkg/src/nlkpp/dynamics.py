"""Long-time behaviour of the logistic equation.

Covers the part metric and its contraction along the flow, the pullback
construction ``u*(t) = lim_{K -> inf} u(t; t_lo - K, M)`` of the strictly
positive entire solution, and experiments on uniqueness, stability,
extinction and recurrence of ``u*``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .almost_periodic import APCoefficient, epsilon_translation_numbers, module_containment_check
from .evolution import Model, Trajectory, _rk4, solve

log = logging.getLogger(__name__)

PULLBACK_TOL = 1e-6
K_MAX = 640.0
FLOOR_TOL = 1e-8
MONOTONE_TOL = 1e-10
NONEXPANSION_TOL = 1e-9


class PullbackError(RuntimeError):
    """The depth schedule ran out before two depths agreed."""


# ---------------------------------------------------------------------------
# part metric
# ---------------------------------------------------------------------------


def part_metric(u: np.ndarray, v: np.ndarray, grid_ndim: int | None = None) -> float | np.ndarray:
    """``sup |ln(u / v)|`` over the grid; the smallest ``ln alpha`` with ``u/alpha <= v <= alpha u``.

    With ``grid_ndim`` set, leading axes are batch axes and an array is returned.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if not (np.all(u > 0) and np.all(v > 0)):
        raise ValueError("part metric needs strictly positive fields")
    d = np.abs(np.log(u) - np.log(v))
    if grid_ndim is None:
        return float(d.max())
    return d.max(axis=tuple(range(d.ndim - grid_ndim, d.ndim)))


@dataclass
class PartMetricTrace:
    times: np.ndarray
    rho: np.ndarray  # (n_times,) or (n_times, n_pairs)
    max_increase: float
    non_expansive: bool
    decrement: float | None  # smallest per-tau drop while rho >= sigma
    sigma: float
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "rho": np.asarray(self.rho).tolist(),
            "max_increase": self.max_increase,
            "non_expansive": self.non_expansive,
            "decrement": self.decrement,
            "sigma": self.sigma,
            **self.meta,
        }


def contraction_check(
    model: Model,
    u0: np.ndarray,
    v0: np.ndarray,
    tau: float = 0.5,
    repetitions: int = 100,
    sigma: float = 0.1,
    dt: float | None = None,
    tol: float = NONEXPANSION_TOL,
) -> PartMetricTrace:
    """Evolve ``u0`` and ``v0`` together and record their part metric every ``tau``.

    Batches of pairs are accepted (leading axis). ``decrement`` is the smallest
    drop over one ``tau`` among steps that start with ``rho >= sigma``; it is
    ``None`` if no step qualifies.
    """
    g = model.domain.dim
    u0 = np.asarray(u0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    single = u0.ndim == g
    if single:
        u0, v0 = u0[None], v0[None]
    n = u0.shape[0]
    traj = solve(model, np.concatenate([u0, v0]), 0.0, tau * repetitions, dt=dt, save_dt=tau)
    rho = part_metric(traj.values[:, :n], traj.values[:, n:], grid_ndim=g)
    inc = np.diff(rho, axis=0)
    max_inc = float(inc.max()) if inc.size else 0.0
    qualifying = rho[:-1] >= sigma
    dec = float((-inc)[qualifying].min()) if np.any(qualifying) else None
    return PartMetricTrace(
        traj.times,
        rho[:, 0] if single else rho,
        max_inc,
        max_inc <= tol,
        dec,
        sigma,
        {"tau": tau, "pairs": n},
    )


def random_positive_pairs(domain, count: int, seed: int, delta: float = 0.05, M: float = 3.0, ordered: bool = False):
    """Seeded random fields in ``[delta, M]``; with ``ordered`` the second dominates the first."""
    rng = np.random.default_rng(seed)
    shape = (count,) + domain.shape
    u = delta + (M - delta) * rng.random(shape)
    if ordered:
        v = u + (M - u) * rng.random(shape)
    else:
        v = delta + (M - delta) * rng.random(shape)
    return u, v


# ---------------------------------------------------------------------------
# pullback
# ---------------------------------------------------------------------------


@dataclass
class EntireSolution:
    window: tuple[float, float]
    trajectory: Trajectory
    depths: list[float]
    gap: float
    floor: float
    cap: float
    monotone: bool | None
    monotone_violation: float
    status: str
    start: float | None = None

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times

    @property
    def values(self) -> np.ndarray:
        return self.trajectory.values

    def at(self, t: float) -> np.ndarray:
        return self.trajectory.at(t)

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "depths": self.depths,
            "gap": self.gap,
            "floor": self.floor,
            "cap": self.cap,
            "monotone": self.monotone,
            "monotone_violation": self.monotone_violation,
            "status": self.status,
        }


def default_cap(model: Model) -> float:
    """``2 u_cap``, or 1 when the cap vanishes (every positive level is then a supersolution)."""
    uc = model.u_cap
    return 2.0 * uc if uc > 0 else 1.0


def _classify(floor: float, lam: float | None) -> str:
    if lam is not None and abs(lam) <= 0.05:
        return "indeterminate"
    if floor > FLOOR_TOL:
        return "positive" if lam is None or lam > 0 else "inconsistent"
    if lam is not None and lam > 0.05:
        return "inconsistent"
    return "extinct"


def pullback_entire_solution(
    model: Model,
    window: tuple[float, float],
    tol: float = PULLBACK_TOL,
    M: float | None = None,
    start: float | np.ndarray | None = None,
    K0: float | None = None,
    K_max: float = K_MAX,
    dt: float | None = None,
    save_dt: float | None = None,
    lam: float | None = None,
) -> EntireSolution:
    """Entire solution on ``window`` as a limit of solutions started deeper and deeper in the past.

    Runs start at ``t_lo - K`` from ``start`` (default the constant cap
    ``M = 2 u_cap``) for ``K = K0, 2 K0, ...`` with
    ``K0 = max(20, t_hi - t_lo)``, until two consecutive depths agree within
    ``tol`` in sup norm over the window. From a start above ``u_cap`` the runs
    decrease in ``K``; that ordering is verified. ``lam`` (the growth rate of
    the linearization at 0) only feeds the status label.
    """
    t_lo, t_hi = map(float, window)
    if t_hi <= t_lo:
        raise ValueError("empty window")
    if M is None:
        M = default_cap(model)
    if start is None:
        start = M
    start_field = np.broadcast_to(np.asarray(start, dtype=float), model.domain.shape).copy()
    from_above = bool(start_field.min() > model.u_cap)
    if dt is None:
        dt = model.default_dt()
    if save_dt is None:
        save_dt = dt
    if K0 is None:
        K0 = max(20.0, t_hi - t_lo)
    # keep every start on the window's time grid
    K0 = save_dt * math.ceil(K0 / save_dt - 1e-9)

    def run(K):
        pre = solve(model, start_field, t_lo - K, t_lo, dt=dt, save=False).final
        return solve(model, pre, t_lo, t_hi, dt=dt, save_dt=save_dt)

    depths = [K0]
    prev = run(K0)
    worst = 0.0
    K = K0
    while True:
        K *= 2
        if K > K_max:
            raise PullbackError(f"no convergence with depths up to {depths[-1]:g} (gap {gap:.3g})")
        cur = run(K)
        depths.append(K)
        diff = cur.values - prev.values
        gap = float(np.abs(diff).max())
        if from_above:
            worst = max(worst, float(diff.max()))
        prev = cur
        if gap < tol:
            break
    floor = float(cur.values.min())
    monotone = (worst <= MONOTONE_TOL) if from_above else None
    status = _classify(floor, lam)
    if status == "inconsistent":
        log.warning("pullback floor %.3g inconsistent with growth rate %s", floor, lam)
    return EntireSolution((t_lo, t_hi), cur, depths, gap, floor, float(start_field.max()), monotone, worst, status)


# ---------------------------------------------------------------------------
# uniqueness and stability
# ---------------------------------------------------------------------------


@dataclass
class UniquenessReport:
    passed: bool
    cap_gap: float
    sub_gap: float
    shift_gap: float
    tol: float
    caps: tuple[float, float]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def uniqueness_check(
    model: Model,
    window: tuple[float, float] = (0.0, 50.0),
    tol: float = PULLBACK_TOL,
    shift: float = 10.0,
    sub_level: float = 0.05,
    dt: float | None = None,
) -> UniquenessReport:
    """Build ``u*`` from caps ``2 u_cap`` and ``4 u_cap``, from a small positive start,
    and on a window shifted by ``shift``; all must coincide where they overlap."""
    dt = dt or model.default_dt()
    save_dt = 0.1 if abs(round(shift / 0.1) * 0.1 - shift) < 1e-12 else dt
    uc = model.u_cap
    m1, m2 = (2 * uc, 4 * uc) if uc > 0 else (1.0, 2.0)
    e1 = pullback_entire_solution(model, window, tol / 10, M=m1, dt=dt, save_dt=save_dt)
    e2 = pullback_entire_solution(model, window, tol / 10, M=m2, dt=dt, save_dt=save_dt)
    e3 = pullback_entire_solution(model, window, tol / 10, start=sub_level, dt=dt, save_dt=save_dt, K0=e1.depths[0] * 2)
    shifted = (window[0] + shift, window[1] + shift)
    e4 = pullback_entire_solution(model, shifted, tol / 10, M=m1, dt=dt, save_dt=save_dt)
    cap_gap = float(np.abs(e1.values - e2.values).max())
    sub_gap = float(np.abs(e1.values - e3.values).max())
    k = int(round(shift / save_dt))
    shift_gap = float(np.abs(e1.values[k:] - e4.values[: len(e1.times) - k]).max())
    ok = max(cap_gap, sub_gap, shift_gap) < tol
    return UniquenessReport(ok, cap_gap, sub_gap, shift_gap, tol, (m1, m2))


@dataclass
class StabilityReport:
    passed: bool
    distances: list[float]
    failing: list[int]
    rho_monotone: bool
    max_rho_increase: float
    horizon: float
    tol: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def stability_check(
    model: Model,
    u_star: EntireSolution,
    initials: np.ndarray,
    horizon: float = 200.0,
    tol: float = 1e-4,
) -> StabilityReport:
    """Run every initial from the start of ``u_star``'s window and compare at ``t0 + horizon``."""
    t0 = u_star.window[0]
    if t0 + horizon > u_star.window[1] + 1e-9:
        raise ValueError("u_star window does not reach the horizon")
    initials = np.asarray(initials, dtype=float)
    if initials.ndim == model.domain.dim:
        initials = initials[None]
    if not np.all(initials > 0):
        raise ValueError("initials must be strictly positive")
    save_dt = u_star.trajectory.dt
    dt = u_star.trajectory.meta.get("step_dt")
    traj = solve(model, initials, t0, t0 + horizon, dt=dt, save_dt=save_dt)
    ref = u_star.values[: len(traj.times)]
    if not np.allclose(traj.times, u_star.times[: len(traj.times)]):
        raise ValueError("time grids differ")
    g = model.domain.dim
    dist = np.abs(traj.values[-1] - ref[-1]).max(axis=tuple(range(1, 1 + g)))
    rho = part_metric(traj.values, ref[:, None], grid_ndim=g)
    max_inc = float(np.diff(rho, axis=0).max())
    failing = [int(i) for i in np.flatnonzero(dist >= tol)]
    return StabilityReport(not failing, dist.tolist(), failing, max_inc <= NONEXPANSION_TOL, max_inc, horizon, tol)


# ---------------------------------------------------------------------------
# extinction
# ---------------------------------------------------------------------------


@dataclass
class ExtinctionReport:
    passed: bool
    final_sup: float
    rate: float
    lam: float | None
    tol: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def extinction_check(
    model: Model,
    u0: np.ndarray,
    horizon: float = 200.0,
    lam: float | None = None,
    tol: float = 1e-6,
    rate_tol: float = 2e-2,
    dt: float | None = None,
) -> ExtinctionReport:
    """Sup norm at the horizon and the slope of ``ln ||u(t)||`` over its second half."""
    traj = solve(model, u0, 0.0, horizon, dt=dt, save_dt=1.0)
    sup = traj.sup_norms()
    final = float(sup[-1])
    second = traj.times >= horizon / 2
    if np.all(sup[second] > 0):
        rate = float(np.polyfit(traj.times[second], np.log(sup[second]), 1)[0])
    else:
        rate = -math.inf
    ok = final < tol and (lam is None or rate <= lam + rate_tol)
    return ExtinctionReport(ok, final, rate, lam, tol)


# ---------------------------------------------------------------------------
# scalar pullback
# ---------------------------------------------------------------------------


@dataclass
class ScalarEntire:
    times: np.ndarray
    values: np.ndarray
    other: np.ndarray
    gap: float
    passed: bool


def ode_pullback(
    f: Callable[[float, float], float],
    g: Callable[[float], float] | float = 0.0,
    times: Sequence[float] | None = None,
    depth: float = 200.0,
    starts: tuple[float, float] = (0.01, 10.0),
    tol: float = 1e-8,
    rtol: float = 1e-12,
    atol: float = 1e-14,
) -> ScalarEntire:
    """Entire solution of ``u' = g(t) + u f(t, u)`` by pulling back two positive starts.

    Both runs begin at ``times[0] - depth``; agreement within ``tol`` at every
    sample is the uniqueness witness.
    """
    gfun = g if callable(g) else (lambda t, _c=float(g): _c)
    if times is None:
        times = np.linspace(0.0, 50.0, 501)
    times = np.asarray(times, dtype=float)
    t_start = times[0] - depth

    def rhs(t, y):
        return [gfun(t) + y[0] * f(t, y[0])]

    runs = []
    for u0 in starts:
        sol = solve_ivp(rhs, (t_start, times[-1]), [u0], method="DOP853", t_eval=times, rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(sol.message)
        runs.append(sol.y[0])
    gap = float(np.abs(runs[0] - runs[1]).max())
    return ScalarEntire(times, runs[1], runs[0], gap, gap < tol)


# ---------------------------------------------------------------------------
# recurrence of u*
# ---------------------------------------------------------------------------


@dataclass
class RecurrenceReport:
    eps: list[float]
    errors: list[float]
    constants: list[float]
    taus: list[list[float]]
    monotone: bool
    module: dict | None
    passed: bool
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def probe_indices(domain, count: int = 4) -> list[tuple[int, ...]]:
    """Grid points spread evenly along the diagonal of the grid."""
    return [tuple(int(round((k + 0.5) * (n - 1) / count)) for n in domain.shape) for k in range(count)]


def probe_trace(model: Model, u: np.ndarray, s: float, t: float, dt: float, every: int, probes) -> np.ndarray:
    """Values at ``probes`` every ``every`` steps along a run from ``(s, u)``, start included."""
    n = int(round((t - s) / dt))
    idx = tuple(np.array(i) for i in zip(*probes))
    out = [u[idx]]
    rhs = model.rhs
    for k in range(1, n + 1):
        u = _rk4(rhs, s + (k - 1) * dt, u, dt)
        if k % every == 0:
            out.append(u[idx])
    return np.array(out)


def almost_periodicity_diagnostic(
    model: Model,
    u_star: EntireSolution,
    eps_list: Sequence[float] = (0.1, 0.05, 0.025),
    min_overlap: float = 50.0,
    min_tau: float = 1.0,
    scan_step: float | None = None,
    bohr_horizon: float | None = 1000.0,
    bohr_eps: float = 1e-3,
    probes: int = 4,
) -> RecurrenceReport:
    """Shift errors of ``u*`` at eps-translation numbers of ``(a, b)``, plus a frequency check.

    For each ``eps`` the scan returns the best ``tau`` of every cluster in
    ``[min_tau, window length - min_overlap]``; the recorded error is the
    largest ``sup |u*(t + tau) - u*(t)|`` over those ``tau``. The Bohr
    spectrum is taken from probe-point traces of the continuation of ``u*``
    over ``bohr_horizon`` (skipped when ``None``).
    """
    coeffs: list[APCoefficient] = [model.a] + ([model.b] if model.b is not None else [])
    t_lo, t_hi = u_star.window
    save_dt = u_star.trajectory.dt
    step = scan_step or save_dt
    tau_hi = (t_hi - t_lo) - min_overlap
    pts = model.domain.points()
    x_points = pts[:: max(1, len(pts) // 16)]
    base = epsilon_translation_numbers(coeffs, max(eps_list), window=(0.0, tau_hi), step=step, x_points=x_points)
    errors, taus_used, notes = [], [], []
    vals = u_star.values
    for eps in eps_list:
        rep = base.with_eps(eps).representatives()
        rep = rep[rep >= min_tau]
        taus_used.append(rep.tolist())
        if rep.size == 0:
            notes.append(f"no translation number for eps={eps} in window")
            errors.append(math.nan)
            continue
        worst = 0.0
        for tau in rep:
            k = int(round(tau / save_dt))
            worst = max(worst, float(np.abs(vals[k:] - vals[: len(vals) - k]).max()))
        errors.append(worst)
    finite = [e for e in errors if not math.isnan(e)]
    monotone = len(finite) == len(errors) and all(e2 <= e1 for e1, e2 in zip(errors, errors[1:]))
    consts = [e / eps if not math.isnan(e) else math.nan for e, eps in zip(errors, eps_list)]
    module = None
    if bohr_horizon:
        freqs = sorted({w for c in coeffs for w in c.frequencies})
        dt = u_star.trajectory.meta.get("step_dt", save_dt)
        every = max(1, int(round(0.05 / dt)))
        pidx = probe_indices(model.domain, probes)
        traces = probe_trace(model, u_star.values[-1].copy(), t_hi, t_hi + bohr_horizon, dt, every, pidx)
        module = module_containment_check(traces.T, dt * every, freqs, eps=bohr_eps).to_dict()
        module["probes"] = [list(p) for p in pidx]
    passed = monotone and (module is None or module["passed"])
    return RecurrenceReport(list(eps_list), errors, consts, taus_used, monotone, module, passed, notes)

"""Time integration of the nonlinear equation and of its linearization.

The semi-discrete system on a grid is

    u' = K u + u f(t, x, u),      f = a(t, x) - b(t, x) u,

(linear when ``b`` is absent) and is advanced with the classical four-stage
Runge-Kutta scheme under the step bound ``dt <= 0.5 / (1 + sup|a| + b_max u_cap)``.
Fields may carry leading batch axes; all initials in a batch share the
same time grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .almost_periodic import APCoefficient
from .kernel_domain import Domain, Kernel, apply_dispersal, restrict, sample_kernel

DEFAULT_DT = 0.01
DEFAULT_TOL = 1e-9


class EvolutionError(RuntimeError):
    """Step-size violations and non-finite states."""


# ---------------------------------------------------------------------------
# reaction and model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Reaction:
    """Logistic reaction ``f(t, x, u) = a(t, x) - b(t, x) u``."""

    a: APCoefficient
    b: APCoefficient

    def __post_init__(self):
        if not self.b_min > 0:
            raise ValueError(f"inf b must be > 0 (got lower bound {self.b_min:g})")

    @property
    def b_min(self) -> float:
        return self.b.inf_bound()

    @property
    def b_max(self) -> float:
        return self.b.sup_bound()

    @property
    def u_cap(self) -> float:
        """Level above which ``f + 1 < 0`` at every (t, x).

        Computed from the trigonometric-polynomial bounds
        ``(1 + sup a) / inf b``, which dominate ``(1 + a) / b`` everywhere.
        """
        top = 1.0 + self.a.sup_bound()
        return max(top / self.b_min, 0.0)

    def f(self, t, u, *coords):
        return self.a.evaluate(t, *coords) - self.b.evaluate(t, *coords) * u

    def df_du(self, t, *coords):
        return -self.b.evaluate(t, *coords)

    def check_h2(self, domain: Domain, times=None, margin: float = 1e-6) -> bool:
        """``f(t, x, u) + 1 < 0`` just above ``u_cap`` on sampled (t, x)."""
        if times is None:
            times = np.linspace(0.0, 100.0, 2001)
        ga, gb = self.a.on_grid(domain), self.b.on_grid(domain)
        u = self.u_cap + margin
        return all(bool(np.all(ga(t) - gb(t) * u + 1.0 < 0.0)) for t in times)

    def to_dict(self) -> dict:
        return {"a": self.a.to_dict(), "b": self.b.to_dict(), "u_cap": self.u_cap}


class Model:
    """Right-hand side of the semi-discrete equation on one grid."""

    def __init__(self, kernel: Kernel, a: APCoefficient, b: APCoefficient | None = None, method: str = "auto"):
        self.kernel = kernel
        self.domain = kernel.domain
        self.a = a
        self.b = b
        self.method = method
        self.reaction = Reaction(a, b) if b is not None else None
        self._ga = a.on_grid(self.domain)
        self._gb = b.on_grid(self.domain) if b is not None else None

    @property
    def linear(self) -> bool:
        return self.b is None

    @property
    def u_cap(self) -> float:
        return self.reaction.u_cap if self.reaction else math.inf

    @property
    def dt_max(self) -> float:
        denom = 1.0 + self.a.sup_abs_bound()
        if self.reaction is not None:
            denom += self.reaction.b_max * self.reaction.u_cap
        return 0.5 / denom

    def default_dt(self) -> float:
        return min(self.dt_max, DEFAULT_DT)

    def linearization(self) -> "Model":
        return Model(self.kernel, self.a, None, self.method)

    def on_domain(self, domain: Domain) -> "Model":
        """Same coefficients and kernel family on another grid."""
        k = sample_kernel(self.kernel.family, domain, self.kernel.threshold)
        return Model(k, self.a, self.b, self.method)

    def dispersal(self, u: np.ndarray) -> np.ndarray:
        return apply_dispersal(self.kernel, u, self.method, check=False)

    def a_grid(self, t: float) -> np.ndarray:
        return self._ga(t)

    def b_grid(self, t: float) -> np.ndarray:
        return self._gb(t)

    def f_grid(self, t: float, u: np.ndarray) -> np.ndarray:
        if self._gb is None:
            return np.broadcast_to(self._ga(t), np.shape(u))
        return self._ga(t) - self._gb(t) * u

    def rhs(self, t: float, u: np.ndarray) -> np.ndarray:
        if self._gb is None:
            return self.dispersal(u) + self._ga(t) * u
        return self.dispersal(u) + u * (self._ga(t) - self._gb(t) * u)

    def describe(self) -> dict:
        return {
            "domain": self.domain.to_dict(),
            "kernel": self.kernel.to_dict(),
            "a": self.a.to_dict(),
            "b": self.b.to_dict() if self.b is not None else None,
            "dt_max": self.dt_max,
        }


def is_nonnegative(u: np.ndarray) -> bool:
    return bool(np.all(np.asarray(u) >= 0.0))


def is_strictly_positive(u: np.ndarray) -> bool:
    return bool(np.min(u) > 0.0)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray  # (n_times, *batch, *grid)
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1:
            steps = np.diff(self.times)
            if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
                raise ValueError("trajectory times must be strictly increasing and uniform")

    def __len__(self) -> int:
        return self.times.size

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} is not a sample of the trajectory")
        return i

    def at(self, t: float) -> np.ndarray:
        return self.values[self.index_of(t)]

    def window(self, t_lo: float, t_hi: float) -> "Trajectory":
        sel = (self.times >= t_lo - 1e-9) & (self.times <= t_hi + 1e-9)
        return Trajectory(self.times[sel], self.values[sel], self.dt, dict(self.meta))

    def sup_norms(self) -> np.ndarray:
        axes = tuple(range(1, self.values.ndim))
        return np.abs(self.values).max(axis=axes)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------


def _rk4(rhs: Callable, t: float, u: np.ndarray, dt: float) -> np.ndarray:
    half = 0.5 * dt
    k1 = rhs(t, u)
    k2 = rhs(t + half, u + half * k1)
    k3 = rhs(t + half, u + half * k2)
    k4 = rhs(t + dt, u + dt * k3)
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_dt(model: Model, dt: float) -> None:
    if not dt > 0:
        raise EvolutionError("dt must be > 0")
    if dt > model.dt_max * (1 + 1e-12):
        raise EvolutionError(f"dt={dt:g} exceeds the positivity bound {model.dt_max:g}")


def step(model: Model, u: np.ndarray, t: float, dt: float) -> np.ndarray:
    """One RK4 step of the semi-discrete equation."""
    _check_dt(model, dt)
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise EvolutionError("non-finite state")
    out = _rk4(model.rhs, t, u, dt)
    if not np.all(np.isfinite(out)):
        raise EvolutionError(f"non-finite state after step at t={t:g}")
    return out


def _plan(model: Model, s: float, t: float, dt: float | None, save_dt: float | None) -> tuple[int, float, int]:
    if t < s:
        raise ValueError("need t >= s")
    if dt is None:
        dt = model.default_dt()
    span = t - s
    if span == 0:
        return 0, dt, 1
    save_every = 1 if save_dt is None else max(1, int(round(save_dt / dt)))
    n = int(math.ceil(span / dt - 1e-9))
    n = save_every * int(math.ceil(n / save_every))
    dt = span / n
    _check_dt(model, dt)
    return n, dt, save_every


def solve(
    model: Model,
    u0: np.ndarray,
    s: float,
    t: float,
    dt: float | None = None,
    save_dt: float | None = None,
    save: bool = True,
) -> Trajectory:
    """Integrate from ``(s, u0)`` to time ``t``.

    ``u0`` must be nonnegative. With ``save_dt`` only every
    ``round(save_dt / dt)``-th state is kept (``dt`` is adjusted so the grid of
    saved times is uniform and ends at ``t``). ``save=False`` keeps only the
    endpoints.
    """
    u = np.array(u0, dtype=float, copy=True)
    if u.shape[u.ndim - model.domain.dim:] != model.domain.shape:
        raise ValueError(f"initial field shape {u.shape} does not match grid {model.domain.shape}")
    if not np.all(np.isfinite(u)):
        raise EvolutionError("non-finite initial state")
    if not model.linear and np.any(u < 0):
        raise ValueError("initial field must be nonnegative")
    n, dt, save_every = _plan(model, s, t, dt, save_dt)
    times = [s]
    values = [u.copy()]
    rhs = model.rhs
    for i in range(1, n + 1):
        u = _rk4(rhs, s + (i - 1) * dt, u, dt)
        if i % save_every == 0 or i == n:
            if not np.all(np.isfinite(u)):
                raise EvolutionError(f"non-finite state at t={s + i * dt:g}")
            if save or i == n:
                times.append(s + i * dt)
                values.append(u.copy())
    if not save and len(times) == 2:
        out_dt = times[1] - times[0]
    else:
        out_dt = dt * save_every
    return Trajectory(np.array(times), np.array(values), out_dt, {"step_dt": dt, "model": "linear" if model.linear else "logistic"})


def linear_propagate(model: Model, u0: np.ndarray, s: float, t: float, dt: float | None = None) -> np.ndarray:
    """The linear solution operator ``Psi(t, s; a, D)`` applied to ``u0``."""
    lin = model if model.linear else model.linearization()
    if t == s:
        return np.array(u0, dtype=float, copy=True)
    return solve(lin, u0, s, t, dt=dt, save=False).final


# ---------------------------------------------------------------------------
# super/sub-solutions and ordering
# ---------------------------------------------------------------------------


def time_derivative(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Centered differences inside, second-order one-sided at both ends."""
    return np.gradient(values, times, axis=0, edge_order=2)


@dataclass
class SuperSubReport:
    is_super: bool
    is_sub: bool
    min_residual: float
    max_residual: float
    tol: float

    @property
    def label(self) -> str:
        if self.is_super and self.is_sub:
            return "super+sub"
        if self.is_super:
            return "super"
        if self.is_sub:
            return "sub"
        return "neither"


def check_supersub(model: Model, phi: np.ndarray, times: np.ndarray, tol: float = DEFAULT_TOL) -> SuperSubReport:
    """Classify a sampled candidate by the sign of ``d_t phi - K phi - phi f(t, x, phi)``."""
    phi = np.asarray(phi, dtype=float)
    times = np.asarray(times, dtype=float)
    dphi = time_derivative(phi, times)
    res = np.empty_like(phi)
    for i, t in enumerate(times):
        res[i] = dphi[i] - model.dispersal(phi[i]) - phi[i] * model.f_grid(t, phi[i])
    lo, hi = float(res.min()), float(res.max())
    return SuperSubReport(lo >= -tol, hi <= tol, lo, hi, tol)


@dataclass
class OrderingReport:
    passed: bool
    max_excess: float
    first_violation: int | None
    violation_time: float | None
    tol: float


def check_ordering(lower: Trajectory, upper: Trajectory, tol: float = DEFAULT_TOL) -> OrderingReport:
    """Pointwise ``lower <= upper + tol`` at every shared time."""
    if lower.values.shape != upper.values.shape or not np.allclose(lower.times, upper.times):
        raise ValueError("trajectories must share grid and time stamps")
    axes = tuple(range(1, lower.values.ndim))
    excess = (lower.values - upper.values).max(axis=axes)
    bad = np.flatnonzero(excess > tol)
    first = int(bad[0]) if bad.size else None
    return OrderingReport(
        passed=first is None,
        max_excess=float(excess.max()),
        first_violation=first,
        violation_time=float(lower.times[first]) if first is not None else None,
        tol=tol,
    )


@dataclass
class DomainComparisonReport:
    passed: bool
    max_excess: float
    min_interior_gap: float
    strict_interior: bool
    tol: float


def domain_comparison(
    model: Model,
    sub: Domain,
    u0: np.ndarray,
    s: float,
    t: float,
    dt: float | None = None,
    tol: float = DEFAULT_TOL,
) -> DomainComparisonReport:
    """Solve on ``sub`` and on the full domain and check ``u_sub <= u_full`` on ``sub``."""
    small = model.on_domain(sub)
    dt = dt or min(model.default_dt(), small.default_dt())
    big = solve(model, u0, s, t, dt=dt)
    little = solve(small, restrict(u0, model.domain, sub), s, t, dt=dt)
    big_on_sub = restrict(big.values, model.domain, sub)
    diff = big_on_sub - little.values  # >= 0 expected
    max_excess = float(max(0.0, -diff.min()))
    inner = (slice(None),) + tuple(slice(1, -1) for _ in range(sub.dim))
    interior = diff[1:][inner[:1] + inner[1:]] if len(diff) > 1 else diff
    min_gap = float(interior.min())
    return DomainComparisonReport(max_excess <= tol, max_excess, min_gap, min_gap > 0, tol)


def trajectory_to_json_meta(model: Model, traj: Trajectory, seed: int | None = None) -> str:
    meta = {"model": model.describe(), "dt": traj.meta.get("step_dt", traj.dt), "seed": seed}
    return json.dumps(meta, indent=2)

"""Growth rates of the linear equation ``u_t = K u + a(t, x) u``.

Three kinds of numbers are produced here:

* a top Lyapunov exponent, by renormalized propagation of strictly positive
  initials;
* the principal eigenvalue of the grid operator ``K + diag(a)`` for static
  ``a``, by shifted power iteration;
* certified brackets from positive test functions ``phi`` through the ratio
  ``(L(a) phi) / phi`` with ``L(a) phi = -d_t phi + K phi + a phi``, together
  with the analytic lower bounds available from time and space means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .almost_periodic import APCoefficient, SpatialProfile, space_mean, time_mean
from .evolution import Model, _rk4, time_derivative
from .kernel_domain import Bump, Domain, Gaussian, Kernel

RENORM_DT = 1.0
AGREEMENT_TOL = 2e-2
POWER_TOL = 1e-12
POWER_MAX_ITER = 100_000


class SpectralError(RuntimeError):
    pass


@dataclass
class Bound:
    value: float
    provenance: str
    residual: float = 0.0

    def to_dict(self) -> dict:
        return {"value": self.value, "provenance": self.provenance, "residual": self.residual}


@dataclass
class SpectralReport:
    estimate: float
    windows: list[float] = field(default_factory=list)
    lower: list[Bound] = field(default_factory=list)
    upper: list[Bound] = field(default_factory=list)
    residual: float = 0.0
    converged: bool = True
    per_initial: list[float] = field(default_factory=list)
    eigenvector: np.ndarray | None = field(default=None, repr=False)
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def best_lower(self) -> Bound | None:
        return max(self.lower, key=lambda b: b.value, default=None)

    @property
    def best_upper(self) -> Bound | None:
        return min(self.upper, key=lambda b: b.value, default=None)

    @property
    def spread(self) -> float:
        """Largest disagreement between initials."""
        if len(self.per_initial) < 2:
            return 0.0
        return float(max(self.per_initial) - min(self.per_initial))

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "windows": list(self.windows),
            "per_initial": list(self.per_initial),
            "lower": [b.to_dict() for b in self.lower],
            "upper": [b.to_dict() for b in self.upper],
            "residual": self.residual,
            "converged": self.converged,
            "iterations": self.iterations,
            **self.meta,
        }


# ---------------------------------------------------------------------------
# Lyapunov exponent
# ---------------------------------------------------------------------------


def default_initials(domain: Domain, count: int = 3, seed: int = 0) -> np.ndarray:
    """Distinct strictly positive fields: a constant, a cosine bump, seeded noise."""
    rng = np.random.default_rng(seed)
    mesh = domain.mesh()
    phase = sum(2 * math.pi * (x - lo) / (hi - lo) for x, lo, hi in zip(mesh, domain.lower, domain.upper))
    out = [np.ones(domain.shape), 1.0 + 0.5 * np.cos(phase)]
    while len(out) < count:
        out.append(0.2 + rng.random(domain.shape))
    return np.array(out[:count])


def lyapunov_exponent(
    model: Model,
    initials: np.ndarray | None = None,
    horizon: float = 200.0,
    renorm_dt: float = RENORM_DT,
    dt: float | None = None,
    s: float = 0.0,
    window_tol: float = AGREEMENT_TOL,
    seed: int = 0,
) -> SpectralReport:
    """Top Lyapunov exponent of the linearization of ``model``.

    Every initial is propagated by the linear flow and renormalized to unit sup
    norm every ``renorm_dt``. The estimate is the accumulated log growth over
    the second half of ``[s, s + horizon]`` divided by its length. ``windows``
    holds the same average taken from the midpoint to 5/8, 6/8, 7/8 and 8/8
    of the horizon; ``converged`` compares the last two.
    """
    if horizon < 100:
        raise ValueError("horizon must be at least 100")
    lin = model if model.linear else model.linearization()
    if dt is None:
        dt = lin.default_dt()
    steps_per = max(1, int(round(renorm_dt / dt)))
    if steps_per < 10:
        raise ValueError("renormalization interval must span at least 10 steps")
    dt = renorm_dt / steps_per
    if dt > lin.dt_max * (1 + 1e-12):
        raise ValueError(f"dt={dt:g} exceeds {lin.dt_max:g}")
    n_ren = int(round(horizon / renorm_dt))
    if initials is None:
        initials = default_initials(lin.domain, seed=seed)
    u = np.array(initials, dtype=float)
    if u.ndim == lin.domain.dim:
        u = u[None]
    if not np.all(u.min(axis=tuple(range(1, u.ndim))) > 0):
        raise ValueError("initials must be strictly positive")
    axes = tuple(range(1, u.ndim))
    u = u / np.abs(u).max(axis=axes, keepdims=True)
    logs = np.zeros((n_ren, u.shape[0]))
    rhs = lin.rhs
    t = s
    for k in range(n_ren):
        for _ in range(steps_per):
            u = _rk4(rhs, t, u, dt)
            t += dt
        norms = np.abs(u).max(axis=axes)
        if not np.all(np.isfinite(norms)) or np.any(norms <= 0):
            raise SpectralError(f"lost positivity or finiteness at t={t:g}")
        logs[k] = np.log(norms)
        u = u / norms.reshape((-1,) + (1,) * len(axes))
    half = n_ren // 2
    cums = []
    for j in (5, 6, 7, 8):
        end = (j * n_ren) // 8
        cums.append(logs[half:end].sum(axis=0) / ((end - half) * renorm_dt))
    per_initial = cums[-1]
    windows = [float(c.mean()) for c in cums]
    estimate = float(per_initial.mean())
    converged = abs(windows[-1] - windows[-2]) < window_tol
    return SpectralReport(
        estimate=estimate,
        windows=windows,
        per_initial=[float(v) for v in per_initial],
        converged=converged,
        eigenvector=u[0],
        meta={"kind": "lyapunov", "horizon": horizon, "renorm_dt": renorm_dt, "dt": dt, "window_tol": window_tol},
    )


# ---------------------------------------------------------------------------
# static principal eigenvalue
# ---------------------------------------------------------------------------


def _static_grid(model: Model) -> np.ndarray:
    if not model.a.is_static:
        raise ValueError("principal_eigenvalue_static needs a time-independent a")
    return model.a_grid(0.0)


def principal_eigenvalue_static(
    model: Model,
    tol: float = POWER_TOL,
    max_iter: int = POWER_MAX_ITER,
) -> SpectralReport:
    """Dominant eigenpair of ``K + diag(a)`` by power iteration on ``K + a + c``.

    The shift ``c = 1 + sup|a|`` makes the iteration matrix entrywise
    nonnegative with positive diagonal. The Rayleigh quotient is taken in the
    inner product weighted by the quadrature weights, for which the box
    operator is self-adjoint. Iteration stops when two successive quotients
    differ by less than ``tol``.

    ``lower``/``upper`` carry the Collatz-Wielandt bracket
    ``min (M phi / phi) <= lambda <= max (M phi / phi)``.
    """
    a = _static_grid(model)
    c = 1.0 + float(np.abs(a).max())
    w = model.domain.weights

    def apply(v):
        return model.dispersal(v) + a * v

    v = np.ones(model.domain.shape)
    rq_old = math.inf
    for it in range(1, max_iter + 1):
        mv = apply(v) + c * v
        rq = float(np.sum(w * v * mv) / np.sum(w * v * v))
        v = mv / np.abs(mv).max()
        if abs(rq - rq_old) < tol:
            break
        rq_old = rq
    else:
        raise SpectralError(f"power iteration did not converge in {max_iter} iterations")
    lam = rq - c
    mv = apply(v)
    residual = float(np.abs(mv - lam * v).max() / np.abs(v).max())
    ratio = mv / v
    return SpectralReport(
        estimate=lam,
        lower=[Bound(float(ratio.min()), "collatz-wielandt")],
        upper=[Bound(float(ratio.max()), "collatz-wielandt")],
        residual=residual,
        converged=True,
        eigenvector=v,
        iterations=it,
        meta={"kind": "eigen", "shift": c},
    )


def dense_principal_eigenvalue(model: Model) -> tuple[float, np.ndarray]:
    """Independent dense solve: ``eigh`` of the symmetrized operator.

    With quadrature weights ``W`` the box operator satisfies ``W M = M^T W``,
    so ``W^(1/2) M W^(-1/2)`` is symmetric and shares the spectrum of ``M``.
    """
    a = _static_grid(model).ravel()
    m = model.kernel.matrix() + np.diag(a)
    sw = np.sqrt(model.domain.weights.ravel())
    sym = sw[:, None] * m / sw[None, :]
    sym = 0.5 * (sym + sym.T)
    vals, vecs = np.linalg.eigh(sym)
    phi = np.abs(vecs[:, -1]) / sw
    return float(vals[-1]), (phi / phi.max()).reshape(model.domain.shape)


# ---------------------------------------------------------------------------
# analytic lower bounds
# ---------------------------------------------------------------------------


def _radial(family, dim: int):
    return lambda r2: float(family.density(np.asarray(r2), dim))


def kernel_self_interaction(family, domain: Domain) -> float:
    """``(1/|D|) int_D int_D kappa(y - x) dy dx`` on a box, by adaptive quadrature.

    Uses ``int_D int_D kappa(y - x) = int kappa(z) prod_i (L_i - |z_i|)_+ dz``.
    """
    if domain.is_torus:
        raise ValueError("defined for bounded boxes")
    lengths = [hi - lo for lo, hi in zip(domain.lower, domain.upper)]
    dens = _radial(family, domain.dim)
    R = family.support_radius(1e-300, domain.dim) if isinstance(family, Bump) else math.inf
    if domain.dim == 1:
        L = lengths[0]
        top = min(L, R)
        val, _ = integrate.quad(lambda z: dens(z * z) * (L - z), 0.0, top, epsabs=1e-14, epsrel=1e-12)
        total = 2.0 * val
    elif isinstance(family, Gaussian):
        # separable: a product of one-dimensional integrals
        total = 1.0
        one = _radial(family, 1)
        for L in lengths:
            v, _ = integrate.quad(lambda z: one(z * z) * (L - z), 0.0, L, epsabs=1e-14, epsrel=1e-12)
            total *= 2.0 * v
    else:
        L1, L2 = lengths
        val, _ = integrate.dblquad(
            lambda z2, z1: dens(z1 * z1 + z2 * z2) * (L1 - z1) * (L2 - z2),
            0.0, min(L1, R), 0.0, lambda z1: min(L2, R),
            epsabs=1e-13, epsrel=1e-10,
        )
        total = 4.0 * val
    return total / domain.measure


def pe_lower_bounds(model: Model) -> list[Bound]:
    """Lower bounds for the principal spectral quantities from means of ``a``."""
    ahat: SpatialProfile = time_mean(model.a)
    dom = model.domain
    out = [Bound(float(ahat.on_grid(dom).max()), "sup_time_mean")]
    abar = space_mean(ahat, dom)
    symmetric = isinstance(model.kernel.family, (Gaussian, Bump))
    if model.a.is_static and symmetric:
        if dom.is_torus:
            out.append(Bound(abar + 1.0, "space_mean_plus_one"))
        else:
            out.append(Bound(abar + kernel_self_interaction(model.kernel.family, dom), "space_mean_plus_kernel"))
    return out


# ---------------------------------------------------------------------------
# test-function certificates
# ---------------------------------------------------------------------------


@dataclass
class CertificateReport:
    kind: str
    lam: float
    passed: bool
    certified: float  # min (lower) or max (upper) of L(a)phi / phi
    min_margin: float
    max_margin: float
    tol: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _l_ratio(model: Model, phi: np.ndarray, times: np.ndarray, dphi: np.ndarray | None):
    if dphi is None:
        dphi = time_derivative(phi, times) if len(times) > 1 else np.zeros_like(phi)
    lphi = np.empty_like(phi)
    for i, t in enumerate(times):
        lphi[i] = -dphi[i] + model.dispersal(phi[i]) + model.a_grid(t) * phi[i]
    return lphi


def certificate_check(
    model: Model,
    phi: np.ndarray,
    times,
    lam: float,
    kind: str,
    tol: float = 1e-9,
    dphi: np.ndarray | None = None,
) -> CertificateReport:
    """Test ``L(a) phi >= lam phi`` (lower) or ``<= lam phi`` (upper) on samples.

    ``phi`` has shape ``(len(times), *grid)``; time derivatives come from
    centred differences unless ``dphi`` is given. ``tol`` is relative to
    ``max |phi|``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    phi = np.asarray(phi, dtype=float)
    if phi.shape[0] != times.size:
        phi = np.broadcast_to(phi, (times.size,) + phi.shape).copy()
    if kind == "lower":
        grid_axes = tuple(range(1, phi.ndim))
        if np.any(phi < 0) or np.any(phi.max(axis=grid_axes) <= 0):
            raise ValueError("lower certificate needs phi >= 0 and phi(t, .) nonzero")
    elif kind == "upper":
        if not phi.min() > 0:
            raise ValueError("upper certificate needs inf phi > 0")
    else:
        raise ValueError(f"unknown certificate kind {kind!r}")
    lphi = _l_ratio(model, phi, times, dphi)
    margin = (lphi - lam * phi) / np.abs(phi).max()
    pos = phi > 0
    ratio = lphi[pos] / phi[pos]
    if kind == "lower":
        passed = bool(margin.min() >= -tol)
        certified = float(ratio.min())
    else:
        passed = bool(margin.max() <= tol)
        certified = float(ratio.max())
    return CertificateReport(kind, lam, passed, certified, float(margin.min()), float(margin.max()), tol)


def averaging_certificate(
    model: Model,
    window: tuple[float, float] = (0.0, 100.0),
    samples: int = 2001,
    static_report: SpectralReport | None = None,
) -> tuple[Bound, Bound]:
    """Bracket from ``phi = exp(A(t, x)) psi(x)``.

    ``A`` is the bounded antiderivative of ``a - a_hat`` and ``psi`` the
    principal eigenvector of ``K + a_hat``. Then
    ``L(a) phi / phi = K(e^A psi) / (e^A psi) + a_hat`` which is independent
    of ``t`` when ``A`` does not depend on ``x``.
    """
    ahat = time_mean(model.a)
    mean_model = Model(model.kernel, APCoefficient.static(ahat), None, model.method)
    if static_report is None:
        static_report = principal_eigenvalue_static(mean_model)
    psi = static_report.eigenvector
    anti = model.a.time_antiderivative().on_grid(model.domain)
    ahat_grid = ahat.on_grid(model.domain)
    if model.a.is_static:
        times = np.array([window[0]])
    else:
        times = np.linspace(window[0], window[1], samples)
    lo, hi = math.inf, -math.inf
    chunk = 256
    for start in range(0, times.size, chunk):
        tt = times[start:start + chunk]
        phi = np.array([np.exp(anti(t)) * psi for t in tt])
        ratio = model.dispersal(phi) / phi + ahat_grid
        lo = min(lo, float(ratio.min()))
        hi = max(hi, float(ratio.max()))
    res = static_report.residual
    return Bound(lo, "averaging_certificate", res), Bound(hi, "averaging_certificate", res)


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------


@dataclass
class AuditReport:
    passed: bool
    lower: Bound
    estimate: float
    upper: Bound | None
    tol: float
    lower_bounds: list[Bound]
    upper_bounds: list[Bound]
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "lower": self.lower.to_dict(),
            "estimate": self.estimate,
            "upper": self.upper.to_dict() if self.upper else None,
            "tol": self.tol,
            "lower_bounds": [b.to_dict() for b in self.lower_bounds],
            "upper_bounds": [b.to_dict() for b in self.upper_bounds],
            "message": self.message,
        }


def relation_audit(
    model: Model,
    lyapunov: SpectralReport | None = None,
    extra_lower: list[Bound] = (),
    extra_upper: list[Bound] = (),
    tol: float = AGREEMENT_TOL,
    horizon: float = 200.0,
    window: tuple[float, float] = (0.0, 100.0),
) -> AuditReport:
    """Check ``best lower <= Lyapunov estimate <= best upper``.

    Lower bounds pool the mean-based bounds and every test-function
    certificate; upper bounds pool the certificates. Each comparison is
    allowed ``tol`` plus the residual attached to the bound.
    """
    if lyapunov is None:
        lyapunov = lyapunov_exponent(model, horizon=horizon)
    lin = model if model.linear else model.linearization()
    lows = list(pe_lower_bounds(lin))
    ups: list[Bound] = []
    if lin.a.is_static:
        st = principal_eigenvalue_static(lin)
        lows += st.lower
        ups += st.upper
    else:
        lo, hi = averaging_certificate(lin, window=window)
        lows.append(lo)
        ups.append(hi)
    lows += list(extra_lower)
    ups += list(extra_upper)
    est = lyapunov.estimate
    best_lo = max(lows, key=lambda b: b.value)
    best_up = min(ups, key=lambda b: b.value) if ups else None
    bad = [b for b in lows if b.value > est + tol + b.residual]
    bad += [b for b in ups if est > b.value + tol + b.residual]
    msg = "; ".join(f"{b.provenance}={b.value:.6g} vs estimate {est:.6g}" for b in bad)
    return AuditReport(not bad, best_lo, est, best_up, tol, lows, ups, msg)


@dataclass
class MonotonicityReport:
    passed: bool
    values: list[float]
    domains: list[dict]
    tol: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def domain_monotonicity_check(
    model: Model,
    domains: list[Domain],
    tol: float = 1e-10,
    horizon: float = 200.0,
) -> MonotonicityReport:
    """Principal growth rate on each of an increasing list of domains.

    Static ``a`` uses the power iteration, time-dependent ``a`` the Lyapunov
    estimate. Passes when the sequence is nondecreasing within ``tol``.
    """
    lin = model if model.linear else model.linearization()
    vals = []
    for dom in domains:
        sub = lin.on_domain(dom)
        rep = principal_eigenvalue_static(sub) if lin.a.is_static else lyapunov_exponent(sub, horizon=horizon)
        vals.append(rep.estimate)
    ok = all(v1 <= v2 + tol for v1, v2 in zip(vals, vals[1:]))
    return MonotonicityReport(ok, vals, [d.to_dict() for d in domains], tol)

"""Almost periodic coefficients as finite trigonometric polynomials.

A coefficient has the form

    a(t, x) = c + sum_m P_m(x) cos(w_m t + phi_m),
    P_m(x)  = p_m + sum_l A_ml cos(k_ml . x + psi_ml),

so means, Bohr-Fourier coefficients and frequency modules are all available
in closed form, and numerical estimators can be checked against them.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import get_window

from . import _kernels
from .kernel_domain import Domain

log = logging.getLogger(__name__)

MAX_MODES = 8


@dataclass(frozen=True)
class SpatialMode:
    wavevector: tuple[float, ...]
    amplitude: float
    phase: float = 0.0

    def __post_init__(self):
        wv = self.wavevector
        if np.ndim(wv) == 0:
            wv = (wv,)
        object.__setattr__(self, "wavevector", tuple(float(k) for k in wv))


@dataclass(frozen=True)
class SpatialProfile:
    constant: float = 0.0
    modes: tuple[SpatialMode, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if len(self.modes) > MAX_MODES:
            raise ValueError(f"at most {MAX_MODES} spatial modes")

    def __call__(self, *coords) -> np.ndarray:
        """Evaluate at coordinates given per axis (broadcasting)."""
        out = np.full(np.broadcast(*coords).shape if coords else (), float(self.constant))
        for m in self.modes:
            arg = m.phase
            for kc, xc in zip(m.wavevector, coords):
                arg = arg + kc * np.asarray(xc, dtype=float)
            out = out + m.amplitude * np.cos(arg)
        return out

    def on_grid(self, domain: Domain) -> np.ndarray:
        vals = self(*domain.mesh())
        return np.broadcast_to(vals, domain.shape).astype(float)

    def sup_abs_bound(self) -> float:
        return abs(self.constant) + sum(abs(m.amplitude) for m in self.modes)

    def scaled(self, s: float) -> "SpatialProfile":
        return SpatialProfile(
            s * self.constant, tuple(SpatialMode(m.wavevector, s * m.amplitude, m.phase) for m in self.modes)
        )

    def plus(self, other: "SpatialProfile") -> "SpatialProfile":
        return SpatialProfile(self.constant + other.constant, self.modes + other.modes)

    @property
    def is_constant(self) -> bool:
        return all(m.amplitude == 0 or not any(m.wavevector) for m in self.modes)

    def to_dict(self) -> dict:
        return {
            "constant": self.constant,
            "modes": [
                {"wavevector": list(m.wavevector), "amplitude": m.amplitude, "phase": m.phase}
                for m in self.modes
            ],
        }


@dataclass(frozen=True)
class TemporalMode:
    frequency: float
    profile: SpatialProfile
    phase: float = 0.0

    def __post_init__(self):
        if not self.frequency >= 0:
            raise ValueError("temporal frequencies must be >= 0")
        if not isinstance(self.profile, SpatialProfile):
            object.__setattr__(self, "profile", SpatialProfile(float(self.profile)))


@dataclass(frozen=True)
class APCoefficient:
    constant: float = 0.0
    modes: tuple[TemporalMode, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if len(self.modes) > MAX_MODES:
            raise ValueError(f"at most {MAX_MODES} temporal modes")
        positive = [m.frequency for m in self.modes if m.frequency > 0]
        if len(set(positive)) != len(positive):
            raise ValueError("positive temporal frequencies must be distinct")

    # construction helpers -------------------------------------------------

    @classmethod
    def const(cls, value: float) -> "APCoefficient":
        return cls(float(value))

    @classmethod
    def static(cls, profile: SpatialProfile) -> "APCoefficient":
        """Time-independent coefficient equal to ``profile``."""
        return cls(profile.constant, (TemporalMode(0.0, SpatialProfile(0.0, profile.modes)),))

    def __add__(self, other: "APCoefficient") -> "APCoefficient":
        if np.isscalar(other):
            return APCoefficient(self.constant + float(other), self.modes)
        return APCoefficient(self.constant + other.constant, self.modes + other.modes)

    __radd__ = __add__

    # evaluation -------------------------------------------------------------

    def __call__(self, t, *coords) -> np.ndarray:
        return self.evaluate(t, *coords)

    def evaluate(self, t, *coords) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.full(np.broadcast(t, *coords).shape, float(self.constant))
        for m in self.modes:
            out = out + m.profile(*coords) * np.cos(m.frequency * t + m.phase)
        return out

    @property
    def frequencies(self) -> list[float]:
        return sorted({m.frequency for m in self.modes if m.frequency > 0})

    @property
    def is_static(self) -> bool:
        return all(m.frequency == 0 for m in self.modes)

    @property
    def is_space_independent(self) -> bool:
        return all(m.profile.is_constant for m in self.modes)

    def sup_bound(self) -> float:
        """Upper bound of ``a`` over all (t, x) by the triangle inequality."""
        return self.constant + sum(m.profile.sup_abs_bound() for m in self.modes)

    def inf_bound(self) -> float:
        return self.constant - sum(m.profile.sup_abs_bound() for m in self.modes)

    def sup_abs_bound(self) -> float:
        return max(abs(self.sup_bound()), abs(self.inf_bound()))

    def on_grid(self, domain: Domain) -> "GridCoefficient":
        return GridCoefficient.build(self, domain)

    def time_antiderivative(self) -> "APCoefficient":
        """Zero-mean antiderivative in t of the oscillating part of ``a``."""
        modes = tuple(
            TemporalMode(m.frequency, m.profile.scaled(1.0 / m.frequency), m.phase - 0.5 * math.pi)
            for m in self.modes
            if m.frequency > 0
        )
        return APCoefficient(0.0, modes)

    def to_dict(self) -> dict:
        return {
            "constant": self.constant,
            "modes": [
                {"frequency": m.frequency, "phase": m.phase, "profile": m.profile.to_dict()} for m in self.modes
            ],
        }


@dataclass
class GridCoefficient:
    """``a(t, .)`` restricted to a grid, with the spatial profiles precomputed."""

    base: np.ndarray
    omegas: np.ndarray
    phases: np.ndarray
    profiles: np.ndarray  # (modes, *grid)
    _flat: np.ndarray = field(repr=False, default=None)

    @classmethod
    def build(cls, a: APCoefficient, domain: Domain) -> "GridCoefficient":
        base = np.full(domain.shape, float(a.constant))
        om, ph, prof = [], [], []
        for m in a.modes:
            p = m.profile.on_grid(domain)
            if m.frequency == 0:
                base = base + p * math.cos(m.phase)
            else:
                om.append(m.frequency)
                ph.append(m.phase)
                prof.append(p)
        profiles = np.array(prof) if prof else np.zeros((0,) + domain.shape)
        obj = cls(base, np.array(om, dtype=float), np.array(ph, dtype=float), profiles)
        obj._flat = profiles.reshape(len(prof), int(np.prod(domain.shape)))
        return obj

    @property
    def is_static(self) -> bool:
        return self.omegas.size == 0

    def __call__(self, t: float) -> np.ndarray:
        if self.omegas.size == 0:
            return self.base
        c = np.cos(self.omegas * t + self.phases)
        return self.base + (c @ self._flat).reshape(self.base.shape)

    def time_derivative(self, t: float) -> np.ndarray:
        if self.omegas.size == 0:
            return np.zeros_like(self.base)
        s = -self.omegas * np.sin(self.omegas * t + self.phases)
        return (s @ self._flat).reshape(self.base.shape)


# ---------------------------------------------------------------------------
# means
# ---------------------------------------------------------------------------


def time_mean(a: APCoefficient) -> SpatialProfile:
    """Bohr mean in time: every mode with positive frequency averages out."""
    prof = SpatialProfile(a.constant)
    for m in a.modes:
        if m.frequency == 0:
            prof = prof.plus(m.profile.scaled(math.cos(m.phase)))
    return prof


def numerical_time_mean(a: APCoefficient, coords=(), horizon: float = 1e4, n: int | None = None) -> np.ndarray:
    """``(1/T) int_0^T a(t, x) dt`` by the trapezoid rule."""
    if n is None:
        wmax = max(a.frequencies, default=1.0)
        n = int(max(2001, 40 * horizon * wmax / (2 * math.pi)))
    t = np.linspace(0.0, horizon, n)
    coords = tuple(np.asarray(c, dtype=float) for c in coords)
    shape = np.broadcast(*coords).shape if coords else ()
    tt = t.reshape((-1,) + (1,) * len(shape))
    vals = a.evaluate(tt, *coords)
    return trapezoid(vals, t, axis=0) / horizon


def space_mean(profile: SpatialProfile, domain: Domain, method: str = "auto") -> float:
    """Spatial average of a profile over ``domain``.

    On a torus the analytic average (constant term plus zero-wavevector modes)
    is returned; ``method="quadrature"`` forces the grid average, which agrees
    with it when every wavevector is periodic on the torus.
    """
    if method == "auto":
        method = "analytic" if domain.is_torus else "quadrature"
    if method == "analytic":
        return float(
            profile.constant + sum(m.amplitude * math.cos(m.phase) for m in profile.modes if not any(m.wavevector))
        )
    if method == "quadrature":
        return float(domain.mean(profile.on_grid(domain)))
    raise ValueError(f"unknown method {method!r}")


def periodicity_defect(profile: SpatialProfile, domain: Domain) -> float:
    """Largest jump ``|P(x + L e_i) - P(x)|`` at grid points of a torus."""
    if not domain.is_torus:
        return 0.0
    mesh = domain.mesh()
    base = profile(*mesh)
    worst = 0.0
    for ax, L in enumerate(domain.period):
        shifted = list(mesh)
        shifted[ax] = shifted[ax] + L
        worst = max(worst, float(np.max(np.abs(profile(*shifted) - base))))
    return worst


def common_near_period(wavenumbers: Sequence[float], lo: float, hi: float, step: float = 1e-3) -> tuple[float, float]:
    """Length ``L`` in ``[lo, hi]`` minimising ``max_k |exp(i k L) - 1|``.

    Used to pick a torus period for spatially quasi-periodic coefficients.
    Returns ``(L, defect)``.
    """
    L = np.arange(lo, hi + step, step)
    k = np.asarray([w for w in wavenumbers if w != 0], dtype=float)
    if k.size == 0:
        return float(lo), 0.0
    defect = np.abs(2 * np.sin(0.5 * np.outer(L, k))).max(axis=1)
    i = int(np.argmin(defect))
    return float(L[i]), float(defect[i])


# ---------------------------------------------------------------------------
# Bohr-Fourier coefficients
# ---------------------------------------------------------------------------


def bohr_fourier_coeff(trace, lam: float, dt: float | None = None, times=None, window: str = "none",
                       min_horizon: float = 1e3, min_samples_per_period: int = 16) -> complex:
    """Normalized Bohr-Fourier coefficient ``(1/T) int_0^T f(t) exp(-i lam t) dt``.

    ``trace`` is sampled uniformly (spacing ``dt`` or explicit ``times``); the
    last axis is time if ``trace`` is multi-dimensional. Any other
    ``window`` than ``"none"`` (a scipy window name such as ``"hann"`` or
    ``"blackmanharris"``) tapers the integral; the weights are normalized, so
    the same limit is estimated with much less leakage from neighbouring
    frequencies.
    """
    trace = np.asarray(trace)
    n = trace.shape[-1]
    if times is None:
        if dt is None:
            raise ValueError("give dt or times")
        times = dt * np.arange(n)
    times = np.asarray(times, dtype=float)
    dt = float(times[1] - times[0])
    T = float(times[-1] - times[0])
    if T < min_horizon * (1 - 1e-12):
        raise ValueError(f"horizon {T:g} shorter than {min_horizon:g}")
    if lam != 0 and dt > 2 * math.pi / (abs(lam) * min_samples_per_period):
        raise ValueError(f"frequency {lam:g} is undersampled by dt={dt:g}")
    w = _window_weights(n, window)
    phase = np.exp(-1j * lam * (times - times[0]))
    # trapezoid: half weight at both ends
    w = w.copy()
    w[0] *= 0.5
    w[-1] *= 0.5
    return np.sum(trace * phase * w, axis=-1) / np.sum(w)


def _window_weights(n: int, window: str) -> np.ndarray:
    if window == "none":
        return np.ones(n)
    return np.array(get_window(window, n, fftbins=False), dtype=float)


def bohr_spectrum(trace, freqs, dt: float, window: str = "hann") -> np.ndarray:
    """Coefficients at many frequencies at once (same estimator)."""
    trace = np.asarray(trace, dtype=float)
    n = trace.shape[-1]
    t = dt * np.arange(n)
    w = _window_weights(n, window)
    w[0] *= 0.5
    w[-1] *= 0.5
    freqs = np.asarray(freqs, dtype=float)
    flat = trace.reshape(-1, n).T  # (n, probes)
    out = np.empty((freqs.size, flat.shape[1]), dtype=complex)
    chunk = max(1, 2**22 // n)
    for lo in range(0, freqs.size, chunk):
        basis = w * np.exp(-1j * np.outer(freqs[lo:lo + chunk], t))
        out[lo:lo + chunk] = basis @ flat
    return (out / w.sum()).reshape((freqs.size,) + trace.shape[:-1])


def bohr_spectrum_grid(trace, dt: float, lam_max: float, oversample: int = 8, window: str = "hann"):
    """Same estimator on the uniform grid ``lam_k = 2 pi k / (oversample T)``, via a zero-padded FFT.

    Returns ``(freqs, coeffs)`` with ``freqs <= lam_max``.
    """
    trace = np.asarray(trace, dtype=float)
    n = trace.shape[-1]
    w = _window_weights(n, window)
    w[0] *= 0.5
    w[-1] *= 0.5
    size = oversample * (n - 1)
    spec = np.fft.rfft(trace * w, n=size, axis=-1) / w.sum()
    freqs = 2 * math.pi * np.arange(spec.shape[-1]) / (size * dt)
    keep = freqs < lam_max
    return freqs[keep], np.moveaxis(spec[..., keep], -1, 0)


# ---------------------------------------------------------------------------
# translation numbers
# ---------------------------------------------------------------------------


@dataclass
class TranslationReport:
    eps: float
    taus: np.ndarray
    sup_shift: np.ndarray
    passing: np.ndarray
    max_gap: float
    warning: str | None = None

    def representatives(self) -> np.ndarray:
        """Best ``tau`` (smallest shift) in each run of consecutive passing grid values."""
        idx = np.flatnonzero(self.passing)
        if idx.size == 0:
            return np.array([])
        breaks = np.flatnonzero(np.diff(idx) > 1)
        runs = np.split(idx, breaks + 1)
        return np.array([self.taus[r[np.argmin(self.sup_shift[r])]] for r in runs])

    def with_eps(self, eps: float) -> "TranslationReport":
        """Re-threshold the same scan at another ``eps`` (no warning logic)."""
        passing = self.sup_shift < eps
        passed = self.taus[passing]
        max_gap = float(np.max(np.diff(np.sort(passed)))) if passed.size > 1 else math.inf
        return TranslationReport(float(eps), self.taus, self.sup_shift, passing, max_gap)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "n_scanned": int(self.taus.size),
            "n_passing": int(self.passing.sum()),
            "representatives": self.representatives().tolist(),
            "max_gap": self.max_gap,
            "warning": self.warning,
        }


def translation_sup(a: APCoefficient, taus, t_samples, x_points=None) -> np.ndarray:
    """``sup_{t in t_samples, x in x_points} |a(t + tau, x) - a(t, x)|`` per tau.

    ``x_points`` is an ``(n, dim)`` array; it may be omitted when ``a`` is
    space independent.
    """
    taus = np.ascontiguousarray(taus, dtype=float)
    t_samples = np.asarray(t_samples, dtype=float)
    moving = [m for m in a.modes if m.frequency > 0]
    if not moving:
        return np.zeros(taus.shape)
    if x_points is None:
        if not a.is_space_independent:
            raise ValueError("x_points required for a space-dependent coefficient")
        profiles = np.array([[m.profile.constant + sum(s.amplitude * math.cos(s.phase) for s in m.profile.modes)]
                             for m in moving])
    else:
        x_points = np.atleast_2d(np.asarray(x_points, dtype=float))
        coords = [x_points[:, i] for i in range(x_points.shape[1])]
        profiles = np.array([np.broadcast_to(m.profile(*coords), (x_points.shape[0],)) for m in moving])
    om = np.array([m.frequency for m in moving])
    ph = np.array([m.phase for m in moving])
    arg = np.outer(t_samples, om) + ph
    return _kernels.translation_sup(
        np.ascontiguousarray(np.cos(arg)), np.ascontiguousarray(np.sin(arg)),
        np.ascontiguousarray(profiles, dtype=float), om, taus,
    )


def epsilon_translation_numbers(
    coeffs: APCoefficient | Iterable[APCoefficient],
    eps: float,
    window: tuple[float, float] = (0.0, 200.0),
    step: float = 0.01,
    taus=None,
    t_samples=None,
    x_points=None,
) -> TranslationReport:
    """Scan ``window`` for eps-translation numbers shared by all ``coeffs``.

    ``tau`` passes when every coefficient moves by less than ``eps`` under the
    shift, measured on the sampled ``(t, x)`` set. Explicit ``taus`` replace
    the grid scan.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if isinstance(coeffs, APCoefficient):
        coeffs = [coeffs]
    coeffs = list(coeffs)
    if taus is None:
        lo, hi = window
        taus = np.round(np.arange(lo, hi + 0.5 * step, step) / step) * step
    taus = np.asarray(taus, dtype=float)
    if t_samples is None:
        wmin = min((w for c in coeffs for w in c.frequencies), default=1.0)
        span = max(60.0, 20 * 2 * math.pi / wmin)
        t_samples = np.arange(0.0, span, 0.05)
    sup = np.zeros(taus.shape)
    for c in coeffs:
        sup = np.maximum(sup, translation_sup(c, taus, t_samples, x_points))
    passing = sup < eps
    passed = taus[passing]
    max_gap = float(np.max(np.diff(np.sort(passed)))) if passed.size > 1 else math.inf
    warning = None
    freqs = [w for c in coeffs for w in c.frequencies]
    if freqs and not passing.any():
        nominal = 2 * math.pi / min(freqs)
        if taus.max() - taus.min() > 10 * nominal:
            warning = "no translation numbers found over more than 10 nominal periods; eps may be too small"
            log.warning(warning)
    return TranslationReport(float(eps), taus, sup, passing, max_gap, warning)


# ---------------------------------------------------------------------------
# frequency modules
# ---------------------------------------------------------------------------


def integer_combinations(freqs: Sequence[float], order: int = 3, max_coeff: int = 3) -> np.ndarray:
    """Nonnegative values ``|sum k_i w_i|`` with ``sum |k_i| <= order``, ``|k_i| <= max_coeff``."""
    freqs = list(freqs)
    out = {0.0}
    rng = range(-max_coeff, max_coeff + 1)
    for ks in itertools.product(rng, repeat=len(freqs)):
        if sum(abs(k) for k in ks) <= order:
            out.add(round(abs(sum(k * w for k, w in zip(ks, freqs))), 12))
    return np.array(sorted(out))


@dataclass
class ModuleReport:
    passed: bool
    inconclusive: bool
    flagged: list[float]
    peaks: list[float]
    unexplained: list[float]
    resolution: float
    eps: float
    combinations: list[float]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _peak_frequencies(freqs: np.ndarray, mags: np.ndarray, eps: float) -> list[float]:
    """Local maxima of ``mags`` above ``eps``: one frequency per spectral line."""
    peaks = []
    for i in np.flatnonzero(mags > eps):
        left = mags[i - 1] if i > 0 else -np.inf
        right = mags[i + 1] if i + 1 < mags.size else -np.inf
        if mags[i] >= left and mags[i] >= right:
            peaks.append(float(freqs[i]))
    return peaks


def module_containment_check(
    u_trace,
    dt: float,
    f_frequencies: Sequence[float],
    eps: float = 1e-3,
    lam_max: float | None = None,
    order: int = 3,
    max_coeff: int = 3,
    min_horizon: float = 1e3,
) -> ModuleReport:
    """Check that the Bohr spectrum of ``u_trace`` lives on ``M(f)``.

    ``u_trace`` has time on the last axis (leading axes are probe points).
    The spectrum is scanned on a grid of spacing ``pi / (4 T)``; every grid
    frequency whose coefficient exceeds ``eps`` at some probe is flagged, and
    the check passes when each spectral peak among them lies within the Blackman-Harris
    main-lobe half width ``8 pi / T`` of an integer combination of
    ``f_frequencies`` of order at most ``order``.
    """
    u_trace = np.atleast_2d(np.asarray(u_trace, dtype=float))
    n = u_trace.shape[-1]
    T = dt * (n - 1)
    if T < min_horizon * (1 - 1e-12):
        raise ValueError(f"trace horizon {T:g} shorter than {min_horizon:g}")
    combos = integer_combinations(f_frequencies, order, max_coeff) if len(f_frequencies) else np.array([0.0])
    if lam_max is None:
        lam_max = float(combos.max()) + 0.5
    lam_max = min(lam_max, 2 * math.pi / (16 * dt))  # keep >= 16 samples per period
    grid, coeffs = bohr_spectrum_grid(u_trace, dt, lam_max, oversample=8, window="blackmanharris")
    mags = np.abs(coeffs).max(axis=1)
    flagged = grid[mags > eps]
    peaks = _peak_frequencies(grid, mags, eps)
    resolution = 8 * math.pi / T  # main-lobe half width of the window
    unexplained = [p for p in peaks if np.min(np.abs(combos - p)) > resolution]
    inconclusive = bool(peaks and max(peaks) > lam_max - resolution)
    return ModuleReport(
        passed=not unexplained,
        inconclusive=inconclusive,
        flagged=[float(v) for v in flagged],
        peaks=peaks,
        unexplained=unexplained,
        resolution=resolution,
        eps=eps,
        combinations=[float(c) for c in combos if c <= lam_max],
    )

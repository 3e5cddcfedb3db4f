"""Uniform grids, dispersal kernels and the nonlocal operator ``K``.

A :class:`Domain` is either a closed box (Dirichlet-type truncation: the field
vanishes outside) or a torus standing in for the whole space. On a box the
operator is the trapezoid-weighted sum

    (K u)(x_i) = sum_j w_j kappa(x_j - x_i) u_j

and on a torus it is the circular sum with uniform weight ``h**N`` against the
periodized kernel, which is renormalized to unit discrete mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.fft import next_fast_len

from . import _kernels

BOX = "box"
TORUS = "torus"
_KIND_ALIASES = {
    "box": BOX,
    "boundedbox": BOX,
    "bounded_box": BOX,
    "bounded": BOX,
    "torus": TORUS,
    "periodic": TORUS,
}
MIN_COUNT = 8
BOX_DIRECT_LIMIT = 250_000


class DiscretizationError(ValueError):
    """Raised for grids or kernels that cannot represent the problem."""


class GridMismatchError(ValueError):
    """Raised when a field does not live on the grid of the operator."""


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Domain:
    kind: str
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        kind = _KIND_ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise DiscretizationError(f"unknown domain kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "counts", tuple(int(v) for v in self.counts))
        if not (len(self.lower) == len(self.upper) == len(self.counts)):
            raise DiscretizationError("bounds and counts must have one entry per axis")
        if self.dim not in (1, 2):
            raise DiscretizationError(f"dimension must be 1 or 2, got {self.dim}")
        for lo, hi, n in zip(self.lower, self.upper, self.counts):
            if n < MIN_COUNT:
                raise DiscretizationError(f"grid count {n} < {MIN_COUNT}")
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
                raise DiscretizationError(f"degenerate bounds [{lo}, {hi}]")

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def is_torus(self) -> bool:
        return self.kind == TORUS

    @property
    def period(self) -> tuple[float, ...] | None:
        if not self.is_torus:
            return None
        return tuple(hi - lo for lo, hi in zip(self.lower, self.upper))

    @property
    def spacing(self) -> tuple[float, ...]:
        if self.is_torus:
            return tuple((hi - lo) / n for lo, hi, n in zip(self.lower, self.upper, self.counts))
        return tuple((hi - lo) / (n - 1) for lo, hi, n in zip(self.lower, self.upper, self.counts))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def measure(self) -> float:
        """Lebesgue measure |D| (one period cell on a torus)."""
        return float(np.prod([hi - lo for lo, hi in zip(self.lower, self.upper)]))

    @property
    def axes(self) -> list[np.ndarray]:
        out = []
        for lo, h, n in zip(self.lower, self.spacing, self.counts):
            out.append(lo + h * np.arange(n))
        return out

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def points(self) -> np.ndarray:
        """Grid points as an ``(n_points, dim)`` array in row-major order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights on the grid (trapezoid on a box, uniform on a torus)."""
        w = np.full(self.shape, self.cell_volume)
        if not self.is_torus:
            for ax in range(self.dim):
                idx = [slice(None)] * self.dim
                idx[ax] = 0
                w[tuple(idx)] *= 0.5
                idx[ax] = -1
                w[tuple(idx)] *= 0.5
        return w

    def integrate(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        axes = tuple(range(values.ndim - self.dim, values.ndim))
        return np.sum(values * self.weights, axis=axes)

    def mean(self, values: np.ndarray) -> np.ndarray:
        return self.integrate(values) / self.measure

    def sub_box(self, lower: Sequence[float], upper: Sequence[float]) -> "Domain":
        """Aligned box whose grid points are a subset of this grid."""
        lower = _as_tuple(lower, self.dim)
        upper = _as_tuple(upper, self.dim)
        counts = []
        for ax, (lo, hi) in enumerate(zip(lower, upper)):
            i0 = self._grid_index(ax, lo)
            i1 = self._grid_index(ax, hi)
            counts.append(i1 - i0 + 1)
        return Domain(BOX, lower, upper, tuple(counts))

    def index_slices(self, sub: "Domain") -> tuple[slice, ...]:
        """Slices selecting the grid points of ``sub`` inside this grid."""
        if sub.dim != self.dim or not np.allclose(sub.spacing, self.spacing, rtol=1e-12, atol=0):
            raise GridMismatchError("sub-domain grid is not aligned with the parent grid")
        out = []
        for ax in range(self.dim):
            i0 = self._grid_index(ax, sub.lower[ax])
            out.append(slice(i0, i0 + sub.counts[ax]))
            if i0 + sub.counts[ax] > self.counts[ax]:
                raise GridMismatchError("sub-domain extends beyond the parent grid")
        return tuple(out)

    def _grid_index(self, ax: int, value: float) -> int:
        h = self.spacing[ax]
        q = (value - self.lower[ax]) / h
        i = int(round(q))
        if abs(q - i) > 1e-9 or i < 0 or i >= self.counts[ax]:
            raise GridMismatchError(f"coordinate {value} is not a grid point on axis {ax}")
        return i

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lower": list(self.lower),
            "upper": list(self.upper),
            "counts": list(self.counts),
        }


def _as_tuple(v, dim: int) -> tuple:
    if np.ndim(v) == 0:
        return (v,) * dim
    v = tuple(v)
    if len(v) != dim:
        raise DiscretizationError(f"expected {dim} entries, got {len(v)}")
    return v


def build_domain(kind: str, bounds, counts) -> Domain:
    """Build a uniform grid.

    ``bounds`` is ``(lo, hi)`` for one axis or a sequence of such pairs;
    ``counts`` is an integer or one integer per axis.

    >>> build_domain("box", (0.0, 1.0), 101).spacing
    (0.01,)
    """
    b = np.asarray(bounds, dtype=float)
    if b.ndim == 1:
        b = b[None, :]
    if b.ndim != 2 or b.shape[1] != 2:
        raise DiscretizationError("bounds must be (lo, hi) or a list of (lo, hi) pairs")
    counts = _as_tuple(counts, b.shape[0])
    return Domain(kind, tuple(b[:, 0]), tuple(b[:, 1]), tuple(int(c) for c in counts))


# ---------------------------------------------------------------------------
# kernel families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Gaussian:
    """Normal density with standard deviation ``sigma`` in every direction."""

    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise DiscretizationError("Gaussian sigma must be > 0")

    def density(self, r2: np.ndarray, dim: int) -> np.ndarray:
        s2 = self.sigma**2
        return (2.0 * math.pi * s2) ** (-0.5 * dim) * np.exp(-0.5 * np.asarray(r2) / s2)

    def support_radius(self, threshold: float, dim: int) -> float:
        peak = (2.0 * math.pi * self.sigma**2) ** (-0.5 * dim)
        if threshold >= peak:
            return 0.0
        return self.sigma * math.sqrt(2.0 * math.log(peak / threshold))

    def to_dict(self) -> dict:
        return {"family": "gaussian", "sigma": self.sigma}


@dataclass(frozen=True)
class Bump:
    """C^1 compactly supported kernel ``c (1 - |x|^2/r^2)^2`` on ``|x| < r``."""

    radius: float = 0.5

    def __post_init__(self):
        if not self.radius > 0:
            raise DiscretizationError("bump radius must be > 0")

    def _norm(self, dim: int) -> float:
        r = self.radius
        if dim == 1:
            return 15.0 / (16.0 * r)
        if dim == 2:
            return 3.0 / (math.pi * r * r)
        raise DiscretizationError("bump kernel implemented for dim 1 and 2")

    def density(self, r2: np.ndarray, dim: int) -> np.ndarray:
        s = 1.0 - np.asarray(r2) / self.radius**2
        return np.where(s > 0.0, self._norm(dim) * s * s, 0.0)

    def support_radius(self, threshold: float, dim: int) -> float:
        return self.radius

    def to_dict(self) -> dict:
        return {"family": "bump", "radius": self.radius}


def kernel_family(name: str, **params):
    name = name.lower()
    if name in ("gaussian", "normal"):
        return Gaussian(float(params.get("sigma", 1.0)))
    if name == "bump":
        return Bump(float(params.get("radius", params.get("r", 0.5))))
    raise DiscretizationError(f"unknown kernel family {name!r}")


# ---------------------------------------------------------------------------
# sampled kernel
# ---------------------------------------------------------------------------


@dataclass
class Kernel:
    """A kernel family sampled on the offsets of one grid.

    On a box ``stencil`` is indexed by offsets ``-m..m`` per axis (centre at
    index ``m``); on a torus it is the periodized kernel indexed by offset
    modulo the grid count. ``mass`` is the discrete mass of the truncated
    stencil before any restriction to the box. ``folded_mass`` is the part of
    the mass that wrapped past half a period on a torus (the aliasing that the
    torus surrogate introduces).
    """

    family: object
    domain: Domain
    radius: float
    stencil: np.ndarray
    mass: float
    threshold: float = 1e-12
    folded_mass: float = 0.0
    renormalization: float = 1.0
    _multiplier: np.ndarray | None = field(default=None, repr=False)
    _box_multiplier: np.ndarray | None = field(default=None, repr=False)

    @property
    def half_width(self) -> tuple[int, ...]:
        if self.domain.is_torus:
            return tuple(n // 2 for n in self.domain.shape)
        return tuple((s - 1) // 2 for s in self.stencil.shape)

    @property
    def multiplier(self) -> np.ndarray:
        if self._multiplier is None:
            axes = tuple(range(self.domain.dim))
            spec = np.fft.rfftn(self.stencil, axes=axes)
            self._multiplier = np.conj(spec) * self.domain.cell_volume
        return self._multiplier

    @property
    def padded_shape(self) -> tuple[int, ...]:
        """FFT size per axis for the zero-padded linear correlation on a box."""
        return tuple(next_fast_len(n + 2 * m, real=True) for n, m in zip(self.domain.shape, self.half_width))

    @property
    def box_multiplier(self) -> np.ndarray:
        if self._box_multiplier is None:
            flipped = self.stencil[(slice(None, None, -1),) * self.domain.dim]
            self._box_multiplier = np.fft.rfftn(flipped, s=self.padded_shape, axes=tuple(range(flipped.ndim)))
        return self._box_multiplier

    def value_at(self, offset) -> float:
        """Stencil value at an integer grid offset."""
        offset = _as_tuple(offset, self.domain.dim)
        if self.domain.is_torus:
            idx = tuple(int(o) % n for o, n in zip(offset, self.domain.shape))
        else:
            idx = []
            for o, m in zip(offset, self.half_width):
                if abs(o) > m:
                    return 0.0
                idx.append(int(o) + m)
            idx = tuple(idx)
        return float(self.stencil[idx])

    def matrix(self) -> np.ndarray:
        """Dense operator ``M[i, j]`` with ``(K u)_i = sum_j M[i, j] u_j``."""
        pts_idx = np.indices(self.domain.shape).reshape(self.domain.dim, -1).T
        diff = pts_idx[None, :, :] - pts_idx[:, None, :]  # j - i
        if self.domain.is_torus:
            n = np.asarray(self.domain.shape)
            idx = tuple((diff % n)[..., a] for a in range(self.domain.dim))
            return self.stencil[idx] * self.domain.cell_volume
        m = np.asarray(self.half_width)
        inside = np.all(np.abs(diff) <= m, axis=-1)
        idx = tuple(np.clip(diff[..., a] + m[a], 0, 2 * m[a]) for a in range(self.domain.dim))
        vals = np.where(inside, self.stencil[idx], 0.0)
        return vals * self.domain.weights.ravel()[None, :]

    def to_dict(self) -> dict:
        d = dict(self.family.to_dict())
        d.update(
            radius=self.radius,
            threshold=self.threshold,
            mass=self.mass,
            folded_mass=self.folded_mass,
            renormalization=self.renormalization,
        )
        return d


def _offset_r2(half_width: Sequence[int], spacing: Sequence[float]) -> np.ndarray:
    grids = np.meshgrid(
        *[h * np.arange(-m, m + 1) for m, h in zip(half_width, spacing)], indexing="ij"
    )
    return sum(g * g for g in grids)


def sample_kernel(family, domain: Domain, threshold: float = 1e-12, fold: bool = True) -> Kernel:
    """Sample ``family`` on the grid offsets of ``domain``.

    Values below ``threshold`` are dropped; the exponential tail of admissible
    kernels makes the loss negligible. On a torus, mass beyond half a period is
    folded back onto the circle when ``fold`` is true (the exact kernel for
    periodic fields) and reported as ``folded_mass``; with ``fold=False`` such
    a kernel is rejected.
    """
    dim = domain.dim
    h = domain.spacing
    radius = family.support_radius(threshold, dim)
    full_m = [int(math.floor(radius / hi + 1e-9)) for hi in h]
    r2 = _offset_r2(full_m, h)
    vals = family.density(r2, dim)
    keep = (r2 <= radius * radius * (1 + 1e-12)) & (vals >= threshold)
    vals = np.where(keep, vals, 0.0)
    cell = domain.cell_volume
    mass = float(vals.sum() * cell)
    if vals[tuple(full_m)] <= 0.0:
        raise DiscretizationError("kernel value at offset 0 must be > 0")

    if domain.is_torus:
        period = domain.period
        if any(radius > 0.5 * p for p in period) and not fold:
            raise DiscretizationError(
                f"kernel radius {radius:.4g} exceeds half the torus period {min(period):.4g}"
            )
        n = np.asarray(domain.shape)
        offs = np.indices(vals.shape).reshape(dim, -1).T - np.asarray(full_m)
        flat = vals.reshape(-1)
        wrapped = np.any(np.abs(offs) > n // 2, axis=1)
        folded_mass = float(flat[wrapped].sum() * cell)
        p = np.zeros(domain.shape)
        np.add.at(p, tuple((offs % n)[:, a] for a in range(dim)), flat)
        renorm = 1.0 / float(p.sum() * cell)
        p *= renorm
        return Kernel(family, domain, radius, p, mass, threshold, folded_mass, renorm)

    m = [min(mi, ni - 1) for mi, ni in zip(full_m, domain.shape)]
    sl = tuple(slice(fm - mi, fm + mi + 1) for fm, mi in zip(full_m, m))
    return Kernel(family, domain, radius, np.ascontiguousarray(vals[sl]), mass, threshold)


# ---------------------------------------------------------------------------
# the operator
# ---------------------------------------------------------------------------


def _check_grid(kernel: Kernel, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    shape = kernel.domain.shape
    if u.shape[u.ndim - len(shape):] != shape or u.ndim < len(shape):
        raise GridMismatchError(f"field shape {u.shape} does not end with grid shape {shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("field contains non-finite values")
    return u


def apply_dispersal(kernel: Kernel, u: np.ndarray, method: str = "auto", check: bool = True) -> np.ndarray:
    """Apply ``K`` to a field or a batch of fields (leading axes are batch axes).

    ``method`` is ``"fft"``, ``"direct"`` (the summation oracle, a compiled
    loop) or ``"auto"``: the FFT on a torus, and on a box the direct sum
    unless the stencil-times-grid work exceeds ``BOX_DIRECT_LIMIT``, where a
    zero-padded FFT correlation takes over.
    """
    if check:
        u = _check_grid(kernel, u)
    dom = kernel.domain
    shape = dom.shape
    batch_shape = u.shape[: u.ndim - dom.dim]
    if dom.is_torus and method in ("auto", "fft"):
        if dom.dim == 1:
            return np.fft.irfft(np.fft.rfft(u) * kernel.multiplier, n=shape[0])
        return np.fft.irfft2(np.fft.rfft2(u) * kernel.multiplier, s=shape)
    if method not in ("auto", "fft", "direct"):
        raise ValueError(f"unknown method {method!r}")
    flat = u.reshape((-1,) + shape)
    if not dom.is_torus and (method == "fft" or method == "auto" and kernel.stencil.size * flat[0].size > BOX_DIRECT_LIMIT):
        axes = tuple(range(1, 1 + dom.dim))
        pad = kernel.padded_shape
        full = np.fft.irfftn(np.fft.rfftn(flat * dom.weights, s=pad, axes=axes) * kernel.box_multiplier, s=pad, axes=axes)
        sl = (slice(None),) + tuple(slice(m, m + n) for m, n in zip(kernel.half_width, shape))
        return full[sl].reshape(batch_shape + shape)
    if dom.is_torus:
        conv = _kernels.circ_conv_1d if dom.dim == 1 else _kernels.circ_conv_2d
        out = conv(np.ascontiguousarray(flat), kernel.stencil) * dom.cell_volume
    else:
        conv = _kernels.box_conv_1d if dom.dim == 1 else _kernels.box_conv_2d
        out = conv(np.ascontiguousarray(flat * dom.weights), kernel.stencil)
    return out.reshape(batch_shape + shape)


def neumann_shift(kernel: Kernel) -> np.ndarray:
    """``x -> int_D kappa(y - x) dy`` on the grid.

    Subtracting it from ``g`` turns a Neumann-type reaction into the form
    ``f = -int_D kappa(y - x) dy + g`` used throughout the package.
    """
    return apply_dispersal(kernel, np.ones(kernel.domain.shape))


def restrict(field_values: np.ndarray, parent: Domain, sub: Domain) -> np.ndarray:
    """Restrict a field on ``parent`` to the aligned sub-grid ``sub``."""
    sl = parent.index_slices(sub)
    lead = (slice(None),) * (np.ndim(field_values) - parent.dim)
    return np.asarray(field_values)[lead + sl]


# ---------------------------------------------------------------------------
# iterated-kernel positivity
# ---------------------------------------------------------------------------


def iterated_kernel_partial_sums(kernel: Kernel, u0: np.ndarray, n_terms: int) -> np.ndarray:
    """Partial sums ``S_i = sum_{j<=i} K^j u0 / j!`` for ``i = 0..n_terms``."""
    term = np.asarray(u0, dtype=float)
    sums = [term.copy()]
    for j in range(1, n_terms + 1):
        term = apply_dispersal(kernel, term) / j
        sums.append(sums[-1] + term)
    return np.array(sums)


def iterated_kernel_lower_bound(
    kernel: Kernel,
    u0: np.ndarray,
    r0: float,
    delta0: float,
    k: int,
    center=0.0,
    tol: float = 1e-12,
    max_terms: int = 500,
) -> float:
    """Infimum over the ball ``|x - center| <= k r0`` of ``sum_j K^j u0 / j!``.

    Terms are added until the infimum changes by less than ``tol``. Raises
    ``ValueError`` if ``u0`` is negative somewhere, if its mass on the ball of
    radius ``r0`` is below ``delta0`` (by quadrature), or if the converged
    infimum is not strictly positive.
    """
    if not 0.0 < delta0 < 1.0:
        raise ValueError("delta0 must lie in (0, 1)")
    if r0 <= 0 or k < 1:
        raise ValueError("need r0 > 0 and k >= 1")
    dom = kernel.domain
    u0 = _check_grid(kernel, u0)
    if np.any(u0 < 0):
        raise ValueError("u0 must be nonnegative")
    c = np.asarray(_as_tuple(center, dom.dim), dtype=float)
    dist = np.sqrt(sum((m - ci) ** 2 for m, ci in zip(dom.mesh(), c)))
    slack = 1e-9 * max(dom.spacing)
    mass = float(np.sum(np.where(dist <= r0 + slack, u0, 0.0) * dom.weights))
    if mass < delta0:
        raise ValueError(f"mass of u0 on B(r0) is {mass:.6g} < delta0={delta0}")
    region = dist <= k * r0 + slack
    if not np.any(region):
        raise ValueError("no grid points inside the target ball")

    term = u0.copy()
    total = u0.copy()
    inf_prev = float(total[region].min())
    for j in range(1, max_terms + 1):
        term = apply_dispersal(kernel, term) / j
        total += term
        inf_now = float(total[region].min())
        if abs(inf_now - inf_prev) < tol:
            break
        inf_prev = inf_now
    else:
        raise RuntimeError("iterated-kernel series did not converge")
    if not inf_now > 0.0:
        raise ValueError("infimum is not strictly positive; kernel truncation too aggressive")
    return inf_now

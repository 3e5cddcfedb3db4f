"""Hot loops: direct convolution sums and the translation-number scan.

Each kernel has a loop implementation compiled with numba and a vectorized
numpy implementation. The public names at the bottom of the module bind to one
or the other according to :data:`nlkpp._backend.USE_NUMBA`. All inputs are
batched: fields carry a leading batch axis and the dispatch wrappers in
:mod:`nlkpp.kernel_domain` add or strip it.

Reduction order inside every numba loop is fixed (ascending indices), so
results are bit-reproducible run to run.
"""

from __future__ import annotations

import numpy as np

from ._backend import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# bounded box, Dirichlet-type truncation: out[i] = sum_j s[j - i + m] v[j]
# ---------------------------------------------------------------------------


@njit
def box_conv_1d_numba(v, stencil):
    nb, n = v.shape
    m = (stencil.shape[0] - 1) // 2
    out = np.zeros((nb, n))
    for b in range(nb):
        for i in range(n):
            jlo = max(0, i - m)
            jhi = min(n, i + m + 1)
            acc = 0.0
            for j in range(jlo, jhi):
                acc += stencil[j - i + m] * v[b, j]
            out[b, i] = acc
    return out


def box_conv_1d_numpy(v, stencil):
    nb, n = v.shape
    m = (stencil.shape[0] - 1) // 2
    rev = stencil[::-1]
    out = np.empty((nb, n))
    for b in range(nb):
        out[b] = np.convolve(v[b], rev, mode="full")[m:m + n]
    return out


@njit
def box_conv_2d_numba(v, stencil):
    nb, n1, n2 = v.shape
    m1 = (stencil.shape[0] - 1) // 2
    m2 = (stencil.shape[1] - 1) // 2
    out = np.zeros((nb, n1, n2))
    for b in range(nb):
        for i1 in range(n1):
            jlo1 = max(0, i1 - m1)
            jhi1 = min(n1, i1 + m1 + 1)
            for i2 in range(n2):
                jlo2 = max(0, i2 - m2)
                jhi2 = min(n2, i2 + m2 + 1)
                acc = 0.0
                for j1 in range(jlo1, jhi1):
                    for j2 in range(jlo2, jhi2):
                        acc += stencil[j1 - i1 + m1, j2 - i2 + m2] * v[b, j1, j2]
                out[b, i1, i2] = acc
    return out


def box_conv_2d_numpy(v, stencil):
    # zero-padded linear correlation through the FFT
    nb, n1, n2 = v.shape
    m1 = (stencil.shape[0] - 1) // 2
    m2 = (stencil.shape[1] - 1) // 2
    s1 = n1 + 2 * m1
    s2 = n2 + 2 * m2
    fs = np.fft.rfft2(stencil[::-1, ::-1], s=(s1, s2))
    fv = np.fft.rfft2(v, s=(s1, s2), axes=(1, 2))
    full = np.fft.irfft2(fv * fs, s=(s1, s2), axes=(1, 2))
    return full[:, m1:m1 + n1, m2:m2 + n2]


# ---------------------------------------------------------------------------
# torus, direct circular sum: out[i] = sum_j p[(j - i) mod n] v[j]
# ---------------------------------------------------------------------------


@njit
def circ_conv_1d_numba(v, p):
    nb, n = v.shape
    out = np.zeros((nb, n))
    for b in range(nb):
        for i in range(n):
            acc = 0.0
            for j in range(n):
                k = j - i
                if k < 0:
                    k += n
                acc += p[k] * v[b, j]
            out[b, i] = acc
    return out


def circ_conv_1d_numpy(v, p):
    n = v.shape[1]
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    return v @ p[idx].T


@njit
def circ_conv_2d_numba(v, p):
    nb, n1, n2 = v.shape
    out = np.zeros((nb, n1, n2))
    for b in range(nb):
        for i1 in range(n1):
            for i2 in range(n2):
                acc = 0.0
                for j1 in range(n1):
                    k1 = j1 - i1
                    if k1 < 0:
                        k1 += n1
                    for j2 in range(n2):
                        k2 = j2 - i2
                        if k2 < 0:
                            k2 += n2
                        acc += p[k1, k2] * v[b, j1, j2]
                out[b, i1, i2] = acc
    return out


def circ_conv_2d_numpy(v, p):
    n1, n2 = p.shape
    out = np.zeros_like(v, dtype=float)
    for k1 in range(n1):
        for k2 in range(n2):
            w = p[k1, k2]
            if w != 0.0:
                out += w * np.roll(v, shift=(-k1, -k2), axis=(1, 2))
    return out


# ---------------------------------------------------------------------------
# epsilon-translation scan for a trigonometric polynomial
#   d(t, x; tau) = sum_m P[m, x] * (C[t, m] (cos w_m tau - 1) - S[t, m] sin w_m tau)
# returns sup_{t, x} |d| for every tau
# ---------------------------------------------------------------------------


@njit
def translation_sup_numba(cos_t, sin_t, profiles, omegas, taus):
    nt, nm = cos_t.shape
    nx = profiles.shape[1]
    ntau = taus.shape[0]
    out = np.zeros(ntau)
    ct = np.empty(nm)
    st = np.empty(nm)
    g = np.empty(nm)
    for k in range(ntau):
        for m in range(nm):
            ct[m] = np.cos(omegas[m] * taus[k]) - 1.0
            st[m] = np.sin(omegas[m] * taus[k])
        best = 0.0
        for it in range(nt):
            for m in range(nm):
                g[m] = cos_t[it, m] * ct[m] - sin_t[it, m] * st[m]
            for ix in range(nx):
                acc = 0.0
                for m in range(nm):
                    acc += profiles[m, ix] * g[m]
                if acc < 0.0:
                    acc = -acc
                if acc > best:
                    best = acc
        out[k] = best
    return out


def translation_sup_numpy(cos_t, sin_t, profiles, omegas, taus, chunk=256):
    out = np.empty(taus.shape[0])
    for lo in range(0, taus.shape[0], chunk):
        tau = taus[lo:lo + chunk]
        ct = np.cos(np.outer(tau, omegas)) - 1.0  # (k, m)
        st = np.sin(np.outer(tau, omegas))
        g = cos_t[None, :, :] * ct[:, None, :] - sin_t[None, :, :] * st[:, None, :]
        d = g @ profiles  # (k, t, x)
        out[lo:lo + chunk] = np.abs(d).max(axis=(1, 2))
    return out


if USE_NUMBA:
    box_conv_1d = box_conv_1d_numba
    box_conv_2d = box_conv_2d_numba
    circ_conv_1d = circ_conv_1d_numba
    circ_conv_2d = circ_conv_2d_numba
    translation_sup = translation_sup_numba
else:
    box_conv_1d = box_conv_1d_numpy
    box_conv_2d = box_conv_2d_numpy
    circ_conv_1d = circ_conv_1d_numpy
    circ_conv_2d = circ_conv_2d_numpy
    translation_sup = translation_sup_numpy

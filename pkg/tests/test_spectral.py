"""Growth rates: Lyapunov estimates, power iteration, certified bounds."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad

from nlkpp.almost_periodic import APCoefficient, SpatialMode, SpatialProfile, TemporalMode
from nlkpp.evolution import Model
from nlkpp.kernel_domain import Bump, Gaussian, build_domain, sample_kernel
from nlkpp.spectral import (
    Bound,
    averaging_certificate,
    certificate_check,
    default_initials,
    dense_principal_eigenvalue,
    domain_monotonicity_check,
    kernel_self_interaction,
    lyapunov_exponent,
    pe_lower_bounds,
    principal_eigenvalue_static,
    relation_audit,
)

TORUS = build_domain("torus", (0.0, 2 * math.pi), 64)


def model_on(domain, a, family=Gaussian(1.0)):
    return Model(sample_kernel(family, domain), a)


def cos_static(c0=1.0, amp=1.0):
    return APCoefficient.static(SpatialProfile(c0, (SpatialMode(1.0, amp),)))


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("a0", [-1.2, 0.0, 0.7])
def test_constant_rates(a0):
    m = model_on(TORUS, APCoefficient.const(a0))
    assert lyapunov_exponent(m, horizon=100.0).estimate == pytest.approx(1 + a0, abs=1e-6)
    assert principal_eigenvalue_static(m).estimate == pytest.approx(1 + a0, abs=1e-12)


def test_space_independent_periodic_rate_is_mean():
    # a = 0.2 + 0.8 cos(t): the rate is 1 + 0.2; the sin term in the
    # second-half average is at most 2 * 0.8 / horizon
    a = APCoefficient(0.2, (TemporalMode(1.0, SpatialProfile(0.8)),))
    m = model_on(TORUS, a)
    rep = lyapunov_exponent(m, horizon=400.0)
    assert rep.estimate == pytest.approx(1.2, abs=2 * 0.8 / 200 + 1e-9)
    assert rep.spread < 1e-9


def test_lyapunov_windows_and_guards():
    m = model_on(TORUS, APCoefficient.const(0.1))
    rep = lyapunov_exponent(m, horizon=160.0)
    assert len(rep.windows) == 4 and rep.converged
    with pytest.raises(ValueError):
        lyapunov_exponent(m, horizon=50.0)


def test_default_initials_are_positive_and_reproducible():
    a = default_initials(TORUS, 5, seed=3)
    b = default_initials(TORUS, 5, seed=3)
    assert a.shape == (5, 64) and a.min() > 0
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# static eigenproblem
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "domain",
    [TORUS, build_domain("box", (0.0, 3.0), 121), build_domain("box", [(0.0, 2.0), (0.0, 1.0)], [21, 11])],
    ids=["torus", "box1d", "box2d"],
)
def test_power_iteration_matches_dense(domain):
    prof = SpatialProfile(0.5, (SpatialMode((1.0,) * domain.dim, 0.4),))
    m = model_on(domain, APCoefficient.static(prof))
    rep = principal_eigenvalue_static(m)
    lam, phi = dense_principal_eigenvalue(m)
    assert rep.estimate == pytest.approx(lam, abs=1e-9)
    assert rep.lower[0].value <= lam + 1e-12 and lam <= rep.upper[0].value + 1e-12
    assert rep.eigenvector.min() > 0
    v = rep.eigenvector / np.linalg.norm(rep.eigenvector)
    w = np.reshape(phi, v.shape) / np.linalg.norm(phi)
    assert abs(abs(float(np.sum(v * w))) - 1) < 1e-8


def test_static_cosine_exceeds_mean_plus_one():
    m = model_on(TORUS, cos_static())
    lam = principal_eigenvalue_static(m).estimate
    bounds = {b.provenance: b.value for b in pe_lower_bounds(m)}
    assert bounds["space_mean_plus_one"] == pytest.approx(2.0)
    assert lam > 2.0


def test_power_iteration_requires_static():
    a = APCoefficient(0.0, (TemporalMode(1.0, SpatialProfile(0.5)),))
    with pytest.raises(ValueError):
        principal_eigenvalue_static(model_on(TORUS, a))


@settings(max_examples=15, deadline=None)
@given(st.floats(-2.0, 2.0))
def test_eigenvalue_shifts_with_constant(c):
    base = principal_eigenvalue_static(model_on(TORUS, cos_static())).estimate
    shifted = principal_eigenvalue_static(model_on(TORUS, cos_static(1.0 + c))).estimate
    assert shifted == pytest.approx(base + c, abs=1e-9)


def test_eigenvalue_grows_with_a():
    lo = principal_eigenvalue_static(model_on(TORUS, cos_static(0.0, 0.5))).estimate
    hi = principal_eigenvalue_static(model_on(TORUS, cos_static(0.0, 1.0))).estimate
    assert hi > lo > 1.0  # mean zero, so both exceed 1


# ---------------------------------------------------------------------------
# lower bounds
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("L,family", [(1.0, Gaussian(1.0)), (2.0, Gaussian(0.5)), (1.5, Bump(0.6))])
def test_kernel_self_interaction_1d(L, family):
    d = build_domain("box", (0.0, L), 101)
    kap = lambda y, x: float(family.density(np.array((y - x) ** 2), 1))  # noqa: E731
    exact, _ = dblquad(kap, 0, L, 0, L, epsabs=1e-12)
    assert kernel_self_interaction(family, d) == pytest.approx(exact / L, rel=1e-8)


def test_kernel_self_interaction_2d_is_separable():
    d = build_domain("box", [(0.0, 1.0), (0.0, 2.0)], [11, 21])
    one = kernel_self_interaction(Gaussian(0.8), build_domain("box", (0.0, 1.0), 11))
    two = kernel_self_interaction(Gaussian(0.8), build_domain("box", (0.0, 2.0), 21))
    assert kernel_self_interaction(Gaussian(0.8), d) == pytest.approx(one * two, rel=1e-10)


def test_box_lower_bounds_below_eigenvalue():
    d = build_domain("box", (0.0, 2.0), 161)
    m = model_on(d, cos_static(0.3, 0.5))
    lam = principal_eigenvalue_static(m).estimate
    for b in pe_lower_bounds(m):
        assert b.value <= lam + 1e-9, b.provenance


# ---------------------------------------------------------------------------
# certificates and audits
# ---------------------------------------------------------------------------


def test_eigenvector_certifies_both_sides():
    m = model_on(TORUS, cos_static())
    lam, phi = dense_principal_eigenvalue(m)
    phi = np.abs(phi)
    t = np.linspace(0, 1, 5)
    lo = certificate_check(m, phi, t, lam - 1e-8, "lower")
    up = certificate_check(m, phi, t, lam + 1e-8, "upper")
    assert lo.passed and up.passed
    assert not certificate_check(m, phi, t, lam + 1e-3, "lower").passed


def test_power_eigenvector_certifies_its_collatz_bracket():
    m = model_on(TORUS, cos_static())
    rep = principal_eigenvalue_static(m)
    t = np.linspace(0, 1, 5)
    assert certificate_check(m, rep.eigenvector, t, rep.lower[0].value - 1e-12, "lower").passed
    assert certificate_check(m, rep.eigenvector, t, rep.upper[0].value + 1e-12, "upper").passed


def test_certificate_guards():
    m = model_on(TORUS, cos_static())
    with pytest.raises(ValueError):
        certificate_check(m, -np.ones(64), [0.0, 1.0], 0.0, "lower")
    with pytest.raises(ValueError):
        certificate_check(m, np.zeros(64), [0.0, 1.0], 0.0, "upper")


def test_averaging_certificate_exact_for_space_independent_a():
    # phi = exp(A(t)) is an exact eigenfunction of the periodic problem
    a = APCoefficient(0.4, (TemporalMode(1.0, SpatialProfile(0.6)), TemporalMode(math.sqrt(2), SpatialProfile(0.3))))
    lo, hi = averaging_certificate(model_on(TORUS, a))
    assert lo.value == pytest.approx(1.4, abs=1e-9)
    assert hi.value == pytest.approx(1.4, abs=1e-9)


def test_averaging_certificate_brackets_lyapunov():
    a = APCoefficient(0.1, (TemporalMode(1.0, SpatialProfile(0.2, (SpatialMode(1.0, 0.3),))),))
    m = model_on(TORUS, a + cos_static(0.0, 0.4))
    lo, hi = averaging_certificate(m)
    est = lyapunov_exponent(m, horizon=200.0).estimate
    assert lo.value - 2e-2 <= est <= hi.value + 2e-2
    assert lo.value <= hi.value


def test_relation_audit_flags_inconsistent_bound():
    m = model_on(TORUS, APCoefficient.const(0.3))
    ok = relation_audit(m, horizon=100.0)
    assert ok.passed
    bad = relation_audit(m, extra_lower=[Bound(2.0, "bogus")], horizon=100.0)
    assert not bad.passed


def test_domain_monotonicity():
    full = build_domain("box", (0.0, 2.0), 81)
    doms = [full.sub_box([1.0 - w], [1.0 + w]) for w in (0.25, 0.5, 1.0)]
    rep = domain_monotonicity_check(model_on(full, cos_static(0.0, 0.5)), doms)
    assert rep.passed and rep.values == sorted(rep.values)

"""Part metric, pullback entire solutions, uniqueness, stability, extinction, recurrence."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlkpp.almost_periodic import APCoefficient, SpatialMode, SpatialProfile, TemporalMode
from nlkpp.dynamics import (
    PullbackError,
    almost_periodicity_diagnostic,
    contraction_check,
    default_cap,
    extinction_check,
    ode_pullback,
    part_metric,
    pullback_entire_solution,
    random_positive_pairs,
    stability_check,
    uniqueness_check,
)
from nlkpp.evolution import Model
from nlkpp.kernel_domain import Gaussian, build_domain, sample_kernel

N = 16
SIN_T = -0.5 * math.pi  # cos(t + SIN_T) = sin t


def model(a, b=1.0):
    d = build_domain("torus", (0.0, 2 * math.pi), N)
    a = a if isinstance(a, APCoefficient) else APCoefficient.const(a)
    return Model(sample_kernel(Gaussian(1.0), d), a, APCoefficient.const(b))


def periodic_a():
    return APCoefficient(0.5, (TemporalMode(1.0, SpatialProfile(0.3), SIN_T),))


def logistic(t, u0, r):
    return r / (1 + (r / u0 - 1) * np.exp(-r * t))


# ---------------------------------------------------------------------------
# part metric
# ---------------------------------------------------------------------------


def test_part_metric_values():
    u = np.ones(5)
    assert part_metric(u, math.e * u) == pytest.approx(1.0)
    assert part_metric(u, u) == 0.0
    v = np.array([1.0, 2.0, 0.5, 1.0, 1.0])
    assert part_metric(u, v) == pytest.approx(math.log(2.0))
    with pytest.raises(ValueError):
        part_metric(u, np.zeros(5))


positive = st.lists(st.floats(0.01, 100.0), min_size=6, max_size=6).map(np.array)


@settings(max_examples=60, deadline=None)
@given(positive, positive, positive, st.floats(0.1, 10.0))
def test_part_metric_is_a_scale_invariant_metric(u, v, w, c):
    assert part_metric(u, v) == pytest.approx(part_metric(v, u))
    assert part_metric(u, w) <= part_metric(u, v) + part_metric(v, w) + 1e-12
    assert part_metric(c * u, c * v) == pytest.approx(part_metric(u, v), abs=1e-12)


def test_part_metric_batched():
    u, v = random_positive_pairs(build_domain("torus", (0, 1), 8), 3, seed=0)
    batch = part_metric(u, v, grid_ndim=1)
    np.testing.assert_allclose(batch, [part_metric(a, b) for a, b in zip(u, v)])


def test_ordered_pairs_dominate():
    u, v = random_positive_pairs(build_domain("torus", (0, 1), 8), 10, seed=1, ordered=True)
    assert np.all(v >= u) and u.min() >= 0.05


# ---------------------------------------------------------------------------
# contraction
# ---------------------------------------------------------------------------


def test_constant_pair_follows_logistic_closed_form():
    # spatially constant fields solve u' = 1.5 u - u^2
    m = model(0.5)
    rep = contraction_check(m, np.full(N, 0.5), np.full(N, 1.5), tau=0.5, repetitions=20)
    exact = np.abs(np.log(logistic(rep.times, 0.5, 1.5)) - np.log(1.5))
    np.testing.assert_allclose(rep.rho, exact, atol=1e-9)
    assert rep.non_expansive and rep.decrement > 0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_random_pairs_never_expand(seed):
    a = APCoefficient(0.3, (TemporalMode(1.0, SpatialProfile(0.0, (SpatialMode(1.0, 0.4),))),))
    m = model(a)
    u, v = random_positive_pairs(m.domain, 5, seed=seed, M=2 * m.u_cap)
    rep = contraction_check(m, u, v, tau=0.5, repetitions=10)
    assert rep.non_expansive


# ---------------------------------------------------------------------------
# pullback
# ---------------------------------------------------------------------------


def test_pullback_constant_equilibrium():
    ent = pullback_entire_solution(model(0.5), (0.0, 10.0), save_dt=0.5, lam=1.5)
    np.testing.assert_allclose(ent.values, 1.5, atol=1e-8)
    assert ent.status == "positive" and ent.monotone and ent.floor == pytest.approx(1.5)
    assert ent.cap == pytest.approx(default_cap(model(0.5)))


def test_pullback_periodic_matches_scalar_oracle():
    m = model(periodic_a())
    times = np.arange(0.0, 4 * math.pi, 0.1)
    ent = pullback_entire_solution(m, (0.0, times[-1]), save_dt=0.1)
    ref = ode_pullback(lambda t, u: 1.5 + 0.3 * math.sin(t) - u, times=ent.times)
    assert ref.passed
    np.testing.assert_allclose(ent.values[:, 3], ref.values, atol=1e-8)
    # the scalar entire solution has period 2 pi
    scalar = ode_pullback(lambda t, u: 1.5 + 0.3 * math.sin(t) - u, times=[1.0, 1.0 + 2 * math.pi])
    assert scalar.values[0] == pytest.approx(scalar.values[1], abs=1e-9)


def test_pullback_extinct_for_negative_rate():
    ent = pullback_entire_solution(model(-1.5), (0.0, 5.0), save_dt=0.5, lam=-0.5)
    assert ent.status == "extinct" and ent.floor < 1e-8


def test_pullback_inconsistent_and_indeterminate_labels():
    assert pullback_entire_solution(model(0.5), (0.0, 5.0), save_dt=0.5, lam=-1.0).status == "inconsistent"
    assert pullback_entire_solution(model(0.5), (0.0, 5.0), save_dt=0.5, lam=0.01).status == "indeterminate"


def test_pullback_reports_nonconvergence():
    with pytest.raises(PullbackError):
        pullback_entire_solution(model(0.5), (0.0, 5.0), tol=0.0, save_dt=0.5, K_max=80.0)
    with pytest.raises(ValueError):
        pullback_entire_solution(model(0.5), (5.0, 5.0))


def test_uniqueness_and_stability():
    m = model(periodic_a())
    assert uniqueness_check(m, window=(0.0, 20.0)).passed
    ent = pullback_entire_solution(m, (0.0, 30.0))
    rng = np.random.default_rng(4)
    initials = 0.05 + 3.0 * rng.random((4, N))
    rep = stability_check(m, ent, initials, horizon=30.0)
    assert rep.passed and rep.rho_monotone
    with pytest.raises(ValueError):
        stability_check(m, ent, initials, horizon=40.0)


@pytest.mark.parametrize("a0", [-1.2, -1.5])
def test_extinction_rate(a0):
    rep = extinction_check(model(a0), np.ones(N), horizon=100.0, lam=1 + a0)
    assert rep.passed
    assert rep.rate == pytest.approx(1 + a0, abs=1e-6)


def test_ode_pullback_forced_problem():
    # u' = 1 - u has the entire solution u = 1
    ref = ode_pullback(lambda t, u: -1.0, g=1.0, times=np.linspace(0, 5, 11))
    np.testing.assert_allclose(ref.values, 1.0, atol=1e-10)


# ---------------------------------------------------------------------------
# recurrence
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_periodic_entire_solution_recurs():
    m = model(periodic_a())
    ent = pullback_entire_solution(m, (0.0, 80.0))
    rep = almost_periodicity_diagnostic(m, ent, eps_list=(0.1, 0.05, 0.025), min_overlap=20.0)
    assert rep.passed and rep.monotone
    for taus in rep.taus:
        assert all(abs(t / (2 * math.pi) - round(t / (2 * math.pi))) < 0.01 for t in taus)
    assert all(abs(p - round(p)) < rep.module["resolution"] for p in rep.module["peaks"])

"""The RK4 solver against closed forms, plus order, positivity and comparison checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from nlkpp.almost_periodic import APCoefficient, SpatialMode, SpatialProfile, TemporalMode
from nlkpp.evolution import (
    EvolutionError,
    Model,
    Reaction,
    Trajectory,
    check_ordering,
    check_supersub,
    domain_comparison,
    linear_propagate,
    solve,
    step,
)
from nlkpp.kernel_domain import Gaussian, build_domain, sample_kernel


def torus_model(a, b=1.0, n=64):
    d = build_domain("torus", (0.0, 2 * math.pi), n)
    a = a if isinstance(a, APCoefficient) else APCoefficient.const(a)
    b = None if b is None else (b if isinstance(b, APCoefficient) else APCoefficient.const(b))
    return Model(sample_kernel(Gaussian(1.0), d), a, b)


def logistic(t, u0, r, b):
    return r / (b + (r / u0 - b) * np.exp(-r * t))


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("a0,b,u0", [(0.5, 1.0, 0.1), (0.0, 2.0, 3.0), (-0.5, 0.5, 0.2)])
def test_spatially_constant_logistic(a0, b, u0):
    # K 1 = 1 on the torus, so u' = (1 + a0) u - b u^2
    m = torus_model(a0, b)
    traj = solve(m, np.full(64, u0), 0.0, 10.0, dt=0.002, save_dt=0.5)
    exact = logistic(traj.times, u0, 1 + a0, b)
    np.testing.assert_allclose(traj.values[:, 7], exact, rtol=1e-9)
    assert np.ptp(traj.final) < 1e-12


def test_time_dependent_scalar_matches_ivp():
    a = APCoefficient(0.5, (TemporalMode(1.0, SpatialProfile(0.3), -0.5 * math.pi),))  # 0.5 + 0.3 sin t
    m = torus_model(a, 1.0)
    traj = solve(m, np.full(64, 0.2), 0.0, 8.0, save_dt=1.0)
    ref = solve_ivp(lambda t, y: y * (1.5 + 0.3 * np.sin(t)) - y * y, (0, 8), [0.2],
                    t_eval=traj.times, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(traj.values[:, 0], ref.y[0], rtol=1e-9)


@pytest.mark.parametrize("k", [1, 3])
def test_linear_fourier_mode_grows_exponentially(k):
    a0 = -0.3
    m = torus_model(a0, None)
    x = m.domain.axes[0]
    out = linear_propagate(m, np.cos(k * x), 0.0, 4.0)
    rate = math.exp(-0.5 * k * k) + a0
    np.testing.assert_allclose(out, math.exp(rate * 4.0) * np.cos(k * x), atol=1e-9)


def test_fourth_order_convergence():
    m = torus_model(0.5, 1.0)
    x = m.domain.axes[0]
    u0 = 1.0 + 0.5 * np.cos(x)
    ref = solve(m, u0, 0.0, 2.0, dt=1e-3, save=False).final
    e1 = np.abs(solve(m, u0, 0.0, 2.0, dt=0.1, save=False).final - ref).max()
    e2 = np.abs(solve(m, u0, 0.0, 2.0, dt=0.05, save=False).final - ref).max()
    assert 13.0 <= e1 / e2 <= 19.0


def test_cocycle_identity():
    p = SpatialProfile(0.2, (SpatialMode(1.0, 0.3),))
    a = APCoefficient(0.1, (TemporalMode(math.sqrt(2), p),))
    m = torus_model(a, None)
    u0 = 1.0 + 0.2 * np.sin(m.domain.axes[0])
    direct = linear_propagate(m, u0, 0.0, 5.0)
    split = linear_propagate(m, linear_propagate(m, u0, 0.0, 2.0), 2.0, 5.0)
    np.testing.assert_allclose(split, direct, rtol=1e-12)
    np.testing.assert_array_equal(linear_propagate(m, u0, 1.0, 1.0), u0)


# ---------------------------------------------------------------------------
# guards
# ---------------------------------------------------------------------------


def test_step_rejects_large_dt():
    m = torus_model(0.5, 1.0)
    with pytest.raises(EvolutionError):
        step(m, np.ones(64), 0.0, 2 * m.dt_max)
    with pytest.raises(EvolutionError):
        solve(m, np.ones(64), 0.0, 1.0, dt=-0.1)


def test_solve_rejects_bad_initials():
    m = torus_model(0.5, 1.0)
    with pytest.raises(ValueError):
        solve(m, -np.ones(64), 0.0, 1.0)
    with pytest.raises(ValueError):
        solve(m, np.ones(32), 0.0, 1.0)
    with pytest.raises(EvolutionError):
        solve(m, np.full(64, np.inf), 0.0, 1.0)
    with pytest.raises(ValueError):
        solve(m, np.ones(64), 1.0, 0.0)


def test_reaction_bounds():
    a = APCoefficient(0.3, (TemporalMode(1.0, SpatialProfile(0.5)),))
    b = APCoefficient(1.0, (TemporalMode(2.0, SpatialProfile(0.5)),))
    r = Reaction(a, b)
    assert r.u_cap == pytest.approx((1 + 0.8) / 0.5)
    assert r.check_h2(build_domain("torus", (0, 1), 16))
    with pytest.raises(ValueError):
        Reaction(a, APCoefficient(0.5, (TemporalMode(1.0, SpatialProfile(0.5)),)))


def test_dt_max_formula():
    m = torus_model(0.5, 2.0)
    assert m.dt_max == pytest.approx(0.5 / (1 + 0.5 + 2.0 * m.u_cap))
    assert m.default_dt() == pytest.approx(min(0.01, m.dt_max))


def test_trajectory_accessors():
    m = torus_model(0.5, 1.0)
    traj = solve(m, np.ones(64), 0.0, 5.0, save_dt=0.5)
    assert len(traj) == 11
    np.testing.assert_array_equal(traj.at(2.5), traj.values[5])
    w = traj.window(1.0, 3.0)
    np.testing.assert_allclose(w.times, np.arange(1.0, 3.01, 0.5))
    with pytest.raises(KeyError):
        traj.index_of(0.25)
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 1.0, 3.0]), np.zeros((3, 4)), 1.0)


# ---------------------------------------------------------------------------
# qualitative properties
# ---------------------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 5.0))
def test_positivity_and_invariant_bound(seed, scale):
    a = APCoefficient(0.2, (TemporalMode(1.0, SpatialProfile(0.0, (SpatialMode(1.0, 0.5),))),))
    m = torus_model(a, 1.0, n=32)
    u0 = scale * np.random.default_rng(seed).random(32)
    traj = solve(m, u0, 0.0, 5.0, save_dt=0.5)
    assert traj.values.min() >= 0.0
    assert traj.values.max() <= max(u0.max(), m.u_cap) + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_comparison_principle(seed):
    m = torus_model(0.4, 1.0, n=32)
    rng = np.random.default_rng(seed)
    lo = 2 * rng.random(32)
    hi = lo + rng.random(32)
    rep = check_ordering(solve(m, lo, 0.0, 3.0, save_dt=0.5), solve(m, hi, 0.0, 3.0, save_dt=0.5), tol=1e-12)
    assert rep.passed


def test_ordering_detects_violation():
    m = torus_model(0.4, 1.0, n=32)
    lo = solve(m, np.full(32, 2.0), 0.0, 1.0, save_dt=0.5)
    hi = solve(m, np.full(32, 1.0), 0.0, 1.0, save_dt=0.5)
    rep = check_ordering(lo, hi)
    assert not rep.passed and rep.first_violation == 0 and rep.max_excess == pytest.approx(1.0)


def test_constant_super_and_sub_solutions():
    m = torus_model(0.5, 1.0)
    t = np.linspace(0, 2, 21)
    high = np.full((21, 64), m.u_cap + 1.0)
    low = np.full((21, 64), 0.1)
    assert check_supersub(m, high, t).label == "super"
    assert check_supersub(m, low, t).label == "sub"
    assert check_supersub(m, np.full((21, 64), 1.5), t).label == "super+sub"  # the equilibrium


def test_smaller_domain_gives_smaller_solution():
    d = build_domain("box", (0.0, 1.0), 101)
    m = Model(sample_kernel(Gaussian(0.3), d), APCoefficient.const(0.2), APCoefficient.const(1.0))
    rep = domain_comparison(m, d.sub_box([0.3], [0.7]), np.ones(101), 0.0, 5.0, tol=1e-12)
    assert rep.passed and rep.strict_interior

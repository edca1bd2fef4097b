import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad
from scipy.special import ndtr, ndtri

from frontlab.core import Configuration
from frontlab.engine import SimParams, simulate
from frontlab.errors import InvalidArgumentError
from frontlab.fkpp import Grid1D, GridFunction
from frontlab.observables import (
    EmpiricalCDF,
    empirical_cdf_eval,
    estimate_velocity,
    hitting_times,
    in_recurrence_set,
    pairing_functional,
    recurrence_diagnostics,
    sup_distance,
    velocity_csv,
    velocity_from_series,
    velocity_run,
)

from oracles import TWO_PARTICLE_VELOCITY, exact_integral_f_one_minus_f, two_particle_velocity_renewal

NORMAL_GRID = Grid1D(-8.0, 8.0, 3201, 0.01, 1.0)


def test_empirical_cdf_examples():
    F = EmpiricalCDF.of(Configuration([2.0, 0.0, 1.0]))
    assert empirical_cdf_eval(F, 0.5) == pytest.approx(1 / 3)
    assert empirical_cdf_eval(F, 0.0) == pytest.approx(1 / 3)
    assert empirical_cdf_eval(F, -5.0) == 0.0
    assert empirical_cdf_eval(F, 2.0) == 1.0
    G = EmpiricalCDF.of([0.0, 0.0, 1.0])
    assert G(0.0) == pytest.approx(2 / 3) and G.left_limit(0.0) == 0.0


def test_sup_distance_quantile_construction():
    n = 200
    u = GridFunction(ndtr(NORMAL_GRID.x), 0.0, NORMAL_GRID)
    F = EmpiricalCDF.of(ndtri((np.arange(1, n + 1) - 0.5) / n))
    d = sup_distance(F, u)
    # linear interpolation of Phi on this grid is off by at most dx^2/8 * max|Phi''|
    interp = NORMAL_GRID.dx**2 / 8 * 0.25
    assert 0.5 / n - 1e-12 <= d <= 0.5 / n + interp + 1e-12


def test_sup_distance_heaviside_against_normal():
    u = GridFunction(ndtr(NORMAL_GRID.x), 0.0, NORMAL_GRID)
    assert sup_distance(EmpiricalCDF.of(np.zeros(50)), u) == pytest.approx(0.5, abs=1e-12)


def test_sup_distance_half_jump_floor():
    # a continuous profile can never match a step: at an atom of mass 1/n the
    # distance is at least 1/(2n), attained when u passes the jump midpoint
    g = Grid1D(-1.0, 1.0, 3, 0.1, 1.0)
    u = GridFunction(np.array([0.0, 0.5, 1.0]), 0.0, g)
    assert sup_distance(EmpiricalCDF.of([0.0]), u) == 0.5
    assert sup_distance(EmpiricalCDF.of([-1.0, 0.0, 0.0, 1.0]), u) == 0.25


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30), st.floats(0.2, 3.0), st.randoms())
def test_sup_distance_dense_oracle_and_relabelling(pos, s, rnd):
    g = Grid1D(-8.0, 8.0, 161, 0.01, 1.0)
    u = GridFunction(ndtr(g.x / s), 0.0, g)
    F = EmpiricalCDF.of(pos)
    d = sup_distance(F, u)
    dense = np.linspace(-10, 10, 20001)
    probe = np.concatenate([dense, np.asarray(pos) - 1e-12, np.asarray(pos)])
    assert d >= np.max(np.abs(F(probe) - u(probe))) - 1e-9
    assert d <= np.max(np.abs(F(probe) - u(probe))) + 1e-6
    perm = list(pos)
    rnd.shuffle(perm)
    assert sup_distance(EmpiricalCDF.of(Configuration(perm)), u) == d


def test_pairing_examples():
    assert pairing_functional(Configuration([1.0, 1.0, 1.0])) == 0.0
    assert pairing_functional(Configuration([0.0, 1.0])) == 0.25
    assert pairing_functional(Configuration([0.0, 1.0, 2.0, 3.0])) == pytest.approx(0.625, abs=1e-15)
    F = EmpiricalCDF.of([0.0, 1.0, 2.0, 3.0])
    val, _ = quad(lambda y: float(F(y) * (1 - F(y))), -1, 4, points=[0, 1, 2, 3], epsabs=1e-14)
    assert val == pytest.approx(0.625, abs=1e-12)
    with pytest.raises(InvalidArgumentError):
        pairing_functional(np.array([1.0]))


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=60))
def test_pairing_equals_exact_step_integral(pos):
    assert pairing_functional(np.array(pos)) == pytest.approx(exact_integral_f_one_minus_f(pos), rel=1e-12, abs=1e-12)


def test_mean_drift_equals_pairing_rate():
    n, t_end, dt = 5, 1.0, 0.02
    obs = np.arange(0.0, t_end + dt / 2, dt)
    resid = []
    for r in range(3000):
        traj = simulate(SimParams(n=n, horizon=t_end, observation_times=obs, seed=21), replica=r)
        mean = traj.positions.mean(axis=1)
        pair = np.array([pairing_functional(p) for p in traj.positions])
        compensator = n / (n - 1) * np.trapezoid(pair, traj.times)
        resid.append(mean[-1] - mean[0] - compensator)
    resid = np.array(resid)
    drift = n / (n - 1) * np.mean(
        [np.trapezoid([pairing_functional(p) for p in simulate(SimParams(n=n, horizon=t_end, observation_times=obs, seed=22), replica=r).positions], obs) for r in range(200)]
    )
    # compensated mean is a martingale, so its increment averages to zero;
    # the trapezoid error is O(dt) relative to the drift
    se = resid.std(ddof=1) / math.sqrt(resid.size)
    assert abs(resid.mean()) < 3 * se + 0.02 * drift


def test_velocity_two_particles_short_run():
    traj = velocity_run(2, 600.0, seed=23)
    est = estimate_velocity(traj, burn_in=40.0)
    assert est.ci[0] <= est.v_hat <= est.ci[1]
    assert abs(est.v_hat - TWO_PARTICLE_VELOCITY) < 0.08


def test_renewal_oracle_matches_closed_form():
    v, se = two_particle_velocity_renewal(200_000, seed=1)
    assert abs(v - TWO_PARTICLE_VELOCITY) < 4 * se


def test_min_and_max_velocities_agree():
    traj = velocity_run(4, 1500.0, seed=24)
    lo = estimate_velocity(traj, "min_particle")
    hi = estimate_velocity(traj, "max_particle")
    joint = math.hypot(lo.half_width, hi.half_width)
    assert abs(lo.v_hat - hi.v_hat) <= joint


def test_velocity_argument_checks():
    t = np.arange(0.0, 100.0)
    with pytest.raises(InvalidArgumentError):
        velocity_from_series(t, t, burn_in=100.0)
    with pytest.raises(InvalidArgumentError):
        velocity_from_series(t, t, burn_in=95.0)
    with pytest.raises(InvalidArgumentError):
        velocity_from_series(t, t, burn_in=0.0, batches=10)
    with pytest.raises(InvalidArgumentError):
        velocity_from_series(np.linspace(0, 100, 30), np.zeros(30), burn_in=0.0)
    with pytest.raises(InvalidArgumentError):
        estimate_velocity(velocity_run(2, 50.0, seed=1), source="median", burn_in=0.0)


def test_velocity_exact_line():
    t = np.linspace(0.0, 100.0, 1001)
    est = velocity_from_series(t, 0.7 * t + 3.0, burn_in=10.0)
    assert est.v_hat == pytest.approx(0.7) and est.half_width == pytest.approx(0.0, abs=1e-12)
    assert velocity_csv([est.csv_row(5)]).splitlines()[0] == "N,v_hat,ci_lo,ci_hi,T,burn_in"


def test_recurrence_set_membership():
    assert in_recurrence_set(np.array([0.0, 0.5, 1.0])).tolist() == [True]
    assert in_recurrence_set(np.array([0.0, 3.0, 3.5])).tolist() == [False]
    assert in_recurrence_set(np.array([0.0, 0.0, 1.0])).tolist() == [False]


def test_hitting_times_from_huge_gaps_are_finite():
    a = hitting_times(Configuration([0.0, 100.0, 200.0]), 100, seed=25, horizon=100.0)
    b = hitting_times(Configuration([0.0, 1e4, 2e4]), 100, seed=26, horizon=100.0)
    assert np.all(np.isfinite(a)) and np.all(np.isfinite(b))
    assert abs(a.mean() - b.mean()) < 3 * math.hypot(a.std() / 10, b.std() / 10) + 0.1


def test_spread_over_time_decays():
    # the spread is stationary, so spread / t falls like 1 / t on average; a
    # single path fluctuates, hence the replica mean
    reps = [recurrence_diagnostics(velocity_run(8, 1024.0, seed=27, replica=r)) for r in range(16)]
    ts = sorted(reps[0].spread_over_t)
    assert ts[0] == 1.0 and ts[-1] == 1024.0
    mean = [np.mean([rep.spread_over_t[t] for rep in reps]) for t in ts]
    assert all(b < a for a, b in zip(mean, mean[1:]))
    assert all(0 < rep.in_r_fraction <= 1 and rep.tau_r is not None for rep in reps)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from frontlab import rng as rngmod
from frontlab.core import Configuration
from frontlab.engine import (
    BrownianRecord,
    EventLog,
    SimParams,
    replay,
    sample_cdf_values,
    sample_from_cdf,
    scheme_equivalence_test,
    simulate,
)
from frontlab.errors import InvalidArgumentError


def test_two_particles_at_zero_observed_at_time_zero():
    traj = simulate(SimParams(n=2, horizon=1.0, observation_times=(0.0,), seed=1))
    assert traj.at(0.0) == Configuration([0.0, 0.0])
    x = np.array([-1e-9, 0.0, 1.0])
    cdf = (traj.at(0.0).positions[None, :] <= x[:, None]).mean(axis=1)
    assert cdf.tolist() == [0.0, 1.0, 1.0]


def test_snapshot_at_zero_is_initial_configuration():
    init = Configuration([0.3, -1.0, 2.0])
    traj = simulate(SimParams(n=3, horizon=1.0, initial=init, observation_times=(0.5, 1.0), seed=2))
    assert traj.times.tolist() == [0.0, 0.5, 1.0]
    assert traj.at(0.0) == init


def test_same_params_give_bit_identical_output():
    params = SimParams(n=20, horizon=3.0, observation_times=(1.0, 2.0, 3.0), seed=99)
    a, b = simulate(params), simulate(params)
    assert np.array_equal(a.positions, b.positions)
    assert a.event_log == b.event_log
    assert a.snapshots_csv() == b.snapshots_csv()
    assert a.event_log.to_csv() == b.event_log.to_csv()
    assert a.manifest_json() == b.manifest_json()
    c = simulate(params, replica=1)
    assert not np.array_equal(a.positions, c.positions)


def test_mean_mark_count_is_poisson_rate():
    counts = np.array([len(simulate(SimParams(n=10, horizon=1.0, seed=5), replica=r).event_log) for r in range(10_000)])
    m, se = counts.mean(), counts.std(ddof=1) / math.sqrt(counts.size)
    assert m - 1.96 * se <= 10.0 <= m + 1.96 * se


def test_effective_marks_run_at_half_the_mark_rate():
    eff = np.array([simulate(SimParams(n=100, horizon=1.0, seed=6), replica=r).event_log.n_effective for r in range(400)])
    m, se = eff.mean(), eff.std(ddof=1) / math.sqrt(eff.size)
    assert abs(m - 50.0) < 3 * se + 0.5


def test_pair_clock_marks_are_all_effective_at_rate_n_over_two():
    logs = [simulate(SimParams(n=2, horizon=1.0, seed=7, scheme="pair_clock"), replica=r).event_log for r in range(4000)]
    counts = np.array([len(log) for log in logs])
    assert abs(counts.mean() - 1.0) < 4 * math.sqrt(1.0 / counts.size)
    # a pair mark moves the lower particle; ties only happen at time zero
    assert all(np.all(log.effective[log.times > 0]) for log in logs if len(log))


def test_replay_reproduces_every_snapshot():
    params = SimParams(n=15, horizon=4.0, observation_times=np.linspace(0, 4, 9), seed=11, initial=Configuration(np.arange(15.0)))
    traj = simulate(params)
    assert np.array_equal(traj.replay(), traj.positions)
    log = EventLog.from_csv(traj.event_log.to_csv(), traj.event_log.horizon)
    assert log == traj.event_log
    assert np.array_equal(replay(traj.initial, log, traj.brownian, traj.times), traj.positions)


@pytest.mark.parametrize("scheme", ["particle_clock", "pair_clock"])
def test_jumps_alone_keep_the_max_and_merge_positions(scheme):
    n = 12
    init = Configuration(np.random.default_rng(0).normal(size=n))
    params = SimParams(n=n, horizon=3.0, initial=init, observation_times=np.linspace(0, 3, 61), seed=12, scheme=scheme)
    traj = simulate(params)
    silent = BrownianRecord(np.zeros_like(traj.brownian.z), traj.brownian.offsets)
    snaps = traj.replay(silent)
    assert np.all(snaps.max(axis=1) == init.positions.max())
    distinct = [np.unique(row).size for row in snaps]
    assert all(b <= a for a, b in zip(distinct, distinct[1:]))
    assert np.all(np.diff(snaps, axis=0) >= 0)


def test_diffusion_separates_positions():
    traj = simulate(SimParams(n=30, horizon=0.01, observation_times=(0.01,), seed=13))
    assert np.unique(traj.positions[-1]).size == 30


def test_effective_mark_copies_the_partner_position():
    for r in range(50):
        params = SimParams(n=6, horizon=5.0, seed=14, stop_after_jumps=1)
        traj = simulate(params, replica=r)
        if traj.stop_time is None:
            continue
        last = traj.event_log[len(traj.event_log) - 1]
        assert last.effective and last.time == traj.stop_time
        pos = traj.stop_configuration
        assert pos.position(last.chooser) == pos.position(last.partner)


def test_event_log_invariants():
    traj = simulate(SimParams(n=50, horizon=2.0, seed=15))
    log = traj.event_log
    assert np.all(np.diff(log.times) > 0)
    assert np.all((log.times >= 0) & (log.times <= log.horizon))
    assert np.all(log.chooser != log.partner)
    assert set(log.chooser.tolist()) <= set(range(1, 51))


def test_event_log_rejects_bad_records():
    with pytest.raises(InvalidArgumentError):
        EventLog.from_records([(0.5, 1, 1)], 1.0)
    with pytest.raises(InvalidArgumentError):
        EventLog.from_records([(0.5, 1, 2), (0.5, 2, 1)], 1.0)
    with pytest.raises(InvalidArgumentError):
        EventLog.from_records([(1.5, 1, 2)], 1.0)


@pytest.mark.parametrize(
    "kw",
    [
        dict(n=1, horizon=1.0),
        dict(n=5, horizon=0.0),
        dict(n=5, horizon=-1.0),
        dict(n=5, horizon=1.0, observation_times=(0.5, 0.2)),
        dict(n=5, horizon=1.0, observation_times=(2.0,)),
        dict(n=5, horizon=1.0, scheme="euler"),
        dict(n=5, horizon=1.0, initial="iid-from-CDF"),
        dict(n=5, horizon=1.0, seed=-1),
    ],
)
def test_invalid_params(kw):
    with pytest.raises(InvalidArgumentError):
        SimParams(**kw)


def test_iid_from_cdf_initial_profile():
    x, F = (-1.0, 0.0, 2.0), (0.0, 0.5, 1.0)
    params = SimParams(n=5000, horizon=1.0, initial="iid-from-CDF", initial_cdf=(x, F), seed=16)
    init = simulate(params).initial.positions

    def cdf(v):
        return np.interp(v, x, F)

    assert stats.kstest(init, cdf).pvalue > 1e-3


def test_sample_from_cdf_validates_knots():
    gen = np.random.default_rng(0)
    with pytest.raises(InvalidArgumentError):
        sample_from_cdf([0.0, 1.0], [0.0, 0.9], 3, gen)
    with pytest.raises(InvalidArgumentError):
        sample_from_cdf([1.0, 0.0], [0.0, 1.0], 3, gen)


@given(st.lists(st.floats(0, 1, allow_subnormal=False), min_size=2, max_size=50))
@settings(max_examples=50)
def test_tie_nudging_makes_times_strictly_increasing(raw):
    from frontlab.kernels import make_strictly_increasing

    t = make_strictly_increasing(np.sort(np.array(raw)))
    assert np.all(np.diff(t) > 0)
    assert np.all(t >= np.sort(raw))


def test_substreams_are_distinct_and_reproducible():
    a = rngmod.streams(3, 0)
    b = rngmod.streams(3, 0)
    draws = {k: g.random() for k, g in a.items()}
    assert draws == {k: g.random() for k, g in b.items()}
    assert len(set(draws.values())) == len(draws)
    with pytest.raises(InvalidArgumentError):
        rngmod.check_seed(2**64)


def test_identical_seeds_give_ks_statistic_zero():
    a = sample_cdf_values(10, 0.5, 0.0, 200, seed=4)
    b = sample_cdf_values(10, 0.5, 0.0, 200, seed=4)
    assert stats.ks_2samp(a, b).statistic == 0.0


def test_two_particle_schemes_share_the_jump_rate():
    # n=2: the single pair rings at rate 1 under pair_clock; particle_clock has
    # total mark rate 2 of which exactly one orientation is effective
    eff_pair = [simulate(SimParams(n=2, horizon=10.0, seed=17, scheme="pair_clock"), replica=r).event_log.n_effective for r in range(300)]
    eff_part = [simulate(SimParams(n=2, horizon=10.0, seed=17), replica=r).event_log.n_effective for r in range(300)]
    assert abs(np.mean(eff_pair) - 10.0) < 0.6
    assert abs(np.mean(eff_part) - 10.0) < 0.6


def test_scheme_equivalence_small():
    rep = scheme_equivalence_test(6, 0.5, 300, seed=18)
    assert rep.passed and rep.p_value > 0.01
    with pytest.raises(InvalidArgumentError):
        scheme_equivalence_test(6, 0.5, 99, seed=18)
    with pytest.raises(InvalidArgumentError):
        scheme_equivalence_test(1, 0.5, 200, seed=18)

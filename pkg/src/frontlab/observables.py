"""Empirical CDFs, distances to PDE profiles, the pairing functional and
long-run diagnostics (velocity, recurrence) computed from trajectories."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from frontlab.core import Configuration
from frontlab.engine import SimParams, Trajectory, simulate
from frontlab.errors import InvalidArgumentError
from frontlab.fkpp import GridFunction
from frontlab.parallel import map_replicas

VELOCITY_SOURCES = ("min_particle", "max_particle", "empirical_mean")
MIN_WINDOW = 10.0


@dataclass(frozen=True, eq=False)
class EmpiricalCDF:
    sorted_positions: np.ndarray

    @classmethod
    def of(cls, config: Configuration | np.ndarray) -> "EmpiricalCDF":
        pos = config.positions if isinstance(config, Configuration) else np.asarray(config, dtype=float)
        return cls(np.sort(pos))

    @property
    def n(self) -> int:
        return int(self.sorted_positions.size)

    def __call__(self, x):
        return np.searchsorted(self.sorted_positions, x, side="right") / self.n

    def left_limit(self, x):
        return np.searchsorted(self.sorted_positions, x, side="left") / self.n


def empirical_cdf_eval(F: EmpiricalCDF, x: float) -> float:
    """Fraction of particles in ``(-inf, x]``."""
    return float(F(x))


def sup_distance(F: EmpiricalCDF, u: GridFunction) -> float:
    """Exact ``sup_x |F(x) - u(x)|`` with ``u`` linear between nodes and flat outside.

    ``F`` is constant and ``u`` affine between consecutive break points
    (particles and nodes), so the sup is attained at a break point using
    either ``F(a)`` or the left limit ``F(a-)``.
    """
    x = u.grid.x
    pts = np.union1d(F.sorted_positions, x)
    up = u(pts)
    # the left limit at the first break point and F at the last one also
    # cover the two unbounded end pieces
    return float(max(np.max(np.abs(F(pts) - up)), np.max(np.abs(F.left_limit(pts) - up))))


def pairing_functional(config: Configuration | np.ndarray) -> float:
    """``sum_k k (N - k) / N^2 * gap_k``, which equals the integral of ``F_N (1 - F_N)``."""
    pos = config.positions if isinstance(config, Configuration) else np.asarray(config, dtype=float)
    n = pos.size
    if n < 2:
        raise InvalidArgumentError("pairing functional needs n >= 2")
    k = np.arange(1, n)
    return float(np.sum(k * (n - k) * np.diff(np.sort(pos))) / n**2)


# velocity -----------------------------------------------------------------


@dataclass(frozen=True)
class VelocityEstimate:
    v_hat: float
    ci: tuple
    source: str
    burn_in: float
    horizon: float
    batch_slopes: np.ndarray = field(repr=False, default=None)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci[1] - self.ci[0])

    def csv_row(self, n: int) -> list:
        return [n, repr(self.v_hat), repr(self.ci[0]), repr(self.ci[1]), repr(self.horizon), repr(self.burn_in)]


VELOCITY_HEADER = ["N", "v_hat", "ci_lo", "ci_hi", "T", "burn_in"]


def velocity_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VELOCITY_HEADER)
    w.writerows(rows)
    return buf.getvalue()


def statistic_path(positions: np.ndarray, source: str) -> np.ndarray:
    if source == "min_particle":
        return positions.min(axis=1)
    if source == "max_particle":
        return positions.max(axis=1)
    if source == "empirical_mean":
        return positions.mean(axis=1)
    raise InvalidArgumentError(f"unknown velocity source {source!r}; expected one of {VELOCITY_SOURCES}")


def velocity_from_series(times, values, burn_in: float, source: str = "empirical_mean", batches: int = 20, level: float = 0.95) -> VelocityEstimate:
    """Least-squares slope after ``burn_in``; CI from batch-mean slopes.

    The window is cut into ``batches`` pieces of equal length; each batch gives
    an increment slope, and the CI is ``v_hat +- t * sd / sqrt(batches)``.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    horizon = float(times[-1])
    if not burn_in < horizon:
        raise InvalidArgumentError("burn_in must be smaller than the horizon")
    if horizon - burn_in < MIN_WINDOW:
        raise InvalidArgumentError(f"need at least {MIN_WINDOW:g} time units after burn-in (have {horizon - burn_in:g})")
    if batches < 20:
        raise InvalidArgumentError("batch-means CI needs at least 20 batches")
    keep = times >= burn_in
    t, y = times[keep], values[keep]
    if t.size < 2 * batches:
        raise InvalidArgumentError(f"insufficient snapshots after burn-in ({t.size}) for {batches} batches")
    v_hat = float(np.polyfit(t, y, 1)[0])
    edges = np.linspace(t[0], t[-1], batches + 1)
    idx = np.searchsorted(t, edges)
    idx[-1] = t.size - 1
    slopes = np.array([(y[b] - y[a]) / (t[b] - t[a]) for a, b in zip(idx[:-1], idx[1:]) if t[b] > t[a]])
    if slopes.size < batches:
        raise InvalidArgumentError("snapshots too sparse for the requested batches")
    half = stats.t.ppf(0.5 + level / 2, slopes.size - 1) * slopes.std(ddof=1) / math.sqrt(slopes.size)
    return VelocityEstimate(v_hat, (v_hat - half, v_hat + half), source, float(burn_in), horizon, slopes)


def estimate_velocity(traj: Trajectory, source: str = "empirical_mean", burn_in: float | None = None, batches: int = 20) -> VelocityEstimate:
    """Velocity from one long run; ``burn_in`` defaults to ``20 N`` time units."""
    if burn_in is None:
        burn_in = 20.0 * traj.n
    ok = ~np.isnan(traj.positions[:, 0])
    return velocity_from_series(traj.times[ok], statistic_path(traj.positions[ok], source), burn_in, source, batches)


def velocity_run(n: int, horizon: float, seed: int, obs_dt: float = 1.0, scheme: str = "particle_clock", replica: int = 0) -> Trajectory:
    """All-at-zero run observed every ``obs_dt`` (plus the horizon)."""
    obs = np.arange(0.0, horizon, obs_dt)
    obs = np.append(obs, horizon)
    return simulate(SimParams(n=n, horizon=horizon, observation_times=obs, seed=seed, scheme=scheme), replica=replica)


# recurrence ---------------------------------------------------------------


def in_recurrence_set(positions: np.ndarray) -> np.ndarray:
    """Rows whose successive gaps all lie in the open interval ``(0, N)``."""
    pos = np.atleast_2d(positions)
    n = pos.shape[1]
    gaps = np.diff(np.sort(pos, axis=1), axis=1)
    return np.all((gaps > 0) & (gaps < n), axis=1)


@dataclass(frozen=True)
class RecurrenceReport:
    n: int
    in_r_fraction: float
    tau_r: float | None
    max_gap: float
    spread_over_t: dict
    in_r: np.ndarray = field(repr=False)


def recurrence_diagnostics(traj: Trajectory, dyadic_from: float = 1.0) -> RecurrenceReport:
    """Membership of snapshots in ``R``, the first hitting time, the largest gap
    and ``(xi[N] - xi[1]) / t`` along a dyadic schedule of snapshot times."""
    if traj.n < 2:
        raise InvalidArgumentError("n >= 2 required")
    ok = ~np.isnan(traj.positions[:, 0])
    t = traj.times[ok]
    pos = traj.positions[ok]
    flags = in_recurrence_set(pos)
    hit = np.flatnonzero(flags)
    gaps = np.diff(np.sort(pos, axis=1), axis=1)
    spread = pos.max(axis=1) - pos.min(axis=1)
    dyadic = {}
    s = dyadic_from
    while s <= t[-1]:
        k = int(np.searchsorted(t, s))
        if k < t.size and math.isclose(t[k], s):
            dyadic[float(s)] = float(spread[k] / s)
        s *= 2
    return RecurrenceReport(
        n=traj.n,
        in_r_fraction=float(flags.mean()),
        tau_r=float(t[hit[0]]) if hit.size else None,
        max_gap=float(gaps.max()),
        spread_over_t=dyadic,
        in_r=flags,
    )


def _tau_task(args):
    initial, horizon, obs_dt, seed, replica = args
    obs = np.arange(0.0, horizon + 0.5 * obs_dt, obs_dt)
    obs = obs[obs <= horizon]
    params = SimParams(n=initial.n, horizon=horizon, initial=initial, observation_times=obs, seed=seed)
    traj = simulate(params, replica=replica)
    flags = in_recurrence_set(traj.positions)
    hit = np.flatnonzero(flags)
    return float(traj.times[hit[0]]) if hit.size else math.inf


def hitting_times(initial: Configuration, replicas: int, seed: int, horizon: float = 200.0, obs_dt: float = 0.05, jobs: int = 1) -> np.ndarray:
    """Samples of ``tau_R`` (resolved on the observation grid); ``inf`` if not hit by ``horizon``."""
    initial.require_interacting()
    tasks = [(initial, horizon, obs_dt, seed, r) for r in range(replicas)]
    return np.array(map_replicas(_tau_task, tasks, jobs))

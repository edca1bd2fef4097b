"""Exact event-driven simulation via the graphical construction.

Two schemes realise the same generator:

``particle_clock``
    every particle carries a rate-1 mark process; at a mark the chooser picks
    a uniform partner among the other ``n - 1`` labels and adopts its position
    if strictly below it.  All marks (effective or not) go into the log.
``pair_clock``
    global events at rate ``n / 2``; a uniform unordered pair is drawn and its
    lower member jumps onto the higher one.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import stats

from frontlab import __version__, kernels, rng as rngmod
from frontlab.core import Configuration
from frontlab.errors import InvalidArgumentError
from frontlab.parallel import map_replicas

SCHEMES = ("particle_clock", "pair_clock")
PROFILES = ("all-at-zero", "iid-from-CDF")


@dataclass(frozen=True)
class MarkRecord:
    time: float
    chooser: int
    partner: int
    effective: bool


@dataclass(frozen=True, eq=False)
class EventLog:
    """Time-ordered marks; labels are 1-based."""

    times: np.ndarray
    chooser: np.ndarray
    partner: np.ndarray
    effective: np.ndarray
    horizon: float

    def __len__(self):
        return int(self.times.size)

    def __getitem__(self, k) -> MarkRecord:
        return MarkRecord(float(self.times[k]), int(self.chooser[k]), int(self.partner[k]), bool(self.effective[k]))

    def __iter__(self) -> Iterator[MarkRecord]:
        for k in range(len(self)):
            yield self[k]

    def __eq__(self, other):
        if not isinstance(other, EventLog):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.chooser, other.chooser)
            and np.array_equal(self.partner, other.partner)
            and np.array_equal(self.effective, other.effective)
        )

    __hash__ = None

    @property
    def n_effective(self) -> int:
        return int(np.count_nonzero(self.effective))

    @classmethod
    def from_records(cls, records: Sequence, horizon: float) -> "EventLog":
        """Build a log from ``MarkRecord`` objects or ``(time, chooser, partner[, effective])`` tuples."""
        rows = [r if isinstance(r, MarkRecord) else MarkRecord(r[0], r[1], r[2], bool(r[3]) if len(r) > 3 else False) for r in records]
        rows.sort(key=lambda r: r.time)
        times = np.array([r.time for r in rows], dtype=float)
        if np.any(np.diff(times) <= 0):
            raise InvalidArgumentError("mark times must be strictly increasing")
        if times.size and (times[0] < 0 or times[-1] > horizon):
            raise InvalidArgumentError("mark times must lie in [0, horizon]")
        if any(r.chooser == r.partner for r in rows):
            raise InvalidArgumentError("chooser and partner must differ")
        return cls(
            times,
            np.array([r.chooser for r in rows], dtype=np.int64),
            np.array([r.partner for r in rows], dtype=np.int64),
            np.array([r.effective for r in rows], dtype=bool),
            float(horizon),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "chooser", "partner", "effective"])
        for t, c, p, e in zip(self.times.tolist(), self.chooser.tolist(), self.partner.tolist(), self.effective.tolist()):
            w.writerow([repr(t), c, p, int(e)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, horizon: float) -> "EventLog":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(
            np.array([float(r["time"]) for r in rows]),
            np.array([int(r["chooser"]) for r in rows], dtype=np.int64),
            np.array([int(r["partner"]) for r in rows], dtype=np.int64),
            np.array([bool(int(r["effective"])) for r in rows], dtype=bool),
            float(horizon),
        )


@dataclass(frozen=True, eq=False)
class BrownianRecord:
    """Standard normals consumed by the lazy Brownian updates.

    Particle ``l`` (0-based) owns ``z[offsets[l]:offsets[l + 1]]``.
    """

    z: np.ndarray
    offsets: np.ndarray

    def block(self, label: int) -> np.ndarray:
        return self.z[self.offsets[label - 1] : self.offsets[label]]


@dataclass(frozen=True)
class SimParams:
    n: int
    horizon: float
    initial: Configuration | str = "all-at-zero"
    observation_times: Sequence[float] = (0.0,)
    seed: int = 0
    scheme: str = "particle_clock"
    initial_cdf: tuple | None = None  # (x, F) knots of a piecewise-linear CDF
    stop_after_jumps: int = 0

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise InvalidArgumentError(f"n must be an integer >= 2 (got {self.n}); a single particle has no partner")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise InvalidArgumentError(f"horizon must be positive, got {self.horizon}")
        obs = np.asarray(self.observation_times, dtype=float).reshape(-1)
        if np.any(np.diff(obs) < 0):
            raise InvalidArgumentError("observation_times must be sorted")
        if obs.size and (obs[0] < 0 or obs[-1] > self.horizon):
            raise InvalidArgumentError("observation_times must lie in [0, horizon]")
        object.__setattr__(self, "observation_times", tuple(float(t) for t in obs))
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        rngmod.check_seed(self.seed)
        if isinstance(self.initial, Configuration):
            if self.initial.n != self.n:
                raise InvalidArgumentError("initial configuration size differs from n")
        elif self.initial not in PROFILES:
            raise InvalidArgumentError(f"unknown initial profile {self.initial!r}")
        elif self.initial == "iid-from-CDF" and self.initial_cdf is None:
            raise InvalidArgumentError("iid-from-CDF needs initial_cdf=(x, F)")

    def to_dict(self) -> dict:
        init = self.initial if isinstance(self.initial, str) else [float(x) for x in self.initial.positions]
        d = {
            "n": int(self.n),
            "horizon": float(self.horizon),
            "initial": init,
            "observation_times": list(self.observation_times),
            "seed": int(self.seed),
            "scheme": self.scheme,
            "stop_after_jumps": int(self.stop_after_jumps),
        }
        if self.initial_cdf is not None:
            d["initial_cdf"] = [[float(v) for v in arr] for arr in self.initial_cdf]
        return d


@dataclass(frozen=True, eq=False)
class Trajectory:
    params: SimParams
    times: np.ndarray  # observation times, always starting at 0
    positions: np.ndarray  # (len(times), n)
    event_log: EventLog
    brownian: BrownianRecord
    initial: Configuration
    stop_time: float | None = None
    stop_configuration: Configuration | None = None

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def snapshots(self) -> dict[float, Configuration]:
        return {float(t): Configuration(p) for t, p in zip(self.times, self.positions) if not np.isnan(p[0])}

    def at(self, t: float) -> Configuration:
        k = int(np.searchsorted(self.times, t))
        if k >= self.times.size or self.times[k] != t:
            raise KeyError(f"no snapshot at time {t}")
        return Configuration(self.positions[k])

    def snapshots_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["obs_time", "label", "position"])
        for t, row in zip(self.times.tolist(), self.positions):
            if np.isnan(row[0]):
                continue
            for lab, x in enumerate(row.tolist(), start=1):
                w.writerow([repr(t), lab, repr(x)])
        return buf.getvalue()

    def manifest(self) -> dict:
        return {
            "library": "frontlab",
            "version": __version__,
            "params": self.params.to_dict(),
            "seed": int(self.params.seed),
            "scheme": self.params.scheme,
            "n_marks": len(self.event_log),
            "n_effective": self.event_log.n_effective,
        }

    def manifest_json(self) -> str:
        return json.dumps(self.manifest(), indent=2, sort_keys=True)

    def replay(self, brownian: BrownianRecord | None = None) -> np.ndarray:
        """Re-run the deterministic map on the stored log and normals."""
        return replay(
            self.initial,
            self.event_log,
            self.brownian if brownian is None else brownian,
            self.times,
            self.params.scheme,
            self.params.stop_after_jumps,
        )


# sampling ---------------------------------------------------------------


def sample_particle_marks(n: int, horizon: float, clocks: np.random.Generator, partners: np.random.Generator):
    """Superpose ``n`` independent rate-1 marked Poisson processes on [0, horizon].

    Returns 0-based ``(times, chooser, partner)`` sorted by time.
    """
    counts = clocks.poisson(horizon, size=n)
    times = clocks.uniform(0.0, horizon, size=int(counts.sum()))
    chooser = np.repeat(np.arange(n, dtype=np.int64), counts)
    partner = partners.integers(0, n - 1, size=times.size, dtype=np.int64)
    partner += partner >= chooser
    order = np.argsort(times, kind="stable")
    times = kernels.make_strictly_increasing(times[order])
    return times, chooser[order], partner[order]


def sample_pair_marks(n: int, horizon: float, clocks: np.random.Generator, partners: np.random.Generator):
    count = clocks.poisson(0.5 * n * horizon)
    times = kernels.make_strictly_increasing(np.sort(clocks.uniform(0.0, horizon, size=count)))
    a = partners.integers(0, n, size=count, dtype=np.int64)
    b = partners.integers(0, n - 1, size=count, dtype=np.int64)
    b += b >= a
    return times, a, b


def sample_from_cdf(x, F, size: int, gen: np.random.Generator) -> np.ndarray:
    """Inverse-transform sampling from a piecewise-linear CDF with knots (x, F)."""
    x = np.asarray(x, dtype=float)
    F = np.asarray(F, dtype=float)
    if x.shape != F.shape or x.size < 2:
        raise InvalidArgumentError("CDF knots must be two equal-length arrays of size >= 2")
    if np.any(np.diff(x) <= 0) or np.any(np.diff(F) < 0) or F[0] != 0.0 or F[-1] != 1.0:
        raise InvalidArgumentError("CDF knots must have increasing x and F rising from 0 to 1")
    u = gen.uniform(0.0, 1.0, size=size)
    # drop flat pieces so the inverse is a function
    keep = np.concatenate(([True], np.diff(F) > 0))
    return np.interp(u, F[keep], x[keep])


def _initial_configuration(params: SimParams, gen: np.random.Generator) -> Configuration:
    if isinstance(params.initial, Configuration):
        return params.initial
    if params.initial == "all-at-zero":
        return Configuration.zeros(params.n)
    return Configuration(sample_from_cdf(*params.initial_cdf, size=params.n, gen=gen))


def _observation_grid(params: SimParams) -> np.ndarray:
    obs = np.asarray(params.observation_times, dtype=float)
    if obs.size == 0 or obs[0] != 0.0:
        obs = np.concatenate(([0.0], obs))
    return np.unique(obs)


def _brownian_blocks(n, chooser, partner, n_obs, gen) -> BrownianRecord:
    touches = np.bincount(chooser, minlength=n) + np.bincount(partner, minlength=n) + n_obs + 1
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(touches, out=offsets[1:])
    return BrownianRecord(gen.standard_normal(int(offsets[-1])), offsets)


def _run_kernel(initial, times, first, second, scheme, obs, brownian, stop_after):
    return kernels.evolve_marks(
        np.ascontiguousarray(initial.positions, dtype=np.float64),
        times,
        first,
        second,
        scheme == "pair_clock",
        obs,
        brownian.z,
        brownian.offsets,
        int(stop_after),
    )


def simulate(params: SimParams, replica: int = 0, streams: dict | None = None) -> Trajectory:
    """Simulate one replica.  Identical ``(params, replica)`` give bit-identical output."""
    if streams is None:
        streams = rngmod.streams(params.seed, replica)
    n = params.n
    initial = _initial_configuration(params, streams["initial"])
    obs = _observation_grid(params)
    sampler = sample_pair_marks if params.scheme == "pair_clock" else sample_particle_marks
    times, first, second = sampler(n, params.horizon, streams["clocks"], streams["partners"])
    brownian = _brownian_blocks(n, first, second, obs.size, streams["brownian"])
    snaps, chooser, partner, effective, k, stop_time, stop_conf = _run_kernel(
        initial, times, first, second, params.scheme, obs, brownian, params.stop_after_jumps
    )
    stopped = stop_time >= 0.0
    horizon = float(stop_time) if stopped else params.horizon
    log = EventLog(times[:k], chooser[:k] + 1, partner[:k] + 1, effective[:k], horizon)
    return Trajectory(
        params=params,
        times=obs,
        positions=snaps,
        event_log=log,
        brownian=brownian,
        initial=initial,
        stop_time=float(stop_time) if stopped else None,
        stop_configuration=Configuration(stop_conf) if stopped else None,
    )


def replay(initial: Configuration, log: EventLog, brownian: BrownianRecord, observation_times, scheme="particle_clock", stop_after=0) -> np.ndarray:
    obs = np.asarray(observation_times, dtype=float)
    snaps, *_ = _run_kernel(
        initial,
        np.ascontiguousarray(log.times, dtype=np.float64),
        np.ascontiguousarray(log.chooser - 1, dtype=np.int64),
        np.ascontiguousarray(log.partner - 1, dtype=np.int64),
        scheme,
        obs,
        brownian,
        stop_after,
    )
    return snaps


# replica experiments ----------------------------------------------------


def _cdf_value_task(args):
    n, t, x, seed, scheme, replica = args
    params = SimParams(n=n, horizon=t, observation_times=(t,), seed=seed, scheme=scheme)
    traj = simulate(params, replica=replica)
    return float(np.count_nonzero(traj.positions[-1] <= x)) / n


def sample_cdf_values(n: int, t: float, x: float, replicas: int, seed: int, scheme: str = "particle_clock", first_replica: int = 0, jobs: int = 1) -> np.ndarray:
    """``F_N(x, t)`` over independent replicas started from all-at-zero."""
    tasks = [(n, t, x, seed, scheme, first_replica + r) for r in range(replicas)]
    return np.array(map_replicas(_cdf_value_task, tasks, jobs))


@dataclass(frozen=True)
class SchemeEquivalenceReport:
    n: int
    t: float
    x: float
    replicas: int
    ks_statistic: float
    p_value: float
    alpha: float
    passed: bool
    particle_clock: np.ndarray = field(repr=False)
    pair_clock: np.ndarray = field(repr=False)


def scheme_equivalence_test(n: int, t: float, replicas: int, seed: int, x: float = 0.0, alpha: float = 0.01, jobs: int = 1) -> SchemeEquivalenceReport:
    """Two-sample KS comparison of the law of ``F_N(x, t)`` under both schemes."""
    if n < 2 or not t > 0:
        raise InvalidArgumentError("need n >= 2 and t > 0")
    if replicas < 100:
        raise InvalidArgumentError(f"replicas={replicas} < 100 gives too little power")
    a = sample_cdf_values(n, t, x, replicas, seed, "particle_clock", 0, jobs)
    # pair-clock replicas use disjoint spawn keys so the two samples are independent
    b = sample_cdf_values(n, t, x, replicas, seed, "pair_clock", replicas, jobs)
    res = stats.ks_2samp(a, b)
    return SchemeEquivalenceReport(n, t, x, replicas, float(res.statistic), float(res.pvalue), alpha, bool(res.pvalue > alpha), a, b)

"""Clans of ancestors and Monte Carlo checks of the decorrelation bounds."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from frontlab import kernels, rng as rngmod
from frontlab.core import Configuration
from frontlab.engine import EventLog, SimParams, sample_particle_marks, simulate
from frontlab.errors import InvalidArgumentError
from frontlab.parallel import map_replicas
from frontlab.stats import wilson_interval


@dataclass(frozen=True)
class ClanOfAncestors:
    root: int
    time: float
    members: frozenset
    steps: tuple  # ((s_1, j_1), (s_2, j_2), ...) with s strictly decreasing

    def to_json(self) -> str:
        return json.dumps(
            {
                "root": self.root,
                "time": self.time,
                "members": sorted(self.members),
                "steps": [[s, j] for s, j in self.steps],
            }
        )

    def __contains__(self, label):
        return label in self.members

    def __len__(self):
        return len(self.members)


def build_clan(log: EventLog, i: int, t: float, n: int | None = None) -> ClanOfAncestors:
    """Backward recursion from particle ``i`` at time ``t``.

    Every mark counts whether or not it produced a jump.  ``n`` defaults to
    the largest label seen in the log (or ``i``).
    """
    if t > log.horizon:
        raise InvalidArgumentError(f"t={t} exceeds the log horizon {log.horizon}")
    if t < 0:
        raise InvalidArgumentError("t must be nonnegative")
    if n is None:
        n = int(max(i, log.chooser.max(initial=0), log.partner.max(initial=0)))
    if not 1 <= i <= n:
        raise InvalidArgumentError(f"label {i} out of range 1..{n}")
    steps_out = np.empty(len(log), dtype=np.int64)
    member, nsteps = kernels.clan_sweep(
        np.ascontiguousarray(log.times, dtype=np.float64),
        np.ascontiguousarray(log.chooser - 1),
        np.ascontiguousarray(log.partner - 1),
        n,
        i - 1,
        float(t),
        steps_out,
    )
    idx = steps_out[:nsteps]
    steps = tuple((float(log.times[k]), int(log.partner[k])) for k in idx)
    return ClanOfAncestors(int(i), float(t), frozenset((np.flatnonzero(member) + 1).tolist()), steps)


@dataclass(frozen=True)
class EstimatorReport:
    n: int
    t: float
    replicas: int
    estimate: float
    ci_lo: float
    ci_hi: float
    stated_bound: float
    std_error: float
    extra: dict = field(default_factory=dict)

    @property
    def within_bound(self) -> bool:
        return self.estimate <= self.stated_bound

    def csv_row(self) -> list:
        return [self.n, repr(self.t), repr(self.estimate), repr(self.ci_lo), repr(self.ci_hi), repr(self.stated_bound)]

    @staticmethod
    def csv_header() -> list:
        return ["n", "t", "estimate", "ci_lo", "ci_hi", "stated_bound"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header())
        w.writerow(self.csv_row())
        return buf.getvalue()


def clan_intersection_bound(n: int, t: float) -> float:
    return math.expm1(t) / (n - 1)


def _intersect_task(args):
    n, t, seed, replica = args
    clocks = rngmod.substream(seed, replica, "clocks")
    partners = rngmod.substream(seed, replica, "partners")
    times, chooser, partner = sample_particle_marks(n, t, clocks, partners)
    return bool(kernels.clans_intersect(times, chooser, partner, n, 0, 1, float(t)))


def estimate_clan_intersection(n: int, t: float, replicas: int, seed: int, jobs: int = 1) -> EstimatorReport:
    """Frequency of ``psi^1_t`` meeting ``psi^2_t`` over simulated mark processes.

    Only the marks are simulated; clans never look at positions.
    """
    if n < 2:
        raise InvalidArgumentError("n must be >= 2")
    if replicas < 100:
        raise InvalidArgumentError(f"replicas={replicas} < 100")
    if t < 0:
        raise InvalidArgumentError("t must be nonnegative")
    bound = clan_intersection_bound(n, t)
    if t == 0:
        hits = 0
    else:
        hits = int(sum(map_replicas(_intersect_task, [(n, t, seed, r) for r in range(replicas)], jobs)))
    lo, hi = wilson_interval(hits, replicas)
    return EstimatorReport(
        n=n,
        t=float(t),
        replicas=replicas,
        estimate=hits / replicas,
        ci_lo=lo,
        ci_hi=hi,
        stated_bound=bound,
        std_error=(hi - lo) / (2 * 1.959963984540054),
        extra={"hits": hits},
    )


def cdf_variance_bound(n: int, t: float) -> float:
    return 2.0 * math.exp(t) / n


def _cdf_task(args):
    n, t, x, seed, initial, replica = args
    params = SimParams(n=n, horizon=t, initial=initial, observation_times=(t,), seed=seed)
    traj = simulate(params, replica=replica)
    return np.count_nonzero(traj.positions[-1] <= x) / n


def estimate_cdf_variance(
    n: int,
    t: float,
    x: float,
    replicas: int,
    seed: int,
    initial: Configuration | None = None,
    jobs: int = 1,
) -> EstimatorReport:
    """Sample variance of ``F_N(x, t)`` over replicas sharing a deterministic start.

    The CI is a normal-theory interval using the sample fourth central moment.
    """
    if n < 2:
        raise InvalidArgumentError("n must be >= 2")
    if replicas < 100:
        raise InvalidArgumentError(f"replicas={replicas} < 100")
    init = Configuration.zeros(n) if initial is None else initial
    if init.n != n:
        raise InvalidArgumentError("initial configuration size differs from n")
    if t == 0:
        values = np.full(replicas, np.count_nonzero(init.positions <= x) / n)
    else:
        values = np.array(map_replicas(_cdf_task, [(n, t, x, seed, init, r) for r in range(replicas)], jobs))
    var = float(values.var(ddof=1))
    m4 = float(np.mean((values - values.mean()) ** 4))
    se = math.sqrt(max(m4 - var**2, 0.0) / replicas)
    return EstimatorReport(
        n=n,
        t=float(t),
        replicas=replicas,
        estimate=var,
        ci_lo=max(var - 1.96 * se, 0.0),
        ci_hi=var + 1.96 * se,
        stated_bound=cdf_variance_bound(n, t),
        std_error=se,
        extra={"x": float(x), "mean": float(values.mean())},
    )

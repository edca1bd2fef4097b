"""Experiment recipes driven by the command line.

Each recipe takes a validated parameter dict plus a worker count and returns
an :class:`Outcome`: the CSV artifacts to write, headline metrics, and whether
the checked inequality held.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from frontlab import ancestry, couplings, engine, fkpp, observables
from frontlab.errors import InvalidArgumentError
from frontlab.parallel import map_replicas

REQUIRED = object()


@dataclass
class Outcome:
    artifacts: dict = field(default_factory=dict)  # file name -> text
    metrics: dict = field(default_factory=dict)
    passed: bool = True


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _grid_for(p, T: float) -> fkpp.Grid1D:
    g = fkpp.Grid1D.auto(T, dx=p["grid.dx"], dt=p["grid.dt"], margin=p["grid.margin"])
    g.check_accuracy_guard()
    return g


# schemas: key -> (type, default).  Grid keys live in an optional [grid] table.
GRID_KEYS = {"grid.dx": (float, 0.02), "grid.dt": (float, 0.01), "grid.margin": (float, 10.0)}

SCHEMAS = {
    "simulate": {
        "N": (int, REQUIRED),
        "T": (float, REQUIRED),
        "scheme": (str, "particle_clock"),
        "observation_times": (list, None),
        "replica": (int, 0),
    },
    "hydro-compare": {
        "N": (int, 5000),
        "T": (float, 1.0),
        "replicas": (int, 40),
        "threshold": (float, 0.05),
        "min_fraction": (float, 0.95),
        **GRID_KEYS,
    },
    "clan-stats": {"N": (int, 100), "T": (float, 1.0), "replicas": (int, 20000), "sigmas": (float, 3.0)},
    "variance-bound": {"N": (int, 100), "T": (float, 1.0), "x": (float, 0.0), "replicas": (int, 5000)},
    "velocity": {
        "Ns": (list, [2, 8, 32, 128]),
        "burn_in_factor": (float, 20.0),
        "window": (float, 1000.0),
        "obs_dt": (float, 1.0),
        "source": (str, "empirical_mean"),
        "scheme": (str, "particle_clock"),
    },
    "coupling-monotone": {
        "Ns": (list, [2, 4, 8, 16]),
        "steps": (int, 10000),
        "variant": (str, "rate_corrected"),
    },
    "bbm-bound": {"N": (int, 5), "T": (float, 3.0), "n_obs": (int, 31), "replicas": (int, 1)},
    "fkpp-solve": {
        "T": (float, 40.0),
        "times": (list, [0.0, 10.0, 20.0, 40.0]),
        "jump_value": (float, 1.0),
        "strang": (bool, False),
        **GRID_KEYS,
    },
    "wave-identity": {
        "c": (float, math.sqrt(2.0)),
        "tol": (float, 1e-4),
        "dx": (float, 0.01),
        "x_min": (float, None),
        "x_max": (float, None),
        "target_tol": (float, 1e-3),
    },
    "scheme-equiv": {
        "N": (int, 10),
        "T": (float, 0.5),
        "x": (float, 0.0),
        "replicas": (int, 2000),
        "alpha": (float, 0.01),
    },
}


def check_ranges(experiment: str, p: dict) -> None:
    """Range rules shared by all experiments; raises InvalidArgumentError."""
    if "N" in p and p["N"] < 2:
        raise InvalidArgumentError(f"N={p['N']} rejected: interacting dynamics need n >= 2 particles")
    for n in p.get("Ns") or []:
        if not isinstance(n, int) or n < 2:
            raise InvalidArgumentError(f"Ns entry {n!r} rejected: interacting dynamics need n >= 2 particles")
    if "T" in p and not p["T"] > 0:
        raise InvalidArgumentError(f"T={p['T']} rejected: horizon must be positive")
    if "replicas" in p and p["replicas"] < 1:
        raise InvalidArgumentError("replicas must be >= 1")
    if "grid.dx" in p:
        if not (p["grid.dx"] > 0 and p["grid.dt"] > 0):
            raise InvalidArgumentError("grid.dx and grid.dt must be positive")
        if p["grid.dt"] > p["grid.dx"]:
            raise InvalidArgumentError(f"accuracy guard: grid.dt={p['grid.dt']} exceeds grid.dx={p['grid.dx']}")
    if experiment == "simulate" and p["scheme"] not in engine.SCHEMES:
        raise InvalidArgumentError(f"unknown scheme {p['scheme']!r}")
    if experiment == "velocity" and p["source"] not in observables.VELOCITY_SOURCES:
        raise InvalidArgumentError(f"unknown velocity source {p['source']!r}")
    if experiment == "coupling-monotone" and p["variant"] not in couplings.VARIANTS:
        raise InvalidArgumentError(f"unknown coupling variant {p['variant']!r}")


# recipes --------------------------------------------------------------------


def run_simulate(p, seed, jobs):
    obs = p["observation_times"] if p["observation_times"] is not None else [p["T"]]
    params = engine.SimParams(n=p["N"], horizon=p["T"], observation_times=obs, seed=seed, scheme=p["scheme"])
    traj = engine.simulate(params, replica=p["replica"])
    return Outcome(
        {"snapshots.csv": traj.snapshots_csv(), "events.csv": traj.event_log.to_csv()},
        {"n_marks": len(traj.event_log), "n_effective": traj.event_log.n_effective},
    )


def _hydro_task(args):
    n, t, seed, replica = args
    traj = engine.simulate(engine.SimParams(n=n, horizon=t, observation_times=(t,), seed=seed), replica=replica)
    return traj.positions[-1]


def run_hydro_compare(p, seed, jobs):
    n, t = p["N"], p["T"]
    grid = _grid_for(p, t)
    # the node on the jump gets 1/2 so the discrete step is centred (second order)
    u = fkpp.richardson_solve(fkpp.heaviside(jump_value=0.5), grid, [t])[-1]
    finals = map_replicas(_hydro_task, [(n, t, seed, r) for r in range(p["replicas"])], jobs)
    dists = [observables.sup_distance(observables.EmpiricalCDF.of(x), u) for x in finals]
    within = [d <= p["threshold"] for d in dists]
    frac = sum(within) / len(within)
    rows = [[r, n, repr(t), repr(d), int(w)] for r, (d, w) in enumerate(zip(dists, within))]
    return Outcome(
        {"sup_distance.csv": _csv(["replica", "N", "t", "sup_distance", "within"], rows)},
        {"fraction_within": frac, "max_distance": max(dists), "mean_distance": float(np.mean(dists))},
        frac >= p["min_fraction"],
    )


def run_clan_stats(p, seed, jobs):
    rep = ancestry.estimate_clan_intersection(p["N"], p["T"], p["replicas"], seed, jobs)
    limit = rep.stated_bound + p["sigmas"] * rep.std_error
    return Outcome(
        {"clan_stats.csv": rep.to_csv()},
        {"estimate": rep.estimate, "stated_bound": rep.stated_bound, "bound_plus_sigmas": limit},
        rep.estimate <= limit,
    )


def run_variance_bound(p, seed, jobs):
    rep = ancestry.estimate_cdf_variance(p["N"], p["T"], p["x"], p["replicas"], seed, jobs=jobs)
    return Outcome(
        {"variance_bound.csv": rep.to_csv()},
        {"estimate": rep.estimate, "stated_bound": rep.stated_bound},
        rep.estimate <= rep.stated_bound,
    )


def _velocity_task(args):
    n, horizon, burn_in, obs_dt, source, scheme, seed = args
    traj = observables.velocity_run(n, horizon, seed, obs_dt, scheme)
    return observables.estimate_velocity(traj, source, burn_in)


def run_velocity(p, seed, jobs):
    tasks = []
    for n in p["Ns"]:
        burn = p["burn_in_factor"] * n
        tasks.append((n, burn + p["window"], burn, p["obs_dt"], p["source"], p["scheme"], seed))
    ests = map_replicas(_velocity_task, tasks, jobs)
    v = [e.v_hat for e in ests]
    rows = [e.csv_row(n) for n, e in zip(p["Ns"], ests)]
    increasing = bool(np.all(np.diff(v) > 0))
    below = all(x < math.sqrt(2.0) for x in v)
    return Outcome(
        {"velocity.csv": observables.velocity_csv(rows)},
        {"v_hat": dict(zip(map(str, p["Ns"]), v)), "increasing": increasing, "below_sqrt2": below},
        increasing and below,
    )


def run_coupling_monotone(p, seed, jobs):
    out = Outcome()
    rows = []
    total = 0
    ordered = True
    for n in p["Ns"]:
        run = couplings.couple_adjacent_sizes(n, p["steps"], seed, p["variant"])
        out.artifacts[f"dominance_N{n}.csv"] = run.dominance_csv()
        a, b = run.velocities()
        ordered &= b.v_hat >= a.v_hat - (a.half_width + b.half_width)
        rows.append([n, repr(a.v_hat), repr(a.ci[0]), repr(a.ci[1]), repr(b.v_hat), repr(b.ci[0]), repr(b.ci[1]), run.violations])
        total += run.violations
    out.artifacts["coupling_velocity.csv"] = _csv(
        ["N", "v_hat_N", "ci_lo_N", "ci_hi_N", "v_hat_N1", "ci_lo_N1", "ci_hi_N1", "violations"], rows
    )
    out.metrics = {"violations": total, "variant": p["variant"], "velocities_ordered": bool(ordered)}
    out.passed = total == 0 and bool(ordered)
    return out


def run_bbm_bound(p, seed, jobs):
    obs = np.linspace(0.0, p["T"], p["n_obs"])
    rows = []
    viol = 0
    for r in range(p["replicas"]):
        e = couplings.bbm_embed(p["N"], p["T"], seed, obs_times=obs, replica=r)
        for t, top, fm in zip(e.obs_times.tolist(), e.top.tolist(), e.forest_max.tolist()):
            rows.append([r, repr(t), repr(top), repr(fm), int(top <= fm)])
        viol += e.violations
    return Outcome(
        {"bbm_bound.csv": _csv(["replica", "t", "xi_max", "forest_max", "holds"], rows)},
        {"violations": viol},
        viol == 0,
    )


def run_fkpp_solve(p, seed, jobs):
    grid = _grid_for(p, p["T"])
    snaps = fkpp.solve_profile(fkpp.heaviside(jump_value=p["jump_value"]), grid, p["times"], strang=p["strang"])
    meds = [[repr(g.time), repr(fkpp.median(g))] for g in snaps]
    metrics = {"medians": {m[0]: float(m[1]) for m in meds}}
    if len(snaps) >= 2:
        a, b = snaps[-2], snaps[-1]
        metrics["speed_last_interval"] = (fkpp.median(b) - fkpp.median(a)) / (b.time - a.time)
    return Outcome({"fkpp_snapshots.csv": fkpp.snapshots_csv(snaps), "medians.csv": _csv(["t", "median"], meds)}, metrics)


def run_wave_identity(p, seed, jobs):
    w = fkpp.solve_traveling_wave(p["c"], p["tol"], p["dx"], None if p["x_min"] is None else (p["x_min"], p["x_max"]))
    integral = fkpp.wave_integral(w.x, w.values)
    err = abs(integral - w.speed)
    return Outcome(
        {"wave.csv": w.to_csv(), "wave_identity.csv": _csv(["c", "integral", "abs_error"], [[repr(w.speed), repr(integral), repr(err)]])},
        {"integral": integral, "abs_error": err, "max_residual": w.diagnostics["max_residual"]},
        err <= p["target_tol"],
    )


def run_scheme_equiv(p, seed, jobs):
    rep = engine.scheme_equivalence_test(p["N"], p["T"], p["replicas"], seed, p["x"], p["alpha"], jobs)
    row = [rep.n, repr(rep.t), repr(rep.x), rep.replicas, repr(rep.ks_statistic), repr(rep.p_value), int(rep.passed)]
    return Outcome(
        {"scheme_equiv.csv": _csv(["n", "t", "x", "replicas", "ks_statistic", "p_value", "passed"], [row])},
        {"ks_statistic": rep.ks_statistic, "p_value": rep.p_value},
        rep.passed,
    )


RECIPES = {
    "simulate": run_simulate,
    "hydro-compare": run_hydro_compare,
    "clan-stats": run_clan_stats,
    "variance-bound": run_variance_bound,
    "velocity": run_velocity,
    "coupling-monotone": run_coupling_monotone,
    "bbm-bound": run_bbm_bound,
    "fkpp-solve": run_fkpp_solve,
    "wave-identity": run_wave_identity,
    "scheme-equiv": run_scheme_equiv,
}
EXPERIMENTS = tuple(RECIPES)

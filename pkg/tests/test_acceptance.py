"""Exit criteria at their stated scales.  Each test reports one verdict line."""

import json
import math
import os

import numpy as np
import pytest
from scipy.special import ndtr

from frontlab.cli import main
from frontlab.fkpp import (
    Grid1D,
    GridFunction,
    heaviside,
    median,
    perturbation_bound_check,
    solve_fkpp,
    solve_profile,
    solve_traveling_wave,
    spatial_order,
    wave_integral,
)
from frontlab.observables import estimate_velocity, velocity_run

from oracles import TWO_PARTICLE_VELOCITY, two_particle_velocity_renewal

pytestmark = pytest.mark.acceptance

SEED = 12345
JOBS = str(os.cpu_count() or 1)


def _run(tmp_path, experiment, body=""):
    cfg = tmp_path / f"{experiment}.toml"
    cfg.write_text(f'experiment = "{experiment}"\nseed = {SEED}\n' + body)
    status = main([experiment, "--config", str(cfg), "--jobs", JOBS])
    out = tmp_path / "runs" / f"{experiment}-seed{SEED}"
    manifest = json.loads((out / "manifest.json").read_text())
    return status, manifest["metrics"], out


def test_hydrodynamic_limit(tmp_path, output_root, verdict):
    status, m, _ = _run(tmp_path, "hydro-compare", "N = 5000\nT = 1.0\nreplicas = 40\nthreshold = 0.05\nmin_fraction = 0.95\n")
    ok = status == 0 and m["fraction_within"] >= 0.95
    verdict(1, "hydrodynamic limit", ok, f"fraction within 0.05 = {m['fraction_within']:.3f}, max distance {m['max_distance']:.4f}")
    assert ok


def test_clan_intersection_bound(tmp_path, output_root, verdict):
    from frontlab.ancestry import estimate_clan_intersection

    status, m, _ = _run(tmp_path, "clan-stats", "N = 100\nT = 1.0\nreplicas = 20000\nsigmas = 3.0\n")
    two = estimate_clan_intersection(2, 1.0, 20000, SEED)
    exact = 1 - math.exp(-2.0)
    law_ok = two.ci_lo <= exact <= two.ci_hi
    ok = status == 0 and law_ok
    verdict(
        2,
        "clan intersection bound",
        ok,
        f"estimate {m['estimate']:.5f} vs bound+3se {m['bound_plus_sigmas']:.5f}; N=2 {two.estimate:.4f} in [{two.ci_lo:.4f}, {two.ci_hi:.4f}] vs {exact:.4f}",
    )
    assert ok


def test_variance_bound(tmp_path, output_root, verdict):
    status, m, _ = _run(tmp_path, "variance-bound", "N = 100\nT = 1.0\nx = 0.0\nreplicas = 5000\n")
    ok = status == 0 and m["estimate"] <= 2 * math.e / 100
    verdict(3, "variance bound", ok, f"Var F_N(0,1) = {m['estimate']:.5f} vs {m['stated_bound']:.5f}")
    assert ok


def test_two_particle_velocity(verdict):
    est = estimate_velocity(velocity_run(2, 2000.0, SEED))
    oracle, se = two_particle_velocity_renewal(1_000_000, SEED)
    ok = abs(est.v_hat - TWO_PARTICLE_VELOCITY) <= 0.02 and abs(oracle - TWO_PARTICLE_VELOCITY) <= 0.02 and abs(est.v_hat - oracle) <= 0.02
    verdict(4, "two-particle velocity", ok, f"v_hat {est.v_hat:.4f} (batch CI {est.ci[0]:.3f}..{est.ci[1]:.3f}), renewal oracle {oracle:.4f} +- {se:.4f}")
    assert ok


def test_monotone_coupling(tmp_path, output_root, verdict):
    status, m, _ = _run(tmp_path, "coupling-monotone", "Ns = [2, 4, 8, 16]\nsteps = 10000\n")
    ok = status == 0 and m["violations"] == 0 and m["velocities_ordered"]
    verdict(5, "monotone coupling", ok, f"violations {m['violations']}, velocities ordered within CIs: {m['velocities_ordered']}")
    assert ok


def test_speed_selection(tmp_path, output_root, verdict):
    status, m, _ = _run(tmp_path, "velocity", "Ns = [2, 8, 32, 128]\n")
    v = m["v_hat"]
    top = v["128"]
    s2, mb, _ = _run(tmp_path, "bbm-bound", "N = 5\nT = 3.0\nn_obs = 31\n")
    ok = status == 0 and m["increasing"] and 1.0 <= top <= math.sqrt(2) and s2 == 0 and mb["violations"] == 0
    detail = ", ".join(f"v{k}={v[k]:.3f}" for k in sorted(v, key=int))
    verdict(6, "speed selection", ok, f"{detail}; BBM embedding violations {mb['violations']}")
    assert ok


def test_wave_identity(verdict):
    w = solve_traveling_wave()
    err = abs(wave_integral(w.x, w.values) - 1.41421)
    ok = err <= 1e-3
    verdict(7, "wave identity", ok, f"|integral - 1.41421| = {err:.2e}")
    assert ok


def random_monotone(gen, g):
    k = gen.integers(1, 4)
    mu, s = gen.uniform(-2, 2, k), gen.uniform(0.05, 1.0, k)
    wts = gen.dirichlet(np.ones(k))
    vals = (wts[None, :] * ndtr((g.x[:, None] - mu) / s)).sum(axis=1)
    if gen.random() < 0.3:
        vals = np.where(g.x >= gen.uniform(-2, 2), np.maximum(vals, gen.uniform(0.3, 1)), vals)
    vals[0], vals[-1] = 0.0, 1.0
    return np.maximum.accumulate(np.clip(vals, 0.0, 1.0))


def test_solver_quality(verdict):
    gen = np.random.default_rng(SEED)
    g = Grid1D.auto(2.0, dx=0.05, dt=0.025, margin=12.0)
    times = [0.0, 0.5, 1.0, 2.0]
    shape_bad = 0
    for _ in range(100):
        for snap in solve_fkpp(GridFunction(random_monotone(gen, g), 0.0, g), times=times):
            shape_bad += not (snap.values.min() >= 0.0 and snap.values.max() <= 1.0 and snap.is_monotone())
    order_bad = 0
    for _ in range(50):
        a = random_monotone(gen, g)
        b = np.maximum(a, random_monotone(gen, g))
        ua = solve_fkpp(GridFunction(a, 0.0, g), times=times)
        ub = solve_fkpp(GridFunction(b, 0.0, g), times=times)
        # ordering is exact up to round-off in the banded solve
        order_bad += sum(int(np.any(x.values > y.values + 1e-12)) for x, y in zip(ua, ub))
    order = spatial_order(heaviside(jump_value=0.5), Grid1D.auto(1.0, dx=0.04, dt=0.0025, margin=8.0), 1.0)
    snaps = solve_profile(heaviside(), Grid1D.auto(40.0), [20.0, 40.0])
    speed = (median(snaps[1]) - median(snaps[0])) / 20.0
    ok = shape_bad == 0 and order_bad == 0 and 1.8 <= order <= 2.2 and 1.33 <= speed <= 1.42
    verdict(8, "solver quality", ok, f"shape failures {shape_bad}, comparison failures {order_bad}, spatial order {order:.3f}, median speed {speed:.4f}")
    assert ok


def _perturbation(T, u0, w0, forcing):
    grid = Grid1D.auto(T, dx=0.04, dt=0.025)
    times = list(np.arange(0.0, T + 1e-12, 0.25))
    u = solve_profile(u0, grid, times)
    w = solve_profile(w0, grid, times, forcing=forcing)
    return perturbation_bound_check(u, w, forcing)


def _random_forcing(gen):
    amp = gen.uniform(-0.2, 0.2)
    centre, width, freq = gen.uniform(-3, 3), gen.uniform(0.2, 2.0), gen.uniform(0.0, 3.0)

    def g(x, s):
        return amp * np.cos(freq * s) * np.exp(-(((np.asarray(x) - centre) / width) ** 2))

    return g


def test_perturbation_bound(verdict):
    def bump(x, s):
        return 0.1 * math.exp(-s) * ((x >= -1) & (x <= 1))

    reports = [
        _perturbation(1.0, heaviside(), heaviside(), None),
        _perturbation(2.0, heaviside(), heaviside(), bump),
        _perturbation(2.0, heaviside(), heaviside(at=0.1), None),
    ]
    gen = np.random.default_rng(SEED)
    for _ in range(20):
        T = float(gen.choice([0.5, 1.0, 1.5, 2.0]))
        shift = float(gen.choice([0.0, gen.uniform(-0.5, 0.5)]))
        reports.append(_perturbation(T, heaviside(), heaviside(at=round(shift / 0.04) * 0.04), _random_forcing(gen)))
    worst = min(float(np.min(r.slack)) for r in reports)
    ok = all(r.holds for r in reports) and worst >= 0.0
    verdict(9, "perturbation bound", ok, f"{len(reports)} runs, smallest slack {worst:.3e}")
    assert ok


def test_scheme_equivalence(tmp_path, output_root, verdict):
    status, m, _ = _run(tmp_path, "scheme-equiv", "N = 10\nT = 0.5\nx = 0.0\nreplicas = 2000\nalpha = 0.01\n")
    ok = status == 0 and m["p_value"] > 0.01
    verdict(10, "scheme equivalence", ok, f"KS statistic {m['ks_statistic']:.4f}, p = {m['p_value']:.3f}")
    assert ok


DETERMINISM = {
    "simulate": "N = 8\nT = 2.0\nobservation_times = [1.0, 2.0]\n",
    "hydro-compare": "N = 300\nT = 0.5\nreplicas = 4\nthreshold = 0.2\nmin_fraction = 0.0\n[grid]\ndx = 0.05\ndt = 0.025\nmargin = 6.0\n",
    "clan-stats": "N = 20\nT = 0.5\nreplicas = 300\n",
    "variance-bound": "N = 20\nT = 0.5\nreplicas = 300\n",
    "velocity": "Ns = [2, 4]\nburn_in_factor = 5.0\nwindow = 200.0\n",
    "coupling-monotone": "Ns = [2, 4]\nsteps = 500\n",
    "bbm-bound": "N = 4\nT = 1.5\nn_obs = 7\nreplicas = 2\n",
    "fkpp-solve": "T = 2.0\ntimes = [0.0, 1.0, 2.0]\n[grid]\ndx = 0.05\ndt = 0.025\nmargin = 6.0\n",
    "wave-identity": "dx = 0.02\n",
    "scheme-equiv": "N = 5\nT = 0.5\nreplicas = 200\nalpha = 0.0\n",
}


def test_determinism(tmp_path, monkeypatch, verdict):
    differing = []
    for experiment, body in DETERMINISM.items():
        outputs = []
        for k, jobs in enumerate(["1", JOBS]):
            root = tmp_path / f"pass{k}"
            monkeypatch.setenv("FRONTLAB_OUTPUT_ROOT", str(root))
            cfg = tmp_path / f"{experiment}.toml"
            cfg.write_text(f'experiment = "{experiment}"\nseed = {SEED}\n' + body)
            assert main([experiment, "--config", str(cfg), "--jobs", jobs]) in (0, 2)
            out = root / f"{experiment}-seed{SEED}"
            manifest = json.loads((out / "manifest.json").read_text())
            files = {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}
            outputs.append((files, {k: v["sha256"] for k, v in manifest["outputs"].items()}))
        if not outputs[0][0] or outputs[0] != outputs[1]:
            differing.append(experiment)
    ok = not differing
    verdict(11, "determinism", ok, f"{len(DETERMINISM)} experiments rerun; differing: {differing or 'none'}")
    assert ok

"""Compiled vs pure-Python kernels.

    python benchmarks/bench_kernels.py [--repeat R]

Runs every hot kernel on the same inputs through the numba dispatcher and
through ``.py_func``, checks that the outputs are identical, and prints the
timings.  With FRONTLAB_DISABLE_NUMBA=1 both columns run Python.
"""

import argparse
import time

import numpy as np

from frontlab import kernels, rng as rngmod
from frontlab._accel import NUMBA_ENABLED
from frontlab.couplings import coupling_streams, sample_rank_pairs
from frontlab.engine import _brownian_blocks, sample_particle_marks


def best_of(fn, args, repeat):
    out, best = None, float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b, equal_nan=a.dtype.kind == "f")
    return a == b


def cases(seed=2024):
    s = rngmod.streams(seed)
    n, horizon = 200, 20.0
    times, first, second = sample_particle_marks(n, horizon, s["clocks"], s["partners"])
    obs = np.linspace(0.0, horizon, 21)
    br = _brownian_blocks(n, first, second, obs.size, s["brownian"])
    yield "evolve_marks (n=200, T=20)", kernels.evolve_marks, (np.zeros(n), times, first, second, False, obs, br.z, br.offsets, 0)
    yield "clan_sweep (n=200, T=20)", kernels.clan_sweep, (times, first, second, n, 0, horizon, np.empty(times.size, dtype=np.int64))

    low, high = sample_rank_pairs(32, 5000, s["partners"])
    disp = 0.1 * s["brownian"].standard_normal((5000, 32))
    yield "jump_chain_path (N=32, 5000 steps)", kernels.jump_chain_path, (np.zeros(32), low, high, disp)

    st = coupling_streams(16, 5000, seed)
    yield "coupled_path (N=16, 5000 steps)", kernels.coupled_path, (
        np.zeros(16), np.zeros(17), st.w, st.c, st.low, st.high, st.target, st.disp, st.disp_extra, 1,
    )


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"numba enabled: {NUMBA_ENABLED}")
    print(f"{'kernel':38s} {'jit [ms]':>10s} {'python [ms]':>12s} {'speedup':>8s}  identical")
    ok = True
    for name, fn, fargs in cases():
        fn(*fargs)  # compile outside the timing
        t_jit, out_jit = best_of(fn, fargs, args.repeat)
        t_py, out_py = best_of(fn.py_func, fargs, max(1, args.repeat // 3))
        eq = same(out_jit, out_py)
        ok &= eq
        print(f"{name:38s} {1e3 * t_jit:10.2f} {1e3 * t_py:12.2f} {t_py / t_jit:8.1f}x  {eq}")
    if not ok:
        raise SystemExit("compiled and Python kernels disagree")


if __name__ == "__main__":
    main()

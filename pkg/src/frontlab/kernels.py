"""Inner loops.  Everything here is 0-based and array-only so that it compiles
under ``numba.njit``; see :mod:`frontlab._accel` for the pure-numpy switch."""

import math

import numpy as np

from frontlab._accel import jit


@jit
def make_strictly_increasing(times):
    """Nudge ties in a sorted time array up by one ulp each, in place."""
    for k in range(1, times.shape[0]):
        if times[k] <= times[k - 1]:
            times[k] = np.nextafter(times[k - 1], np.inf)
    return times


@jit
def _advance(pos, last, ptr, z, label, t):
    dt = t - last[label]
    if dt > 0.0:
        pos[label] += math.sqrt(dt) * z[ptr[label]]
        ptr[label] += 1
        last[label] = t


@jit
def evolve_marks(pos0, mark_t, first, second, pair_mode, obs_t, z, offsets, stop_after):
    """Exact event-driven evolution of the particle system.

    Brownian motion is sampled lazily: a particle only moves when it takes
    part in a mark or an observation, by a Gaussian increment with variance
    equal to the time since its previous update.  Particle ``l`` draws its
    standard normals from ``z[offsets[l]:offsets[l + 1]]`` in order.

    ``pair_mode`` re-orients each mark so that the lower particle is the
    chooser (pair-clock scheme); otherwise ``first`` is the chooser.
    When ``stop_after > 0`` the run halts right after that many effective
    marks, with every particle advanced to the stopping time.
    """
    n = pos0.shape[0]
    m = mark_t.shape[0]
    n_obs = obs_t.shape[0]
    pos = pos0.copy()
    last = np.zeros(n)
    ptr = offsets[:-1].copy()
    snaps = np.full((n_obs, n), np.nan)
    chooser = first.copy()
    partner = second.copy()
    effective = np.zeros(m, dtype=np.bool_)
    stop_conf = np.full(n, np.nan)
    stop_time = -1.0
    jumps = 0
    k = 0
    o = 0
    while k < m or o < n_obs:
        if o < n_obs and (k >= m or obs_t[o] < mark_t[k]):
            t = obs_t[o]
            for l in range(n):
                _advance(pos, last, ptr, z, l, t)
            snaps[o, :] = pos
            o += 1
            continue
        t = mark_t[k]
        a = first[k]
        b = second[k]
        _advance(pos, last, ptr, z, a, t)
        _advance(pos, last, ptr, z, b, t)
        if pair_mode and pos[b] < pos[a]:
            a, b = b, a
        chooser[k] = a
        partner[k] = b
        if pos[a] < pos[b]:
            pos[a] = pos[b]
            effective[k] = True
            jumps += 1
        k += 1
        if stop_after > 0 and jumps == stop_after:
            for l in range(n):
                _advance(pos, last, ptr, z, l, t)
            stop_conf[:] = pos
            stop_time = t
            break
    return snaps, chooser, partner, effective, k, stop_time, stop_conf


@jit
def clan_sweep(times, chooser, partner, n, root, t, steps_out):
    """Backward recursion for the clan of ancestors of ``root`` at time ``t``.

    Sweeping the marks in decreasing time order and adjoining the partner of
    every mark whose chooser is already a member reproduces the recursion
    "largest mark of the current set strictly before the previous one".
    Returns the membership mask and the number of steps written to
    ``steps_out`` (mark indices, latest first).
    """
    member = np.zeros(n, dtype=np.bool_)
    member[root] = True
    nsteps = 0
    top = np.searchsorted(times, t, side="right") - 1
    for idx in range(top, -1, -1):
        if member[chooser[idx]]:
            member[partner[idx]] = True
            steps_out[nsteps] = idx
            nsteps += 1
    return member, nsteps


@jit
def clans_intersect(times, chooser, partner, n, root_a, root_b, t):
    in_a = np.zeros(n, dtype=np.bool_)
    in_b = np.zeros(n, dtype=np.bool_)
    in_a[root_a] = True
    in_b[root_b] = True
    top = np.searchsorted(times, t, side="right") - 1
    for idx in range(top, -1, -1):
        c = chooser[idx]
        if in_a[c]:
            in_a[partner[idx]] = True
        if in_b[c]:
            in_b[partner[idx]] = True
    for l in range(n):
        if in_a[l] and in_b[l]:
            return True
    return False


@jit
def _insertion_sort(a):
    # in place; linear on the nearly sorted vectors produced step to step
    for i in range(1, a.shape[0]):
        v = a[i]
        j = i - 1
        while j >= 0 and a[j] > v:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = v


@jit
def _theta_sorted(vals, low, high):
    """Rank ``low`` adopts the value of rank ``high`` in a sorted vector, in place.

    The result is already sorted: the moved value leaves position ``low`` and
    re-enters just below rank ``high``, so ranks ``low+1..high`` shift down.
    """
    top = vals[high]
    if top > vals[low]:
        for i in range(low, high):
            vals[i] = vals[i + 1]
        vals[high - 1] = top


@jit
def jump_chain_path(zeta0, low, high, disp):
    """Iterate zeta <- sort(theta_V(sort(zeta + D))) for every step."""
    steps = low.shape[0]
    n = zeta0.shape[0]
    path = np.empty((steps + 1, n))
    cur = np.sort(zeta0)
    path[0, :] = cur
    for k in range(steps):
        for i in range(n):
            cur[i] += disp[k, i]
        _insertion_sort(cur)
        _theta_sorted(cur, low[k], high[k])
        path[k + 1, :] = cur
    return path


@jit
def coupled_path(za0, zb0, w, c, low, high, target, disp, disp_extra, record):
    """Run the N-system ``a`` and the (N+1)-system ``b`` on shared streams.

    Rank ``i`` of ``a`` is matched with rank ``i + 1`` of ``b`` and both receive
    ``disp[k, i]``; rank 0 of ``b`` is unmatched and moves by ``disp_extra[k]``.
    ``w[k]`` selects an N-system jump, ``c[k]`` whether ``b`` copies it on the
    shifted ranks, and ``target[k]`` is the rank the lowest ``b`` particle jumps
    to on extra events.  Returns the recorded paths (every ``record`` steps and
    the last one), the per-step minimum slack ``b[i+1] - a[i]`` and the number
    of violating steps.
    """
    steps = w.shape[0]
    n = za0.shape[0]
    a = np.sort(za0)
    b = np.sort(zb0)
    slack = np.empty(steps + 1)
    slack[0] = np.min(b[1:] - a)
    n_rec = steps // record + 1
    if steps % record != 0:
        n_rec += 1
    path_a = np.empty((n_rec, n))
    path_b = np.empty((n_rec, n + 1))
    rec_steps = np.empty(n_rec, dtype=np.int64)
    path_a[0, :] = a
    path_b[0, :] = b
    rec_steps[0] = 0
    r = 1
    violations = 0
    if slack[0] < 0.0:
        violations += 1
    for k in range(steps):
        b[0] += disp_extra[k]
        for i in range(n):
            a[i] += disp[k, i]
            b[i + 1] += disp[k, i]
        _insertion_sort(a)
        _insertion_sort(b)
        if w[k]:
            _theta_sorted(a, low[k], high[k])
            if c[k]:
                _theta_sorted(b, low[k] + 1, high[k] + 1)
            else:
                _theta_sorted(b, 0, high[k] + 1)
        else:
            _theta_sorted(b, 0, target[k])
        s = b[1] - a[0]
        for i in range(1, n):
            if b[i + 1] - a[i] < s:
                s = b[i + 1] - a[i]
        slack[k + 1] = s
        if s < 0.0:
            violations += 1
        if (k + 1) % record == 0 or k + 1 == steps:
            path_a[r, :] = a
            path_b[r, :] = b
            rec_steps[r] = k + 1
            r += 1
    return path_a[:r], path_b[:r], rec_steps[:r], slack, violations

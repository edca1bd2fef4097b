"""Finite-difference solver for u_t = u_xx / 2 + u^2 - u, fronts and waves.

Diffusion is Crank-Nicolson with Dirichlet ends held at the initial datum's end
values; the reaction (plus an optional forcing) is explicit second-order
Adams-Bashforth.  The first two steps are taken as four backward-Euler
half-steps (Rannacher start-up) so that step data does not excite the
undamped high-frequency modes of Crank-Nicolson.

Internally the solver evolves ``v = 1 - u``, which solves the textbook form
``v_t = v_xx / 2 + v - v^2``.  The unstable state is then ``v = 0``, which
linear solves keep exactly; in ``u`` it would be ``1``, where rounding errors
of order 1e-16 grow like ``e^t`` and trigger a spurious front by t ~ 35.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded

from frontlab.errors import ConvergenceError, InvalidArgumentError, NoMedianError, NoMonotoneWaveError, SchemeError

SQRT2 = math.sqrt(2.0)
RANGE_TOL = 1e-9
MONO_TOL = 1e-12
BOUNDARY_TOL = 1e-8


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    m: int
    dt: float
    T: float

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise InvalidArgumentError("need x_min < x_max")
        if self.m < 3:
            raise InvalidArgumentError("need at least 3 nodes")
        if not self.dt > 0:
            raise InvalidArgumentError("dt must be positive")
        if not self.T >= 0:
            raise InvalidArgumentError("T must be nonnegative")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.m - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.m)

    @classmethod
    def auto(cls, T: float, center: float = 0.0, dx: float = 0.02, dt: float = 0.01, margin: float = 10.0) -> "Grid1D":
        """Domain ``center +- (margin + 1.5 sqrt(2) T)`` with a node on ``center``."""
        half_nodes = int(math.ceil((margin + 1.5 * SQRT2 * T) / dx))
        return cls(center - half_nodes * dx, center + half_nodes * dx, 2 * half_nodes + 1, dt, T)

    def refined(self, factor: int = 2) -> "Grid1D":
        return Grid1D(self.x_min, self.x_max, factor * (self.m - 1) + 1, self.dt, self.T)

    def with_dt(self, dt: float) -> "Grid1D":
        return Grid1D(self.x_min, self.x_max, self.m, dt, self.T)

    def check_accuracy_guard(self):
        if self.dt > self.dx:
            raise InvalidArgumentError(f"accuracy guard: dt={self.dt:g} exceeds dx={self.dx:g}; reduce dt or coarsen the grid")


@dataclass(frozen=True, eq=False)
class GridFunction:
    values: np.ndarray
    time: float
    grid: Grid1D

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def __call__(self, x):
        """Piecewise-linear interpolant, constant beyond the grid ends."""
        return np.interp(x, self.grid.x, self.values)

    def is_monotone(self, tol: float = MONO_TOL) -> bool:
        return bool(np.all(np.diff(self.values) >= -tol))


# initial profiles ---------------------------------------------------------


def heaviside(at: float = 0.0, jump_value: float = 1.0) -> Callable:
    """``1{x >= at}``, with ``jump_value`` on a node that sits on the jump.

    The default keeps the CDF right-continuous.  Sampling with ``0.5`` puts the
    discrete jump midway between nodes, which is what a second-order spatial
    discretisation of a step needs.
    """

    def profile(x):
        x = np.asarray(x, dtype=float)
        scale = max(1.0, abs(at))
        on_jump = np.abs(x - at) <= 1e-9 * scale
        return np.where(on_jump, jump_value, (x > at).astype(float))

    return profile


def on_grid(profile: Callable, grid: Grid1D, time: float = 0.0) -> GridFunction:
    return GridFunction(np.asarray(profile(grid.x), dtype=float), time, grid)


# solver -------------------------------------------------------------------


def _tridiag(m_int: int, theta: float, r: float) -> np.ndarray:
    ab = np.empty((3, m_int))
    ab[0, :] = -theta * r
    ab[1, :] = 1.0 + 2.0 * theta * r
    ab[2, :] = -theta * r
    ab[0, 0] = 0.0
    ab[2, -1] = 0.0
    return ab


def _logistic_flow(v: np.ndarray, h: float) -> np.ndarray:
    # exact flow of v' = v - v^2
    e = math.exp(h)
    return v * e / (1.0 - v + v * e)


def _step_indices(times: Sequence[float], dt: float) -> list[int]:
    out = []
    for t in times:
        k = int(round(t / dt))
        if abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
            raise InvalidArgumentError(f"snapshot time {t} is not a multiple of dt={dt}")
        out.append(k)
    return out


def solve_fkpp(
    u0: GridFunction,
    grid: Grid1D | None = None,
    times: Sequence[float] | None = None,
    forcing: Callable | None = None,
    strang: bool = False,
    rannacher_steps: int = 4,
) -> list[GridFunction]:
    """Evolve ``u0`` and return snapshots at ``times`` (default ``[0, grid.T]``).

    ``forcing(x, t)`` adds a source term (the perturbed equation); without it
    the solution is a CDF and range and monotonicity are asserted at every
    step/snapshot.

    Raises
    ------
    InvalidArgumentError
        if ``dt > dx``, ``u0`` is not monotone, or values leave [0, 1] for the
        unforced problem.
    SchemeError
        if the discrete solution breaks range or monotonicity.
    """
    grid = u0.grid if grid is None else grid
    if u0.values.shape != (grid.m,):
        raise InvalidArgumentError("u0 does not live on the grid")
    grid.check_accuracy_guard()
    u = np.array(u0.values, dtype=float)
    if not np.all(np.isfinite(u)):
        raise InvalidArgumentError("u0 must be finite")
    if not np.all(np.diff(u) >= -MONO_TOL):
        raise InvalidArgumentError("u0 must be nondecreasing (a discrete CDF profile)")
    unforced = forcing is None
    if unforced and (u.min() < 0.0 or u.max() > 1.0):
        raise InvalidArgumentError("u0 must take values in [0, 1]")
    if strang and not unforced:
        raise InvalidArgumentError("Strang splitting is only available without forcing")

    times = [0.0, grid.T] if times is None else sorted(float(t) for t in times)
    if times and (times[0] < 0 or times[-1] > grid.T + 1e-12):
        raise InvalidArgumentError("snapshot times must lie in [0, T]")
    targets = _step_indices(times, grid.dt)
    last_step = max(targets, default=0)

    x = grid.x
    dt = grid.dt
    r_full = 0.5 * dt / grid.dx**2
    r_half = 0.5 * r_full
    m_int = grid.m - 2
    ab_cn = _tridiag(m_int, 0.5, r_full)
    ab_be = _tridiag(m_int, 1.0, r_half)
    v = 1.0 - u
    left, right = v[0], v[-1]

    def source(v, t):
        s = v - v * v
        if forcing is not None:
            s = s - np.asarray(forcing(x, t), dtype=float)
        return s

    def diffuse(v, theta, r, h, src, ab):
        # work with the offset from the right end value so constant states
        # (both fixed points) pass through the linear solve exactly
        d = v - right
        rhs = d[1:-1] + (1.0 - theta) * r * (d[2:] - 2.0 * d[1:-1] + d[:-2])
        if src is not None:
            rhs = rhs + h * src[1:-1]
        rhs[0] += theta * r * (left - right)
        out = np.empty_like(v)
        out[0], out[-1] = left, right
        out[1:-1] = solve_banded((1, 1), ab, rhs, check_finite=False) + right
        return out

    def check_range(v, t):
        if not unforced:
            return v
        lo, hi = v.min(), v.max()
        if lo < -RANGE_TOL or hi > 1.0 + RANGE_TOL:
            raise SchemeError(f"solution left [0, 1] at t={t:g}: min={lo:.3e}, max={hi:.3e}")
        return np.clip(v, 0.0, 1.0)

    snaps: dict[int, np.ndarray] = {}
    wanted = set(targets)
    if 0 in wanted:
        snaps[0] = u.copy()
    n_start = min(rannacher_steps // 2, last_step)
    s_prev = None
    for k in range(last_step):
        t = k * dt
        if k < n_start:
            h = dt / 2
            s_prev = None if strang else source(v, t)
            for half in range(2):
                th = t + half * h
                if strang:
                    v = _logistic_flow(v, h / 2)
                    v = diffuse(v, 1.0, r_half, h, None, ab_be)
                    v = _logistic_flow(v, h / 2)
                else:
                    v = diffuse(v, 1.0, r_half, h, source(v, th), ab_be)
                v = check_range(v, th + h)
        elif strang:
            v = _logistic_flow(v, dt / 2)
            v = diffuse(v, 0.5, r_full, dt, None, ab_cn)
            v = _logistic_flow(v, dt / 2)
            v = check_range(v, t + dt)
        else:
            s_now = source(v, t)
            src = s_now if s_prev is None else 1.5 * s_now - 0.5 * s_prev
            s_prev = s_now
            v = check_range(diffuse(v, 0.5, r_full, dt, src, ab_cn), t + dt)
        if k + 1 in wanted:
            snaps[k + 1] = 1.0 - v

    out = []
    for t, k in zip(times, targets):
        g = GridFunction(snaps[k], k * dt, grid)
        if unforced and not g.is_monotone():
            raise SchemeError(f"monotonicity lost at t={k * dt:g}")
        out.append(g)

    if unforced and left == 1.0 and right == 0.0 and out:
        final = out[-1].values
        edge = max(final[1], 1.0 - final[-2])
        if edge > BOUNDARY_TOL:
            warnings.warn(f"front reached the domain edge (deviation {edge:.2e}); widen the grid", RuntimeWarning, stacklevel=2)
    return out


def snapshots_csv(snaps: Sequence[GridFunction]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x", "u"])
    for g in snaps:
        t = repr(float(g.time))
        for xv, uv in zip(g.x.tolist(), g.values.tolist()):
            w.writerow([t, repr(xv), repr(uv)])
    return buf.getvalue()


# Richardson ---------------------------------------------------------------


def solve_profile(profile: Callable, grid: Grid1D, times: Sequence[float], **kw) -> list[GridFunction]:
    return solve_fkpp(on_grid(profile, grid), grid, times, **kw)


def richardson_solve(profile: Callable, grid: Grid1D, times: Sequence[float], **kw) -> list[GridFunction]:
    """Spatial Richardson extrapolation ``(4 u_{dx/2} - u_dx) / 3`` on the coarse nodes."""
    coarse = solve_profile(profile, grid, times, **kw)
    fine = solve_profile(profile, grid.refined(), times, **kw)
    out = []
    for c, f in zip(coarse, fine):
        vals = (4.0 * f.values[::2] - c.values) / 3.0
        out.append(GridFunction(np.clip(vals, 0.0, 1.0), c.time, grid))
    return out


def spatial_order(profile: Callable, grid: Grid1D, t: float, **kw) -> float:
    """Observed order from three nested grids (dx, dx/2, dx/4), same dt."""
    levels = [grid, grid.refined(2), grid.refined(4)]
    sols = [solve_profile(profile, g, [t], **kw)[-1].values for g in levels]
    e1 = np.max(np.abs(sols[0] - sols[1][::2]))
    e2 = np.max(np.abs(sols[1][::2] - sols[2][::4]))
    return math.log2(e1 / e2)


# median -------------------------------------------------------------------


def median(u: GridFunction, level: float = 0.5) -> float:
    """Linear-interpolated crossing of ``level`` by a nondecreasing profile."""
    v = u.values
    x = u.grid.x
    if not (v[0] < level <= v[-1]):
        raise NoMedianError(f"profile does not cross {level} inside the grid (ends {v[0]:.3g}, {v[-1]:.3g})")
    k = int(np.argmax(v >= level))
    x0, x1, v0, v1 = x[k - 1], x[k], v[k - 1], v[k]
    return float(x0 + (level - v0) * (x1 - x0) / (v1 - v0))


# traveling wave -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WaveProfile:
    x: np.ndarray
    values: np.ndarray
    speed: float
    x0: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, x):
        return np.interp(x, self.x, self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "w"])
        for a, b in zip(self.x.tolist(), self.values.tolist()):
            w.writerow([repr(a), repr(b)])
        return buf.getvalue()


def wave_residual(x: np.ndarray, w: np.ndarray, c: float) -> np.ndarray:
    """Central-difference residual of w''/2 + c w' + w^2 - w at interior nodes."""
    h = x[1] - x[0]
    d2 = (w[2:] - 2.0 * w[1:-1] + w[:-2]) / h**2
    d1 = (w[2:] - w[:-2]) / (2.0 * h)
    return 0.5 * d2 + c * d1 + w[1:-1] ** 2 - w[1:-1]


def wave_integral(x: np.ndarray, w: np.ndarray) -> float:
    """Trapezoid rule for the integral of w (1 - w)."""
    return float(np.trapezoid(w * (1.0 - w), x))


def solve_traveling_wave(
    c: float = SQRT2,
    tol: float = 1e-4,
    dx: float = 0.01,
    x_range: tuple[float, float] | None = None,
    edge: float = 1e-10,
) -> WaveProfile:
    """Monotone front ``w`` with ``u(x, t) = w(x - c t)``, normalised by ``w(0) = 1/2``.

    The front is the unique trajectory leaving the saddle ``w = 0`` along its
    unstable direction ``exp(lam x)``, ``lam = -c + sqrt(c^2 + 2)``; it is
    integrated towards the stable node ``w = 1`` and then shifted.  By default
    the grid spans the stretch where ``edge < w < 1 - edge``.  An explicit
    ``x_range`` is filled with the linearised tails outside that stretch.
    """
    if c < SQRT2 * (1 - 1e-12):
        raise NoMonotoneWaveError(f"c={c} < sqrt(2): no monotone front exists")
    if not (0 < edge < 1e-6 and dx > 0):
        raise InvalidArgumentError("need 0 < edge < 1e-6 and dx > 0")
    lam = -c + math.sqrt(c * c + 2.0)
    mu = -c + math.sqrt(max(c * c - 2.0, 0.0))  # slowest decay of 1 - w

    def rhs(s, y):
        w, p = y
        return [p, 2.0 * (w - w * w - c * p)]

    def reach_half(s, y):
        return y[0] - 0.5

    def done(s, y):
        return y[0] - (1.0 - edge)

    def turned(s, y):
        return y[1]

    done.terminal = True
    turned.terminal = True
    turned.direction = -1
    reach_half.direction = 1

    # the approach to 1 is slow when c is large, the departure from 0 when c is small
    s_max = 100.0 + 30.0 / lam + 30.0 / abs(mu)
    sol = solve_ivp(
        rhs,
        (0.0, s_max),
        [edge, lam * edge],
        method="DOP853",
        rtol=1e-12,
        atol=1e-15,
        dense_output=True,
        events=(reach_half, done, turned),
    )
    diag = {"lam": lam, "status": sol.status, "message": sol.message, "nfev": sol.nfev}
    if not sol.success:
        raise ConvergenceError("wave integration failed", diag)
    if sol.t_events[2].size:
        raise ConvergenceError("trajectory turned back before reaching w = 1 (non-monotone)", diag)
    if sol.t_events[0].size == 0 or sol.t_events[1].size == 0:
        raise ConvergenceError("trajectory never crossed w = 1/2 and w = 1 - edge", diag)
    s_half = float(sol.t_events[0][0])
    s_end = float(sol.t_events[1][0])
    w_end = float(sol.y_events[1][0][0])
    diag.update(s_half=s_half, s_end=s_end, w_end=w_end)

    if x_range is None:
        lo = -math.floor(s_half / dx) * dx
        hi = math.floor((s_end - s_half) / dx) * dx
    else:
        lo, hi = x_range
        if not lo < 0.0 < hi:
            raise InvalidArgumentError("x_range must contain the normalisation point 0")
    n_nodes = int(round((hi - lo) / dx)) + 1
    x = lo + dx * np.arange(n_nodes)
    s = x + s_half
    w = np.empty_like(x)
    left = s < 0.0
    right = s > s_end
    mid = ~(left | right)
    w[left] = edge * np.exp(lam * s[left])
    w[mid] = sol.sol(s[mid])[0]
    w[right] = 1.0 - (1.0 - w_end) * np.exp(mu * (s[right] - s_end))

    if not (w[0] < 1e-6 and 1.0 - w[-1] < 1e-6):
        raise ConvergenceError(f"grid too short: end values {w[0]:.2e}, {w[-1]:.8f}", diag)
    # beyond 1 - 1e-12 neighbouring values may round to the same double
    active = w < 1.0 - 1e-12
    if np.any(np.diff(w)[active[:-1]] <= 0):
        raise ConvergenceError("profile is not strictly increasing", diag)
    res = np.max(np.abs(wave_residual(x, w, c)))
    diag["max_residual"] = float(res)
    if res > tol:
        raise ConvergenceError(f"discrete wave residual {res:.2e} exceeds tol={tol:g}", diag)
    return WaveProfile(x, w, float(c), 0.0, diag)


def front_distance(u: GridFunction, wave: WaveProfile) -> float:
    """sup |u(. + m(t), t) - w| over the wave grid."""
    m = median(u)
    return float(np.max(np.abs(u(wave.x + m) - wave.values)))


# perturbation bound ---------------------------------------------------------


@dataclass(frozen=True)
class PerturbationReport:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    C: float
    tol: float

    @property
    def slack(self) -> np.ndarray:
        return self.rhs + self.tol - self.lhs

    @property
    def holds(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs + self.tol))


def perturbation_bound_check(
    u_run: Sequence[GridFunction],
    w_run: Sequence[GridFunction],
    g: Callable | None,
    tol: float = 0.0,
) -> PerturbationReport:
    """Compare ``||u - w||`` with ``(||u0 - w0|| + int_0^t e^{-s} ||g(s)|| ds) e^{C t}``.

    ``C = max(||g|| T + ||w0||, 1)`` with ``T`` the grid horizon.  Both runs must
    share grid and snapshot times and start at time 0.
    """
    if len(u_run) != len(w_run) or not u_run:
        raise InvalidArgumentError("runs must have the same, nonzero number of snapshots")
    grid = u_run[0].grid
    for a, b in zip(u_run, w_run):
        if a.grid != grid or b.grid != grid:
            raise InvalidArgumentError("runs live on mismatched grids")
        if a.time != b.time:
            raise InvalidArgumentError("runs have mismatched snapshot times")
    if u_run[0].time != 0.0:
        raise InvalidArgumentError("first snapshot must be the initial datum")

    x = grid.x
    s = grid.dt * np.arange(int(round(grid.T / grid.dt)) + 1)
    if g is None:
        gnorm = np.zeros_like(s)
    else:
        gnorm = np.array([np.max(np.abs(np.asarray(g(x, si), dtype=float))) for si in s])
    w0 = w_run[0].values
    C = max(float(gnorm.max()) * grid.T + float(np.max(np.abs(w0))), 1.0)
    integrand = np.exp(-s) * gnorm
    cumulative = np.concatenate(([0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(s))))
    d0 = float(np.max(np.abs(u_run[0].values - w0)))
    times = np.array([a.time for a in u_run])
    lhs = np.array([np.max(np.abs(a.values - b.values)) for a, b in zip(u_run, w_run)])
    integral = np.interp(times, s, cumulative)
    rhs = (d0 + integral) * np.exp(C * times)
    return PerturbationReport(times, lhs, rhs, C, tol)

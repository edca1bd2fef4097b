"""The jump chain observed at jump times, the N / N+1 monotone coupling, spacing
domination, and the branching Brownian motion embedding."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from frontlab import kernels, rng as rngmod
from frontlab.core import Configuration, SpacingConfiguration, theta_ranks
from frontlab.engine import SimParams, simulate
from frontlab.errors import InvalidArgumentError, ResourceError
from frontlab.observables import VelocityEstimate, velocity_from_series
from frontlab.parallel import map_replicas

VARIANTS = ("rate_corrected", "literal")
BBM_CAP = 10_000_000


# jump chain ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JumpChainState:
    zeta: np.ndarray
    k: int = 0

    def __post_init__(self):
        z = np.array(self.zeta, dtype=float)
        if np.any(np.diff(z) < 0):
            raise InvalidArgumentError("zeta must be sorted")
        object.__setattr__(self, "zeta", z)

    @property
    def n(self) -> int:
        return int(self.zeta.size)


def jump_chain_step(state: JumpChainState, V: tuple, D) -> JumpChainState:
    """``sort(theta_V(sort(zeta + D)))`` with 1-based ranks ``V = (V1, V2)``, ``V1 < V2``."""
    D = np.asarray(D, dtype=float)
    if D.shape != state.zeta.shape:
        raise InvalidArgumentError("displacement block has the wrong size")
    moved = np.sort(state.zeta + D)
    return JumpChainState(theta_ranks(moved, int(V[0]), int(V[1])), state.k + 1)


def sample_rank_pairs(n: int, size: int, gen: np.random.Generator):
    """Uniform unordered rank pairs, returned 0-based as (low, high)."""
    a = gen.integers(0, n, size=size, dtype=np.int64)
    b = gen.integers(0, n - 1, size=size, dtype=np.int64)
    b += b >= a
    return np.minimum(a, b), np.maximum(a, b)


def _displacements(rate: float, steps: int, width: int, clocks, brownian):
    waits = clocks.exponential(1.0 / rate, size=steps)
    disp = np.sqrt(waits)[:, None] * brownian.standard_normal((steps, width))
    return waits, disp


@dataclass(frozen=True, eq=False)
class JumpChainPath:
    zeta: np.ndarray  # (steps + 1, n)
    times: np.ndarray  # event times, times[0] = 0


def run_jump_chain(zeta0, steps: int, seed: int, replica: int = 0) -> JumpChainPath:
    """``steps`` jumps of the chain; events arrive at rate ``n / 2`` as in the pair-clock scheme."""
    zeta0 = np.sort(np.asarray(zeta0, dtype=float))
    n = zeta0.size
    if n < 2:
        raise InvalidArgumentError("n >= 2 required")
    s = rngmod.streams(seed, replica)
    low, high = sample_rank_pairs(n, steps, s["partners"])
    waits, disp = _displacements(0.5 * n, steps, n, s["clocks"], s["brownian"])
    path = kernels.jump_chain_path(zeta0, low, high, disp)
    return JumpChainPath(path, np.concatenate(([0.0], np.cumsum(waits))))


# N / N+1 coupling ---------------------------------------------------------


def coupling_rates(n: int, variant: str = "rate_corrected"):
    """Return ``(lambda_N, lambda_plus, target_probs)``; targets are 1-based ranks 2..N+1."""
    if n < 2:
        raise InvalidArgumentError("n >= 2 required")
    m = np.arange(2, n + 2)
    if variant == "rate_corrected":
        # per-pair rate 1/N in the (N+1)-system: the extra rank-1 jumps must
        # supply (N + 1 - m) / (N (N - 1)) to target m
        w = (n + 1 - m).astype(float)
        return 0.5 * n, 0.5, w / w.sum()
    if variant == "literal":
        lam_plus = 1.0 - 1.0 / (n - 1) if n > 2 else 0.0
        return 0.5 * n, lam_plus, np.full(m.size, 1.0 / m.size)
    raise InvalidArgumentError(f"unknown coupling variant {variant!r}; expected one of {VARIANTS}")


@dataclass(frozen=True, eq=False)
class CouplingStreams:
    waits: np.ndarray
    low: np.ndarray
    high: np.ndarray
    w: np.ndarray
    c: np.ndarray
    target: np.ndarray  # 0-based rank in the (N+1)-system
    disp: np.ndarray
    disp_extra: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.waits)))


def coupling_streams(n: int, steps: int, seed: int, replica: int = 0, variant: str = "rate_corrected") -> CouplingStreams:
    lam_n, lam_plus, probs = coupling_rates(n, variant)
    s = rngmod.streams(seed, replica)
    waits = s["clocks"].exponential(1.0 / (lam_n + lam_plus), size=steps)
    low, high = sample_rank_pairs(n, steps, s["partners"])
    coins = s["coins"].uniform(size=(steps, 2))
    w = coins[:, 0] < lam_n / (lam_n + lam_plus)
    c = coins[:, 1] >= 1.0 / n
    target = s["extra"].choice(np.arange(1, n + 1), size=steps, p=probs).astype(np.int64)
    gauss = s["brownian"].standard_normal((steps, n + 1))
    root = np.sqrt(waits)
    return CouplingStreams(waits, low, high, w, c, target, root[:, None] * gauss[:, 1:], root * gauss[:, 0])


@dataclass(frozen=True, eq=False)
class CoupledRun:
    n: int
    variant: str
    steps: np.ndarray  # recorded step indices
    times: np.ndarray  # event times at the recorded steps
    zeta_n: np.ndarray
    zeta_n1: np.ndarray
    min_slack: np.ndarray  # per step, min_i zeta_{N+1}[i+1] - zeta_N[i]
    violations: int

    @property
    def holds(self) -> np.ndarray:
        return self.min_slack >= 0.0

    def dominance_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["step", "holds", "min_slack"])
        for k, s in enumerate(self.min_slack.tolist()):
            wr.writerow([k, int(s >= 0.0), repr(s)])
        return buf.getvalue()

    def velocities(self, burn_in: float | None = None, batches: int = 20) -> tuple[VelocityEstimate, VelocityEstimate]:
        if burn_in is None:
            burn_in = min(20.0 * (self.n + 1), 0.25 * self.times[-1])
        a = velocity_from_series(self.times, self.zeta_n.mean(axis=1), burn_in, batches=batches)
        b = velocity_from_series(self.times, self.zeta_n1.mean(axis=1), burn_in, batches=batches)
        return a, b


def couple_adjacent_sizes(
    n: int,
    steps: int,
    seed: int,
    variant: str = "rate_corrected",
    zeta_n0=None,
    zeta_n10=None,
    replica: int = 0,
    record: int = 1,
) -> CoupledRun:
    """Run the N- and (N+1)-systems on shared streams and check rank dominance."""
    za = np.zeros(n) if zeta_n0 is None else np.sort(np.asarray(zeta_n0, dtype=float))
    zb = np.zeros(n + 1) if zeta_n10 is None else np.sort(np.asarray(zeta_n10, dtype=float))
    if za.size != n or zb.size != n + 1:
        raise InvalidArgumentError("initial configurations must have sizes N and N+1")
    if np.any(zb[1:] < za):
        raise InvalidArgumentError("initial order violated: need zeta_{N+1}[i+1] >= zeta_N[i]")
    st = coupling_streams(n, steps, seed, replica, variant)
    pa, pb, rec, slack, viol = kernels.coupled_path(za, zb, st.w, st.c, st.low, st.high, st.target, st.disp, st.disp_extra, record)
    return CoupledRun(n, variant, rec, st.times[rec], pa, pb, slack, int(viol))


def _coupled_at_time(args):
    n, t, seed, variant, replica = args
    lam_n, lam_plus, _ = coupling_rates(n, variant)
    rate = lam_n + lam_plus
    # enough events to pass t with overwhelming probability; regenerate if not
    steps = int(rate * t + 10 * math.sqrt(rate * t + 1) + 20)
    while True:
        st = coupling_streams(n, steps, seed, replica, variant)
        times = st.times
        if times[-1] > t:
            break
        steps *= 2
    k = int(np.searchsorted(times, t, side="right")) - 1
    _, pb, *_ = kernels.coupled_path(
        np.zeros(n), np.zeros(n + 1), st.w[:k], st.c[:k], st.low[:k], st.high[:k], st.target[:k], st.disp[:k], st.disp_extra[:k], max(k, 1)
    )
    gen = rngmod.substream(seed, replica, "initial")
    return np.sort(pb[-1] + math.sqrt(t - times[k]) * gen.standard_normal(n + 1))


def _direct_at_time(args):
    n, t, seed, replica = args
    traj = simulate(SimParams(n=n, horizon=t, observation_times=(t,), seed=seed), replica=replica)
    return np.sort(traj.positions[-1])


@dataclass(frozen=True)
class MarginalReport:
    n: int
    t: float
    replicas: int
    variant: str
    ks_min: float
    p_min: float
    ks_max: float
    p_max: float
    alpha: float = 0.01

    @property
    def passed(self) -> bool:
        return self.p_min > self.alpha and self.p_max > self.alpha


def validate_coupling_marginal(n: int, t: float, replicas: int, seed: int, variants=VARIANTS, jobs: int = 1) -> list[MarginalReport]:
    """KS comparison of ``zeta_{N+1}[1]`` and ``zeta_{N+1}[N+1]`` at time ``t``
    under the coupling against a directly simulated (N+1)-particle system."""
    if replicas < 500:
        raise InvalidArgumentError(f"replicas={replicas} < 500")
    direct = np.array(map_replicas(_direct_at_time, [(n + 1, t, seed, replicas * 10 + r) for r in range(replicas)], jobs))
    out = []
    for variant in variants:
        coupled = np.array(map_replicas(_coupled_at_time, [(n, t, seed, variant, r) for r in range(replicas)], jobs))
        lo = stats.ks_2samp(coupled[:, 0], direct[:, 0])
        hi = stats.ks_2samp(coupled[:, -1], direct[:, -1])
        out.append(MarginalReport(n, float(t), replicas, variant, float(lo.statistic), float(lo.pvalue), float(hi.statistic), float(hi.pvalue)))
    return out


# spacing domination ------------------------------------------------------


def theta_gaps(gaps: np.ndarray, low: int, high: int) -> np.ndarray:
    """Gap vector after the rank-``low`` particle jumps onto rank ``high`` (0-based).

    Works on gaps directly: removing rank ``low`` merges its two adjacent gaps,
    duplicating rank ``high`` inserts a zero gap next to it.  Each new gap is a
    sum of old ones, so domination survives exactly in floating point.
    """
    g = list(gaps)
    if low == 0:
        g = g[1:]
    else:
        g = g[: low - 1] + [g[low - 1] + g[low]] + g[low + 1 :]
    # rank `high` is now rank high - 1; its duplicate sits just above it
    g = g[: high - 1] + [0.0] + g[high - 1 :]
    return np.array(g)


@dataclass(frozen=True)
class DominationReport:
    n: int
    t: float
    replicas: int
    mean_a: dict
    mean_b: dict
    se_diff: dict
    jump_step_cases: int
    jump_step_failures: int
    sigmas: float = 3.0

    @property
    def ordered(self) -> bool:
        return all(np.all(self.mean_b[k] - self.mean_a[k] >= -self.sigmas * self.se_diff[k]) for k in self.mean_a)

    @property
    def passed(self) -> bool:
        return self.ordered and self.jump_step_failures == 0


TEST_FUNCTIONS = {
    "identity": lambda g: g,
    "min1": lambda g: np.minimum(g, 1.0),
    "exceeds_half": lambda g: (g > 0.5).astype(float),
}


def jump_step_check(n: int, cases: int, seed: int) -> int:
    """Count random dominated gap pairs whose domination a shared jump breaks."""
    gen = rngmod.substream(seed, 0, "extra")
    failures = 0
    for _ in range(cases):
        ga = gen.exponential(1.0, size=n - 1) * (gen.uniform(size=n - 1) < 0.8)
        gb = ga + gen.exponential(1.0, size=n - 1) * (gen.uniform(size=n - 1) < 0.5)
        low, high = sorted(gen.choice(n, size=2, replace=False))
        if np.any(theta_gaps(ga, low, high) > theta_gaps(gb, low, high)):
            failures += 1
    return failures


def _domination_task(args):
    za, zb, t, seed, replica = args
    n = za.size
    s = rngmod.streams(seed, replica)
    count = int(s["clocks"].poisson(0.5 * n * t))
    times = np.sort(s["clocks"].uniform(0.0, t, size=count))
    waits = np.diff(np.concatenate(([0.0], times)))
    low, high = sample_rank_pairs(n, count, s["partners"])
    disp = np.sqrt(waits)[:, None] * s["brownian"].standard_normal((count, n))
    final = math.sqrt(t - (times[-1] if count else 0.0)) * s["brownian"].standard_normal(n)
    out = []
    for z0 in (za, zb):
        path = kernels.jump_chain_path(z0, low, high, disp)
        out.append(np.diff(np.sort(path[-1] + final)))
    return out


def spacing_domination_test(config_a: Configuration, config_b: Configuration, t: float, replicas: int, seed: int, jump_cases: int = 100_000, jobs: int = 1) -> DominationReport:
    """Shared-stream comparison of gap laws plus the exact jump-step check.

    Both systems see the same event times, rank pairs and rank-indexed
    displacements.  The diffusion step is compared only in law.
    """
    sa = SpacingConfiguration(np.diff(np.sort(config_a.positions)))
    sb = SpacingConfiguration(np.diff(np.sort(config_b.positions)))
    if sa.n != sb.n:
        raise InvalidArgumentError("configurations differ in size")
    if not sa.dominated_by(sb):
        raise InvalidArgumentError("gaps of config_b must dominate those of config_a")
    za = np.sort(config_a.positions)
    zb = np.sort(config_b.positions)
    res = map_replicas(_domination_task, [(za, zb, t, seed, r) for r in range(replicas)], jobs)
    ga = np.array([r[0] for r in res])
    gb = np.array([r[1] for r in res])
    mean_a, mean_b, se = {}, {}, {}
    for name, phi in TEST_FUNCTIONS.items():
        fa, fb = phi(ga), phi(gb)
        mean_a[name] = fa.mean(axis=0)
        mean_b[name] = fb.mean(axis=0)
        se[name] = (fb - fa).std(axis=0, ddof=1) / math.sqrt(replicas)
    fails = jump_step_check(sa.n, jump_cases, seed) if jump_cases else 0
    return DominationReport(sa.n, float(t), replicas, mean_a, mean_b, se, jump_cases, fails)


# branching Brownian motion ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class BbmForest:
    obs_times: np.ndarray
    maxima: np.ndarray  # (trees, obs) maximum M^j_t
    population: np.ndarray  # (trees, obs) living particles
    n_particles: int  # particles ever created


def _bbm_tree(T: float, obs: np.ndarray, gen: np.random.Generator, budget: int):
    """One binary BBM tree, simulated generation by generation."""
    maxima = np.full(obs.size, -np.inf)
    pop = np.zeros(obs.size, dtype=np.int64)
    birth = np.zeros(1)
    x = np.zeros(1)
    created = 1
    while birth.size:
        death = birth + gen.exponential(1.0, size=birth.size)
        cur_t = birth.copy()
        for o, t in enumerate(obs):
            alive = (birth <= t) & (t < death)
            if not alive.any():
                continue
            x[alive] += np.sqrt(t - cur_t[alive]) * gen.standard_normal(int(alive.sum()))
            cur_t[alive] = t
            maxima[o] = max(maxima[o], x[alive].max())
            pop[o] += int(alive.sum())
        split = death < T
        x = x[split] + np.sqrt(death[split] - cur_t[split]) * gen.standard_normal(int(split.sum()))
        birth = np.repeat(death[split], 2)
        x = np.repeat(x, 2)
        created += birth.size
        if created > budget:
            raise ResourceError(f"BBM population exceeded the cap of {budget} particles")
    return maxima, pop, created


def bbm_simulate(n_trees: int, T: float, seed: int, obs_times=None, cap: int = BBM_CAP) -> BbmForest:
    """Independent binary branching Brownian motions (rate-1 branching), one stream per tree."""
    if not T > 0:
        raise InvalidArgumentError("T must be positive")
    if n_trees < 1:
        raise InvalidArgumentError("need at least one tree")
    obs = np.array([T] if obs_times is None else sorted(float(t) for t in obs_times))
    if obs[0] < 0 or obs[-1] > T:
        raise InvalidArgumentError("observation times must lie in [0, T]")
    maxima = np.empty((n_trees, obs.size))
    pop = np.empty((n_trees, obs.size), dtype=np.int64)
    total = 0
    for j in range(n_trees):
        gen = rngmod.substream(seed, j, "brownian")
        maxima[j], pop[j], made = _bbm_tree(T, obs, gen, cap - total)
        total += made
    return BbmForest(obs, maxima, pop, total)


@dataclass(frozen=True, eq=False)
class EmbeddingRun:
    n: int
    obs_times: np.ndarray
    selected: np.ndarray  # (obs, N) positions of the selected particles
    selected_labels: np.ndarray  # (obs, N)
    forest_max: np.ndarray  # (obs,) max over trees of M^j_t
    tree_max: np.ndarray  # (obs, N)
    n_particles: int
    replacements: int

    @property
    def top(self) -> np.ndarray:
        return self.selected.max(axis=1)

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(self.top > self.forest_max))


def rank_clock(k: int, n: int) -> float:
    """Acceptance probability ``alpha_k = (k - 1) / (N - 1)`` for a selected particle of rank ``k``."""
    return (k - 1) / (n - 1)


def bbm_embed(n: int, T: float, seed: int, obs_times=None, replica: int = 0, initial=None, cap: int = BBM_CAP) -> EmbeddingRun:
    """N independent BBM trees with the rank-clock label selection.

    Every living BBM particle branches at rate 1; the parent keeps its label
    and the child receives the next label ``N + i``.  When a selected particle
    of rank ``R`` branches and ``U_i < alpha_R``, a uniformly chosen selected
    particle of lower rank is replaced by the child.
    """
    if n < 2:
        raise InvalidArgumentError("n >= 2 required")
    if not T > 0:
        raise InvalidArgumentError("T must be positive")
    obs = np.array([T] if obs_times is None else sorted(float(t) for t in obs_times))
    s = rngmod.streams(seed, replica)
    x0 = np.zeros(n) if initial is None else np.asarray(initial, dtype=float)
    pos = list(x0)
    last = [0.0] * n
    tree = list(range(n))
    selected = list(range(n))  # L^j, 0-based labels
    is_selected = [True] * n
    alive = list(range(n))
    gauss = s["brownian"]

    def advance(lab, t):
        dt = t - last[lab]
        if dt > 0:
            pos[lab] += math.sqrt(dt) * gauss.standard_normal()
            last[lab] = t

    out_sel = np.empty((obs.size, n))
    out_lab = np.empty((obs.size, n), dtype=np.int64)
    tree_max = np.full((obs.size, n), -np.inf)
    replacements = 0
    t = 0.0
    o = 0
    while True:
        t_next = t + s["clocks"].exponential(1.0 / len(alive))
        while o < obs.size and obs[o] < t_next:
            to = obs[o]
            for lab in alive:
                advance(lab, to)
                tree_max[o, tree[lab]] = max(tree_max[o, tree[lab]], pos[lab])
            out_sel[o] = [pos[lab] for lab in selected]
            out_lab[o] = selected
            o += 1
        if t_next >= T:
            break
        t = t_next
        parent = alive[int(s["partners"].integers(len(alive)))]
        advance(parent, t)
        child = len(pos)
        pos.append(pos[parent])
        last.append(t)
        tree.append(tree[parent])
        is_selected.append(False)
        alive.append(child)
        if len(pos) > cap:
            raise ResourceError(f"BBM population exceeded the cap of {cap} particles")
        u = s["coins"].uniform()
        if is_selected[parent]:
            for lab in selected:
                advance(lab, t)
            # rank with ties broken by label, as for order statistics
            order = sorted(range(n), key=lambda j: (pos[selected[j]], selected[j]))
            r = order.index(selected.index(parent)) + 1
            if r > 1:
                d = int(s["extra"].integers(r - 1))
                if u < rank_clock(r, n):
                    slot = order[d]
                    is_selected[selected[slot]] = False
                    selected[slot] = child
                    is_selected[child] = True
                    replacements += 1
    return EmbeddingRun(n, obs, out_sel, out_lab + 1, tree_max.max(axis=1), tree_max, len(pos), replacements)


def _embed_task(args):
    n, t, seed, replica = args
    return np.sort(bbm_embed(n, t, seed, obs_times=[t], replica=replica).selected[-1])


@dataclass(frozen=True)
class EmbeddingMarginalReport:
    n: int
    t: float
    replicas: int
    ks_min: float
    p_min: float
    ks_max: float
    p_max: float
    alpha: float = 0.01

    @property
    def passed(self) -> bool:
        return self.p_min > self.alpha and self.p_max > self.alpha


def embedding_marginal_check(n: int, t: float, replicas: int, seed: int, jobs: int = 1) -> EmbeddingMarginalReport:
    emb = np.array(map_replicas(_embed_task, [(n, t, seed, r) for r in range(replicas)], jobs))
    direct = np.array(map_replicas(_direct_at_time, [(n, t, seed, replicas + r) for r in range(replicas)], jobs))
    lo = stats.ks_2samp(emb[:, 0], direct[:, 0])
    hi = stats.ks_2samp(emb[:, -1], direct[:, -1])
    return EmbeddingMarginalReport(n, float(t), replicas, float(lo.statistic), float(lo.pvalue), float(hi.statistic), float(hi.pvalue))

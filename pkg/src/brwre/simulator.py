"""Exact-count Monte Carlo of branching walks, with and without a frozen origin.

Particles at one site are exchangeable, so a site's branching step is a
single multinomial draw over the offspring support and the dispersal of the
offspring total is a multinomial draw over the step law. This aggregated
sampling is exact in distribution and survives population sizes that kill
per-particle simulation. Counts are 64-bit integers; a site whose count
would overflow the (configurable) cap is clamped and the run is marked
saturated. Bulk counts then become lower bounds, while origin tallies in
the transient regime stay effectively exact because the clamped mass sits
far from the origin.

Every replicate's randomness is a pure function of (master seed, replicate
index), so runs replay bitwise and replicates can be farmed out in any
order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError

COUNT_CAP_DEFAULT = 2 ** 63 - 1


@dataclass
class ParticleFront:
    """Exact per-site particle counts of one branching-walk state.

    ``counts`` maps occupied sites to active-particle counts (Python ints,
    so arbitrary precision at rest). ``frozen`` counts particles stopped at
    ``origin`` (frozen-origin mode only; origin None means the plain
    process). Active particles at the origin are legitimate only at time 0;
    afterwards arrivals freeze.
    """

    time: int
    counts: dict
    frozen: int = 0
    origin: tuple = None
    saturated: bool = False

    @property
    def total(self):
        return sum(self.counts.values()) + self.frozen


@dataclass
class NuEstimate:
    """Monte Carlo estimate of the expected frozen-origin tally."""

    mean: float
    std_error: float
    replicates: int
    saturated_runs: int
    horizon: int
    reliable: bool = True


@dataclass
class BmcStarResult:
    """One frozen-origin run: final tally plus a trace summary.

    ``front`` is populated only when the run was asked to keep it.
    """

    nu_observed: int
    horizon: int
    saturated: bool
    population: np.ndarray  # total particles after each step (float summary)
    front: ParticleFront = None


@dataclass
class GwObservation:
    """Generation sizes of the embedded return process from one run.

    ``z[r - 1]`` counts the particles that were the r-th in their ancestry
    line to return to the origin within the horizon.
    """

    z: np.ndarray
    truncated: bool


class _EnvTables:
    """Array form of a realized environment's law supports."""

    def __init__(self, env):
        spec = env.spec
        gen = spec.generator_set
        self.env = env
        self.d = gen.dimension
        self.steps = tuple(gen.steps)
        self.nsteps = len(self.steps)
        self.pad = gen.max_step_norm
        self.step_weights = [np.asarray(p.weights, dtype=float) for p in spec.step_laws()]
        self.step_cums = [np.cumsum(w) for w in self.step_weights]
        self.off_ks = [
            np.asarray([k for k, _ in mu.support], dtype=np.int64)
            for mu in spec.offspring_laws()
        ]
        self.off_ps = [
            np.asarray([w for _, w in mu.support], dtype=float)
            for mu in spec.offspring_laws()
        ]
        self.off_cums = [np.cumsum(p) for p in self.off_ps]
        self.kmax = max(int(ks.max()) for ks in self.off_ks)
        self.multi_step = len(self.step_weights) > 1
        self.multi_off = len(self.off_ks) > 1

    def safe_cap(self, cap):
        # Keep every intermediate (branch totals, per-site accumulation over
        # all steps) strictly inside int64.
        bound = (2 ** 63 - 1) // (self.kmax * self.nsteps)
        return min(int(cap), bound)


def _window_coords(lo, shape):
    axes = [np.arange(l, l + n, dtype=np.int64) for l, n in zip(lo, shape)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _trim(counts, lo):
    nz = np.nonzero(counts)
    if len(nz[0]) == 0:
        return np.zeros((0,) * counts.ndim, dtype=np.int64), lo
    slices = tuple(slice(int(a.min()), int(a.max()) + 1) for a in nz)
    new_lo = np.array([l + s.start for l, s in zip(lo, slices)], dtype=np.int64)
    return np.ascontiguousarray(counts[slices]), new_lo


def _advance(counts, lo, tables, rng, origin, cap_eff):
    """One exact branch-then-move step on a dense window.

    Returns (counts, lo, arrivals_at_origin, clamped). When ``origin`` is
    None arrivals are left in place (plain process); otherwise they are
    removed from the active counts and reported.
    """
    if counts.size == 0:
        return counts, lo, 0, False
    pad = tables.pad
    shape = counts.shape
    flat = counts.ravel()

    # Branching: offspring totals per site, one exact multinomial per law
    # (a two-point support reduces to a single binomial).
    def branch(n, ks, ps):
        if len(ks) == 1:
            return n * ks[0]
        if len(ks) == 2:
            hi = rng.binomial(n, ps[1])
            return n * ks[0] + hi * (ks[1] - ks[0])
        return rng.multinomial(n, ps) @ ks

    if tables.multi_off:
        coords = _window_coords(lo, shape)
        off_idx = tables.env.offspring_law_indices(coords)
        totals = np.zeros(flat.size, dtype=np.int64)
        for j, (ks, ps) in enumerate(zip(tables.off_ks, tables.off_ps)):
            sel = off_idx == j
            if not sel.any():
                continue
            t = branch(np.where(sel, flat, 0), ks, ps)
            totals[sel] = t[sel]
    else:
        totals = branch(flat, tables.off_ks[0], tables.off_ps[0])

    # Dispersal: multinomial split of each site's offspring over its step
    # law, accumulated by shifted slice adds on the padded window.
    new_shape = tuple(n + 2 * pad for n in shape)
    new_lo = lo - pad
    new = np.zeros(new_shape, dtype=np.int64)
    views = [
        tuple(slice(pad + c, n + pad + c) for n, c in zip(shape, s))
        for s in tables.steps
    ]
    if tables.multi_step:
        coords = _window_coords(lo, shape)
        step_idx = tables.env.step_law_indices(coords)
    for i, w in enumerate(tables.step_weights):
        n = totals if not tables.multi_step else np.where(step_idx == i, totals, 0)
        if tables.nsteps == 2:
            first = rng.binomial(n, w[0])
            new[views[0]] += first.reshape(shape)
            new[views[1]] += (n - first).reshape(shape)
        else:
            draws = rng.multinomial(n, w)  # (window, steps)
            for c, view in enumerate(views):
                new[view] += draws[:, c].reshape(shape)

    arrivals = 0
    if origin is not None:
        local = tuple(int(o - l) for o, l in zip(origin, new_lo))
        if all(0 <= c < n for c, n in zip(local, new_shape)):
            arrivals = int(new[local])
            new[local] = 0

    clamped = False
    over = new > cap_eff
    if over.any():
        new[over] = cap_eff
        clamped = True

    new, new_lo = _trim(new, new_lo)
    return new, new_lo, arrivals, clamped


def _dict_to_window(counts_dict, d, cap_eff):
    if not counts_dict:
        return np.zeros((0,) * d, dtype=np.int64), np.zeros(d, dtype=np.int64), False
    sites = np.asarray([tuple(s) for s in counts_dict], dtype=np.int64).reshape(-1, d)
    lo = sites.min(axis=0)
    hi = sites.max(axis=0)
    arr = np.zeros(tuple(hi - lo + 1), dtype=np.int64)
    clamped = False
    for site, c in counts_dict.items():
        c = int(c)
        if c < 0:
            raise PreconditionError(f"negative count at {site}")
        if c > cap_eff:
            c = cap_eff
            clamped = True
        arr[tuple(np.asarray(site, dtype=np.int64) - lo)] = c
    return arr, lo, clamped


def _window_to_dict(counts, lo):
    out = {}
    for idx in zip(*np.nonzero(counts)):
        site = tuple(int(l + i) for l, i in zip(lo, idx))
        out[site] = int(counts[idx])
    return out


def step_bmc(front, env, rng, cap=COUNT_CAP_DEFAULT):
    """Advance a ParticleFront by one exact branch-then-move step.

    With ``front.origin`` set, particles arriving at the origin join the
    frozen tally instead of the active counts.
    """
    tables = _EnvTables(env)
    cap_eff = tables.safe_cap(cap)
    counts, lo, clamped_in = _dict_to_window(front.counts, tables.d, cap_eff)
    counts, lo, arrivals, clamped = _advance(counts, lo, tables, rng, front.origin, cap_eff)
    return ParticleFront(
        time=front.time + 1,
        counts=_window_to_dict(counts, lo),
        frozen=front.frozen + arrivals,
        origin=front.origin,
        saturated=front.saturated or clamped_in or clamped,
    )


def _rng_for(master_seed, replicate=None):
    entropy = [int(master_seed)] if replicate is None else [int(master_seed), int(replicate)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _run_star(tables, x0, x_start, horizon, cap_eff, rng):
    x0 = tuple(x0)
    d = tables.d
    counts = np.ones((1,) * d, dtype=np.int64)
    lo = np.asarray(tuple(x_start), dtype=np.int64)
    frozen = 0
    saturated = False
    population = np.empty(horizon)
    for step in range(1, horizon + 1):
        if counts.size == 0:
            population[step - 1 :] = float(frozen)
            break
        counts, lo, arrivals, clamped = _advance(counts, lo, tables, rng, x0, cap_eff)
        frozen += arrivals
        saturated = saturated or clamped
        population[step - 1] = float(counts.sum(dtype=np.float64)) + frozen
    return BmcStarResult(
        nu_observed=frozen,
        horizon=horizon,
        saturated=saturated,
        population=population,
    )


def run_bmc_star(env, x0, x_start, horizon, cap=COUNT_CAP_DEFAULT, rng=None, seed=0):
    """Run the frozen-origin process and return the tally at the horizon.

    The first step is the plain process everywhere (the origin only starts
    freezing afterwards; since steps are nonzero this only matters for the
    starting particle, which branches normally even when started at the
    origin). The tally is monotone in the horizon and bounds the limiting
    frozen count from below.
    """
    if horizon < 1:
        raise PreconditionError("horizon must be >= 1")
    if rng is None:
        rng = _rng_for(seed)
    tables = _EnvTables(env)
    return _run_star(tables, x0, x_start, horizon, tables.safe_cap(cap), rng)


def estimate_nu(env, x0, x_start, replicates, horizon, cap=COUNT_CAP_DEFAULT, master_seed=0):
    """Sample mean and standard error of the frozen tally over replicates.

    Saturated replicates are counted and reported; their tallies still enter
    the mean (saturation clamps bulk counts far from the origin, so the
    origin tally is unaffected in the transient regime). The estimate is
    flagged unreliable when more than 1% of runs saturate.
    """
    if replicates < 1:
        raise PreconditionError("replicates must be >= 1")
    tables = _EnvTables(env)
    cap_eff = tables.safe_cap(cap)
    values = np.empty(replicates)
    saturated_runs = 0
    for i in range(replicates):
        res = _run_star(tables, x0, x_start, horizon, cap_eff, _rng_for(master_seed, i))
        values[i] = res.nu_observed
        saturated_runs += res.saturated
    mean = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(replicates)) if replicates > 1 else 0.0
    return NuEstimate(
        mean=mean,
        std_error=se,
        replicates=replicates,
        saturated_runs=saturated_runs,
        horizon=horizon,
        reliable=saturated_runs <= 0.01 * replicates,
    )


def replicate_records(env, x0, x_start, replicates, horizon, cap=COUNT_CAP_DEFAULT, master_seed=0):
    """Per-replicate (index, nu_observed, saturated) records, index-ordered."""
    tables = _EnvTables(env)
    cap_eff = tables.safe_cap(cap)
    out = []
    for i in range(replicates):
        res = _run_star(tables, x0, x_start, horizon, cap_eff, _rng_for(master_seed, i))
        out.append({"replicate": i, "nu_observed": res.nu_observed,
                    "saturated": res.saturated, "horizon": horizon})
    return out


def gw_return_process(env, x0, generations, per_particle_cap, horizon,
                      rng=None, seed=0):
    """Generation sizes of the embedded return process, per-particle mode.

    Tracks every particle's count of ancestry-line returns to the origin;
    an arrival whose running count reaches r contributes to generation r.
    Lineages whose count already reached ``generations`` are dropped (their
    descendants cannot contribute). The observation is flagged truncated if
    the live population exceeds ``per_particle_cap``.
    """
    if generations < 1:
        raise PreconditionError("generations must be >= 1")
    if rng is None:
        rng = _rng_for(seed)
    tables = _EnvTables(env)
    d = tables.d
    x0_arr = np.asarray(tuple(x0), dtype=np.int64)
    pos = x0_arr.reshape(1, d).copy()
    ret = np.zeros(1, dtype=np.int64)
    z = np.zeros(generations + 1, dtype=np.int64)
    truncated = False
    steps_arr = np.asarray(tables.steps, dtype=np.int64)
    for _ in range(horizon):
        n = pos.shape[0]
        if n == 0:
            break
        if n > per_particle_cap:
            truncated = True
            break
        # Offspring counts per particle.
        k = np.empty(n, dtype=np.int64)
        off_idx = tables.env.offspring_law_indices(pos) if tables.multi_off else None
        for j, (ks, cum) in enumerate(zip(tables.off_ks, tables.off_cums)):
            mask = np.ones(n, dtype=bool) if off_idx is None else off_idx == j
            cnt = int(mask.sum())
            if cnt == 0:
                continue
            if len(ks) == 1:
                k[mask] = ks[0]
            else:
                u = rng.random(cnt)
                k[mask] = ks[np.searchsorted(cum, u, side="right")]
        # Moves per child, by the parent's site law.
        parent_slaw = tables.env.step_law_indices(pos) if tables.multi_step else None
        child_pos = np.repeat(pos, k, axis=0)
        child_ret = np.repeat(ret, k)
        child_slaw = None if parent_slaw is None else np.repeat(parent_slaw, k)
        moves = np.empty_like(child_pos)
        for i, cum in enumerate(tables.step_cums):
            mask = (
                np.ones(child_pos.shape[0], dtype=bool)
                if child_slaw is None
                else child_slaw == i
            )
            cnt = int(mask.sum())
            if cnt == 0:
                continue
            u = rng.random(cnt)
            moves[mask] = steps_arr[np.searchsorted(cum, u, side="right")]
        child_pos += moves
        arrived = np.all(child_pos == x0_arr, axis=1)
        child_ret += arrived
        ranks = child_ret[arrived]
        if ranks.size:
            z += np.bincount(ranks, minlength=generations + 1)[: generations + 1]
        keep = child_ret < generations
        pos = child_pos[keep]
        ret = child_ret[keep]
    return GwObservation(z=z[1:], truncated=truncated)


def estimate_alpha(env, x0, replicates, horizon, return_threshold,
                   cap=COUNT_CAP_DEFAULT, master_seed=0):
    """Fraction of plain-process runs with at least ``return_threshold``
    cumulative origin visits within the horizon.

    A finite-horizon surrogate for the probability of infinitely many origin
    visits: heuristic by construction, and meaningful only as the horizon
    and threshold grow together. With a branching-free environment and
    threshold 1 this is the walk's return probability within the horizon.
    """
    if return_threshold < 1:
        raise PreconditionError("return_threshold must be >= 1")
    if replicates < 1:
        raise PreconditionError("replicates must be >= 1")
    tables = _EnvTables(env)
    cap_eff = tables.safe_cap(cap)
    x0 = tuple(x0)
    d = tables.d
    hits = 0
    for i in range(replicates):
        rng = _rng_for(master_seed, i)
        counts = np.ones((1,) * d, dtype=np.int64)
        lo = np.asarray(x0, dtype=np.int64)
        visits = 0
        for _ in range(horizon):
            counts, lo, _, _ = _advance(counts, lo, tables, rng, None, cap_eff)
            local = tuple(int(o - l) for o, l in zip(x0, lo))
            if all(0 <= c < n for c, n in zip(local, counts.shape)):
                visits += int(counts[local])
            if visits >= return_threshold:
                break
        hits += visits >= return_threshold
    return hits / replicates

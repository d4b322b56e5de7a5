"""Value iteration for the critical mean offspring.

The dynamic program iterates

    f_n(x) = m * max_j sum_s p_j(s) f_{n-1}(x + s)    for x != origin

with f pinned to 1 at the origin and truncated to 0 outside a ball: the
sup over the convex hull of step laws is attained at the extreme points
because the objective is linear in the law. The sequence is monotone
increasing, so divergence at a finite radius certifies divergence on all
of Z^d (the truncation only removes paths), while boundedness is certified
for the truncated system. Bisection over m locates the truncated
threshold, which decreases to the reciprocal spectral radius as the radius
grows.

Divergence detection: the pinned iterate can be astronomically large yet
bounded (upstream of a drift, the fixed point grows like m^(|x|/drift)),
so a raw value threshold cannot separate the regimes. Instead a companion
homogeneous iteration g -> m * max_j P_j g, killed at the origin and
outside the ball, yields rigorous two-sided growth certificates: if
m * (A g)(x) >= lambda * g(x) pointwise on a connected component then the
growth rate is at least lambda (monotone homogeneous operators obey the
Collatz-Wielandt bounds). A sticky certificate lambda > 1 plus the value
threshold declares divergence; convergence is declared when the sweep
increment falls below 1e-12 relative to the field's scale.
"""

from collections import deque
from dataclasses import dataclass
from itertools import product

import numpy as np

from .environment import validate_walk
from .errors import ConvergenceError, PreconditionError
from .spectral import env_rho

BOUNDED = "bounded"
DIVERGING = "diverging"
INDETERMINATE = "indeterminate"

_INCREMENT_TOL = 1e-12
_CW_MARGIN = 1e-10


@dataclass
class ValueField:
    """Values on the ball {|x|_inf <= radius}, with the origin pinned.

    ``values`` is a dense (2R+1)^d array, origin at the center index.
    """

    radius: int
    origin: tuple
    m: float
    values: np.ndarray

    def value_at(self, site):
        idx = tuple(c + self.radius for c in site)
        return float(self.values[idx])

    def sites(self):
        r = self.radius
        d = self.values.ndim
        for coords in product(range(-r, r + 1), repeat=d):
            yield coords

    def items(self):
        for site in self.sites():
            yield site, self.value_at(site)


@dataclass
class ValueIterationResult:
    status: str
    field: ValueField
    sweeps_used: int


def _sweep_views(shape, steps, pad):
    return [
        tuple(slice(pad + c, n + pad + c) for n, c in zip(shape, s))
        for s in steps
    ]


def _components(shape, center, moves):
    """Label the punctured ball's step-connected components (0 = excluded)."""
    labels = np.zeros(shape, dtype=np.int32)
    labels[center] = -1
    next_label = 0
    for start in np.ndindex(shape):
        if labels[start] != 0:
            continue
        next_label += 1
        queue = deque([start])
        labels[start] = next_label
        while queue:
            site = queue.popleft()
            for mv in moves:
                nb = tuple(a + b for a, b in zip(site, mv))
                if all(0 <= c < n for c, n in zip(nb, shape)) and labels[nb] == 0:
                    labels[nb] = next_label
                    queue.append(nb)
    labels[center] = 0
    return labels, next_label


class _MaxSweep:
    """Applies f -> m * max_j P_j f on a zero-padded window."""

    def __init__(self, spec, shape, m):
        gen = spec.generator_set
        self.m = m
        self.pad = gen.max_step_norm
        self.shape = shape
        self.padded = np.zeros(tuple(n + 2 * self.pad for n in shape))
        self.inner = tuple(slice(self.pad, self.pad + n) for n in shape)
        self.views = _sweep_views(shape, gen.steps, self.pad)
        self.weights = [np.asarray(p.weights) for p in spec.step_laws()]
        self._cand = np.empty(shape)

    def apply(self, f, out):
        self.padded[self.inner] = f
        out.fill(-np.inf)
        for w in self.weights:
            self._cand.fill(0.0)
            for wi, view in zip(w, self.views):
                if wi != 0.0:
                    self._cand += wi * self.padded[view]
            np.maximum(out, self._cand, out=out)
        out *= self.m


def _companion_seed(shape, radius, comp_masks, theta):
    """Tilted profile exp(<theta, x>), normalized per component.

    Seeding with the optimal tilt of the untruncated walk collapses the
    huge dynamic range the Perron profile of a drifted operator spans, so
    the growth certificate fires in a handful of sweeps instead of
    thousands.
    """
    d = len(shape)
    axes = np.meshgrid(*(np.arange(-radius, radius + 1, dtype=float),) * d, indexing="ij")
    exponent = sum(t * a for t, a in zip(theta, axes))
    g = np.zeros(shape)
    for mask in comp_masks:
        e = exponent[mask]
        g[mask] = np.exp(np.clip(e - e.max(), -500.0, 0.0))
    return np.maximum(g, np.where(g > 0, 1e-250, 0.0))


def value_iteration(spec, m, radius, max_sweeps=None, blowup=1e12, origin_value=1.0):
    """Monotone value iteration on the truncated ball.

    DIVERGING requires both the max value to exceed ``blowup`` and a
    rigorous growth certificate from the homogeneous companion iteration;
    BOUNDED requires a sweep to move no value by more than 1e-12 relative
    to the field's scale; INDETERMINATE means the sweep budget ran out.
    """
    validate_walk(spec)
    if m <= 0.0:
        raise PreconditionError("m must be positive")
    if radius < 1:
        raise PreconditionError("radius must be >= 1")
    if blowup <= 1.0:
        raise PreconditionError("blowup must exceed 1")
    if max_sweeps is None:
        max_sweeps = 20 * radius
    gen = spec.generator_set
    d = gen.dimension
    shape = (2 * radius + 1,) * d
    center = (radius,) * d
    sweep = _MaxSweep(spec, shape, m)

    labels, n_comp = _components(shape, center, gen.symmetrized_minimal())
    comp_masks = [labels == c for c in range(1, n_comp + 1)]

    f = np.zeros(shape)
    f[center] = origin_value
    f_next = np.empty(shape)
    g = _companion_seed(shape, radius, comp_masks, env_rho(spec).theta_star)
    g_next = np.empty(shape)
    # Two-sweep certificate state: the killed operator is typically
    # bipartite, so one-step ratios oscillate between lambda(1-c)/(1+c) and
    # lambda(1+c)/(1-c) forever; the squared operator is parity-free and its
    # pointwise ratios converge to lambda^2.
    g_two_back = None
    last_scales = None

    status = INDETERMINATE
    sweeps = 0
    fmax = float(origin_value)
    growth_certified = False
    f_frozen = False  # stop updating f past float-safe scale; status then rests on g
    for sweeps in range(1, max_sweeps + 1):
        increment = None
        if not f_frozen:
            sweep.apply(f, f_next)
            f_next[center] = origin_value
            fmax = float(f_next.max())
            increment = float(np.max(f_next - f))
            np.copyto(f, f_next)
            if fmax > 1e250:
                f_frozen = True

        sweep.apply(g, g_next)
        g_next[center] = 0.0
        g_next[labels == 0] = 0.0
        if not growth_certified and g_two_back is not None:
            # A^2 g_two_back = last_scale * raw sweep output, pointwise
            for mask, s in zip(comp_masks, last_scales):
                ratios = s * g_next[mask] / g_two_back[mask]
                if float(ratios.min()) > 1.0 + _CW_MARGIN:
                    growth_certified = True
                    break
        g_two_back = g.copy()
        last_scales = []
        for mask in comp_masks:
            peak = float(g_next[mask].max())
            last_scales.append(peak)
            if peak > 0.0:
                g_next[mask] /= peak
        np.copyto(g, g_next)

        if growth_certified and fmax > blowup:
            status = DIVERGING
            break
        if increment is not None and increment < _INCREMENT_TOL * max(1.0, fmax):
            status = BOUNDED
            break

    field = ValueField(radius=radius, origin=(0,) * d, m=m, values=f)
    return ValueIterationResult(status=status, field=field, sweeps_used=sweeps)


def critical_m(spec, radius, tol, max_sweeps=None, blowup=1e12):
    """Bisection for the truncated critical mean offspring.

    The returned value m(R) satisfies: value iteration diverges at
    m(R) + tol and stays bounded at m(R) - tol. m(R) decreases in R
    (a larger ball admits more paths) toward 1 / rho.

    The sweep budget per probe adapts: near the threshold both certificates
    need on the order of log(blowup) / |m - m(R)| sweeps, so Indeterminate
    probes are retried with a doubled budget before giving up.
    """
    validate_walk(spec)
    if tol <= 0.0:
        raise PreconditionError("tol must be positive")
    rho = env_rho(spec).rho
    lo = 1.0  # always bounded: the iteration cannot exceed its pinned value at m <= 1
    hi = 1.0 / rho + 0.5
    base_budget = max_sweeps if max_sweeps is not None else max(20 * radius, 2000)

    def probe(m):
        budget = base_budget
        for _ in range(7):
            res = value_iteration(spec, m, radius, max_sweeps=budget, blowup=blowup)
            if res.status != INDETERMINATE:
                return res.status
            budget *= 2
        raise ConvergenceError(
            f"value iteration indeterminate at m={m} even with {budget} sweeps; "
            "increase the sweep budget or loosen tol"
        )

    # The upper bracket must diverge; widen it if truncation bites hard.
    for _ in range(6):
        if probe(hi) == DIVERGING:
            break
        hi += 0.5
    else:
        raise ConvergenceError(f"no diverging upper bracket found up to m={hi}")

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if probe(mid) == DIVERGING:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def harmonic_residual(field, spec, env):
    """Worst relative defect of the balance equation m(x) * P f(x) = f(x).

    Checked on interior sites (those whose whole step neighborhood stays in
    the ball), x != origin, using the realized per-site laws of ``env``.
    """
    validate_walk(spec)
    gen = env.spec.generator_set
    d = gen.dimension
    r = field.radius
    interior = r - gen.max_step_norm
    worst = 0.0
    for site in product(range(-interior, interior + 1), repeat=d):
        if all(c == 0 for c in site):
            continue
        step_law, offspring_law = env.site_law(site)
        pf = 0.0
        for s, w in zip(gen.steps, step_law.weights):
            neighbor = tuple(a + b for a, b in zip(site, s))
            pf += w * field.value_at(neighbor)
        fx = field.value_at(site)
        defect = abs(offspring_law.mean * pf - fx) / max(fx, 1.0)
        worst = max(worst, defect)
    return worst

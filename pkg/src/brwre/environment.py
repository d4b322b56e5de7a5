"""Random environments: specification, validation, seeded realization, couplings.

An environment assigns every lattice site an independent (step law,
offspring law) pair drawn from the finite supports of the spec. The
realization is storage free: the pair at a site is a pure hash of
(seed, coordinates), so unbounded lattices and parallel replay both work.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import CouplingError, EnvironmentValidationError, PreconditionError
from .kernel import GeneratorSet, StepDistribution

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_STEP_TAG = 0x5851F42D4C957F2D
_OFFSPRING_TAG = 0x14057B7EF767814F


@dataclass(frozen=True)
class OffspringDistribution:
    """Finitely supported offspring law (mu_k)_{k>=1}.

    Every particle leaves at least one descendant (all k >= 1), so total
    population in a branching run is nondecreasing.
    """

    support: tuple  # ((k, mu_k), ...) sorted by k

    def __post_init__(self):
        entries = []
        seen = set()
        for k, w in self.support:
            k = int(k)
            w = float(w)
            if k < 1:
                raise PreconditionError(f"offspring count {k} < 1 (death is excluded)")
            if w < 0.0:
                raise PreconditionError(f"negative offspring mass at k={k}")
            if k in seen:
                raise PreconditionError(f"duplicate offspring support point k={k}")
            seen.add(k)
            if w > 0.0:
                entries.append((k, w))
        if not entries:
            raise PreconditionError("offspring support is empty")
        total = sum(w for _, w in entries)
        if abs(total - 1.0) > 1e-12:
            raise PreconditionError(f"offspring masses sum to {total!r}, not 1")
        object.__setattr__(self, "support", tuple(sorted(entries)))

    @property
    def mean(self):
        return sum(k * w for k, w in self.support)

    def mass(self, k):
        for kk, w in self.support:
            if kk == k:
                return w
        return 0.0

    def tail(self, t):
        """P(offspring >= t)."""
        return sum(w for k, w in self.support if k >= t)

    @classmethod
    def point(cls, k):
        """The deterministic law delta_k."""
        return cls(((k, 1.0),))


@dataclass(frozen=True)
class EnvironmentSpec:
    """Finite-support product environment: step laws and offspring laws with weights."""

    generator_set: GeneratorSet
    step_support: tuple  # ((StepDistribution, prob), ...)
    offspring_support: tuple  # ((OffspringDistribution, prob), ...)
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "step_support", tuple((p, float(w)) for p, w in self.step_support))
        object.__setattr__(
            self, "offspring_support", tuple((mu, float(w)) for mu, w in self.offspring_support)
        )
        object.__setattr__(self, "gamma", float(self.gamma))

    def step_laws(self):
        return tuple(p for p, _ in self.step_support)

    def offspring_laws(self):
        return tuple(mu for mu, _ in self.offspring_support)


def check_walk(spec):
    """Violations of the walk-side invariants (supports, weights, ellipticity)."""
    violations = []
    if spec.gamma <= 0.0:
        violations.append(f"gamma must be positive, got {spec.gamma!r}")
    if not spec.step_support:
        violations.append("step support is empty")
    if not spec.offspring_support:
        violations.append("offspring support is empty")
    for name, support in (("step", spec.step_support), ("offspring", spec.offspring_support)):
        if support:
            total = sum(w for _, w in support)
            if abs(total - 1.0) > 1e-12:
                violations.append(f"{name} support weights sum to {total!r}, not 1")
            if any(w < 0.0 for _, w in support):
                violations.append(f"{name} support has a negative weight")
    for i, (law, _) in enumerate(spec.step_support):
        if law.generator_set != spec.generator_set:
            violations.append(f"step law {i} uses a different generator set")
            continue
        for s in law.ellipticity_violations(spec.gamma):
            violations.append(
                f"step law {i} violates ellipticity: weight({s}) = "
                f"{law.weight(s)!r} <= gamma = {spec.gamma!r}"
            )
    return violations


def check(spec):
    """All violated invariants of ``spec``, as human-readable strings.

    Beyond the walk-side checks this enforces m* > 1: every classification
    statement assumes a supercritical branching environment. Degenerate
    single-offspring environments stay usable in the simulator, which only
    needs the walk-side invariants.
    """
    violations = check_walk(spec)
    if spec.offspring_support:
        ms = max(mu.mean for mu, _ in spec.offspring_support)
        if ms <= 1.0:
            violations.append(f"maximal mean offspring m* = {ms!r} <= 1 (no supercritical branching)")
    return violations


def validate(spec):
    """Return ``spec`` unchanged if every invariant holds, else raise with the full report."""
    violations = check(spec)
    if violations:
        raise EnvironmentValidationError(violations)
    return spec


def validate_walk(spec):
    """Walk-side validation: what simulation and spectral machinery require."""
    violations = check_walk(spec)
    if violations:
        raise EnvironmentValidationError(violations)
    return spec


def m_star(spec):
    """Maximal mean offspring over the support of the branching environment."""
    return max(mu.mean for mu, _ in spec.offspring_support)


def _mix64(z):
    """splitmix64 finalizer on a uint64 array (wraps mod 2^64)."""
    z = (z + np.uint64(_GOLDEN)) & _MASK64
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)) & _MASK64
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)) & _MASK64
    return z ^ (z >> np.uint64(31))


def _zigzag(c):
    """Map Z -> N: 0,-1,1,-2,2,... -> 0,1,2,3,4,..."""
    c = np.asarray(c, dtype=np.int64)
    return np.where(c >= 0, 2 * c, -2 * c - 1).astype(np.uint64)


def _site_hash(seed, coords):
    """One uint64 hash per row of ``coords`` (shape (n, d)), pure in (seed, site)."""
    h = np.full(coords.shape[0], np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    for axis in range(coords.shape[1]):
        tag = np.uint64((_GOLDEN * (axis + 1)) & 0xFFFFFFFFFFFFFFFF)
        h = _mix64(h ^ (_zigzag(coords[:, axis]) + tag))
    return h


def _indices_from_uniform(u, cumulative):
    return np.searchsorted(cumulative, u, side="right").astype(np.int64)


@dataclass(frozen=True)
class RealizedEnvironment:
    """One seeded draw of the environment: a deterministic site -> laws map."""

    spec: EnvironmentSpec
    seed: int

    def __post_init__(self):
        validate_walk(self.spec)
        object.__setattr__(self, "seed", int(self.seed) & 0xFFFFFFFFFFFFFFFF)

    def _cumulative(self, support):
        w = np.array([x for _, x in support], dtype=float)
        c = np.cumsum(w)
        c[-1] = 1.0  # guard float slack at the top
        return c

    def step_law_indices(self, coords):
        """Step-law index for each site row in ``coords`` (n, d)."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.spec.generator_set.dimension)
        if len(self.spec.step_support) == 1:
            return np.zeros(coords.shape[0], dtype=np.int64)
        h = _site_hash(self.seed, coords)
        u = _mix64(h ^ np.uint64(_STEP_TAG)).astype(np.float64) * 2.0 ** -64
        return _indices_from_uniform(u, self._cumulative(self.spec.step_support))

    def offspring_law_indices(self, coords):
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.spec.generator_set.dimension)
        if len(self.spec.offspring_support) == 1:
            return np.zeros(coords.shape[0], dtype=np.int64)
        h = _site_hash(self.seed, coords)
        u = _mix64(h ^ np.uint64(_OFFSPRING_TAG)).astype(np.float64) * 2.0 ** -64
        return _indices_from_uniform(u, self._cumulative(self.spec.offspring_support))

    def site_law(self, x):
        """The (step law, offspring law) pair at site ``x``. Pure in (seed, x)."""
        coords = np.asarray([tuple(x)], dtype=np.int64)
        i = int(self.step_law_indices(coords)[0])
        j = int(self.offspring_law_indices(coords)[0])
        return self.spec.step_support[i][0], self.spec.offspring_support[j][0]


def site_law(env, x):
    return env.site_law(x)


def couple_raise(mu, m_tilde):
    """Raise the mean of ``mu`` to ``m_tilde`` by moving mass upward.

    Takes the lowest support point l, chooses the smallest n with
    mu_l >= delta/n (delta = m_tilde - mean), and moves delta/n of mass
    from l to n + l. The result has mean exactly m_tilde and stochastically
    dominates the input.
    """
    m = mu.mean
    if m_tilde < m - 1e-12:
        raise PreconditionError(f"target mean {m_tilde} below current mean {m}")
    delta = m_tilde - m
    if delta <= 0.0:
        return mu
    l, mass_l = mu.support[0]
    n = max(1, math.ceil(delta / mass_l - 1e-12))
    shift = delta / n
    masses = dict(mu.support)
    masses[l] = masses[l] - shift
    if masses[l] < -1e-12:
        raise CouplingError(f"mass at k={l} would become negative ({masses[l]!r})")
    masses[l] = max(masses[l], 0.0)
    masses[n + l] = masses.get(n + l, 0.0) + shift
    return OffspringDistribution(tuple(sorted(masses.items())))


def couple_lower(mu, m_tilde):
    """Lower the mean of ``mu`` to ``m_tilde`` by collapsing mass onto 1.

    With delta = mean - m_tilde, picks l so that the mass-lowering budget
    splits as sum_{k<=l}(k-1)mu_k <= delta < sum_{k<=l+1}(k-1)mu_k, sends
    all mass at 2..l to 1, and moves gamma/l from l+1 to 1 where gamma is
    the leftover budget. The result has mean exactly m_tilde and is
    stochastically dominated by the input.
    """
    m = mu.mean
    if m_tilde > m + 1e-12:
        raise PreconditionError(f"target mean {m_tilde} above current mean {m}")
    if m_tilde < 1.0 - 1e-12:
        raise PreconditionError(f"target mean {m_tilde} below 1 (support starts at k=1)")
    delta = m - m_tilde
    if delta <= 0.0:
        return mu
    kmax = mu.support[-1][0]
    # partial[l] = sum_{k<=l} (k-1) mu_k
    def partial(l):
        return sum((k - 1) * w for k, w in mu.support if k <= l)

    l = None
    for cand in range(1, kmax + 1):
        if partial(cand) <= delta + 1e-15 and delta < partial(cand + 1) - 1e-15:
            l = cand
            break
    if l is None:
        # delta exhausts the whole removable mass: the target is delta_1
        l = kmax - 1 if kmax > 1 else 1
    gamma = delta - partial(l)
    shift = gamma / l
    mass_next = mu.mass(l + 1)
    if mass_next - shift < -1e-12:
        raise CouplingError(
            f"mass at k={l + 1} would become negative ({mass_next - shift!r})"
        )
    masses = {1: sum(w for k, w in mu.support if k <= l) + shift}
    if mass_next - shift > 0.0:
        masses[l + 1] = mass_next - shift
    for k, w in mu.support:
        if k > l + 1:
            masses[k] = w
    return OffspringDistribution(tuple(sorted(masses.items())))

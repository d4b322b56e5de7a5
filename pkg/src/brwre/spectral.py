"""Spectral radius of walks on Z^d through the step-law moment generating function.

For a homogeneous walk with step law p the spectral radius is the infimum
over theta of sum_s exp(<theta, s>) p(s), a smooth strictly convex coercive
function under ellipticity. For a random environment with finite step-law
support the almost-sure spectral radius is the minimax value

    inf_theta  max_j  mgf(p_j, theta)

over the extreme points p_j of the support: the mgf is linear in the law,
so the inner sup over the convex hull is attained at extreme points, and
the minimax swap identifies the value with the sup over the hull of the
homogeneous spectral radii. rho = 1 exactly when the hull of the drift
vectors contains the origin, which is decided separately in exact rational
arithmetic.
"""

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .environment import validate_walk
from .errors import ConvergenceError, MgfOverflowError, PreconditionError

_EXP_LIMIT = 700.0
_NEWTON_CAP = 200


@dataclass(frozen=True)
class SpectralResult:
    """Value and certificate of a spectral radius computation.

    ``residual`` is the norm of the (sub)gradient actually achieved at
    ``theta_star``: for the minimax it is |sum_j lambda_j grad mgf_j|, the
    minimal-norm convex combination over the active extreme points.
    """

    rho: float
    theta_star: np.ndarray
    active_extreme_points: tuple
    iterations: int
    residual: float


def mgf(p, theta):
    """sum_s exp(<theta, s>) p(s) for a single step law."""
    steps = np.asarray(p.generator_set.steps, dtype=float)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if not np.all(np.isfinite(theta)):
        raise PreconditionError("theta must be finite")
    exponents = steps @ theta
    if np.max(exponents) > _EXP_LIMIT:
        worst = int(np.argmax(exponents))
        raise MgfOverflowError(
            f"exp(<theta, s>) overflows for s={p.generator_set.steps[worst]}, theta={theta.tolist()}"
        )
    return float(np.exp(exponents) @ np.asarray(p.weights))


class _MgfFamily:
    """Values, gradients and Hessians of the mgf for a matrix of laws."""

    def __init__(self, generator_set, weight_rows):
        self.steps = np.asarray(generator_set.steps, dtype=float)  # (S, d)
        self.w = np.asarray(weight_rows, dtype=float)  # (J, S)
        self.d = generator_set.dimension

    def values(self, theta):
        with np.errstate(over="ignore"):
            e = np.exp(self.steps @ theta)  # (S,)
        return self.w @ e

    def value_grad_hess(self, theta, j):
        with np.errstate(over="ignore"):
            e = np.exp(self.steps @ theta)
        we = self.w[j] * e  # (S,)
        val = float(we.sum())
        grad = self.steps.T @ we
        hess = (self.steps.T * we) @ self.steps
        return val, grad, hess


def _check_coercive(p):
    # The infimum is attained only if p is strictly positive on a symmetric
    # generating subset; otherwise the mgf can decay along some direction.
    for s in p.generator_set.symmetrized_minimal():
        if p.weight(s) <= 0.0:
            raise PreconditionError(
                f"step law has zero weight on generating step {s}; "
                "the mgf infimum need not be attained"
            )


def _newton_minimize(family, j, theta0, tol, max_iter=_NEWTON_CAP):
    """Damped Newton with backtracking on a single smooth strictly convex mgf."""
    theta = np.array(theta0, dtype=float)
    val, grad, hess = family.value_grad_hess(theta, j)
    for it in range(max_iter):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return theta, val, gnorm, it
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = -grad
        t = 1.0
        slope = float(grad @ step)
        # the absolute allowance keeps the search alive once the attainable
        # decrease drops below float noise around the optimum
        noise = 4e-16 * max(1.0, abs(val))
        for _ in range(60):
            cand = theta + t * step
            cval = family.value_grad_hess(cand, j)[0]
            if np.isfinite(cval) and cval <= val + 0.25 * t * slope + noise:
                break
            t *= 0.5
        theta = theta + t * step
        val, grad, hess = family.value_grad_hess(theta, j)
    gnorm = float(np.linalg.norm(grad))
    if gnorm > tol:
        raise ConvergenceError(
            f"Newton did not reach gradient tolerance {tol} (residual {gnorm})",
            residual=gnorm,
        )
    return theta, val, gnorm, max_iter


def homogeneous_rho(p, tol=1e-10):
    """Spectral radius of the homogeneous walk with step law ``p``.

    Minimizes the smooth strictly convex mgf over theta in R^d by damped
    Newton descent; ellipticity on a symmetric generating subset makes the
    mgf coercive so the minimum is attained.
    """
    _check_coercive(p)
    family = _MgfFamily(p.generator_set, [p.weights])
    theta, val, gnorm, it = _newton_minimize(family, 0, np.zeros(family.d), tol)
    return SpectralResult(
        rho=val,
        theta_star=theta,
        active_extreme_points=(0,),
        iterations=it,
        residual=gnorm,
    )


def nearest_neighbor_rho(p):
    """Closed form 2 sum_i sqrt(p(e_i) p(-e_i)) for nearest-neighbor laws."""
    gen = p.generator_set
    if not gen.is_nearest_neighbor():
        raise PreconditionError("closed form requires the nearest-neighbor step set")
    total = 0.0
    for i in range(gen.dimension):
        e = tuple(1 if a == i else 0 for a in range(gen.dimension))
        me = tuple(-c for c in e)
        total += np.sqrt(p.weight(e) * p.weight(me))
    return 2.0 * total


def _kkt_polish(family, theta, active, tol, max_iter=80):
    """Newton on the minimax optimality system over a fixed active set.

    Unknowns (theta, lambda): equal mgf values across the active laws, a
    vanishing convex combination of their gradients, and sum lambda = 1.
    Returns None if the iteration stalls, so callers can fall back.
    """
    a = len(active)
    d = family.d
    lam = np.full(a, 1.0 / a)
    theta = np.array(theta, dtype=float)

    def residual_and_jac(th, lm):
        vals, grads, hesss = [], [], []
        for j in active:
            v, g, h = family.value_grad_hess(th, j)
            vals.append(v)
            grads.append(g)
            hesss.append(h)
        r = np.empty(a - 1 + d + 1)
        jac = np.zeros((a - 1 + d + 1, d + a))
        for i in range(1, a):
            r[i - 1] = vals[i] - vals[0]
            jac[i - 1, :d] = grads[i] - grads[0]
        gmix = sum(lm[i] * grads[i] for i in range(a))
        hmix = sum(lm[i] * hesss[i] for i in range(a))
        r[a - 1 : a - 1 + d] = gmix
        jac[a - 1 : a - 1 + d, :d] = hmix
        for i in range(a):
            jac[a - 1 : a - 1 + d, d + i] = grads[i]
        r[-1] = lm.sum() - 1.0
        jac[-1, d:] = 1.0
        return r, jac

    r, jac = residual_and_jac(theta, lam)
    for it in range(max_iter):
        rn = float(np.linalg.norm(r))
        if rn <= 1e-13:
            break
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        t = 1.0
        improved = False
        for _ in range(50):
            th_new = theta + t * step[:d]
            lm_new = lam + t * step[d:]
            try:
                r_new, jac_new = residual_and_jac(th_new, lm_new)
            except FloatingPointError:
                t *= 0.5
                continue
            if np.all(np.isfinite(r_new)) and np.linalg.norm(r_new) < rn * (1 - 1e-4 * t):
                theta, lam, r, jac = th_new, lm_new, r_new, jac_new
                improved = True
                break
            t *= 0.5
        if not improved:
            break
    if np.any(lam < -1e-9):
        return None
    vals = family.values(theta)
    gmix = sum(lam[i] * family.value_grad_hess(theta, j)[1] for i, j in enumerate(active))
    return theta, lam, float(np.linalg.norm(gmix)), float(np.max(vals[list(active)]))


def env_rho(spec, tol=1e-10):
    """Almost-sure spectral radius of the walk in the random environment.

    Solves inf_theta max_j mgf(p_j, theta) over the extreme points of the
    step support: a subgradient descent locates the optimum, then a Newton
    polish on the active set drives the optimality residual to float level.
    """
    validate_walk(spec)
    laws = spec.step_laws()
    for p in laws:
        _check_coercive(p)
    family = _MgfFamily(spec.generator_set, [p.weights for p in laws])
    d = family.d
    nlaws = len(laws)

    # Phase 1: subgradient descent with best-iterate tracking.
    theta = np.zeros(d)
    best_theta = theta.copy()
    best_val = float(np.max(family.values(theta)))
    c0 = 0.3 / max(1.0, spec.generator_set.max_step_norm)
    iterations = 0
    n_subgrad = 0 if nlaws == 1 else 1500
    for k in range(1, n_subgrad + 1):
        vals = family.values(theta)
        j = int(np.argmax(vals))
        _, grad, _ = family.value_grad_hess(theta, j)
        gn = float(np.linalg.norm(grad))
        if gn <= tol:
            best_theta, best_val = theta.copy(), float(vals[j])
            break
        theta = theta - (c0 / np.sqrt(k)) * grad / gn
        v = float(np.max(family.values(theta)))
        if v < best_val:
            best_val, best_theta = v, theta.copy()
        iterations += 1

    # Phase 2 and 3: active set at the incumbent, then Newton polish.
    result = None
    vals = family.values(best_theta)
    fbest = float(np.max(vals))
    active = [j for j in range(nlaws) if fbest - vals[j] <= max(1e-8, 1e-6 * abs(fbest))]
    for _ in range(nlaws + 1):
        polished = _kkt_polish(family, best_theta, tuple(active), tol)
        if polished is None:
            if len(active) <= 1:
                break
            # Drop the least active law and retry.
            vals = family.values(best_theta)
            active = sorted(active, key=lambda j: -vals[j])[:-1]
            continue
        theta_p, lam, res, val_active = polished
        all_vals = family.values(theta_p)
        overshoot = [j for j in range(nlaws) if j not in active and all_vals[j] > val_active + 1e-11]
        if overshoot:
            active = sorted(set(active) | {overshoot[0]})
            continue
        keep = [j for j, lm in zip(active, lam) if lm > 1e-9]
        if keep and len(keep) < len(active):
            active = keep
            continue
        result = (theta_p, lam, res)
        break

    if result is None:
        # Fall back to plain Newton per active law (singleton active set).
        j = int(np.argmax(family.values(best_theta)))
        theta_p, val, res, it = _newton_minimize(family, j, best_theta, tol)
        iterations += it
        all_vals = family.values(theta_p)
        if float(np.max(all_vals)) > val + 1e-9:
            raise ConvergenceError(
                f"minimax polish failed; best residual {res}", residual=res
            )
        lam = np.array([1.0])
        active = [j]
        result = (theta_p, lam, res)

    theta_p, lam, res = result
    all_vals = family.values(theta_p)
    rho = float(np.max(all_vals))
    if res > max(tol, 1e-9):
        raise ConvergenceError(
            f"minimax optimizer residual {res} above tolerance {tol} "
            f"(active extreme points {tuple(active)})",
            residual=res,
        )
    return SpectralResult(
        rho=rho,
        theta_star=theta_p,
        active_extreme_points=tuple(sorted(active)),
        iterations=iterations,
        residual=res,
    )


def _exact_drifts(spec):
    """Drift vectors of the extreme step laws, in exact rational arithmetic."""
    steps = spec.generator_set.steps
    out = []
    for law in spec.step_laws():
        drift = [Fraction(0)] * spec.generator_set.dimension
        for s, w in zip(steps, law.weights):
            fw = Fraction(w)
            for a, c in enumerate(s):
                drift[a] += fw * c
        out.append(tuple(drift))
    return out


def _solve_exact(rows, rhs):
    """Gaussian elimination over Fractions; None unless a unique solution exists."""
    m, n = len(rows), len(rows[0])
    aug = [list(r) + [b] for r, b in zip(rows, rhs)]
    piv_cols = []
    row = 0
    for col in range(n):
        piv = next((r for r in range(row, m) if aug[r][col] != 0), None)
        if piv is None:
            continue
        aug[row], aug[piv] = aug[piv], aug[row]
        inv = Fraction(1, 1) / aug[row][col]
        aug[row] = [x * inv for x in aug[row]]
        for r in range(m):
            if r != row and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[row])]
        piv_cols.append(col)
        row += 1
        if row == m:
            break
    if len(piv_cols) < n:
        return None  # underdetermined
    for r in range(row, m):
        if aug[r][n] != 0:
            return None  # inconsistent
    x = [Fraction(0)] * n
    for i, col in enumerate(piv_cols):
        x[col] = aug[i][n]
    return x


def has_zero_drift(spec):
    """Decide whether the convex hull of the support's drifts contains 0.

    Exact: float weights are rationals, so the Caratheodory subsets of at
    most d+1 drift vectors are solved over Fractions. Returns (flag,
    witness) where the witness gives convex weights over the extreme
    points, aligned with ``spec.step_support``.
    """
    validate_walk(spec)
    drifts = _exact_drifts(spec)
    d = spec.generator_set.dimension
    nlaws = len(drifts)
    for size in range(1, min(nlaws, d + 1) + 1):
        for subset in combinations(range(nlaws), size):
            rows = [[drifts[j][a] for j in subset] for a in range(d)]
            rows.append([Fraction(1)] * size)
            rhs = [Fraction(0)] * d + [Fraction(1)]
            sol = _solve_exact(rows, rhs)
            if sol is None or any(x < 0 for x in sol):
                continue
            witness = [0.0] * nlaws
            for j, lam in zip(subset, sol):
                witness[j] = float(lam)
            return True, tuple(witness)
    return False, None

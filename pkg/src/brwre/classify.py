"""Transient vs strongly recurrent: the headline dichotomy.

The verdict compares the maximal mean offspring m* against the reciprocal
spectral radius of the walk. Equality sits on the transient side of the
dichotomy, so the comparison is the weak inequality m* <= 1/rho; a
near-critical warning flags verdicts within numerical reach of the
boundary.
"""

from dataclasses import dataclass

import numpy as np

from .environment import m_star, validate
from .spectral import env_rho, nearest_neighbor_rho

TRANSIENT = "transient"
STRONGLY_RECURRENT = "strongly-recurrent"

CLOSED_FORM = "closed-form"
MINIMAX = "minimax"


@dataclass(frozen=True)
class Verdict:
    kind: str
    m_star: float
    rho: float
    critical_m: float
    margin: float
    method: str
    near_critical: bool

    def as_dict(self):
        return {
            "kind": self.kind,
            "m_star": self.m_star,
            "rho": self.rho,
            "critical_m": self.critical_m,
            "margin": self.margin,
            "method": self.method,
            "near_critical": self.near_critical,
        }


def classify(spec, tol=1e-8, warn_tol=None):
    """Classify the branching walk defined by ``spec``.

    Uses the nearest-neighbor closed form for rho when it applies (single
    step law on the nearest-neighbor set), the minimax optimizer otherwise.
    ``warn_tol`` controls the near-critical warning and defaults to ten
    times the spectral tolerance.
    """
    validate(spec)
    if warn_tol is None:
        warn_tol = 10.0 * tol
    ms = m_star(spec)
    single = len(spec.step_support) == 1
    if single and spec.generator_set.is_nearest_neighbor():
        rho = float(nearest_neighbor_rho(spec.step_laws()[0]))
        method = CLOSED_FORM
    else:
        rho = float(env_rho(spec, tol).rho)
        method = MINIMAX
    critical = 1.0 / rho
    margin = ms - critical
    kind = TRANSIENT if ms <= critical else STRONGLY_RECURRENT
    return Verdict(
        kind=kind,
        m_star=ms,
        rho=rho,
        critical_m=critical,
        margin=margin,
        method=method,
        near_critical=bool(abs(margin) < warn_tol),
    )

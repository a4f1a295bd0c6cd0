"""Numerical tolerances shared by every module.

All comparisons are relative: ``a <= b + rtol * scale(...)`` where scale is
``1 + max |operand|``.  Keeping the constants in one frozen record makes runs
reproducible across machines.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    floor: float = 1e-12
    duality: float = 1e-9
    roundtrip: float = 1e-10
    convexity: float = 1e-9
    monotone: float = 1e-10
    pairwise: float = 1e-12
    tie: float = 1e-9
    ekeland_gap: float = 1e-9
    ekeland_sample: float = 1e-9
    decomposition: float = 1e-8
    unit_ball: float = 1e-12
    fitzpatrick: float = 1e-10
    membership: float = 1e-9
    closed_form: float = 1e-8
    iterative: float = 1e-6
    zero_norm: float = 1e-300
    cone_radius: float = 1e6


TOL = Tolerances()


def scale(*values) -> float:
    """``1 + max |v|`` over scalars or arrays (inf entries ignored)."""
    import numpy as np

    m = 0.0
    for v in values:
        a = np.abs(np.asarray(v, dtype=float))
        a = a[np.isfinite(a)]
        if a.size:
            m = max(m, float(a.max()))
    return 1.0 + m

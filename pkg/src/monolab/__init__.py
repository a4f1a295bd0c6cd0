"""Numerics for monotone operators on l_p spaces.

Duality maps, a catalog of convex functions with exact subdifferentials,
certified Ekeland eps-minimizers, Fitzpatrick functions and resolvent
solvers, plus a JSON-driven command line (``monolab``).
"""

__version__ = "0.1.0"

from .space import DualPoint, Point, SpaceSpec, duality_map, duality_map_inverse, norm, pairing

__all__ = [
    "DualPoint",
    "Point",
    "SpaceSpec",
    "__version__",
    "duality_map",
    "duality_map_inverse",
    "norm",
    "pairing",
]

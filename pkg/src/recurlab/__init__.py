"""recurlab: a desk-scale laboratory for multiple hitting/recurrence laws
of dispersing billiards and piecewise expanding interval maps."""

__version__ = "0.1.0"

from . import billiard, borel_cantelli, errors, interval_maps, recurrence, rng

__all__ = [
    "billiard",
    "borel_cantelli",
    "errors",
    "interval_maps",
    "recurrence",
    "rng",
    "__version__",
]

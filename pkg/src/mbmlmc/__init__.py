"""Goal-oriented adaptive surrogates for random two-phase media and
model-based multilevel Monte Carlo estimation of local quantities of interest."""

from . import adapt, cli, config, estimator, fem, homogenize, media, mlmc, problem

__all__ = [
    "adapt",
    "cli",
    "config",
    "estimator",
    "fem",
    "homogenize",
    "media",
    "mlmc",
    "problem",
]

__version__ = "0.1.0"

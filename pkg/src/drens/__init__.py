"""Dispatching-rule evolution and ensemble scheduling for dynamic machines.

The package covers the full pipeline: instance generation, a fast
dispatching simulator, genetic programming of priority expressions,
simulation-coordinated rule ensembles, and nonparametric comparison of the
resulting schedulers. See the README for a tour.
"""

__version__ = "0.1.0"

from .ensemble import Ensemble, Mode, run_ensemble
from .expr import DispatchingRule, parse, serialize
from .gp import GPConfig, evolve
from .instances import GenParams, Instance, InstanceSet, generate, load_corpus
from .sec import SECConfig, construct
from .sim import run_sgs

__all__ = [
    "__version__",
    "DispatchingRule",
    "parse",
    "serialize",
    "Instance",
    "InstanceSet",
    "GenParams",
    "generate",
    "load_corpus",
    "run_sgs",
    "Ensemble",
    "Mode",
    "run_ensemble",
    "GPConfig",
    "evolve",
    "SECConfig",
    "construct",
]

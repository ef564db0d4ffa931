"""Group synchronization over closed subgroups of O(d).

Spectral initialisation followed by the generalized power method, with
synthetic instance generators and diagnostics for the convergence theorem.
"""

from .groups import GroupSpec, project, rho, sample_uniform
from .model import Instance, MeasurementGraph
from .solver import SolveConfig, gpm, solve, spectral_estimator
from .analysis import estimation_error, master_report, recovery_rate

__all__ = [
    "GroupSpec",
    "Instance",
    "MeasurementGraph",
    "SolveConfig",
    "estimation_error",
    "gpm",
    "master_report",
    "project",
    "recovery_rate",
    "rho",
    "sample_uniform",
    "solve",
    "spectral_estimator",
]
__version__ = "0.1.0"

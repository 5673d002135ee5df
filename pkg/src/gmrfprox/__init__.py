"""Penalized least squares with per-band 2D GMRF priors.

The core is a closed-form proximity operator: the optimality condition is a
Sylvester-like matrix equation that decouples into small per-frequency
systems after a 2D FFT of each band.
"""

from .data import Instance, default_priors, make_synthetic_instance
from .estimator import GmrfRegression
from .exceptions import (
    ImproperPriorError,
    InvalidKernelError,
    ParseError,
    ShapeError,
    SingularSystemError,
)
from .gmrf import GmrfPrior, gmrf_quadratic, precision_spectrum, sample_gmrf
from .metrics import nmse, reference_solution, rel_err
from .optimizers import (
    BoxConstraint,
    SolverConfig,
    SolverTrace,
    TraceEntry,
    admm,
    fista,
    forward_backward,
    lipschitz_constant,
    project_box,
)
from .prox import ProxProblem, build_cache, grad_smooth, objective, prox_solve
from .spectral import GridShape, NeighborhoodKernel, bccb_spectrum, fft2_forward, fft2_inverse

__version__ = "0.1.0"

__all__ = [
    "BoxConstraint",
    "GmrfPrior",
    "GmrfRegression",
    "GridShape",
    "ImproperPriorError",
    "Instance",
    "InvalidKernelError",
    "NeighborhoodKernel",
    "ParseError",
    "ProxProblem",
    "ShapeError",
    "SingularSystemError",
    "SolverConfig",
    "SolverTrace",
    "TraceEntry",
    "admm",
    "bccb_spectrum",
    "build_cache",
    "default_priors",
    "fft2_forward",
    "fft2_inverse",
    "fista",
    "forward_backward",
    "gmrf_quadratic",
    "grad_smooth",
    "lipschitz_constant",
    "make_synthetic_instance",
    "nmse",
    "objective",
    "precision_spectrum",
    "project_box",
    "prox_solve",
    "reference_solution",
    "rel_err",
    "sample_gmrf",
]

"""Landmark registration by geodesic shooting with pluggable pairwise-reduction backends."""

from .errors import DivergenceError, LandmarkFormatError, MemoryBudgetError, NonDescentError, ShapeMismatchError
from .flow import FlowField, export_frames, velocity_at, warp_points
from .hamiltonian import (
    ShootingConfig,
    Trajectory,
    adjoint_step,
    compute_gradient,
    gaussian_kernel,
    hamiltonian,
    hamiltonian_derivatives,
    integrate_forward,
    loss,
)
from .landmarks import (
    LandmarkSet,
    RigidTransform,
    average_dist,
    load_landmarks,
    max_dist,
    procrustes_align,
    save_landmarks,
)
from .lbfgs import LbfgsParams, OptimHistory, minimize, wolfe_line_search
from .reduction import Backend
from .registration import RegistrationResult, load_result, register, save_result
from .synth import SynthSpec, make_pair

__version__ = "0.1.0"

__all__ = [
    "Backend",
    "DivergenceError",
    "FlowField",
    "LandmarkFormatError",
    "LandmarkSet",
    "LbfgsParams",
    "MemoryBudgetError",
    "NonDescentError",
    "OptimHistory",
    "RegistrationResult",
    "RigidTransform",
    "ShapeMismatchError",
    "ShootingConfig",
    "SynthSpec",
    "Trajectory",
    "adjoint_step",
    "average_dist",
    "compute_gradient",
    "export_frames",
    "gaussian_kernel",
    "hamiltonian",
    "hamiltonian_derivatives",
    "integrate_forward",
    "load_landmarks",
    "load_result",
    "loss",
    "make_pair",
    "max_dist",
    "minimize",
    "procrustes_align",
    "register",
    "save_landmarks",
    "save_result",
    "velocity_at",
    "warp_points",
    "wolfe_line_search",
]

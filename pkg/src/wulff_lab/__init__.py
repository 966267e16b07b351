"""Anisotropic weighted p-Laplace problems in planar convex cones.

Finsler norms and Wulff shapes (:mod:`.finsler`), cones and homogeneous
weights (:mod:`.cones`), isoperimetry in cones (:mod:`.isoperimetry`), a P1
energy-minimization solver (:mod:`.solver`) and level-set diagnostics of
Wulff-radial symmetry (:mod:`.diagnostics`).
"""

from .cones import ConeSpec, PolygonalSet, WeightSpec
from .finsler import NormSpec, WulffBall, dual_norm, eval_norm, grad_norm, wulff_boundary
from .isoperimetry import optimal_constant, quotient, verify_inequality
from .kernels import BACKEND
from .mesh import Mesh, generate_mesh
from .solver import ProblemSpec, Solution, SolverConfig, SourceSpec, solve

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConeSpec",
    "Mesh",
    "NormSpec",
    "PolygonalSet",
    "ProblemSpec",
    "Solution",
    "SolverConfig",
    "SourceSpec",
    "WeightSpec",
    "WulffBall",
    "dual_norm",
    "eval_norm",
    "generate_mesh",
    "grad_norm",
    "optimal_constant",
    "quotient",
    "solve",
    "verify_inequality",
    "wulff_boundary",
]

"""Moving-frame atlases of waves on surfaces.

High-order DG discretization of anisotropic reaction-diffusion on surface
meshes, frames aligned to the propagation direction, and the connection and
curvature maps computed from those frames.
"""
__version__ = "0.1.0"

from .connection import ConnectionField, CurvatureField, connection_form, curvature, gauss_mean
from .errors import (ConfigError, InvalidInputError, InvalidMeshError, MeshParseError, MMFError,
                     NumericalError, SolverError)
from .fiber import covariant_curl_normal, covariant_divergence, fiber_match, fiber_to_frames, project_fiber
from .frames import FrameField, GradientAccumulator, align_frames, init_frames, validity_check
from .mesh import SurfaceMesh, build_plane_mesh, build_sphere_mesh
from .pde import ApParams, DiffusionOperator, SolverConfig, ap_reaction, make_dframes, mmf_laplacian, run

__all__ = [
    "ApParams", "ConfigError", "ConnectionField", "CurvatureField", "DiffusionOperator", "FrameField",
    "GradientAccumulator", "InvalidInputError", "InvalidMeshError", "MMFError", "MeshParseError",
    "NumericalError", "SolverConfig", "SolverError", "SurfaceMesh", "align_frames", "ap_reaction",
    "build_plane_mesh", "build_sphere_mesh", "connection_form", "covariant_curl_normal",
    "covariant_divergence", "curvature", "fiber_match", "fiber_to_frames", "gauss_mean", "init_frames",
    "make_dframes", "mmf_laplacian", "project_fiber", "run", "validity_check",
]

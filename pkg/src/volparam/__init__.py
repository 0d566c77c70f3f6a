"""Volumetric parameterization of genus-0 solids.

A harmonic potential is solved over a voxelized domain (boundary 1, shape
center 0), gradient streamlines are traced from every boundary vertex to the
center, and each point of the solid receives unique coordinates
(phi, theta, psi): the potential plus the polar/azimuthal angle at which its
streamline approaches the center.
"""

__version__ = "0.1.0"

from . import errors
from .grid import GridConfig, VoxelGrid, apply_boundary_conditions, \
    choose_center, discretize
from .mapper import Atlas, MappingContext, ParamTriple, build_atlas, \
    build_mapping, endpoint_angles, inverse_map, parameterize_point, to_sphere
from .mesh_io import SurfaceMesh, load_mesh, read_field, write_field, \
    write_mesh
from .pipeline import PipelineConfig, load_config, run_pipeline
from .sampler import TrilinearCell, fit_cell, sample_gradient, sample_phi
from .shapes import generate_shape, make_shape
from .solver import SolveReport, SolverConfig, solve
from .tracer import Streamline, Termination, TracerConfig, trace, trace_all

__all__ = [
    "errors", "GridConfig", "VoxelGrid", "apply_boundary_conditions",
    "choose_center", "discretize", "Atlas", "MappingContext", "ParamTriple",
    "build_atlas", "build_mapping", "endpoint_angles", "inverse_map",
    "parameterize_point", "to_sphere", "SurfaceMesh", "load_mesh",
    "read_field", "write_field", "write_mesh", "PipelineConfig",
    "load_config", "run_pipeline", "TrilinearCell", "fit_cell",
    "sample_gradient", "sample_phi", "generate_shape", "make_shape",
    "SolveReport", "SolverConfig", "solve", "Streamline", "Termination",
    "TracerConfig", "trace", "trace_all",
]

"""Divergence-free virtual elements for inductionless MHD on polyhedral meshes.

Lowest-order-2 velocity (enhanced Stokes-type space), H(div) current
density, discontinuous pressure and potential, and decoupled SAV time
stepping of first and second order.
"""
from .exceptions import (ConfigError, DegenerateScalarError, DivergenceCheckError, GeometryError,
                         NonmonotoneEnergyError, NumericalRankError, ParseError, SingularSystemError,
                         SolveError, VemError)
from .forms import build_discretization
from .harness import (AppliedField, ConvergencePlan, ErrorReport, RunSpec, SpatialCase, TemporalCase,
                      convergence_study, decay_case, divergence_table, errors, simulate)
from .mesh import PolyMesh, build_cube_mesh, build_dtp_mesh, export_mesh, import_mesh, mesh_size
from .stepper import SchemeConfig, ZeroData, build_systems, init_state, run

__version__ = "0.1.0"

__all__ = [
    "AppliedField", "ConfigError", "ConvergencePlan", "DegenerateScalarError", "DivergenceCheckError",
    "ErrorReport", "GeometryError", "NonmonotoneEnergyError", "NumericalRankError", "ParseError",
    "PolyMesh", "RunSpec", "SchemeConfig", "SingularSystemError", "SolveError", "SpatialCase",
    "TemporalCase", "VemError", "ZeroData", "build_cube_mesh", "build_discretization",
    "build_dtp_mesh", "build_systems", "convergence_study", "decay_case", "divergence_table",
    "errors", "export_mesh", "import_mesh", "init_state", "mesh_size", "run", "simulate",
]

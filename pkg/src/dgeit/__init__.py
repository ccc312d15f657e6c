"""EIT reconstruction with a third-order MD-LDG forward solver."""
from .dgcore import BoundaryTrace, DgFunction, DgSpace, FluxField, project
from .dtn import build_cache, df_adjoint_apply, df_apply, forward_map
from .estimator import EITReconstructor
from .exceptions import (CoefficientRangeError, ConfigError, InvalidArgumentError,
                         SolverError)
from .experiments import PHANTOMS, NoiseModel, generate_data, measurement_suite, run_eoc
from .inverse import InverseConfig, Measurements, gauss_newton
from .mesh import Box, Mesh, build_mesh, classify_edges

__version__ = "0.1.0"

__all__ = [
    "Box", "Mesh", "build_mesh", "classify_edges",
    "DgSpace", "DgFunction", "FluxField", "BoundaryTrace", "project",
    "build_cache", "forward_map", "df_apply", "df_adjoint_apply",
    "InverseConfig", "Measurements", "gauss_newton",
    "PHANTOMS", "NoiseModel", "generate_data", "measurement_suite", "run_eoc",
    "EITReconstructor",
    "InvalidArgumentError", "CoefficientRangeError", "SolverError", "ConfigError",
]

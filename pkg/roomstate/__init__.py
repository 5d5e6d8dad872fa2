"""
roomstate - Boundary-integral state-space room acoustics

Frequency-domain boundary-integral simulation of rooms written as a
discrete state-space system, with sweeps, impulse responses, operator
diagnostics and image-source reference solutions.
"""

__version__ = "0.1.0"
__author__ = "Ashley Stewart"

from .assembly import BasisSet, OperatorAssembler, OperatorSet, assemble_operator_set
from .config import ConfigError, RunConfig, load_config
from .formatter import ResultFormatter
from .geometry import (
    BoundaryMesh,
    GeometryError,
    Medium,
    Scene,
    SceneValidationError,
    load_mesh,
    load_scene,
    make_plate,
    make_shoebox,
    validate_scene,
)
from .kernels import LaplacePoint
from .quadrature import QuadratureRule
from .response import (
    FrequencyGrid,
    ImpulseResponse,
    SolverOptions,
    SymmetryError,
    TransferFunction,
    sweep,
    to_impulse_response,
)
from .simulation import ComparisonSetupError, RoomSimulation, create_simulation
from .solver import DivergenceError, SolveError, solve_direct, solve_neumann
from .utils import create_example_scene

__all__ = [
    "BoundaryMesh",
    "Medium",
    "Scene",
    "load_mesh",
    "load_scene",
    "make_shoebox",
    "make_plate",
    "validate_scene",
    "LaplacePoint",
    "QuadratureRule",
    "BasisSet",
    "OperatorSet",
    "OperatorAssembler",
    "assemble_operator_set",
    "solve_direct",
    "solve_neumann",
    "FrequencyGrid",
    "SolverOptions",
    "TransferFunction",
    "ImpulseResponse",
    "sweep",
    "to_impulse_response",
    "RunConfig",
    "load_config",
    "ResultFormatter",
    "RoomSimulation",
    "create_simulation",
    "create_example_scene",
    "GeometryError",
    "SceneValidationError",
    "ConfigError",
    "SolveError",
    "DivergenceError",
    "SymmetryError",
    "ComparisonSetupError",
]

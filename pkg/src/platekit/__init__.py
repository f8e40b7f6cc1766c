"""Kirchhoff-Love plate bending with reconstructed piecewise linear fields."""

from .analysis import (
    ErrorReport,
    LevyPlateField,
    SineField,
    convergence_study,
    energy_error,
    fit_slope,
    get_problem,
    l2_error,
    reference_p2,
)
from .element import MaterialParams, P2Basis
from .kernels import BACKEND
from .mesh import BcLayout, Mesh, read_mesh, unit_square_mesh, write_mesh
from .patch import DegeneratePatchError, PatchStatus, build_patches
from .reconstruction import ReconKind, build_maps
from .system import (
    BoundaryData,
    DgConfig,
    IndefiniteSystemError,
    MethodSpec,
    SingularSystemError,
    assemble,
    solve,
    solve_problem,
)

__version__ = "0.1.0"

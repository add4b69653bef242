"""Linear-elastic tetrahedral FEM for chest-compression (CPR) mechanics."""

from thoraxfem.errors import (
    ConfigurationError,
    ElementError,
    ExportError,
    FormatError,
    IntegrityError,
    MaterialError,
    SolverError,
    ThoraxFemError,
    UnsupportedElementError,
)
from thoraxfem.materials import Material, builtin_material_table, elasticity_matrix, lame_from_young_poisson
from thoraxfem.mesh import Mesh, parse_msh, select_nodes, validate_mesh, write_msh

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ElementError",
    "ExportError",
    "FormatError",
    "IntegrityError",
    "Material",
    "MaterialError",
    "Mesh",
    "SolverError",
    "ThoraxFemError",
    "UnsupportedElementError",
    "builtin_material_table",
    "elasticity_matrix",
    "lame_from_young_poisson",
    "parse_msh",
    "select_nodes",
    "validate_mesh",
    "write_msh",
]

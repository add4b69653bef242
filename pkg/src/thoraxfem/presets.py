"""Builders for the shipped scenario documents."""

from __future__ import annotations

from thoraxfem.materials import BONES, CARTILAGE_GROUPS, MYOCARDIUM, SOFT_TISSUE
from thoraxfem.pipeline import HEAVY_LOAD_FORCE

CPR_FORCE = 450.0
"""Default sternum force (N), in the range of manual chest compressions."""
CPR_MAX_ITERATIONS = 50000


def cpr_materials() -> dict[str, str]:
    mats = {"SOFT_TISSUE": SOFT_TISSUE, "BONE": BONES, "MYOCARDIUM": MYOCARDIUM}
    mats.update({f"CARTILAGE_{g + 1}": name for g, name in enumerate(CARTILAGE_GROUPS)})
    return mats


def cpr_scenario(mesh: dict, heavy_load: bool = False, name: str = "cpr_phantom", cavity: str = "void") -> dict:
    """Chest-compression scenario on a phantom mesh source.

    The back face and the ``MYO_FIXED`` patch are clamped and the sternum
    patch carries a force along ``-z`` ramped over 0.5 s in 0.05 s steps.
    """
    force = HEAVY_LOAD_FORCE if heavy_load else CPR_FORCE
    return {
        "name": name,
        "mesh": mesh,
        "unit_scale": 1.0,
        "materials": cpr_materials(),
        "cavity": cavity,
        "dirichlet": [
            {"name": "back", "select": {"facet": "BACK"}, "components": "xyz", "value": [0.0, 0.0, 0.0]},
            {"name": "myocardium", "select": {"node_set": "MYO_FIXED"}, "components": "xyz", "value": [0.0, 0.0, 0.0]},
        ],
        "tractions": [{"name": "sternum", "select": {"facet": "STERNUM_PATCH"}, "total_force": [0.0, 0.0, -force]}],
        "schedule": {"t_end": 0.5, "dt": 0.05, "ramp": "linear"},
        "solver": {"tolerance": 1e-8, "max_iterations": CPR_MAX_ITERATIONS, "preconditioner": "jacobi"},
        "output": {"steps": "all", "fields": ["displacement", "von_mises", "normal_stress", "region_tag"],
                   "normal_axis": "z", "vtk": True},
    }

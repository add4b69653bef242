"""Isotropic linear-elastic materials and the thorax material catalog.

Voigt order is ``(xx, yy, zz, xy, yz, zx)`` with engineering shear strain
(``gamma = 2 * eps``), so the shear block of ``D`` is exactly ``mu``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from thoraxfem.errors import MaterialError

VOIGT = ("xx", "yy", "zz", "xy", "yz", "zx")


@dataclass(frozen=True)
class Material:
    """Young's modulus ``E`` (Pa), Poisson ratio ``nu`` and density ``rho`` (kg/m^3).

    Density is carried through to the outputs but the quasi-static solve
    never uses it.
    """

    name: str
    E: float
    nu: float
    rho: float

    def __post_init__(self):
        if not self.E > 0:
            raise MaterialError(f"{self.name}: Young's modulus must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise MaterialError(f"{self.name}: Poisson ratio must lie in (-1, 0.5), got {self.nu}")
        if not self.rho > 0:
            raise MaterialError(f"{self.name}: density must be positive, got {self.rho}")

    def lame(self) -> tuple[float, float]:
        return lame_from_young_poisson(self.E, self.nu)

    def D(self) -> NDArray[np.float64]:
        return elasticity_matrix(*self.lame())


def lame_from_young_poisson(E: float, nu: float) -> tuple[float, float]:
    """Return ``(lambda, mu)`` for an isotropic material."""
    if not -1.0 < nu < 0.5:
        raise MaterialError(f"inadmissible Poisson ratio {nu}; need -1 < nu < 0.5")
    if not E > 0:
        raise MaterialError(f"inadmissible Young's modulus {E}; need E > 0")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


def young_poisson_from_lame(lam: float, mu: float) -> tuple[float, float]:
    return mu * (3.0 * lam + 2.0 * mu) / (lam + mu), lam / (2.0 * (lam + mu))


def elasticity_matrix(lam: float, mu: float) -> NDArray[np.float64]:
    """6x6 isotropic stiffness in Voigt order with engineering shear."""
    if not mu > 0 or lam < 0:
        raise MaterialError(f"need mu > 0 and lambda >= 0, got lambda={lam}, mu={mu}")
    D = np.zeros((6, 6))
    D[:3, :3] = lam
    D[[0, 1, 2], [0, 1, 2]] = lam + 2.0 * mu
    D[[3, 4, 5], [3, 4, 5]] = mu
    return D


MYOCARDIUM = "Myocardium"
BONES = "Bones"
SOFT_TISSUE = "Soft tissue"
CARTILAGE_GROUPS = (
    "Cartilage group (1L..1R)",
    "Cartilage group (2L..3R)",
    "Cartilage group (4L..5R)",
    "Cartilage group (6L..8R)",
)

# Soft filler used when the cardiac cavity is not left void; not a catalog entry.
CAVITY_FILLER = Material("Cavity filler", E=5e3, nu=0.49, rho=1000.0)


def builtin_material_table() -> dict[str, Material]:
    """Catalog of thorax materials keyed by name."""
    entries = [
        Material(MYOCARDIUM, 1e6, 0.3, 2000.0),
        Material(BONES, 2e9, 0.2, 1000.0),
        Material(SOFT_TISSUE, 9e4, 0.2, 1000.0),
        Material(CARTILAGE_GROUPS[0], 9e6, 0.3, 1100.0),
        Material(CARTILAGE_GROUPS[1], 8e7, 0.3, 1100.0),
        Material(CARTILAGE_GROUPS[2], 7e7, 0.3, 1100.0),
        Material(CARTILAGE_GROUPS[3], 4e7, 0.3, 1100.0),
    ]
    return {m.name: m for m in entries}


def cartilage_group(rib_number: int) -> int:
    """Catalog cartilage group (1..4) for a 1-based rib number."""
    if rib_number <= 1:
        return 1
    if rib_number <= 3:
        return 2
    if rib_number <= 5:
        return 3
    return 4

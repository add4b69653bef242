"""Shared fixtures: small meshes and MSH documents."""

from __future__ import annotations

import numpy as np
import pytest

from thoraxfem.materials import builtin_material_table
from thoraxfem.phantom import BarSpec, gen_bar

UNIT_TET_MSH = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
$EndNodes
$Elements
1
1 4 2 7 7 {conn}
$EndElements
"""


def unit_tet_msh(conn: str = "1 2 3 4") -> str:
    return UNIT_TET_MSH.format(conn=conn)


@pytest.fixture
def unit_tet_text() -> str:
    return unit_tet_msh()


@pytest.fixture
def heart():
    return builtin_material_table()["Myocardium"]


@pytest.fixture
def cube_mesh():
    """Unit cube split into 3x3x3 cells."""
    return gen_bar(BarSpec(1.0, 1.0, 1.0, 3, 3, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


ACCEPTANCE_LINES: list[str] = []
"""Filled by ``test_acceptance.py``; printed once at the end of the session."""


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split("]", 1)[1]):
            terminalreporter.write_line(line)

"""Legacy VTK and CSV writers.

Numbers are written with ``%.17g`` so identical inputs always give
identical bytes and floats survive a text round trip exactly.
"""

from __future__ import annotations

import csv
import io

import numpy as np
from numpy.typing import NDArray

from thoraxfem.errors import ExportError
from thoraxfem.mesh import Mesh
from thoraxfem.stress import RegionSummary

VTK_TETRA = 10

CSV_HEADER = [
    "step",
    "time_s",
    "region",
    "max_disp_m",
    "mean_disp_m",
    "max_vm_pa",
    "mean_vm_pa",
    "max_normal_pa",
    "min_normal_pa",
    "loc_max_disp",
    "loc_max_vm",
]


def _g(x: float) -> str:
    return "%.17g" % (x + 0.0)  # + 0.0 folds -0.0 into 0


def _rows(a: NDArray) -> str:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return "\n".join(_g(v) for v in a.tolist())
    return "\n".join(" ".join(_g(v) for v in row) for row in a.tolist())


def write_vtk(
    mesh: Mesh,
    displacement: NDArray | None = None,
    von_mises: NDArray | None = None,
    normal_stress: NDArray | None = None,
    title: str = "thoraxfem",
    region_tag: bool = True,
) -> str:
    """Legacy VTK 3.0 ASCII unstructured grid with the requested point fields.

    Args:
        displacement: ``(n_nodes, 3)`` written as ``VECTORS displacement``.
        von_mises, normal_stress: ``(n_nodes,)`` written as ``SCALARS``.
        region_tag: write ``CELL_DATA`` with the region tag of every tet.

    Raises:
        ExportError: a field does not match the node count.
    """
    n, m = mesh.n_nodes, mesh.n_tets
    for name, arr, shape in (
        ("displacement", displacement, (n, 3)),
        ("von_mises", von_mises, (n,)),
        ("normal_stress", normal_stress, (n,)),
    ):
        if arr is not None and np.shape(arr) != shape:
            raise ExportError(f"{name} has shape {np.shape(arr)}, expected {shape}")

    out = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
        _rows(mesh.nodes),
        f"CELLS {m} {5 * m}",
        "\n".join(f"4 {a} {b} {c} {d}" for a, b, c, d in mesh.tets.tolist()),
        f"CELL_TYPES {m}",
        "\n".join([str(VTK_TETRA)] * m),
    ]
    point_data = []
    if displacement is not None:
        point_data += ["VECTORS displacement double", _rows(displacement)]
    for name, arr in (("von_mises", von_mises), ("normal_stress", normal_stress)):
        if arr is not None:
            point_data += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _rows(arr)]
    if point_data:
        out += [f"POINT_DATA {n}", *point_data]
    if region_tag:
        out += [
            f"CELL_DATA {m}",
            "SCALARS region_tag int 1",
            "LOOKUP_TABLE default",
            "\n".join(str(t) for t in mesh.tet_tags.tolist()),
        ]
    return "\n".join(line for line in out if line != "") + "\n"


def write_summary_csv(summaries: list[RegionSummary]) -> str:
    """RFC 4180 CSV, one row per region per step, SI units."""
    if not summaries:
        raise ExportError("no summaries to write")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(CSV_HEADER)
    for s in summaries:
        w.writerow([
            s.step,
            _g(s.time),
            s.region,
            _g(s.max_disp),
            _g(s.mean_disp),
            _g(s.max_vm),
            _g(s.mean_vm),
            _g(s.max_normal),
            _g(s.min_normal),
            s.loc_max_disp,
            s.loc_max_vm,
        ])
    return buf.getvalue()


def read_summary_csv(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))

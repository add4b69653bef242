"""Multi-region tetrahedral mesh model and MSH 2.2 ASCII input/output.

Nodes are stored as an ``(n, 3)`` float array in meters, volume elements as
``(m, 4)`` TET4 connectivity into that array and surface facets as ``(k, 3)``
TRI3 connectivity. The original file ids are kept alongside so that results
can be reported against the numbering a user sees in their mesh file.

Example::

    mesh = parse_msh(Path("thorax.msh").read_text())
    back = select_nodes(mesh, facet="BACK")
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from thoraxfem.errors import FormatError, IntegrityError, UnsupportedElementError

#: Absolute floor on tet volume (m^3) below which an element is degenerate.
ABS_VOLUME_TOL = 1e-18
#: Relative floor, as a fraction of the mean tet volume.
REL_VOLUME_TOL = 1e-12

MSH_TRI3 = 2
MSH_TET4 = 4


class TetVolume(NamedTuple):
    volume: float
    degenerate: bool


class TriGeometry(NamedTuple):
    area: float
    normal: NDArray[np.float64]
    degenerate: bool


def signed_tet_volume(p0: ArrayLike, p1: ArrayLike, p2: ArrayLike, p3: ArrayLike) -> float:
    p0 = np.asarray(p0, dtype=float)
    m = np.array([np.asarray(p1, float) - p0, np.asarray(p2, float) - p0, np.asarray(p3, float) - p0])
    return float(np.linalg.det(m)) / 6.0


def tet_volume(p0: ArrayLike, p1: ArrayLike, p2: ArrayLike, p3: ArrayLike) -> TetVolume:
    """Unsigned volume of a tetrahedron with a degeneracy flag.

    Only the absolute floor applies here; the relative floor needs the
    whole mesh and is handled by :func:`validate_mesh`.
    """
    v = abs(signed_tet_volume(p0, p1, p2, p3))
    return TetVolume(v, v < ABS_VOLUME_TOL)


def tri_area_normal(p0: ArrayLike, p1: ArrayLike, p2: ArrayLike) -> TriGeometry:
    p0 = np.asarray(p0, dtype=float)
    e1 = np.asarray(p1, dtype=float) - p0
    e2 = np.asarray(p2, dtype=float) - p0
    c = np.cross(e1, e2)
    norm = float(np.linalg.norm(c))
    scale = max(float(e1 @ e1), float(e2 @ e2), float((e2 - e1) @ (e2 - e1)))
    if norm == 0.0 or norm <= 1e-12 * scale:
        return TriGeometry(0.5 * norm, np.zeros(3), True)
    return TriGeometry(0.5 * norm, c / norm, False)


def signed_volumes(nodes: NDArray, tets: NDArray) -> NDArray[np.float64]:
    """Vectorized signed volumes of all tets."""
    p = nodes[tets]
    d = p[:, 1:, :] - p[:, :1, :]
    return np.linalg.det(d) / 6.0


def facet_area_normals(nodes: NDArray, facets: NDArray) -> tuple[NDArray, NDArray]:
    """Areas ``(k,)`` and unit normals ``(k, 3)`` of triangle facets."""
    p = nodes[facets]
    c = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    norm = np.linalg.norm(c, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        normals = np.where(norm[:, None] > 0, c / norm[:, None], 0.0)
    return 0.5 * norm, normals


def _frozen(a: ArrayLike, dtype) -> NDArray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable multi-region tetrahedral mesh.

    Attributes:
        nodes: ``(n, 3)`` coordinates in meters.
        tets: ``(m, 4)`` node indices; positively oriented once loaded.
        tet_tags: ``(m,)`` region tag per tet.
        facets: ``(k, 3)`` node indices of surface triangles.
        facet_tags: ``(k,)`` tag per facet.
        region_names: region tag -> name.
        facet_names: facet tag -> name.
        node_sets: name -> sorted node indices. Every named facet group
            contributes a set with the same name.
        node_ids, tet_ids, facet_ids: original (file) ids, 1-based.
    """

    nodes: NDArray[np.float64]
    tets: NDArray[np.int64]
    tet_tags: NDArray[np.int64]
    facets: NDArray[np.int64] = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    facet_tags: NDArray[np.int64] = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    region_names: dict[int, str] = field(default_factory=dict)
    facet_names: dict[int, str] = field(default_factory=dict)
    node_sets: dict[str, NDArray[np.int64]] = field(default_factory=dict)
    node_ids: NDArray[np.int64] | None = None
    tet_ids: NDArray[np.int64] | None = None
    facet_ids: NDArray[np.int64] | None = None

    def __post_init__(self):
        nodes = _frozen(self.nodes, np.float64).reshape(-1, 3)
        tets = _frozen(self.tets, np.int64).reshape(-1, 4)
        facets = _frozen(self.facets, np.int64).reshape(-1, 3)
        tet_tags = _frozen(self.tet_tags, np.int64).reshape(-1)
        facet_tags = _frozen(self.facet_tags, np.int64).reshape(-1)
        if tet_tags.shape[0] != tets.shape[0] or facet_tags.shape[0] != facets.shape[0]:
            raise IntegrityError("tag array length does not match element count")
        if not np.all(np.isfinite(nodes)):
            raise IntegrityError("non-finite node coordinates")
        n = nodes.shape[0]
        for conn, kind in ((tets, "tet"), (facets, "facet")):
            if conn.size and (conn.min() < 0 or conn.max() >= n):
                raise IntegrityError(f"{kind} references a node index outside 0..{n - 1}")

        def ids(a, count):
            return _frozen(np.arange(1, count + 1) if a is None else a, np.int64)

        sets = {}
        for tag, name in self.facet_names.items():
            sets[name] = _frozen(np.unique(facets[facet_tags == tag]), np.int64)
        for name, idx in self.node_sets.items():
            sets[name] = _frozen(np.unique(np.asarray(idx, dtype=np.int64)), np.int64)

        set_ = object.__setattr__
        set_(self, "nodes", nodes)
        set_(self, "tets", tets)
        set_(self, "facets", facets)
        set_(self, "tet_tags", tet_tags)
        set_(self, "facet_tags", facet_tags)
        set_(self, "region_names", dict(self.region_names))
        set_(self, "facet_names", dict(self.facet_names))
        set_(self, "node_sets", sets)
        set_(self, "node_ids", ids(self.node_ids, n))
        set_(self, "tet_ids", ids(self.tet_ids, tets.shape[0]))
        set_(self, "facet_ids", ids(self.facet_ids, facets.shape[0]))

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_tets(self) -> int:
        return self.tets.shape[0]

    @property
    def n_facets(self) -> int:
        return self.facets.shape[0]

    def volumes(self) -> NDArray[np.float64]:
        return signed_volumes(self.nodes, self.tets)

    def region_tag(self, key: int | str) -> int:
        return _resolve_tag(key, self.region_names, self.tet_tags, "region")

    def facet_tag(self, key: int | str) -> int:
        return _resolve_tag(key, self.facet_names, self.facet_tags, "facet")

    def region_name(self, tag: int) -> str:
        return self.region_names.get(int(tag), f"region_{int(tag)}")

    def region_tags(self) -> list[int]:
        return sorted(int(t) for t in np.unique(self.tet_tags))

    def with_unit_scale(self, scale: float) -> Mesh:
        if scale == 1.0:
            return self
        return Mesh(
            self.nodes * scale, self.tets, self.tet_tags, self.facets, self.facet_tags,
            self.region_names, self.facet_names, self.node_sets,
            self.node_ids, self.tet_ids, self.facet_ids,
        )


def _resolve_tag(key, names: dict[int, str], tags: NDArray, kind: str) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key)
    for tag, name in names.items():
        if name == key:
            return tag
    try:
        return int(key)
    except (TypeError, ValueError):
        raise KeyError(f"unknown {kind} {key!r}; known: {sorted(names.values())}") from None


def orient_tets(nodes: NDArray, tets: NDArray) -> NDArray[np.int64]:
    """Return connectivity with negative-volume tets fixed by swapping their last two nodes."""
    tets = np.array(tets, dtype=np.int64, copy=True)
    neg = signed_volumes(nodes, tets) < 0
    tets[neg, 2], tets[neg, 3] = tets[neg, 3].copy(), tets[neg, 2].copy()
    return tets


# ---------------------------------------------------------------------------
# MSH 2.2 ASCII
# ---------------------------------------------------------------------------


def _sections(text: str) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {}
    current = None
    body: list[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if current is None:
            if line.startswith("$"):
                current = line[1:]
                body = []
            continue
        if line == "$End" + current:
            sections.setdefault(current, body)
            current = None
        else:
            body.append(line)
    if current is not None:
        raise FormatError(f"section ${current} is not terminated")
    return sections


def parse_msh(text: str, unit_scale: float = 1.0) -> Mesh:
    """Parse a Gmsh MSH 2.2 ASCII document into a :class:`Mesh`.

    Only TRI3 (type 2) and TET4 (type 4) elements are accepted. The first
    element tag is used as the region/facet tag. ``$PhysicalNames``, when
    present, supplies region and facet names.

    Raises:
        FormatError: missing sections, wrong version or binary file.
        UnsupportedElementError: any element type other than 2 or 4.
        IntegrityError: an element references an undeclared node id.
    """
    sec = _sections(text)
    for required in ("MeshFormat", "Nodes", "Elements"):
        if required not in sec:
            raise FormatError(f"missing ${required} section")
    fmt = sec["MeshFormat"][0].split()
    if len(fmt) < 3:
        raise FormatError("malformed $MeshFormat line")
    if not fmt[0].startswith("2.2"):
        raise FormatError(f"unsupported MSH version {fmt[0]} (only 2.2 ASCII)")
    if fmt[1] != "0":
        raise FormatError("binary MSH files are not supported (only 2.2 ASCII)")

    region_names: dict[int, str] = {}
    facet_names: dict[int, str] = {}
    if "PhysicalNames" in sec:
        for line in sec["PhysicalNames"][1:]:
            dim, tag, name = line.split(maxsplit=2)
            target = region_names if int(dim) == 3 else facet_names if int(dim) == 2 else None
            if target is not None:
                target[int(tag)] = name.strip().strip('"')

    try:
        node_lines = sec["Nodes"]
        n = int(node_lines[0])
        table = np.array([ln.split()[:4] for ln in node_lines[1:n + 1]], dtype=float).reshape(-1, 4)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"malformed $Nodes section: {exc}") from None
    if table.shape[0] != n:
        raise FormatError(f"$Nodes declares {n} nodes but lists {table.shape[0]}")
    node_ids = table[:, 0].astype(np.int64)
    if np.unique(node_ids).size != n:
        raise IntegrityError("duplicate node ids")
    coords = table[:, 1:] * unit_scale
    index_of = {int(i): k for k, i in enumerate(node_ids)}

    tets, tet_tags, tet_ids = [], [], []
    tris, tri_tags, tri_ids = [], [], []
    elem_lines = sec["Elements"]
    try:
        m = int(elem_lines[0])
    except (ValueError, IndexError):
        raise FormatError("malformed $Elements header") from None
    lines = elem_lines[1:m + 1]
    if len(lines) != m:
        raise FormatError(f"$Elements declares {m} elements but lists {len(lines)}")
    for line in lines:
        parts = [int(p) for p in line.split()]
        eid, etype, ntags = parts[0], parts[1], parts[2]
        tags = parts[3:3 + ntags]
        conn = parts[3 + ntags:]
        if etype == MSH_TET4:
            nn, dest, dtags, dids = 4, tets, tet_tags, tet_ids
        elif etype == MSH_TRI3:
            nn, dest, dtags, dids = 3, tris, tri_tags, tri_ids
        else:
            raise UnsupportedElementError(f"element {eid}: unsupported element type {etype}")
        if len(conn) != nn:
            raise FormatError(f"element {eid}: expected {nn} nodes, got {len(conn)}")
        try:
            idx = [index_of[c] for c in conn]
        except KeyError as exc:
            raise IntegrityError(f"element {eid} references undeclared node id {exc.args[0]}") from None
        if len(set(idx)) != nn:
            raise IntegrityError(f"element {eid} repeats a node")
        dest.append(idx)
        dtags.append(tags[0] if tags else 0)
        dids.append(eid)

    tet_arr = np.array(tets, dtype=np.int64).reshape(-1, 4)
    tet_arr = orient_tets(coords, tet_arr)
    return Mesh(
        nodes=coords,
        tets=tet_arr,
        tet_tags=np.array(tet_tags, dtype=np.int64),
        facets=np.array(tris, dtype=np.int64).reshape(-1, 3),
        facet_tags=np.array(tri_tags, dtype=np.int64),
        region_names=region_names,
        facet_names=facet_names,
        node_ids=node_ids,
        tet_ids=np.array(tet_ids, dtype=np.int64),
        facet_ids=np.array(tri_ids, dtype=np.int64),
    )


def write_msh(mesh: Mesh) -> str:
    """Serialize a mesh as MSH 2.2 ASCII (facets first, then tets).

    Coordinates use 17 significant digits so that :func:`parse_msh` recovers
    them bit for bit.
    """
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat"]
    names = [(2, t, n) for t, n in sorted(mesh.facet_names.items())]
    names += [(3, t, n) for t, n in sorted(mesh.region_names.items())]
    if names:
        out.append("$PhysicalNames")
        out.append(str(len(names)))
        out.extend(f'{d} {t} "{n}"' for d, t, n in names)
        out.append("$EndPhysicalNames")
    out.append("$Nodes")
    out.append(str(mesh.n_nodes))
    ids = mesh.node_ids
    out.extend(
        f"{ids[i]} {x:.17g} {y:.17g} {z:.17g}" for i, (x, y, z) in enumerate(mesh.nodes.tolist())
    )
    out.append("$EndNodes")
    out.append("$Elements")
    out.append(str(mesh.n_facets + mesh.n_tets))
    eid = 1
    for conn, tag in zip(ids[mesh.facets].tolist(), mesh.facet_tags.tolist()):
        out.append(f"{eid} {MSH_TRI3} 2 {tag} {tag} {conn[0]} {conn[1]} {conn[2]}")
        eid += 1
    for conn, tag in zip(ids[mesh.tets].tolist(), mesh.tet_tags.tolist()):
        out.append(f"{eid} {MSH_TET4} 2 {tag} {tag} {conn[0]} {conn[1]} {conn[2]} {conn[3]}")
        eid += 1
    out.append("$EndElements")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


def select_nodes(
    mesh: Mesh,
    *,
    box: ArrayLike | None = None,
    region: int | str | None = None,
    facet: int | str | None = None,
    node_set: str | None = None,
) -> NDArray[np.int64]:
    """Return sorted node indices matching exactly one selector.

    Args:
        box: ``[[xmin, ymin, zmin], [xmax, ymax, zmax]]``, closed.
        region: region tag or name; nodes of all tets in that region.
        facet: facet tag or name; nodes of all facets with that tag.
        node_set: name of a node set stored on the mesh.

    An empty result is returned with a ``UserWarning``.
    """
    given = [s is not None for s in (box, region, facet, node_set)]
    if sum(given) != 1:
        raise ValueError("select_nodes needs exactly one of box, region, facet, node_set")
    if box is not None:
        lo, hi = np.asarray(box, dtype=float).reshape(2, 3)
        inside = np.all((mesh.nodes >= lo) & (mesh.nodes <= hi), axis=1)
        sel = np.flatnonzero(inside).astype(np.int64)
        what = f"box {lo.tolist()}..{hi.tolist()}"
    elif region is not None:
        tag = mesh.region_tag(region)
        sel = np.unique(mesh.tets[mesh.tet_tags == tag])
        what = f"region {region!r}"
    elif facet is not None:
        tag = mesh.facet_tag(facet)
        sel = np.unique(mesh.facets[mesh.facet_tags == tag])
        what = f"facet {facet!r}"
    else:
        if node_set not in mesh.node_sets:
            raise KeyError(f"unknown node set {node_set!r}; known: {sorted(mesh.node_sets)}")
        sel = mesh.node_sets[node_set]
        what = f"node set {node_set!r}"
    if sel.size == 0:
        warnings.warn(f"selection {what} is empty", UserWarning, stacklevel=2)
    return np.asarray(sel, dtype=np.int64)


def select_facets(mesh: Mesh, *, box: ArrayLike | None = None, facet: int | str | None = None) -> NDArray[np.int64]:
    """Facet indices by tag, or whose three nodes all lie inside a closed box."""
    if (box is None) == (facet is None):
        raise ValueError("select_facets needs exactly one of box, facet")
    if facet is not None:
        return np.flatnonzero(mesh.facet_tags == mesh.facet_tag(facet)).astype(np.int64)
    lo, hi = np.asarray(box, dtype=float).reshape(2, 3)
    p = mesh.nodes[mesh.facets]
    inside = np.all((p >= lo) & (p <= hi), axis=(1, 2))
    return np.flatnonzero(inside).astype(np.int64)


@dataclass
class ValidationReport:
    n_nodes: int
    n_tets: int
    n_facets: int
    total_volume: float
    min_volume: float
    max_volume: float
    n_degenerate: int
    degenerate: list[int]
    n_degenerate_facets: int
    n_unreferenced_nodes: int
    n_dangling: int
    region_volumes: dict[str, float]

    @property
    def valid(self) -> bool:
        return self.n_degenerate == 0 and self.n_dangling == 0 and self.total_volume > 0

    def lines(self) -> list[str]:
        out = [
            f"nodes: {self.n_nodes}",
            f"tets: {self.n_tets}",
            f"facets: {self.n_facets}",
            f"total volume: {self.total_volume:.6g} m^3",
            f"tet volume min/max: {self.min_volume:.6g} / {self.max_volume:.6g} m^3",
            f"degenerate tets: {self.n_degenerate}",
            f"degenerate facets: {self.n_degenerate_facets}",
            f"unreferenced nodes: {self.n_unreferenced_nodes}",
        ]
        out += [f"region {name}: {vol:.6g} m^3" for name, vol in self.region_volumes.items()]
        out.append("valid" if self.valid else "INVALID")
        return out


def degenerate_mask(volumes: NDArray) -> NDArray[np.bool_]:
    v = np.abs(volumes)
    mean = float(v.mean()) if v.size else 0.0
    return (v < ABS_VOLUME_TOL) | (v < REL_VOLUME_TOL * mean) | (volumes <= 0)


def validate_mesh(mesh: Mesh) -> ValidationReport:
    n = mesh.n_nodes
    dangling = 0
    for conn in (mesh.tets, mesh.facets):
        if conn.size:
            dangling += int(np.count_nonzero((conn < 0) | (conn >= n)))
    if mesh.n_tets:
        vols = mesh.volumes()
        bad = degenerate_mask(vols)
        absv = np.abs(vols)
        total, vmin, vmax = float(absv.sum()), float(absv.min()), float(absv.max())
    else:
        vols = np.zeros(0)
        bad = np.zeros(0, dtype=bool)
        total = vmin = vmax = 0.0
    areas, _ = facet_area_normals(mesh.nodes, mesh.facets) if mesh.n_facets else (np.zeros(0), None)
    used = np.zeros(n, dtype=bool)
    used[mesh.tets.ravel()] = True
    used[mesh.facets.ravel()] = True
    region_volumes = {
        mesh.region_name(t): float(np.abs(vols[mesh.tet_tags == t]).sum()) for t in mesh.region_tags()
    }
    return ValidationReport(
        n_nodes=n,
        n_tets=mesh.n_tets,
        n_facets=mesh.n_facets,
        total_volume=total,
        min_volume=vmin,
        max_volume=vmax,
        n_degenerate=int(bad.sum()),
        degenerate=np.flatnonzero(bad).tolist(),
        n_degenerate_facets=int(np.count_nonzero(areas <= 0)),
        n_unreferenced_nodes=int(np.count_nonzero(~used)),
        n_dangling=dangling,
        region_volumes=region_volumes,
    )

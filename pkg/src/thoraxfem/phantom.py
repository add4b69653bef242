"""Parametric benchmark meshes and a simplified thorax phantom.

Both generators mesh a structured background grid, split every cube cell into
six tetrahedra around its main diagonal (a conforming Kuhn split) and assign
region tags by testing each tet centroid against analytic bodies.

Phantom coordinates: ``x`` is left-right, ``y`` head-foot and ``z``
back-to-front. The back is the ``z = 0`` face; the sternum sits flush with
the ``z = lz`` face and is compressed along ``-z``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from numpy.typing import NDArray

from thoraxfem.errors import ConfigurationError
from thoraxfem.materials import cartilage_group
from thoraxfem.mesh import Mesh, orient_tets

# Kuhn split of a unit cell; corner index = dx + 2*dy + 4*dz.
_KUHN = np.array(
    [[0, 1, 3, 7], [0, 1, 5, 7], [0, 2, 3, 7], [0, 2, 6, 7], [0, 4, 5, 7], [0, 4, 6, 7]],
    dtype=np.int64,
)
# Faces opposite local nodes 0..3, ordered so the normal points outward of a
# positively oriented tet.
_TET_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]], dtype=np.int64)

BAR_FACES = {1: "XMIN", 2: "XMAX", 3: "YMIN", 4: "YMAX", 5: "ZMIN", 6: "ZMAX"}

SOFT_TISSUE = 1
BONE = 2
CARTILAGE = (3, 4, 5, 6)
MYOCARDIUM = 7
CAVITY = 8

REGION_NAMES = {
    SOFT_TISSUE: "SOFT_TISSUE",
    BONE: "BONE",
    CARTILAGE[0]: "CARTILAGE_1",
    CARTILAGE[1]: "CARTILAGE_2",
    CARTILAGE[2]: "CARTILAGE_3",
    CARTILAGE[3]: "CARTILAGE_4",
    MYOCARDIUM: "MYOCARDIUM",
    CAVITY: "CAVITY",
}

BACK = 101
STERNUM_PATCH = 102
SHELL_OUTER = 103
SHELL_INNER = 104
MYO_FIXED = 105

FACET_NAMES = {
    BACK: "BACK",
    STERNUM_PATCH: "STERNUM_PATCH",
    SHELL_OUTER: "SHELL_OUTER",
    SHELL_INNER: "SHELL_INNER",
    MYO_FIXED: "MYO_FIXED",
}


def structured_tets(origin, lengths, counts) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Nodes and positively oriented tets of a box split into 6 tets per cell."""
    nx, ny, nz = counts
    axes = [np.linspace(o, o + ln, n + 1) for o, ln, n in zip(origin, lengths, counts)]
    zz, yy, xx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    nodes = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    base = (i + (nx + 1) * (j + (ny + 1) * k)).ravel()
    sx, sy, sz = 1, nx + 1, (nx + 1) * (ny + 1)
    corner = np.array([dx * sx + dy * sy + dz * sz for dz in (0, 1) for dy in (0, 1) for dx in (0, 1)])
    cells = base[:, None] + corner[None, :]
    tets = cells[:, _KUHN].reshape(-1, 4)
    return nodes, orient_tets(nodes, tets)


def tet_faces(tets: NDArray[np.int64]) -> tuple[NDArray[np.int64], NDArray[np.int64], NDArray[np.int64]]:
    """All tet faces with outward orientation.

    Returns:
        faces: ``(4m, 3)`` oriented faces.
        owner: ``(4m,)`` tet index of each face.
        key: ``(4m,)`` id shared by the two copies of an interior face.
    """
    faces = tets[:, _TET_FACES].reshape(-1, 3)
    owner = np.repeat(np.arange(tets.shape[0]), 4)
    _, key = np.unique(np.sort(faces, axis=1), axis=0, return_inverse=True)
    return faces, owner, key.ravel()


def boundary_faces(tets: NDArray[np.int64]) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    faces, owner, key = tet_faces(tets)
    counts = np.bincount(key)
    once = counts[key] == 1
    return faces[once], owner[once]


@dataclass(frozen=True)
class BarSpec:
    lx: float
    ly: float
    lz: float
    nx: int = 1
    ny: int = 1
    nz: int = 1
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if min(self.lx, self.ly, self.lz) <= 0:
            raise ConfigurationError("bar lengths must be positive")
        if min(self.nx, self.ny, self.nz) < 1:
            raise ConfigurationError("bar subdivisions must be >= 1")


def gen_bar(spec: BarSpec) -> Mesh:
    """Structured box mesh with outer facets tagged 1..6 (-x, +x, -y, +y, -z, +z)."""
    lengths = (spec.lx, spec.ly, spec.lz)
    nodes, tets = structured_tets(spec.origin, lengths, (spec.nx, spec.ny, spec.nz))
    faces, _ = boundary_faces(tets)
    centroid = nodes[faces].mean(axis=1)
    lo = np.asarray(spec.origin, dtype=float)
    hi = lo + np.asarray(lengths)
    tags = np.zeros(len(faces), dtype=np.int64)
    for axis in range(3):
        tol = 1e-9 * lengths[axis]
        tags[np.abs(centroid[:, axis] - lo[axis]) < tol] = 2 * axis + 1
        tags[np.abs(centroid[:, axis] - hi[axis]) < tol] = 2 * axis + 2
    order = np.argsort(tags, kind="stable")
    return Mesh(
        nodes=nodes,
        tets=tets,
        tet_tags=np.ones(len(tets), dtype=np.int64),
        facets=faces[order],
        facet_tags=tags[order],
        region_names={1: "BAR"},
        facet_names=dict(BAR_FACES),
    )


@dataclass(frozen=True)
class ThoraxPhantomSpec:
    """Dimensions (m) of the thorax phantom.

    The sternum and ribs sit flush with the front (``+z``) face. Ribs run
    along ``x`` from ``rib_margin`` off the block sides to the sternum edge;
    the innermost ``cartilage_fraction`` of each rib half is costal
    cartilage. The heart is an ellipsoidal shell centred under the sternum,
    ``heart_depth`` below the front face.
    """

    block: tuple[float, float, float] = (0.30, 0.30, 0.22)
    sternum_size: tuple[float, float] = (0.04, 0.23)
    sternum_thickness: float = 0.02
    sternum_center: tuple[float, float] = (0.15, 0.155)
    rib_count: int = 8
    rib_width: float = 0.02
    rib_thickness: float = 0.02
    rib_spacing: float = 0.03
    rib_margin: float = 0.02
    cartilage_fraction: float = 0.3
    heart_semi_axes: tuple[float, float, float] = (0.05, 0.04, 0.06)
    heart_wall: float = 0.012
    heart_depth: float = 0.09
    fixed_patch_direction: tuple[float, float, float] = (-1.0, -1.0, -1.0)
    fixed_patch_angle_deg: float = 30.0
    h: float = 0.01

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, data: dict) -> ThoraxPhantomSpec:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown phantom spec keys: {sorted(unknown)}")
        conv = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        return cls(**conv)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @property
    def heart_center(self) -> NDArray[np.float64]:
        return np.array([*self.sternum_center, self.block[2] - self.heart_depth])

    @property
    def inner_semi_axes(self) -> tuple[float, float, float]:
        return tuple(a - self.heart_wall for a in self.heart_semi_axes)

    def rib_centers(self) -> NDArray[np.float64]:
        """``y`` coordinate of each rib, head to foot."""
        offsets = (np.arange(self.rib_count) - (self.rib_count - 1) / 2.0) * self.rib_spacing
        return self.sternum_center[1] + offsets

    def validate(self) -> None:
        lx, ly, lz = self.block
        if min(self.block) <= 0 or self.h <= 0:
            raise ConfigurationError("block dimensions and h must be positive")
        if min(self.heart_semi_axes) <= 0 or self.heart_wall <= 0:
            raise ConfigurationError("heart semi-axes and wall must be positive")
        if self.heart_wall >= min(self.heart_semi_axes):
            raise ConfigurationError("heart wall must be thinner than the smallest semi-axis")
        if self.rib_count < 0:
            raise ConfigurationError("rib_count must be >= 0")
        if not 0.0 <= self.cartilage_fraction <= 1.0:
            raise ConfigurationError("cartilage_fraction must lie in [0, 1]")
        if not 0.0 < self.fixed_patch_angle_deg < 90.0:
            raise ConfigurationError("fixed_patch_angle_deg must lie in (0, 90)")
        if np.linalg.norm(self.fixed_patch_direction) == 0:
            raise ConfigurationError("fixed_patch_direction must be non-zero")
        sx, sy = self.sternum_size
        cx, cy = self.sternum_center
        if not (0 < cx - sx / 2 and cx + sx / 2 < lx and 0 < cy - sy / 2 and cy + sy / 2 < ly):
            raise ConfigurationError("sternum must lie inside the block")
        if not 0 < self.sternum_thickness < lz:
            raise ConfigurationError("sternum thickness must lie in (0, lz)")
        if self.rib_count:
            ys = self.rib_centers()
            if ys[0] - self.rib_width / 2 <= 0 or ys[-1] + self.rib_width / 2 >= ly:
                raise ConfigurationError("ribs must lie inside the block")
            if not 0 < self.rib_margin < cx - sx / 2:
                raise ConfigurationError("rib_margin must leave room between block side and sternum")
            if not 0 < self.rib_thickness < lz:
                raise ConfigurationError("rib thickness must lie in (0, lz)")
        c = self.heart_center
        a = np.asarray(self.heart_semi_axes)
        if np.any(c - a <= 0) or np.any(c + a >= np.asarray(self.block)):
            raise ConfigurationError("heart shell must lie inside the block")
        skeleton_bottom = lz - max(self.sternum_thickness, self.rib_thickness if self.rib_count else 0.0)
        if c[2] + a[2] >= skeleton_bottom:
            raise ConfigurationError("heart shell must lie below the sternum and ribs")

    def analytic_volumes(self) -> dict[str, float]:
        """Exact volumes of the phantom bodies, keyed by region name."""
        a, b, c = self.heart_semi_axes
        ai, bi, ci = self.inner_semi_axes
        sx, sy = self.sternum_size
        sternum = sx * sy * self.sternum_thickness
        half_span = self.sternum_center[0] - sx / 2 - self.rib_margin
        cart_len = self.cartilage_fraction * half_span
        section = self.rib_width * self.rib_thickness
        # Sternum overrides ribs; ribs and sternum share the front face but
        # may differ in thickness, so only the sternum footprint is excluded.
        bone_ribs = 2 * (half_span - cart_len) * section * self.rib_count
        cart = {f"CARTILAGE_{g}": 0.0 for g in range(1, 5)}
        for k in range(self.rib_count):
            cart[f"CARTILAGE_{cartilage_group(k + 1)}"] += 2 * cart_len * section
        vols = {
            "BONE": sternum + bone_ribs,
            "MYOCARDIUM": 4.0 / 3.0 * math.pi * (a * b * c - ai * bi * ci),
            "CAVITY": 4.0 / 3.0 * math.pi * ai * bi * ci,
            **cart,
        }
        vols["SOFT_TISSUE"] = float(np.prod(self.block)) - sum(vols.values())
        return vols


def _in_ellipsoid(p: NDArray, center: NDArray, axes) -> NDArray[np.bool_]:
    q = (p - center) / np.asarray(axes)
    return np.einsum("ij,ij->i", q, q) <= 1.0


def classify_points(spec: ThoraxPhantomSpec, p: NDArray[np.float64]) -> NDArray[np.int64]:
    """Region tag of each point in ``p``."""
    lx, ly, lz = spec.block
    tags = np.full(len(p), SOFT_TISSUE, dtype=np.int64)
    center = spec.heart_center
    tags[_in_ellipsoid(p, center, spec.heart_semi_axes)] = MYOCARDIUM
    tags[_in_ellipsoid(p, center, spec.inner_semi_axes)] = CAVITY

    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    sx, sy = spec.sternum_size
    cx, cy = spec.sternum_center
    half = sx / 2
    if spec.rib_count:
        half_span = cx - half - spec.rib_margin
        cart_len = spec.cartilage_fraction * half_span
        dx = np.abs(x - cx)
        in_depth = z >= lz - spec.rib_thickness
        lateral = (dx > half) & (dx <= half + half_span)
        for k, yc in enumerate(spec.rib_centers()):
            on_rib = in_depth & lateral & (np.abs(y - yc) <= spec.rib_width / 2)
            cart = on_rib & (dx <= half + cart_len)
            tags[on_rib & ~cart] = BONE
            tags[cart] = CARTILAGE[cartilage_group(k + 1) - 1]
    sternum = (np.abs(x - cx) <= half) & (np.abs(y - cy) <= sy / 2) & (z >= lz - spec.sternum_thickness)
    tags[sternum] = BONE
    return tags


def grid_counts(spec: ThoraxPhantomSpec) -> tuple[int, int, int]:
    return tuple(max(1, int(round(L / spec.h))) for L in spec.block)


def gen_thorax_phantom(spec: ThoraxPhantomSpec | None = None) -> Mesh:
    """Generate the multi-region thorax phantom.

    Facet groups: ``BACK`` (whole ``z = 0`` face), ``STERNUM_PATCH`` (front
    facets inside the sternum footprint), ``SHELL_OUTER`` / ``SHELL_INNER``
    (myocardium interfaces with surrounding tissue / the cavity) and
    ``MYO_FIXED`` (outer-shell facets whose nodes all lie within
    ``fixed_patch_angle_deg`` of ``fixed_patch_direction`` seen from the heart
    centre). Each facet group doubles as a node set of the same name.
    """
    spec = spec or ThoraxPhantomSpec()
    lx, ly, lz = spec.block
    nodes, tets = structured_tets((0.0, 0.0, 0.0), spec.block, grid_counts(spec))
    centroids = nodes[tets].mean(axis=1)
    tags = classify_points(spec, centroids)

    faces, owner, key = tet_faces(tets)
    counts = np.bincount(key)
    boundary = counts[key] == 1
    fc = nodes[faces].mean(axis=1)
    tol = 1e-9 * min(spec.block)
    back = boundary & (np.abs(fc[:, 2]) < tol)
    sx, sy = spec.sternum_size
    cx, cy = spec.sternum_center
    front = boundary & (np.abs(fc[:, 2] - lz) < tol)
    patch = front & (np.abs(fc[:, 0] - cx) <= sx / 2) & (np.abs(fc[:, 1] - cy) <= sy / 2)

    # Interior faces: pair each face with its twin to compare region tags.
    order = np.argsort(key, kind="stable")
    first, second = order[0::2], order[1::2]
    interior = counts[key[first]] == 2
    first, second = first[interior], second[interior]
    t1, t2 = tags[owner[first]], tags[owner[second]]
    outer_other = (t1 != MYOCARDIUM) & (t1 != CAVITY)
    outer_other2 = (t2 != MYOCARDIUM) & (t2 != CAVITY)
    # Keep the copy owned by the myocardium tet so normals point out of the wall.
    shell_outer = np.concatenate([first[(t1 == MYOCARDIUM) & outer_other2], second[(t2 == MYOCARDIUM) & outer_other]])
    shell_inner = np.concatenate([first[(t1 == MYOCARDIUM) & (t2 == CAVITY)], second[(t2 == MYOCARDIUM) & (t1 == CAVITY)]])
    shell_outer.sort()
    shell_inner.sort()

    d = np.asarray(spec.fixed_patch_direction, dtype=float)
    d /= np.linalg.norm(d)
    rel = nodes[faces[shell_outer]] - spec.heart_center
    cosang = (rel @ d) / np.linalg.norm(rel, axis=2)
    in_cone = np.all(cosang >= math.cos(math.radians(spec.fixed_patch_angle_deg)), axis=1)
    fixed = shell_outer[in_cone]

    groups = [
        (BACK, np.flatnonzero(back)),
        (STERNUM_PATCH, np.flatnonzero(patch)),
        (SHELL_OUTER, shell_outer),
        (SHELL_INNER, shell_inner),
        (MYO_FIXED, fixed),
    ]
    facet_idx = np.concatenate([g for _, g in groups])
    facet_tags = np.concatenate([np.full(len(g), t, dtype=np.int64) for t, g in groups])
    return Mesh(
        nodes=nodes,
        tets=tets,
        tet_tags=tags,
        facets=faces[facet_idx],
        facet_tags=facet_tags,
        region_names=dict(REGION_NAMES),
        facet_names=dict(FACET_NAMES),
    )


def region_volume_report(mesh: Mesh, spec: ThoraxPhantomSpec | None = None) -> dict[str, dict[str, float]]:
    """Meshed volume per region name, plus the analytic value when ``spec`` is given."""
    vols = np.abs(mesh.volumes())
    analytic = spec.analytic_volumes() if spec is not None else {}
    report = {}
    for tag, name in sorted(mesh.region_names.items()):
        entry = {"meshed": float(vols[mesh.tet_tags == tag].sum())}
        if name in analytic:
            entry["analytic"] = analytic[name]
        report[name] = entry
    if spec is not None:
        # Bone and cartilage outside the sternum plate make up the ribs.
        c = mesh.nodes[mesh.tets].mean(axis=1)
        sx, sy = spec.sternum_size
        cx, cy = spec.sternum_center
        in_sternum = (np.abs(c[:, 0] - cx) <= sx / 2) & (np.abs(c[:, 1] - cy) <= sy / 2)
        rib = np.isin(mesh.tet_tags, (BONE, *CARTILAGE)) & ~in_sternum
        half_span = cx - sx / 2 - spec.rib_margin
        report["RIBS"] = {
            "meshed": float(vols[rib].sum()),
            "analytic": 2 * half_span * spec.rib_width * spec.rib_thickness * spec.rib_count,
        }
    return report

"""Constant-strain tetrahedron stiffness, traction loads and constraint elimination.

Global DOF numbering is node-major: DOF ``3 * node + c`` for component
``c`` in ``(x, y, z)``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from numpy.typing import ArrayLike, NDArray

from thoraxfem.errors import ConfigurationError, ElementError
from thoraxfem.mesh import ABS_VOLUME_TOL, Mesh, facet_area_normals, select_facets

COMPONENTS = {"x": 0, "y": 1, "z": 2}
_CHUNK = 16384


class StrainDisplacement(NamedTuple):
    B: NDArray[np.float64]
    volume: float


def _gradients(p: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
    """Shape-function gradients ``(m, 4, 3)`` and signed volumes ``(m,)``."""
    edges = p[:, 1:, :] - p[:, :1, :]
    det = np.linalg.det(edges)
    vol = det / 6.0
    bad = np.abs(vol) < ABS_VOLUME_TOL
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise ElementError(f"degenerate tet (volume {vol[idx]:.3e} m^3)", element=idx)
    # Rows of `edges` times columns of its inverse give the identity, so
    # column k of the inverse is the gradient of shape function k+1.
    inv = np.linalg.inv(edges)
    grads = np.empty((p.shape[0], 4, 3))
    grads[:, 1:, :] = np.transpose(inv, (0, 2, 1))
    grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
    return grads, vol


def _b_from_grads(g: NDArray[np.float64]) -> NDArray[np.float64]:
    m = g.shape[0]
    B = np.zeros((m, 6, 12))
    bx, by, bz = g[:, :, 0], g[:, :, 1], g[:, :, 2]
    B[:, 0, 0::3] = bx
    B[:, 1, 1::3] = by
    B[:, 2, 2::3] = bz
    B[:, 3, 0::3] = by
    B[:, 3, 1::3] = bx
    B[:, 4, 1::3] = bz
    B[:, 4, 2::3] = by
    B[:, 5, 0::3] = bz
    B[:, 5, 2::3] = bx
    return B


def strain_displacement_batch(nodes: NDArray, tets: NDArray) -> tuple[NDArray, NDArray]:
    """``B`` matrices ``(m, 6, 12)`` and unsigned volumes ``(m,)`` for many tets."""
    p = nodes[tets]
    try:
        g, vol = _gradients(p)
    except ElementError as exc:
        raise ElementError(str(exc), element=exc.element) from None
    return _b_from_grads(g), np.abs(vol)


def strain_displacement(coords: ArrayLike) -> StrainDisplacement:
    """Constant strain-displacement matrix of one tet given its ``(4, 3)`` node coordinates."""
    p = np.asarray(coords, dtype=float).reshape(1, 4, 3)
    B, vol = strain_displacement_batch(p[0], np.arange(4)[None, :])
    return StrainDisplacement(B[0], float(vol[0]))


def element_stiffness(B: NDArray, D: NDArray, V: float) -> NDArray[np.float64]:
    Ke = V * (B.T @ D @ B)
    return 0.5 * (Ke + Ke.T)


def element_dofs(tets: NDArray[np.int64]) -> NDArray[np.int64]:
    return (3 * tets[:, :, None] + np.arange(3)).reshape(-1, 12)


def active_elements(mesh: Mesh, materials: dict[int, NDArray], void: set[int] | frozenset = frozenset()) -> NDArray[np.bool_]:
    """Mask of tets that take part in assembly; rejects unmapped regions."""
    for tag in mesh.region_tags():
        if tag not in materials and tag not in void:
            raise ConfigurationError(f"region {mesh.region_name(tag)!r} (tag {tag}) has no material")
    return ~np.isin(mesh.tet_tags, list(void))


def _assemble_chunk(nodes, tets, tags, materials, n_dof) -> sp.csr_matrix:
    B, vol = strain_displacement_batch(nodes, tets)
    Ke = np.empty((len(tets), 12, 12))
    for tag in np.unique(tags):
        sel = tags == tag
        D = materials[int(tag)]
        Bs = B[sel]
        Ke[sel] = np.einsum("e,eki,kl,elj->eij", vol[sel], Bs, D, Bs, optimize=True)
    Ke = 0.5 * (Ke + np.transpose(Ke, (0, 2, 1)))
    dofs = element_dofs(tets)
    rows = np.repeat(dofs, 12, axis=1).ravel()
    cols = np.tile(dofs, (1, 12)).ravel()
    return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n_dof, n_dof)).tocsr()


def assemble_stiffness(
    mesh: Mesh,
    materials: dict[int, NDArray],
    void: set[int] | frozenset = frozenset(),
    threads: int = 1,
) -> sp.csr_matrix:
    """Global stiffness ``K`` (CSR, ``3n x 3n``) from per-region 6x6 ``D`` matrices.

    Elements are processed in fixed-size chunks in mesh order and the chunk
    matrices are summed in that same order, so the result does not depend
    on ``threads``.

    Raises:
        ConfigurationError: a region tag is neither mapped nor voided.
        ElementError: a tet is degenerate.
    """
    active = active_elements(mesh, materials, void)
    idx = np.flatnonzero(active)
    n_dof = 3 * mesh.n_nodes
    chunks = [idx[i:i + _CHUNK] for i in range(0, len(idx), _CHUNK)]

    def work(c):
        try:
            return _assemble_chunk(mesh.nodes, mesh.tets[c], mesh.tet_tags[c], materials, n_dof)
        except ElementError as exc:
            raise ElementError(f"tet {mesh.tet_ids[c[exc.element]]}: {exc}", element=int(c[exc.element])) from None

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    K = sp.csr_matrix((n_dof, n_dof))
    for part in parts:
        K = K + part
    K.sum_duplicates()
    K.sort_indices()
    return K


@dataclass(frozen=True)
class TractionPatch:
    """Surface load on a facet group.

    Exactly one of ``total_force`` (N, spread as a uniform traction over the
    selected area, in the given global direction) or ``pressure`` (Pa, acting
    against the facet normals) must be set.
    """

    facet: int | str | None = None
    box: tuple | None = None
    total_force: tuple[float, float, float] | None = None
    pressure: float | None = None
    name: str = ""

    def __post_init__(self):
        if (self.total_force is None) == (self.pressure is None):
            raise ConfigurationError(f"traction {self.name!r}: set exactly one of total_force, pressure")
        if (self.facet is None) == (self.box is None):
            raise ConfigurationError(f"traction {self.name!r}: set exactly one of facet, box")

    def facets(self, mesh: Mesh) -> NDArray[np.int64]:
        if self.facet is not None:
            return select_facets(mesh, facet=self.facet)
        return select_facets(mesh, box=self.box)

    def scaled(self, factor: float) -> TractionPatch:
        if self.total_force is not None:
            return TractionPatch(self.facet, self.box, tuple(factor * np.asarray(self.total_force)), None, self.name)
        return TractionPatch(self.facet, self.box, None, factor * self.pressure, self.name)


def assemble_traction(mesh: Mesh, patches: list[TractionPatch]) -> NDArray[np.float64]:
    """Consistent nodal loads: each facet node receives a third of the facet force."""
    f = np.zeros(3 * mesh.n_nodes)
    for patch in patches:
        sel = patch.facets(mesh)
        if sel.size == 0:
            raise ConfigurationError(f"traction {patch.name!r} selects no facets")
        tri = mesh.facets[sel]
        area, normal = facet_area_normals(mesh.nodes, tri)
        total_area = float(area.sum())
        if total_area <= 0:
            raise ConfigurationError(f"traction {patch.name!r} has zero area")
        if patch.total_force is not None:
            t = np.asarray(patch.total_force, dtype=float) / total_area
            per_facet = area[:, None] * t[None, :]
        else:
            per_facet = -patch.pressure * area[:, None] * normal
        share = np.repeat(per_facet / 3.0, 3, axis=0)
        nodes = tri.ravel()
        for c in range(3):
            np.add.at(f, 3 * nodes + c, share[:, c])
    return f


@dataclass(frozen=True)
class DirichletSet:
    """Prescribed displacement on a node set.

    ``value`` is either a 3-vector applied to every node or an ``(n, 3)``
    array with one row per node; only the listed ``components`` are used.
    """

    nodes: NDArray[np.int64]
    components: str = "xyz"
    value: ArrayLike = (0.0, 0.0, 0.0)
    name: str = ""

    def __post_init__(self):
        if not self.components or set(self.components) - set("xyz"):
            raise ConfigurationError(f"dirichlet {self.name!r}: components must be a subset of 'xyz'")

    def dofs_and_values(self) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        nodes = np.asarray(self.nodes, dtype=np.int64)
        val = np.asarray(self.value, dtype=float)
        if val.ndim == 1:
            val = np.broadcast_to(val, (len(nodes), 3))
        if val.shape != (len(nodes), 3):
            raise ConfigurationError(f"dirichlet {self.name!r}: value shape {val.shape} does not match nodes")
        comps = [COMPONENTS[c] for c in dict.fromkeys(self.components)]
        dofs = (3 * nodes[:, None] + np.array(comps)).ravel()
        return dofs, val[:, comps].ravel()


@dataclass
class SparseSystem:
    """Constraint-reduced system ``K_ff u_f = f_f`` with the data to undo the reduction.

    ``inactive`` lists DOFs with no stiffness at all (nodes touched only by
    voided elements); they are held at zero and excluded from reactions.
    """

    K: sp.csr_matrix
    f: NDArray[np.float64]
    K_ff: sp.csr_matrix
    f_f: NDArray[np.float64]
    free: NDArray[np.int64]
    fixed: NDArray[np.int64]
    u_fixed: NDArray[np.float64]
    inactive: NDArray[np.int64]
    K_fc: sp.csr_matrix

    @property
    def n_dof(self) -> int:
        return self.K.shape[0]

    @property
    def n_free(self) -> int:
        return len(self.free)

    def free_dof_map(self) -> dict[int, int]:
        return {int(g): i for i, g in enumerate(self.free)}

    def rhs(self, load_factor: float = 1.0, prescribed_factor: float | None = None) -> NDArray[np.float64]:
        """Reduced right-hand side for scaled loads and prescribed values."""
        pf = load_factor if prescribed_factor is None else prescribed_factor
        return load_factor * self.f[self.free] - pf * (self.K_fc @ self.u_fixed)

    def expand(self, u_free: NDArray, prescribed_factor: float = 1.0) -> NDArray[np.float64]:
        u = np.zeros(self.n_dof)
        u[self.free] = u_free
        u[self.fixed] = prescribed_factor * self.u_fixed
        return u

    def reactions(self, u: NDArray, load_factor: float = 1.0) -> NDArray[np.float64]:
        """Reaction forces ``(K u - f)`` at constrained DOFs, full-length vector."""
        r = np.zeros(self.n_dof)
        r[self.fixed] = (self.K @ u)[self.fixed] - load_factor * self.f[self.fixed]
        return r


def apply_dirichlet(
    K: sp.csr_matrix,
    f: NDArray[np.float64],
    sets: list[DirichletSet],
    drop_inactive: bool = True,
) -> SparseSystem:
    """Eliminate constrained DOFs; later sets override earlier ones on shared DOFs."""
    n = K.shape[0]
    prescribed = np.full(n, np.nan)
    for s in sets:
        dofs, vals = s.dofs_and_values()
        if dofs.size and (dofs.min() < 0 or dofs.max() >= n):
            raise ConfigurationError(f"dirichlet {s.name!r} refers to DOFs outside the system")
        prescribed[dofs] = vals
    is_fixed = ~np.isnan(prescribed)
    inactive = np.zeros(0, dtype=np.int64)
    if drop_inactive:
        dead = (K.diagonal() == 0) & ~is_fixed
        inactive = np.flatnonzero(dead)
        prescribed[dead] = 0.0
        is_fixed |= dead
    fixed_all = np.flatnonzero(is_fixed)
    free = np.flatnonzero(~is_fixed)
    fixed = np.setdiff1d(fixed_all, inactive)
    u_fixed = prescribed[fixed]
    K = K.tocsr()
    K_free_rows = K[free]
    K_ff = K_free_rows[:, free].tocsr()
    K_fc = K_free_rows[:, fixed].tocsr()
    f = np.asarray(f, dtype=float)
    system = SparseSystem(
        K=K, f=f, K_ff=K_ff, f_f=np.zeros(len(free)), free=free, fixed=fixed,
        u_fixed=u_fixed, inactive=inactive, K_fc=K_fc,
    )
    system.f_f = system.rhs()
    return system

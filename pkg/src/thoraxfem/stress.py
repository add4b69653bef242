"""Stress recovery: element stresses, von Mises, principal values, nodal fields, region summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from thoraxfem.assembly import element_dofs, strain_displacement_batch
from thoraxfem.mesh import Mesh
from thoraxfem.solver import RunResults, StepResult

AXES = {"x": 0, "y": 1, "z": 2}
# Degenerate-root threshold on |cos(3*phi)| for the trigonometric solver.
_NEAR_DEGENERATE = 1.0 - 1e-6


def element_stress(u_e: ArrayLike, B: NDArray, D: NDArray) -> NDArray[np.float64]:
    """Voigt stress ``D B u_e`` of one CST element (``u_e`` has 12 entries)."""
    return D @ (B @ np.asarray(u_e, dtype=float).reshape(12))


def von_mises(s: ArrayLike) -> NDArray[np.float64] | float:
    s = np.asarray(s, dtype=float)
    xx, yy, zz, xy, yz, zx = (s[..., i] for i in range(6))
    j2 = 0.5 * ((xx - yy) ** 2 + (yy - zz) ** 2 + (zz - xx) ** 2) + 3.0 * (xy**2 + yz**2 + zx**2)
    out = np.sqrt(j2)
    return float(out) if out.ndim == 0 else out


def voigt_to_tensor(s: ArrayLike) -> NDArray[np.float64]:
    s = np.asarray(s, dtype=float)
    t = np.empty(s.shape[:-1] + (3, 3))
    t[..., 0, 0], t[..., 1, 1], t[..., 2, 2] = s[..., 0], s[..., 1], s[..., 2]
    t[..., 0, 1] = t[..., 1, 0] = s[..., 3]
    t[..., 1, 2] = t[..., 2, 1] = s[..., 4]
    t[..., 0, 2] = t[..., 2, 0] = s[..., 5]
    return t


def tensor_to_voigt(t: ArrayLike) -> NDArray[np.float64]:
    t = np.asarray(t, dtype=float)
    return np.stack([t[..., 0, 0], t[..., 1, 1], t[..., 2, 2], t[..., 0, 1], t[..., 1, 2], t[..., 0, 2]], axis=-1)


def _jacobi_eigenvalues(a: NDArray[np.float64], sweeps: int = 30) -> NDArray[np.float64]:
    """Cyclic Jacobi rotations on a batch of symmetric 3x3 matrices."""
    a = a.copy()
    idx = np.arange(a.shape[0])
    for _ in range(sweeps):
        off = a[:, 0, 1] ** 2 + a[:, 1, 2] ** 2 + a[:, 0, 2] ** 2
        scale = np.einsum("nii->n", a * a) + 1e-300
        if np.all(off <= 1e-32 * scale):
            break
        for p, q in ((0, 1), (1, 2), (0, 2)):
            apq = a[:, p, q]
            rot = np.abs(apq) > 0
            if not np.any(rot):
                continue
            with np.errstate(over="ignore"):
                theta = np.where(rot, (a[:, q, q] - a[:, p, p]) / (2.0 * np.where(rot, apq, 1.0)), 0.0)
            t = np.where(rot, np.sign(theta + (theta == 0)) / (np.abs(theta) + np.hypot(theta, 1.0)), 0.0)
            c = 1.0 / np.sqrt(t**2 + 1.0)
            s = t * c
            J = np.broadcast_to(np.eye(3), a.shape).copy()
            J[idx, p, p] = c
            J[idx, q, q] = c
            J[idx, p, q] = s
            J[idx, q, p] = -s
            a = np.einsum("nji,njk,nkl->nil", J, a, J)
            a[:, p, q] = a[:, q, p] = 0.0
    return np.sort(np.einsum("nii->ni", a), axis=1)[:, ::-1]


def principal_stresses(s: ArrayLike) -> NDArray[np.float64]:
    """Principal stresses sorted ``s1 >= s2 >= s3`` along the last axis.

    Uses the closed-form trigonometric solution; tensors with a (nearly)
    repeated root go through Jacobi rotations instead.
    """
    s = np.asarray(s, dtype=float)
    flat = s.reshape(-1, 6)
    t = voigt_to_tensor(flat)
    mean = (flat[:, 0] + flat[:, 1] + flat[:, 2]) / 3.0
    dev = t - mean[:, None, None] * np.eye(3)
    p = np.sqrt(np.einsum("nij,nij->n", dev, dev) / 6.0)
    out = np.empty((len(flat), 3))
    scale = np.abs(t).max(axis=(1, 2))
    iso = p <= 1e-15 * np.where(scale > 0, scale, 1.0)
    out[iso] = mean[iso, None]
    rest = ~iso
    safe_p = np.where(rest, p, 1.0)
    q = np.clip(np.linalg.det(dev / safe_p[:, None, None]) / 2.0, -1.0, 1.0)
    trig = rest & (np.abs(q) < _NEAR_DEGENERATE)
    phi = np.arccos(q[trig]) / 3.0
    m, pp = mean[trig], p[trig]
    e1 = m + 2.0 * pp * np.cos(phi)
    e3 = m + 2.0 * pp * np.cos(phi + 2.0 * np.pi / 3.0)
    e2 = 3.0 * m - e1 - e3
    out[trig] = np.column_stack([e1, e2, e3])
    fallback = rest & ~trig
    if np.any(fallback):
        out[fallback] = _jacobi_eigenvalues(t[fallback])
    return out.reshape(s.shape[:-1] + (3,))


def nodal_average(
    mesh: Mesh,
    values: ArrayLike,
    active: NDArray[np.bool_] | None = None,
    volumes: NDArray[np.float64] | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Volume-weighted average of a per-element field at each node.

    Returns the nodal field and a mask of isolated nodes (no adjacent active
    element), which are set to zero.
    """
    values = np.asarray(values, dtype=float)
    act = np.ones(mesh.n_tets, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    vol = np.abs(mesh.volumes()) if volumes is None else volumes
    w = np.where(act, vol, 0.0)
    trailing = values.shape[1:]
    flat = values.reshape(mesh.n_tets, -1)
    weight = np.zeros(mesh.n_nodes)
    acc = np.zeros((mesh.n_nodes, flat.shape[1]))
    for corner in range(4):
        nodes = mesh.tets[:, corner]
        np.add.at(weight, nodes, w)
        np.add.at(acc, nodes, w[:, None] * flat)
    isolated = weight == 0
    out = np.where(isolated[:, None], 0.0, acc / np.where(isolated, 1.0, weight)[:, None])
    return out.reshape((mesh.n_nodes,) + trailing), isolated


@dataclass
class StepFields:
    """Per-element and nodal stress fields of one solved step."""

    stress: NDArray[np.float64]
    von_mises: NDArray[np.float64]
    principal: NDArray[np.float64]
    nodal_von_mises: NDArray[np.float64]
    nodal_normal: NDArray[np.float64]
    normal_axis: str


@dataclass
class RegionSummary:
    step: int
    time: float
    region: str
    max_disp: float
    mean_disp: float
    max_vm: float
    mean_vm: float
    max_normal: float
    min_normal: float
    loc_max_disp: int
    """Node id (as in the mesh file) of the largest displacement."""
    loc_max_vm: int
    """Element id of the largest von Mises stress."""
    loc_max_normal: int
    loc_min_normal: int


class PostProcessor:
    """Caches element kinematics so every step's stress recovery is a few products.

    ``materials`` maps region tag to its 6x6 ``D``; tets in ``void`` regions
    carry zero stress and are left out of averages and summaries.
    ``normal_axis`` picks the Voigt component reported as "normal stress".
    """

    def __init__(self, mesh: Mesh, materials: dict[int, NDArray], void=frozenset(), normal_axis: str = "z"):
        if normal_axis not in AXES:
            raise ValueError(f"normal_axis must be one of x, y, z; got {normal_axis!r}")
        self.mesh = mesh
        self.normal_axis = normal_axis
        self.active = ~np.isin(mesh.tet_tags, list(void))
        self._idx = np.flatnonzero(self.active)
        self.B, vol = strain_displacement_batch(mesh.nodes, mesh.tets[self._idx])
        self.volumes = np.zeros(mesh.n_tets)
        self.volumes[self._idx] = vol
        self.D = np.stack([materials[int(t)] for t in mesh.tet_tags[self._idx]]) if len(self._idx) else np.zeros((0, 6, 6))
        self._dofs = element_dofs(mesh.tets[self._idx])
        self.region_tags = [t for t in mesh.region_tags() if t not in set(void)]
        self._region_nodes = {t: np.unique(mesh.tets[mesh.tet_tags == t]) for t in self.region_tags}

    def stresses(self, u: NDArray) -> NDArray[np.float64]:
        """Element Voigt stresses ``(m, 6)``; zero rows for void elements."""
        ue = np.asarray(u, dtype=float).reshape(-1)[self._dofs]
        strain = np.einsum("eij,ej->ei", self.B, ue)
        out = np.zeros((self.mesh.n_tets, 6))
        out[self._idx] = np.einsum("eij,ej->ei", self.D, strain)
        return out

    def strains(self, u: NDArray) -> NDArray[np.float64]:
        ue = np.asarray(u, dtype=float).reshape(-1)[self._dofs]
        out = np.zeros((self.mesh.n_tets, 6))
        out[self._idx] = np.einsum("eij,ej->ei", self.B, ue)
        return out

    def fields(self, u: NDArray) -> StepFields:
        stress = self.stresses(u)
        vm = von_mises(stress)
        normal = stress[:, AXES[self.normal_axis]]
        nodal_vm, _ = nodal_average(self.mesh, vm, self.active, self.volumes)
        nodal_normal, _ = nodal_average(self.mesh, normal, self.active, self.volumes)
        return StepFields(stress, vm, principal_stresses(stress), nodal_vm, nodal_normal, self.normal_axis)

    def summaries(self, result: StepResult, fields: StepFields | None = None) -> list[RegionSummary]:
        fields = fields or self.fields(result.displacement)
        mag = np.linalg.norm(result.displacement, axis=1)
        normal = fields.stress[:, AXES[self.normal_axis]]
        mesh = self.mesh
        out = []
        for tag in self.region_tags:
            nodes = self._region_nodes[tag]
            elems = np.flatnonzero(mesh.tet_tags == tag)
            d = mag[nodes]
            vm = fields.von_mises[elems]
            nrm = normal[elems]
            out.append(
                RegionSummary(
                    step=result.step,
                    time=result.time,
                    region=mesh.region_name(tag),
                    max_disp=float(d.max()),
                    mean_disp=float(d.mean()),
                    max_vm=float(vm.max()),
                    mean_vm=float(vm.mean()),
                    max_normal=float(nrm.max()),
                    min_normal=float(nrm.min()),
                    loc_max_disp=int(mesh.node_ids[nodes[np.argmax(d)]]),
                    loc_max_vm=int(mesh.tet_ids[elems[np.argmax(vm)]]),
                    loc_max_normal=int(mesh.tet_ids[elems[np.argmax(nrm)]]),
                    loc_min_normal=int(mesh.tet_ids[elems[np.argmin(nrm)]]),
                )
            )
        return out


def region_summary(post: PostProcessor, results: RunResults, step: int) -> list[RegionSummary]:
    """One :class:`RegionSummary` per active region for ``step`` of a run."""
    return post.summaries(results.step(step))

"""Built-in verification suite run by ``thoraxfem benchmark``.

Every check compares the FEM core against a closed-form answer and returns
the measured error together with the threshold it must meet.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from thoraxfem.assembly import DirichletSet, TractionPatch, apply_dirichlet, assemble_stiffness, assemble_traction
from thoraxfem.materials import Material, builtin_material_table
from thoraxfem.mesh import Mesh, select_nodes
from thoraxfem.phantom import BarSpec, gen_bar
from thoraxfem.solver import SolverSettings, TimeSchedule, cg_solve, run_time_loop
from thoraxfem.stress import PostProcessor

HEART = builtin_material_table()["Myocardium"]
TIGHT = SolverSettings(tolerance=1e-12, max_iterations=200000)


@dataclass
class CheckResult:
    name: str
    passed: bool
    error: float
    threshold: float
    seconds: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: error={self.error:.3e} (limit {self.threshold:.1e}) {self.seconds:.2f}s {self.detail}"


def rigid_body_modes(nodes: np.ndarray) -> np.ndarray:
    """Six rigid-body displacement fields ``(6, 3n)``: 3 translations, 3 rotations."""
    n = len(nodes)
    c = nodes - nodes.mean(axis=0)
    modes = np.zeros((6, n, 3))
    for k in range(3):
        modes[k, :, k] = 1.0
        axis = np.zeros(3)
        axis[k] = 1.0
        modes[3 + k] = np.cross(axis, c)
    return modes.reshape(6, -1)


def patch_test(n: int = 3, seed: int = 7) -> tuple[float, float]:
    """Linear field imposed on the boundary of a unit-cube mesh.

    Returns the relative interior displacement error and the relative
    spread of element stresses.
    """
    rng = np.random.default_rng(seed)
    mesh = gen_bar(BarSpec(1.0, 1.0, 1.0, n, n, n))
    a = rng.normal(size=3) * 1e-3
    G = rng.normal(size=(3, 3)) * 1e-3
    exact = a + mesh.nodes @ G.T
    boundary = np.unique(mesh.facets)
    D = HEART.D()
    K = assemble_stiffness(mesh, {1: D})
    system = apply_dirichlet(K, np.zeros(3 * mesh.n_nodes), [DirichletSet(boundary, "xyz", exact[boundary])])
    u_free, _ = cg_solve(system.K_ff, system.f_f, TIGHT)
    u = system.expand(u_free).reshape(-1, 3)
    interior = np.setdiff1d(np.arange(mesh.n_nodes), boundary)
    disp_err = np.abs(u[interior] - exact[interior]).max() / np.abs(exact).max()
    stress = PostProcessor(mesh, {1: D}).stresses(u)
    spread = np.abs(stress - stress.mean(axis=0)).max() / np.abs(stress).max()
    return float(disp_err), float(spread)


def uniaxial_bar_model(
    L: float = 0.1, side: float = 0.02, nx: int = 16, nyz: int = 2, material: Material = HEART, p: float = 1e3
) -> tuple[Mesh, list[DirichletSet], list[TractionPatch]]:
    """Bar along ``x`` with a roller-supported ``x = 0`` face and end traction ``p``.

    Besides the roller, the origin is pinned in ``y, z`` and the node at
    ``(0, side, 0)`` in ``z`` to remove the remaining rigid modes without
    restraining lateral contraction.
    """
    mesh = gen_bar(BarSpec(L, side, side, nx, nyz, nyz))
    eps = 1e-9 * side
    origin = select_nodes(mesh, box=[[-eps] * 3, [eps] * 3])
    corner = select_nodes(mesh, box=[[-eps, side - eps, -eps], [eps, side + eps, eps]])
    dirichlet = [
        DirichletSet(select_nodes(mesh, facet="XMIN"), "x", name="roller"),
        DirichletSet(origin, "yz", name="pin"),
        DirichletSet(corner, "z", name="twist"),
    ]
    tractions = [TractionPatch(facet="XMAX", total_force=(p * side * side, 0.0, 0.0), name="end load")]
    return mesh, dirichlet, tractions


def uniaxial_bar(nx: int = 16, L: float = 0.1, p: float = 1e3) -> tuple[float, float]:
    """Relative errors of interior axial stress (vs ``p``) and tip displacement (vs ``pL/E``)."""
    mesh, dirichlet, tractions = uniaxial_bar_model(L=L, nx=nx, p=p)
    D = HEART.D()
    system = apply_dirichlet(assemble_stiffness(mesh, {1: D}), assemble_traction(mesh, tractions), dirichlet)
    u_free, _ = cg_solve(system.K_ff, system.f_f, TIGHT)
    u = system.expand(u_free).reshape(-1, 3)
    stress = PostProcessor(mesh, {1: D}).stresses(u)
    centroid_x = mesh.nodes[mesh.tets].mean(axis=1)[:, 0]
    interior = (centroid_x > 0.25 * L) & (centroid_x < 0.75 * L)
    stress_err = np.abs(stress[interior, 0] - p).max() / p
    tip = select_nodes(mesh, facet="XMAX")
    exact = p * L / HEART.E
    tip_err = np.abs(u[tip, 0] - exact).max() / exact
    return float(stress_err), float(tip_err)


def timoshenko_tip_deflection(P: float, L: float, b: float, h: float, E: float, nu: float) -> float:
    """Tip deflection of an end-loaded cantilever with shear correction ``5/6``."""
    I = b * h**3 / 12.0
    G = E / (2.0 * (1.0 + nu))
    return P * L**3 / (3.0 * E * I) + P * L / (5.0 / 6.0 * G * b * h)


CANTILEVER = dict(L=0.1, b=0.01, h=0.01, P=1e-3)
CANTILEVER_MESHES = ((20, 2, 2), (40, 4, 4), (80, 8, 8))


def cantilever_tip(nx: int, ny: int, nz: int, L: float, b: float, h: float, P: float) -> float:
    """Mean ``-z`` tip deflection of a clamped beam under an end shear load ``P``."""
    mesh = gen_bar(BarSpec(L, b, h, nx, ny, nz))
    D = HEART.D()
    dirichlet = [DirichletSet(select_nodes(mesh, facet="XMIN"), "xyz", name="clamp")]
    tractions = [TractionPatch(facet="XMAX", total_force=(0.0, 0.0, -P), name="tip load")]
    system = apply_dirichlet(assemble_stiffness(mesh, {1: D}), assemble_traction(mesh, tractions), dirichlet)
    u_free, _ = cg_solve(system.K_ff, system.f_f, SolverSettings(1e-10, max_iterations=200000))
    u = system.expand(u_free).reshape(-1, 3)
    tip = select_nodes(mesh, facet="XMAX")
    return float(-u[tip, 2].mean())


def cantilever_convergence(meshes=CANTILEVER_MESHES) -> list[float]:
    """Relative tip-deflection errors against the Timoshenko value, coarse to fine."""
    c = CANTILEVER
    exact = timoshenko_tip_deflection(c["P"], c["L"], c["b"], c["h"], HEART.E, HEART.nu)
    return [abs(cantilever_tip(*m, **c) - exact) / exact for m in meshes]


def rigid_nullspace() -> float:
    """Worst ``||K r|| / (||K||_F ||r||)`` over the six rigid modes of an unconstrained bar."""
    mesh = gen_bar(BarSpec(0.1, 0.03, 0.02, 5, 3, 2))
    K = assemble_stiffness(mesh, {1: HEART.D()})
    knorm = np.sqrt((K.data**2).sum())
    return max(np.linalg.norm(K @ r) / (knorm * np.linalg.norm(r)) for r in rigid_body_modes(mesh.nodes))


def ramp_linearity(settings: SolverSettings = SolverSettings()) -> float:
    """Worst ``|u_k - (k/N) u_N|`` over all steps, relative to ``max |u_N|``."""
    mesh, dirichlet, tractions = uniaxial_bar_model(nx=8)
    tractions = [TractionPatch(facet="XMAX", total_force=(0.0, 1e-4, -4e-4), name="oblique")]
    system = apply_dirichlet(assemble_stiffness(mesh, {1: HEART.D()}), assemble_traction(mesh, tractions), dirichlet)
    results = run_time_loop(system, TimeSchedule(0.5, 0.05), settings)
    final = results.final.displacement
    n = len(results.steps)
    scale = np.abs(final).max()
    return max(float(np.abs(s.displacement - s.step / n * final).max() / scale) for s in results.steps)


def _timed(name, fn, threshold, judge=None) -> CheckResult:
    t0 = time.perf_counter()
    value = fn()
    dt = time.perf_counter() - t0
    if judge is None:
        return CheckResult(name, value <= threshold, value, threshold, dt)
    passed, error, detail = judge(value)
    return CheckResult(name, passed, error, threshold, dt, detail)


def run_benchmarks() -> list[CheckResult]:
    results = []
    results.append(_timed("patch test displacement", lambda: patch_test()[0], 1e-10))
    results.append(_timed("patch test stress spread", lambda: patch_test()[1], 1e-8))
    bar = uniaxial_bar()
    results.append(CheckResult("uniaxial bar axial stress", bar[0] <= 1e-3, bar[0], 1e-3, 0.0))
    results.append(CheckResult("uniaxial bar tip displacement", bar[1] <= 1e-3, bar[1], 1e-3, 0.0))

    def judge_cantilever(errors):
        monotone = all(b < a for a, b in zip(errors, errors[1:]))
        detail = "errors " + ", ".join(f"{e:.3%}" for e in errors)
        return monotone and errors[-1] <= 0.10, errors[-1], detail + ("" if monotone else " (not monotone)")

    results.append(_timed("cantilever convergence", cantilever_convergence, 0.10, judge_cantilever))
    results.append(_timed("rigid-body nullspace", rigid_nullspace, 1e-9))
    results.append(_timed("ramp linearity", ramp_linearity, 10 * SolverSettings().tolerance))
    return results

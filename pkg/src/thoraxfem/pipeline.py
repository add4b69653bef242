"""Scenario execution: build the model, run the load ramp, post-process and export."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from thoraxfem.assembly import (
    DirichletSet,
    SparseSystem,
    TractionPatch,
    apply_dirichlet,
    assemble_stiffness,
    assemble_traction,
)
from thoraxfem.errors import ConfigurationError
from thoraxfem.export import write_summary_csv, write_vtk
from thoraxfem.materials import CAVITY_FILLER, Material, builtin_material_table
from thoraxfem.mesh import Mesh, parse_msh, select_nodes
from thoraxfem.phantom import ThoraxPhantomSpec, gen_bar, gen_thorax_phantom
from thoraxfem.scenario import BarMesh, FileMesh, InlineMaterial, PhantomMesh, Scenario, parse_scenario
from thoraxfem.solver import RunResults, StepResult, run_time_loop
from thoraxfem.stress import PostProcessor, RegionSummary, StepFields

log = logging.getLogger(__name__)

HEAVY_LOAD_FORCE = 1e6
"""Sternum force magnitude (N) used by ``--paper-load``."""
CAVITY_REGION = "CAVITY"


@dataclass
class Model:
    """A scenario resolved against its mesh."""

    scenario: Scenario
    mesh: Mesh
    materials: dict[int, Material]
    void: set[int]
    dirichlet: list[DirichletSet]
    tractions: list[TractionPatch]
    normal_axis: str
    phantom_spec: ThoraxPhantomSpec | None = None

    def D(self) -> dict[int, NDArray]:
        return {tag: m.D() for tag, m in self.materials.items()}


def load_mesh(scenario: Scenario, base_dir: Path) -> tuple[Mesh, ThoraxPhantomSpec | None]:
    src = scenario.mesh
    if isinstance(src, FileMesh):
        path = Path(src.path)
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigurationError(f"mesh.path: file not found: {path}")
        return parse_msh(path.read_text(), unit_scale=scenario.unit_scale), None
    if isinstance(src, BarMesh):
        return gen_bar(src.spec()).with_unit_scale(scenario.unit_scale), None
    assert isinstance(src, PhantomMesh)
    spec = src.phantom_spec()
    return gen_thorax_phantom(spec).with_unit_scale(scenario.unit_scale), spec


def resolve_materials(scenario: Scenario, mesh: Mesh) -> tuple[dict[int, Material], set[int]]:
    """Map every region tag to a material or to the void set."""
    catalog = builtin_material_table()
    by_key: dict[str, Material] = {}
    for key, ref in scenario.materials.items():
        if isinstance(ref, InlineMaterial):
            by_key[key] = ref.material(key)
        elif ref in catalog:
            by_key[key] = catalog[ref]
        else:
            raise ConfigurationError(f"materials.{key}: unknown catalog material {ref!r}; known: {sorted(catalog)}")

    materials: dict[int, Material] = {}
    void: set[int] = set()
    used: set[str] = set()
    for tag in mesh.region_tags():
        name = mesh.region_name(tag)
        for key in (name, str(tag)):
            if key in by_key:
                materials[tag] = by_key[key]
                used.add(key)
                break
        else:
            if name == CAVITY_REGION:
                if scenario.cavity == "filler":
                    materials[tag] = CAVITY_FILLER
                else:
                    void.add(tag)
            else:
                raise ConfigurationError(f"materials: region {name!r} (tag {tag}) has no material")
    unused = sorted(set(by_key) - used)
    if unused:
        raise ConfigurationError(f"materials: {unused} match no mesh region; regions are "
                                 f"{[mesh.region_name(t) for t in mesh.region_tags()]}")
    return materials, void


def _normal_axis(scenario: Scenario) -> str:
    if scenario.output.normal_axis is not None:
        return scenario.output.normal_axis
    for t in scenario.tractions:
        if t.total_force is not None and any(t.total_force):
            return "xyz"[int(np.argmax(np.abs(t.total_force)))]
    return "z"


def build_model(scenario: Scenario, base_dir: Path | str = ".", heavy_load: bool = False) -> Model:
    """Resolve mesh, materials, constraints and loads of a scenario.

    With ``heavy_load`` every total-force traction keeps its direction but
    its magnitude becomes :data:`HEAVY_LOAD_FORCE`.
    """
    mesh, spec = load_mesh(scenario, Path(base_dir))
    materials, void = resolve_materials(scenario, mesh)
    dirichlet = []
    for i, d in enumerate(scenario.dirichlet):
        try:
            nodes = select_nodes(mesh, **d.select.kwargs())
        except KeyError as exc:
            raise ConfigurationError(f"dirichlet.{i}.select: {exc.args[0]}") from None
        dirichlet.append(DirichletSet(nodes, d.components, d.value, d.name or f"dirichlet_{i}"))
    tractions = []
    for i, t in enumerate(scenario.tractions):
        force = t.total_force
        if heavy_load and force is not None:
            norm = float(np.linalg.norm(force))
            if norm > 0:
                force = tuple(HEAVY_LOAD_FORCE * np.asarray(force) / norm)
        box = tuple(map(tuple, t.select.box)) if t.select.box is not None else None
        patch = TractionPatch(t.select.facet, box, force, t.pressure, t.name or f"traction_{i}")
        try:
            if patch.facets(mesh).size == 0:
                raise ConfigurationError(f"tractions.{i}.select: selects no facets")
        except KeyError as exc:
            raise ConfigurationError(f"tractions.{i}.select: {exc.args[0]}") from None
        tractions.append(patch)
    return Model(scenario, mesh, materials, void, dirichlet, tractions, _normal_axis(scenario), spec)


@dataclass
class Run:
    model: Model
    system: SparseSystem
    results: RunResults
    post: PostProcessor
    summaries: list[RegionSummary] = field(default_factory=list)
    fields: dict[int, StepFields] = field(default_factory=dict)

    def step_summaries(self, k: int) -> list[RegionSummary]:
        return [s for s in self.summaries if s.step == k]


def assemble_system(model: Model, threads: int = 1) -> SparseSystem:
    K = assemble_stiffness(model.mesh, model.D(), model.void, threads=threads)
    f = assemble_traction(model.mesh, model.tractions) if model.tractions else np.zeros(3 * model.mesh.n_nodes)
    return apply_dirichlet(K, f, model.dirichlet)


def run_model(model: Model, threads: int = 1, keep_fields: list[int] | None = None, on_step=None) -> Run:
    """Assemble, solve every ramp step and post-process.

    Stress fields are kept for the steps in ``keep_fields`` (default: the
    scenario's output steps); summaries are computed for every step.
    """
    system = assemble_system(model, threads)
    post = PostProcessor(model.mesh, model.D(), model.void, model.normal_axis)
    keep = set(model.scenario.output_steps() if keep_fields is None else keep_fields)
    summaries: list[RegionSummary] = []
    kept: dict[int, StepFields] = {}

    def handle(step: StepResult):
        fields = post.fields(step.displacement)
        summaries.extend(post.summaries(step, fields))
        if step.step in keep:
            kept[step.step] = fields
        if on_step is not None:
            on_step(step)

    results = run_time_loop(
        system,
        model.scenario.schedule.schedule(),
        model.scenario.solver.settings(),
        threads=threads,
        on_step=handle,
    )
    return Run(model, system, results, post, summaries, kept)


def equilibrium_error(system: SparseSystem, u: NDArray, load_factor: float = 1.0) -> float:
    """Relative imbalance between reactions and applied loads.

    Normalized by the applied resultant, or by the summed reaction
    magnitudes when the applied resultant vanishes.
    """
    reactions = system.reactions(np.asarray(u).reshape(-1), load_factor).reshape(-1, 3)
    applied = load_factor * system.f.reshape(-1, 3)
    imbalance = np.linalg.norm(reactions.sum(axis=0) + applied.sum(axis=0))
    scale = np.linalg.norm(applied.sum(axis=0))
    if scale == 0.0:
        scale = float(np.linalg.norm(reactions, axis=1).sum())
    return float(imbalance / scale) if scale > 0 else float(imbalance)


def write_outputs(run: Run, out_dir: Path) -> list[Path]:
    """Write ``step_<k>.vtk`` for each output step and ``summary.csv``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    sc = run.model.scenario
    written = []
    if sc.output.vtk:
        want = set(sc.output.fields)
        for k in sc.output_steps():
            step = run.results.step(k)
            flds = run.fields.get(k) or run.post.fields(step.displacement)
            text = write_vtk(
                run.model.mesh,
                displacement=step.displacement if "displacement" in want else None,
                von_mises=flds.nodal_von_mises if "von_mises" in want else None,
                normal_stress=flds.nodal_normal if "normal_stress" in want else None,
                title=f"{sc.name or 'scenario'} step {k} t={step.time:.17g} s normal_axis={flds.normal_axis}",
                region_tag="region_tag" in want,
            )
            path = out_dir / f"step_{k}.vtk"
            path.write_text(text)
            written.append(path)
    path = out_dir / "summary.csv"
    path.write_text(write_summary_csv(run.summaries))
    written.append(path)
    return written


def load_scenario(path: Path | str) -> tuple[Scenario, Path]:
    path = Path(path)
    scenario = parse_scenario(path.read_text())
    return scenario, path.parent


def scenario_name(scenario: Scenario, path: Path | str) -> str:
    return scenario.name or Path(path).stem

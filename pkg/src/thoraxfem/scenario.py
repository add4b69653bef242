"""Scenario documents: JSON schema, parsing and serialization.

A scenario names a mesh source, maps every region to a material, lists
Dirichlet sets and traction patches, and fixes the load ramp, solver and
output settings. Unknown keys anywhere in the document are rejected.

Minimal example::

    {
      "mesh": {"type": "bar", "lx": 0.1, "ly": 0.02, "lz": 0.02, "nx": 8},
      "materials": {"BAR": "Myocardium"},
      "dirichlet": [{"select": {"facet": "XMIN"}}],
      "tractions": [{"select": {"facet": "XMAX"}, "total_force": [0.4, 0, 0]}]
    }
"""

from __future__ import annotations

import json
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from thoraxfem.errors import ConfigurationError, MaterialError
from thoraxfem.materials import Material
from thoraxfem.phantom import BarSpec, ThoraxPhantomSpec
from thoraxfem.solver import SolverSettings, TimeSchedule

Vec3 = tuple[float, float, float]
FIELDS = ("displacement", "von_mises", "normal_stress", "region_tag")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Selector(_Strict):
    """Exactly one of a closed box, a region, a facet group or a node set."""

    box: tuple[Vec3, Vec3] | None = None
    region: int | str | None = None
    facet: int | str | None = None
    node_set: str | None = None

    @model_validator(mode="after")
    def _one(self):
        given = [k for k in ("box", "region", "facet", "node_set") if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError(f"selector needs exactly one of box, region, facet, node_set (got {given or 'none'})")
        return self

    def kwargs(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class FacetSelector(_Strict):
    box: tuple[Vec3, Vec3] | None = None
    facet: int | str | None = None

    @model_validator(mode="after")
    def _one(self):
        if (self.box is None) == (self.facet is None):
            raise ValueError("facet selector needs exactly one of box, facet")
        return self


class FileMesh(_Strict):
    type: Literal["file"]
    path: str


class BarMesh(_Strict):
    type: Literal["bar"]
    lx: float
    ly: float
    lz: float
    nx: int = 1
    ny: int = 1
    nz: int = 1

    @model_validator(mode="after")
    def _valid(self):
        self.spec()
        return self

    def spec(self) -> BarSpec:
        try:
            return BarSpec(self.lx, self.ly, self.lz, self.nx, self.ny, self.nz)
        except ConfigurationError as exc:
            raise ValueError(str(exc)) from None


class PhantomMesh(_Strict):
    type: Literal["thorax_phantom"]
    spec: dict = Field(default_factory=dict)

    @field_validator("spec")
    @classmethod
    def _check(cls, v: dict) -> dict:
        try:
            ThoraxPhantomSpec.from_dict(v)
        except (ConfigurationError, TypeError) as exc:
            raise ValueError(str(exc)) from None
        return v

    def phantom_spec(self) -> ThoraxPhantomSpec:
        return ThoraxPhantomSpec.from_dict(self.spec)


MeshSource = Annotated[Union[FileMesh, BarMesh, PhantomMesh], Field(discriminator="type")]


class InlineMaterial(_Strict):
    E: float
    nu: float
    rho: float = 1000.0
    name: str | None = None

    @model_validator(mode="after")
    def _admissible(self):
        self.material("inline")
        return self

    def material(self, default_name: str) -> Material:
        try:
            return Material(self.name or default_name, self.E, self.nu, self.rho)
        except MaterialError as exc:
            raise ValueError(str(exc)) from None


class DirichletSpec(_Strict):
    name: str = ""
    select: Selector
    components: str = "xyz"
    value: Vec3 = (0.0, 0.0, 0.0)

    @field_validator("components")
    @classmethod
    def _comps(cls, v: str) -> str:
        if not v or set(v) - set("xyz"):
            raise ValueError("components must be a non-empty subset of 'xyz'")
        return v


class TractionSpec(_Strict):
    name: str = ""
    select: FacetSelector
    total_force: Vec3 | None = None
    pressure: float | None = None

    @model_validator(mode="after")
    def _one(self):
        if (self.total_force is None) == (self.pressure is None):
            raise ValueError("set exactly one of total_force, pressure")
        return self


class ScheduleSpec(_Strict):
    t_end: float = 0.5
    dt: float = 0.05
    ramp: Literal["linear"] = "linear"

    @model_validator(mode="after")
    def _valid(self):
        self.schedule()
        return self

    def schedule(self) -> TimeSchedule:
        try:
            return TimeSchedule(self.t_end, self.dt, self.ramp)
        except ConfigurationError as exc:
            raise ValueError(str(exc)) from None


class SolverSpec(_Strict):
    tolerance: float = 1e-8
    max_iterations: int | None = None
    preconditioner: Literal["none", "jacobi"] = "jacobi"

    @model_validator(mode="after")
    def _valid(self):
        self.settings()
        return self

    def settings(self) -> SolverSettings:
        try:
            return SolverSettings(self.tolerance, self.max_iterations, self.preconditioner)
        except ConfigurationError as exc:
            raise ValueError(str(exc)) from None


class OutputSpec(_Strict):
    steps: Literal["all"] | list[int] = "all"
    fields: list[Literal["displacement", "von_mises", "normal_stress", "region_tag"]] = Field(
        default_factory=lambda: list(FIELDS)
    )
    normal_axis: Literal["x", "y", "z"] | None = None
    vtk: bool = True


class Scenario(_Strict):
    """Validated scenario document."""

    name: str | None = None
    mesh: MeshSource
    unit_scale: float = 1.0
    materials: dict[str, str | InlineMaterial]
    cavity: Literal["void", "filler"] = "void"
    dirichlet: list[DirichletSpec] = Field(default_factory=list)
    tractions: list[TractionSpec] = Field(default_factory=list)
    schedule: ScheduleSpec = Field(default_factory=ScheduleSpec)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)

    @field_validator("unit_scale")
    @classmethod
    def _scale(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("unit_scale must be positive")
        return v

    @model_validator(mode="after")
    def _needs_dirichlet(self):
        if not self.dirichlet:
            raise ValueError("no Dirichlet set")
        return self

    def output_steps(self) -> list[int]:
        n = self.schedule.schedule().n_steps
        if self.output.steps == "all":
            return list(range(1, n + 1))
        bad = [k for k in self.output.steps if not 1 <= k <= n]
        if bad:
            raise ConfigurationError(f"output.steps: {bad} outside 1..{n}")
        return sorted(set(self.output.steps))


def _path(loc) -> str:
    return ".".join(str(p) for p in loc) or "<root>"


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario JSON document.

    Raises:
        ConfigurationError: invalid JSON or schema violation; the message
            names the offending JSON path.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"scenario is not valid JSON: {exc}") from None
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = [p for p in err["loc"] if p not in ("file", "bar", "thorax_phantom")]
            msg = err["msg"].removeprefix("Value error, ")
            msgs.append(f"{_path(loc)}: {msg}")
        raise ConfigurationError("invalid scenario: " + "; ".join(msgs)) from None


def dump_scenario(scenario: Scenario) -> str:
    """Serialize a scenario back to JSON; :func:`parse_scenario` inverts it."""
    return json.dumps(scenario.model_dump(mode="json"), indent=2) + "\n"

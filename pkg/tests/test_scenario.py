"""Scenario schema, model building and the shipped scenarios."""

from __future__ import annotations

import json

import pytest

from thoraxfem.cli import shipped_scenarios
from thoraxfem.errors import ConfigurationError
from thoraxfem.pipeline import build_model, resolve_materials
from thoraxfem.presets import cpr_scenario
from thoraxfem.scenario import dump_scenario, parse_scenario

MINIMAL_BAR = {
    "mesh": {"type": "bar", "lx": 0.1, "ly": 0.02, "lz": 0.02, "nx": 4},
    "materials": {"BAR": "Myocardium"},
    "dirichlet": [{"select": {"facet": "XMIN"}}],
    "tractions": [{"select": {"facet": "XMAX"}, "total_force": [1.0, 0.0, 0.0]}],
}


def doc(**changes) -> str:
    return json.dumps(MINIMAL_BAR | changes)


class TestParseScenario:
    def test_minimal_bar(self):
        sc = parse_scenario(doc())
        assert sc.solver.tolerance == 1e-8
        assert sc.solver.preconditioner == "jacobi"
        assert sc.cavity == "void"
        assert sc.schedule.schedule().n_steps == 10

    def test_missing_dirichlet(self):
        data = {k: v for k, v in MINIMAL_BAR.items() if k != "dirichlet"}
        with pytest.raises(ConfigurationError, match="no Dirichlet set"):
            parse_scenario(json.dumps(data))

    def test_unknown_key_names_path(self):
        bad = dict(MINIMAL_BAR)
        bad["solver"] = {"tolerance": 1e-8, "tolerence": 1e-9}
        with pytest.raises(ConfigurationError, match=r"solver\.tolerence"):
            parse_scenario(json.dumps(bad))

    def test_bad_value_names_path(self):
        with pytest.raises(ConfigurationError, match=r"dirichlet\.0\.components"):
            parse_scenario(doc(dirichlet=[{"select": {"facet": "XMIN"}, "components": "xw"}]))

    def test_selector_needs_one_mode(self):
        with pytest.raises(ConfigurationError, match=r"dirichlet\.0\.select"):
            parse_scenario(doc(dirichlet=[{"select": {"facet": "XMIN", "region": 1}}]))

    def test_inadmissible_inline_material(self):
        with pytest.raises(ConfigurationError, match=r"materials\.BAR"):
            parse_scenario(doc(materials={"BAR": {"E": 1e6, "nu": 0.5}}))

    def test_schedule_must_divide(self):
        with pytest.raises(ConfigurationError, match="schedule"):
            parse_scenario(doc(schedule={"t_end": 0.5, "dt": 0.03}))

    def test_not_json(self):
        with pytest.raises(ConfigurationError, match="JSON"):
            parse_scenario("{mesh:")

    def test_output_steps(self):
        sc = parse_scenario(doc(output={"steps": [10, 5, 5]}))
        assert sc.output_steps() == [5, 10]
        with pytest.raises(ConfigurationError, match="output.steps"):
            parse_scenario(doc(output={"steps": [11]})).output_steps()

    @pytest.mark.parametrize(
        "extra",
        [
            {},
            {"unit_scale": 1e-3, "name": "scaled"},
            {"cavity": "filler", "schedule": {"t_end": 1.0, "dt": 0.25}},
            {"solver": {"tolerance": 1e-10, "max_iterations": 500, "preconditioner": "none"}},
            {"output": {"steps": [1, 2], "fields": ["displacement"], "normal_axis": "x", "vtk": False}},
            {"materials": {"BAR": {"E": 2e6, "nu": 0.25, "rho": 1200.0, "name": "gel"}}},
            {"mesh": {"type": "thorax_phantom", "spec": {"h": 0.02}}},
            {"mesh": {"type": "file", "path": "mesh.msh"}},
            {"tractions": [{"name": "p", "select": {"box": [[0, 0, 0], [1, 1, 1]]}, "pressure": 3.0}]},
        ],
    )
    def test_round_trip(self, extra):
        sc = parse_scenario(doc(**extra))
        assert parse_scenario(dump_scenario(sc)) == sc

    def test_phantom_spec_checked(self):
        with pytest.raises(ConfigurationError, match="mesh.spec"):
            parse_scenario(doc(mesh={"type": "thorax_phantom", "spec": {"ribs": 3}}))


class TestBuildModel:
    def test_unknown_catalog_material(self):
        with pytest.raises(ConfigurationError, match="Cardboard"):
            build_model(parse_scenario(doc(materials={"BAR": "Cardboard"})))

    def test_unmapped_region(self):
        with pytest.raises(ConfigurationError, match="no material"):
            build_model(parse_scenario(doc(materials={"1x": "Bones"})))

    def test_region_by_tag_string(self):
        model = build_model(parse_scenario(doc(materials={"1": "Bones"})))
        assert model.materials[1].name == "Bones"

    def test_unknown_facet(self):
        with pytest.raises(ConfigurationError, match="dirichlet.0.select"):
            build_model(parse_scenario(doc(dirichlet=[{"select": {"facet": "BACK"}}])))

    def test_empty_traction_selection(self):
        bad = [{"select": {"box": [[5, 5, 5], [6, 6, 6]]}, "total_force": [1, 0, 0]}]
        with pytest.raises(ConfigurationError, match="selects no facets"):
            build_model(parse_scenario(doc(tractions=bad)))

    def test_missing_mesh_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            build_model(parse_scenario(doc(mesh={"type": "file", "path": "nope.msh"})), tmp_path)

    def test_normal_axis_follows_load(self):
        assert build_model(parse_scenario(doc())).normal_axis == "x"

    def test_heavy_load_rescales_force(self):
        model = build_model(parse_scenario(doc()), heavy_load=True)
        assert model.tractions[0].total_force == pytest.approx((1e6, 0.0, 0.0))

    def test_cavity_policies(self):
        text = json.dumps(cpr_scenario({"type": "thorax_phantom", "spec": {"h": 0.02}}))
        model = build_model(parse_scenario(text))
        assert [model.mesh.region_name(t) for t in model.void] == ["CAVITY"]
        filled = parse_scenario(text).model_copy(update={"cavity": "filler"})
        materials, void = resolve_materials(filled, model.mesh)
        assert not void
        assert materials[model.mesh.region_tag("CAVITY")].E == 5e3


class TestShippedScenarios:
    def test_all_parse(self):
        shipped = shipped_scenarios()
        assert {"cpr_phantom.json", "bar_uniaxial.json", "cantilever.json"} <= set(shipped)
        for path in shipped.values():
            parse_scenario(path.read_text())

    def test_cpr_phantom_schedule(self):
        sc = parse_scenario(shipped_scenarios()["cpr_phantom.json"].read_text())
        assert (sc.schedule.t_end, sc.schedule.dt) == (0.5, 0.05)
        assert sc.output_steps() == list(range(1, 11))

    def test_cpr_phantom_matches_preset(self):
        shipped = json.loads(shipped_scenarios()["cpr_phantom.json"].read_text())
        assert shipped == cpr_scenario({"type": "thorax_phantom", "spec": {}})

    def test_heavy_load_preset(self):
        sc = cpr_scenario({"type": "thorax_phantom", "spec": {}}, heavy_load=True)
        assert sc["tractions"][0]["total_force"] == [0.0, 0.0, -1e6]

"""Stress recovery, invariants, nodal averaging and region summaries."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_rotation
from thoraxfem.assembly import apply_dirichlet, assemble_stiffness, assemble_traction, strain_displacement
from thoraxfem.mesh import Mesh
from thoraxfem.phantom import BarSpec, gen_bar
from thoraxfem.solver import SolverSettings, StepResult, cg_solve, run_time_loop
from thoraxfem.stress import (
    PostProcessor,
    element_stress,
    nodal_average,
    principal_stresses,
    region_summary,
    tensor_to_voigt,
    von_mises,
    voigt_to_tensor,
)
from thoraxfem.verification import uniaxial_bar_model

UNIT_TET = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
voigt = arrays(np.float64, 6, elements=st.floats(-1e6, 1e6))


class TestVonMises:
    def test_uniaxial(self):
        assert von_mises([3.5, 0, 0, 0, 0, 0]) == 3.5

    def test_hydrostatic(self):
        assert von_mises([7.0, 7.0, 7.0, 0, 0, 0]) == 0.0

    def test_pure_shear(self):
        assert von_mises([0, 0, 0, 2.0, 0, 0]) == pytest.approx(np.sqrt(3) * 2.0, rel=1e-15)

    def test_batched(self):
        out = von_mises(np.array([[1.0, 0, 0, 0, 0, 0], [0, 0, 0, 0, 1.0, 0]]))
        np.testing.assert_allclose(out, [1.0, np.sqrt(3)])

    @settings(max_examples=100)
    @given(voigt, st.integers(0, 2**32 - 1))
    def test_rotation_invariance(self, s, seed):
        Q = random_rotation(np.random.default_rng(seed))
        rotated = tensor_to_voigt(Q @ voigt_to_tensor(s) @ Q.T)
        scale = max(np.abs(s).max(), 1.0)
        assert von_mises(rotated) == pytest.approx(von_mises(s), rel=1e-9, abs=1e-9 * scale)

    @given(voigt, st.floats(-1e6, 1e6))
    def test_hydrostatic_shift_invariance(self, s, p):
        shifted = s + np.array([p, p, p, 0, 0, 0])
        scale = max(np.abs(s).max(), abs(p), 1.0)
        assert von_mises(shifted) == pytest.approx(von_mises(s), abs=1e-9 * scale)

    @given(voigt)
    def test_non_negative(self, s):
        assert von_mises(s) >= 0


class TestPrincipal:
    def test_uniaxial(self):
        np.testing.assert_allclose(principal_stresses([5.0, 0, 0, 0, 0, 0]), [5, 0, 0], atol=1e-15)

    def test_hydrostatic(self):
        np.testing.assert_array_equal(principal_stresses([2.0, 2.0, 2.0, 0, 0, 0]), [2, 2, 2])

    def test_pure_shear(self):
        np.testing.assert_allclose(principal_stresses([0, 0, 0, 3.0, 0, 0]), [3, 0, -3], atol=1e-14)

    @settings(max_examples=200)
    @given(voigt)
    def test_invariants(self, s):
        p = principal_stresses(s)
        T = voigt_to_tensor(s)
        scale = max(np.abs(s).max(), 1.0)
        assert p[0] >= p[1] >= p[2]
        assert p.sum() == pytest.approx(np.trace(T), rel=1e-10, abs=1e-10 * scale)
        with np.errstate(all="ignore"):
            det = np.linalg.det(T)
        assert np.prod(p) == pytest.approx(det, rel=1e-9, abs=1e-9 * scale**3)
        np.testing.assert_allclose(p, np.linalg.eigvalsh(T)[::-1], rtol=1e-9, atol=1e-9 * scale)

    def test_near_degenerate_uses_fallback(self):
        s = np.array([1.0, 1.0 + 1e-9, 1.0 - 1e-9, 1e-10, 0, 0])
        np.testing.assert_allclose(principal_stresses(s), np.linalg.eigvalsh(voigt_to_tensor(s))[::-1], atol=1e-14)

    def test_batched_shape(self):
        assert principal_stresses(np.zeros((4, 5, 6))).shape == (4, 5, 3)


class TestElementStress:
    def test_zero_displacement(self, heart):
        B = strain_displacement(UNIT_TET).B
        assert not element_stress(np.zeros(12), B, heart.D()).any()

    def test_uniaxial_strain(self, heart):
        eps = 2e-3
        u = np.zeros((4, 3))
        u[:, 0] = eps * UNIT_TET[:, 0]
        s = element_stress(u.ravel(), strain_displacement(UNIT_TET).B, heart.D())
        lam, mu = heart.lame()
        assert s[0] == pytest.approx((lam + 2 * mu) * eps, rel=1e-12)
        assert s[1] == pytest.approx(lam * eps, rel=1e-12)

    def test_uniaxial_stress_bar(self, heart):
        p = 1e3
        mesh, dirichlet, tractions = uniaxial_bar_model(p=p)
        system = apply_dirichlet(assemble_stiffness(mesh, {1: heart.D()}), assemble_traction(mesh, tractions), dirichlet)
        u = system.expand(cg_solve(system.K_ff, system.f_f, SolverSettings(1e-13, 100000))[0])
        s = PostProcessor(mesh, {1: heart.D()}).stresses(u)
        cx = mesh.nodes[mesh.tets].mean(axis=1)[:, 0]
        interior = (cx > 0.025) & (cx < 0.075)
        np.testing.assert_allclose(s[interior, 0], p, rtol=1e-3)
        assert np.abs(s[interior, 1:]).max() <= 1e-8 * p


class TestNodalAverage:
    @pytest.fixture
    def two_tets(self):
        nodes = np.vstack([UNIT_TET, [[2 / 3, 2 / 3, 2 / 3]]])
        return Mesh(nodes, [[0, 1, 2, 3], [1, 2, 3, 4]], [1, 1])

    def test_constant_field(self, cube_mesh):
        out, isolated = nodal_average(cube_mesh, np.full(cube_mesh.n_tets, 4.2))
        np.testing.assert_allclose(out, 4.2, rtol=1e-15)
        assert not isolated.any()

    def test_single_tet(self):
        out, _ = nodal_average(Mesh(UNIT_TET, [[0, 1, 2, 3]], [1]), np.array([3.0]))
        np.testing.assert_array_equal(out, [3.0] * 4)

    def test_shared_face_gets_mean(self, two_tets):
        vols = np.abs(two_tets.volumes())
        assert vols[0] == pytest.approx(vols[1])
        out, _ = nodal_average(two_tets, np.array([1.0, 3.0]))
        np.testing.assert_allclose(out[[1, 2, 3]], 2.0)
        assert out[0] == 1.0 and out[4] == 3.0

    def test_isolated_node_flagged(self, two_tets):
        out, isolated = nodal_average(two_tets, np.array([1.0, 3.0]), active=np.array([True, False]))
        assert isolated.tolist() == [False, False, False, False, True]
        assert out[4] == 0.0

    def test_vector_field(self, cube_mesh):
        values = np.tile([1.0, 2.0], (cube_mesh.n_tets, 1))
        out, _ = nodal_average(cube_mesh, values)
        assert out.shape == (cube_mesh.n_nodes, 2)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_preserves_volume_weighted_mean(self, seed):
        # Each tet spreads a quarter of its volume to each corner, so the
        # nodal field weighted by those lumped volumes keeps the mean.
        mesh = gen_bar(BarSpec(1.0, 0.5, 0.3, 3, 2, 2))
        values = np.random.default_rng(seed).normal(size=mesh.n_tets)
        vol = np.abs(mesh.volumes())
        out, _ = nodal_average(mesh, values)
        lumped = np.zeros(mesh.n_nodes)
        np.add.at(lumped, mesh.tets.ravel(), np.repeat(vol / 4, 4))
        expected = (vol * values).sum() / vol.sum()
        assert (lumped * out).sum() / lumped.sum() == pytest.approx(expected, rel=1e-12, abs=1e-14)


class TestRegionSummary:
    @pytest.fixture
    def bar_run(self, heart):
        mesh, dirichlet, tractions = uniaxial_bar_model(nx=8)
        system = apply_dirichlet(assemble_stiffness(mesh, {1: heart.D()}), assemble_traction(mesh, tractions), dirichlet)
        post = PostProcessor(mesh, {1: heart.D()}, normal_axis="x")
        return mesh, post, run_time_loop(system)

    def test_zero_load_summary(self, bar_run):
        mesh, post, _ = bar_run
        zero = StepResult(0, 0.0, 0.0, np.zeros((mesh.n_nodes, 3)), 0, 0.0)
        (s,) = post.summaries(zero)
        assert (s.max_disp, s.mean_disp, s.max_vm, s.mean_vm, s.max_normal, s.min_normal) == (0, 0, 0, 0, 0, 0)

    def test_full_load_summary(self, bar_run):
        mesh, post, results = bar_run
        (s,) = region_summary(post, results, 10)
        assert s.region == "BAR" and s.step == 10
        assert s.max_disp >= s.mean_disp >= 0 and s.max_vm >= s.mean_vm >= 0
        assert s.max_disp == pytest.approx(1e3 * 0.1 / 1e6, rel=0.35)
        assert s.max_normal == pytest.approx(1e3, rel=1e-3)
        assert s.loc_max_disp in mesh.node_ids
        assert s.loc_max_vm in mesh.tet_ids

    def test_void_regions_excluded(self, heart):
        nodes = np.vstack([UNIT_TET, UNIT_TET + 5.0])
        mesh = Mesh(nodes, [[0, 1, 2, 3], [4, 5, 6, 7]], [1, 2], region_names={1: "A", 2: "CAVITY"})
        post = PostProcessor(mesh, {1: heart.D()}, void={2})
        u = np.ones((8, 3)) * 1e-3
        fields = post.fields(u)
        assert not fields.stress[1].any()
        regions = [s.region for s in post.summaries(StepResult(1, 0.05, 0.1, u, 0, 0.0), fields)]
        assert regions == ["A"]

    def test_invalid_axis(self, heart, cube_mesh):
        with pytest.raises(ValueError):
            PostProcessor(cube_mesh, {1: heart.D()}, normal_axis="r")

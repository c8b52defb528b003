"""Meshes, quadrature and assembled bilinear forms."""

import numpy as np
import pytest

from robinred.errors import HypothesisViolation, MeshError
from robinred.fem import (CoefficientField, Mesh, SymmetricForm,
                          assemble_boundary, assemble_mass, assemble_potential,
                          assemble_stiffness, build_interval_mesh,
                          build_rectangle_mesh, compose_gamma, compose_h1,
                          domain_measure, interior_tables)

PI = np.pi


class TestIntervalMesh:
    def test_uniform_partition(self):
        mesh = build_interval_mesh(0.0, PI, 5)
        assert mesh.n_nodes == 5
        assert mesh.n_elements == 4
        assert mesh.boundary_facets.shape[0] == 2
        np.testing.assert_allclose(np.diff(mesh.nodes[:, 0]), PI / 4, rtol=1e-15)

    def test_three_nodes(self):
        mesh = build_interval_mesh(0.0, 1.0, 3)
        np.testing.assert_allclose(mesh.nodes[:, 0], [0.0, 0.5, 1.0])

    def test_inverted_interval_rejected(self):
        with pytest.raises(MeshError):
            build_interval_mesh(1.0, 0.0, 5)

    def test_too_few_nodes_rejected(self):
        with pytest.raises(MeshError):
            build_interval_mesh(0.0, 1.0, 2)


class TestRectangleMesh:
    def test_minimal_grid(self):
        mesh = build_rectangle_mesh(1.0, 1.0, 2, 2)
        assert mesh.n_nodes == 4
        assert mesh.n_elements == 2
        assert mesh.boundary_facets.shape[0] == 4
        np.testing.assert_allclose(mesh.boundary_weights, 1.0)

    def test_boundary_weight_is_perimeter(self):
        mesh = build_rectangle_mesh(2.0, 1.0, 3, 2)
        assert mesh.n_nodes == 6
        assert mesh.n_elements == 4
        assert abs(mesh.boundary_weights.sum() - 6.0) < 1e-12

    def test_perimeter_non_square(self):
        mesh = build_rectangle_mesh(3.0, 4.0, 7, 5)
        assert abs(mesh.boundary_weights.sum() - 14.0) < 1e-12

    def test_degenerate_rejected(self):
        with pytest.raises(MeshError):
            build_rectangle_mesh(0.0, 1.0, 2, 2)


class TestMassStiffness:
    def test_mass_partition_of_unity(self):
        mesh = build_interval_mesh(0.0, 1.0, 3)
        M = assemble_mass(mesh)
        assert abs(M.matrix.sum() - 1.0) < 1e-14

    def test_constant_in_stiffness_kernel(self):
        mesh = build_interval_mesh(0.0, 1.0, 17)
        K = assemble_stiffness(mesh)
        assert abs(K.quad(np.ones(17))) < 1e-13

    def test_linear_dirichlet_energy(self):
        # u = x on (0,1): int |u'|^2 = 1
        mesh = build_interval_mesh(0.0, 1.0, 33)
        K = assemble_stiffness(mesh)
        assert abs(K.quad(mesh.nodes[:, 0]) - 1.0) < 1e-13

    def test_mass_positive(self):
        mesh = build_rectangle_mesh(1.0, 1.0, 5, 5)
        M = assemble_mass(mesh)
        rng = np.random.default_rng(0)
        quads = [M.quad(rng.standard_normal(mesh.n_nodes)) for _ in range(100)]
        assert min(quads) > 0.0

    def test_2d_mass_total_is_area(self):
        mesh = build_rectangle_mesh(2.0, 3.0, 6, 5)
        M = assemble_mass(mesh)
        assert abs(M.matrix.sum() - 6.0) < 1e-12
        assert abs(domain_measure(mesh) - 6.0) < 1e-12


class TestCoefficientForms:
    def test_zero_potential(self):
        mesh = build_interval_mesh(0.0, 1.0, 9)
        Xi = assemble_potential(mesh, CoefficientField.constant(0.0))
        assert Xi.matrix.nnz == 0 or abs(Xi.matrix).max() == 0.0

    @pytest.mark.parametrize("builder", [
        lambda: build_interval_mesh(0.0, PI, 17),
        lambda: build_rectangle_mesh(1.0, 2.0, 4, 5),
    ])
    def test_constant_potential_matches_mass(self, builder):
        # the quadrature rules are exact for P1 products
        mesh = builder()
        c = -1.7
        M = assemble_mass(mesh)
        Xi = assemble_potential(mesh, CoefficientField.constant(c))
        diff = abs(Xi.matrix - c * M.matrix)
        assert diff.max() < 1e-12 if diff.nnz else True

    def test_endpoint_boundary_form(self):
        mesh = build_interval_mesh(0.0, 1.0, 5)
        B = assemble_boundary(mesh, CoefficientField.constant(1.0))
        assert abs(B.quad(np.ones(5)) - 2.0) < 1e-14

    def test_negative_beta_rejected(self):
        mesh = build_interval_mesh(0.0, 1.0, 5)
        with pytest.raises(HypothesisViolation) as err:
            assemble_boundary(mesh, CoefficientField.constant(-0.5))
        assert err.value.hypothesis == "H(beta)"

    def test_nonfinite_potential_rejected(self):
        mesh = build_interval_mesh(0.0, 1.0, 5)
        bad = CoefficientField.from_callable(lambda x: np.full_like(x, np.inf))
        with pytest.raises(HypothesisViolation) as err:
            assemble_potential(mesh, bad)
        assert err.value.hypothesis == "H(xi)"

    def test_node_singularity_is_integrable(self):
        # quadrature points are element-interior, so a singular point that
        # sits exactly on a node never gets evaluated
        mesh = build_interval_mesh(0.0, 1.0, 5)
        xi = CoefficientField.from_callable(lambda x: np.abs(x - 0.5) ** -0.5)
        Xi = assemble_potential(mesh, xi)
        assert np.all(np.isfinite(Xi.matrix.data))

    def test_nodal_field_linear_interpolation_exact(self):
        mesh = build_interval_mesh(0.0, 2.0, 9)
        nodal = CoefficientField.from_nodal(3.0 * mesh.nodes[:, 0] - 1.0)
        tab = interior_tables(mesh)
        expected = 3.0 * tab["pts"][..., 0] - 1.0
        np.testing.assert_allclose(nodal.interior_values(mesh), expected,
                                   atol=1e-14)


class TestComposition:
    def test_zero_fields_give_stiffness(self):
        mesh = build_interval_mesh(0.0, 1.0, 9)
        K = assemble_stiffness(mesh)
        Xi = assemble_potential(mesh, CoefficientField.constant(0.0))
        B = assemble_boundary(mesh, CoefficientField.constant(0.0))
        G = compose_gamma(K, Xi, B)
        assert abs(G.matrix - K.matrix).max() == 0.0

    def test_gamma_of_constant_with_negative_potential(self):
        # gamma(1) = int_0^1 xi = -1 for xi = -1, beta = 0
        mesh = build_interval_mesh(0.0, 1.0, 21)
        K = assemble_stiffness(mesh)
        Xi = assemble_potential(mesh, CoefficientField.constant(-1.0))
        B = assemble_boundary(mesh, CoefficientField.constant(0.0))
        G = compose_gamma(K, Xi, B)
        assert abs(G.quad(np.ones(21)) + 1.0) < 1e-13

    def test_h1_dominates_mass(self):
        mesh = build_interval_mesh(0.0, 1.0, 21)
        M = assemble_mass(mesh)
        A = compose_h1(M, assemble_stiffness(mesh))
        rng = np.random.default_rng(1)
        for _ in range(50):
            u = rng.standard_normal(21)
            assert A.quad(u) >= M.quad(u) - 1e-13

    def test_order_mismatch_rejected(self):
        m1 = assemble_mass(build_interval_mesh(0.0, 1.0, 5))
        m2 = assemble_mass(build_interval_mesh(0.0, 1.0, 7))
        with pytest.raises(ValueError):
            compose_h1(m1, m2)


class TestSymmetryAndDeterminism:
    def test_exact_symmetry_of_all_forms(self):
        mesh = build_rectangle_mesh(1.0, 1.0, 5, 4)
        xi = CoefficientField.from_callable(lambda x, y: np.cos(3 * x) - y)
        beta = CoefficientField.constant(0.3)
        forms = [assemble_mass(mesh), assemble_stiffness(mesh),
                 assemble_potential(mesh, xi), assemble_boundary(mesh, beta)]
        rng = np.random.default_rng(2)
        for S in forms:
            for _ in range(20):
                u = rng.standard_normal(mesh.n_nodes)
                v = rng.standard_normal(mesh.n_nodes)
                assert abs(S.pair(u, v) - S.pair(v, u)) < 1e-12

    def test_element_order_invariance(self):
        mesh = build_rectangle_mesh(1.0, 1.0, 6, 6)
        rng = np.random.default_rng(3)
        perm = rng.permutation(mesh.n_elements)
        shuffled = Mesh(mesh.dim, mesh.nodes, mesh.elements[perm],
                        mesh.boundary_facets, mesh.boundary_weights, mesh.domain)
        for fn in (assemble_mass, assemble_stiffness):
            a = fn(mesh).matrix
            b = fn(shuffled).matrix
            assert (a != b).nnz == 0
            assert np.array_equal(a.data, b.data)


class TestSerialization:
    def test_triplet_csv_roundtrip(self):
        mesh = build_interval_mesh(0.0, PI, 9)
        K = assemble_stiffness(mesh)
        back = SymmetricForm.from_triplet_csv(K.to_triplet_csv(), 9)
        assert abs(K.matrix - back.matrix).max() == 0.0

    def test_triplet_csv_header_required(self):
        with pytest.raises(ValueError):
            SymmetricForm.from_triplet_csv("0,0,1.0\n", 1)

    def test_mesh_json_roundtrip(self):
        mesh = build_rectangle_mesh(2.0, 1.0, 3, 3)
        back = Mesh.from_json(mesh.to_json())
        assert back.dim == 2
        np.testing.assert_array_equal(back.elements, mesh.elements)
        np.testing.assert_allclose(back.nodes, mesh.nodes)
        np.testing.assert_allclose(back.boundary_weights, mesh.boundary_weights)
        assert back.domain == mesh.domain

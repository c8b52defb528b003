"""Pencil eigensolve, clustering, and the spectral certificates."""

import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp

from conftest import assembled_interval, robin_interval_eigenvalues
from robinred.errors import (CertificateError, HypothesisViolation,
                             SpectralStructureError)
from robinred.fem import (CoefficientField, SymmetricForm, assemble_boundary,
                          assemble_mass, assemble_potential, assemble_stiffness,
                          build_interval_mesh, compose_gamma, compose_h1)
from robinred.spectrum import (EigenDecomposition, coercivity_shift,
                               first_eigen_report, lemma_gap_constant, rayleigh,
                               residual_norms, solve_pencil)

PI = np.pi


def _interval_pencil(a, b, n, xi=0.0, beta=0.0):
    base = assembled_interval(a, b, n, xi, beta)
    return base


class TestSolvePencil:
    def test_neumann_cosine_eigenvalues(self):
        base = _interval_pencil(0.0, PI, 512)
        d = solve_pencil(base.G, base.M, k=6)
        exact = np.array([0.0, 1.0, 4.0, 9.0, 16.0, 25.0])
        assert abs(d.eigenvalues[0]) < 1e-3
        rel = np.abs(d.eigenvalues[1:] - exact[1:]) / exact[1:]
        assert rel.max() < 1e-3

    def test_matches_dense_oracle(self):
        base = _interval_pencil(0.0, PI, 64, xi=-0.3)
        d = solve_pencil(base.G, base.M, k=6)
        oracle = la.eigh(base.G.dense(), base.M.dense(), eigvals_only=True)
        np.testing.assert_allclose(d.eigenvalues, oracle[:6], rtol=1e-12,
                                   atol=1e-12)

    def test_constant_shift_identity(self):
        b0 = _interval_pencil(0.0, PI, 128, xi=0.0)
        b2 = _interval_pencil(0.0, PI, 128, xi=-2.0)
        d0 = solve_pencil(b0.G, b0.M, k=6)
        d2 = solve_pencil(b2.G, b2.M, k=6)
        np.testing.assert_allclose(d2.eigenvalues, d0.eigenvalues - 2.0,
                                   atol=1e-10)

    def test_robin_transcendental_oracle(self):
        base = _interval_pencil(0.0, 1.0, 512, beta=1.0)
        d = solve_pencil(base.G, base.M, k=6)
        oracle = robin_interval_eigenvalues(6, beta=1.0)
        rel = np.abs(d.eigenvalues - oracle) / oracle
        assert rel.max() < 1e-4

    def test_contract_invariants(self):
        base = _interval_pencil(0.0, PI, 128, xi=-0.5)
        d = solve_pencil(base.G, base.M, k=10)
        assert np.all(np.diff(d.eigenvalues) >= -1e-12)
        gram = d.vectors.T @ (base.M.matrix @ d.vectors)
        assert np.abs(gram - np.eye(10)).max() < 1e-8
        res = residual_norms(base.G, base.M, d.eigenvalues, d.vectors)
        assert res.max() < 1e-8
        # G-orthogonality across clusters
        Gv = base.G.matrix @ d.vectors
        cross = d.vectors.T @ Gv
        off = cross - np.diag(np.diag(cross))
        assert np.abs(off).max() < 1e-8

    def test_sparse_path_above_dense_limit(self):
        mesh = build_interval_mesh(0.0, PI, 2200)
        M = assemble_mass(mesh)
        K = assemble_stiffness(mesh)
        Xi = assemble_potential(mesh, CoefficientField.constant(0.0))
        B = assemble_boundary(mesh, CoefficientField.constant(0.0))
        base = type("NS", (), {})()
        base.G, base.M = compose_gamma(K, Xi, B), M
        d = solve_pencil(base.G, base.M, k=5)
        exact = np.array([0.0, 1.0, 4.0, 9.0, 16.0])
        assert abs(d.eigenvalues[0]) < 1e-6
        rel = np.abs(d.eigenvalues[1:] - exact[1:]) / exact[1:]
        assert rel.max() < 1e-4
        res = residual_norms(base.G, base.M, d.eigenvalues, d.vectors)
        assert res.max() < 1e-8

    def test_k_out_of_range(self):
        base = _interval_pencil(0.0, 1.0, 9)
        with pytest.raises(ValueError):
            solve_pencil(base.G, base.M, k=10)

    def test_clustering_groups_near_degenerate_values(self):
        lam = np.array([1.0, 2.0, 2.0 + 1e-9, 5.0])
        G = SymmetricForm(sp.diags(lam).tocsr())
        M = SymmetricForm(sp.identity(4, format="csr"))
        d = solve_pencil(G, M, k=4)
        assert d.n_clusters == 3
        assert d.multiplicities().tolist() == [1, 2, 1]

    def test_cluster_tolerance_configurable(self):
        lam = np.array([1.0, 2.0, 2.1, 5.0])
        G = SymmetricForm(sp.diags(lam).tocsr())
        M = SymmetricForm(sp.identity(4, format="csr"))
        d = solve_pencil(G, M, k=4, cluster_tol=0.1)
        assert d.n_clusters == 3


class TestFirstEigenReport:
    def test_neumann_structure(self, neumann_pi):
        rep = first_eigen_report(neumann_pi.decomp, max_clusters=6)
        assert rep.dim1 == 1
        assert rep.sign_uniform
        assert all(rep.nodal_higher)

    def test_second_mode_changes_sign_once(self, neumann_pi):
        # cos(x) has exactly one zero in (0, pi)
        v = neumann_pi.decomp.vectors[:, 1]
        changes = np.sum(np.diff(np.sign(v)) != 0)
        assert changes == 1

    def test_duplicated_first_eigenvalue_fails(self, neumann_pi):
        d = neumann_pi.decomp
        fake = EigenDecomposition(
            eigenvalues=d.eigenvalues.copy(), vectors=d.vectors.copy(),
            clusters=[(0, 2)] + [(s, e) for s, e in d.clusters[2:]],
            cluster_values=d.cluster_values[1:], complete=True)
        with pytest.raises(SpectralStructureError) as err:
            first_eigen_report(fake, max_clusters=3)
        assert "simple" in err.value.prop

    def test_fixed_sign_violation_detected(self, neumann_pi):
        d = neumann_pi.decomp
        vecs = d.vectors.copy()
        vecs[:, 0] = vecs[:, 1]            # nodal vector in the first slot
        fake = EigenDecomposition(
            eigenvalues=d.eigenvalues, vectors=vecs, clusters=d.clusters,
            cluster_values=d.cluster_values, complete=True)
        with pytest.raises(SpectralStructureError) as err:
            first_eigen_report(fake, max_clusters=3)
        assert "sign" in err.value.prop


class TestRayleigh:
    def test_eigenvector_attains_infimum(self, neumann_pi):
        d = neumann_pi.decomp
        v1 = d.vectors[:, 0]
        assert abs(rayleigh(neumann_pi.G, neumann_pi.M, v1)
                   - d.eigenvalues[0]) < 1e-8

    def test_min_max_characterization_by_projection(self, neumann_pi):
        d = neumann_pi.decomp
        rng = np.random.default_rng(5)
        m = 4
        lam_m = d.cluster_values[m - 1]
        low = d.block_basis(0, m)
        high = d.block_basis(m - 1, d.n_clusters)
        for _ in range(50):
            u = low @ rng.standard_normal(low.shape[1])
            assert rayleigh(neumann_pi.G, neumann_pi.M, u) <= lam_m + 1e-8
            w = high @ rng.standard_normal(high.shape[1])
            assert rayleigh(neumann_pi.G, neumann_pi.M, w) >= lam_m - 1e-8

    def test_zero_vector_rejected(self, neumann_pi):
        with pytest.raises(ValueError):
            rayleigh(neumann_pi.G, neumann_pi.M, np.zeros(neumann_pi.mesh.n_nodes))


class TestCoercivity:
    def test_neumann_shift_is_one(self, neumann_pi):
        cert = coercivity_shift(neumann_pi.G, neumann_pi.M, neumann_pi.A)
        assert abs(cert.mu - 1.0) < 1e-9
        # G + M = K + M = A here, so the constant is exactly 1
        assert abs(cert.c0 - 1.0) < 1e-9

    def test_shifted_potential_mu(self):
        base = _interval_pencil(0.0, PI, 128, xi=-2.0)
        cert = coercivity_shift(base.G, base.M, base.A)
        assert abs(cert.mu - 3.0) < 1e-8

    def test_sampled_inequality(self):
        base = _interval_pencil(0.0, PI, 128, xi=-0.5)
        cert = coercivity_shift(base.G, base.M, base.A)
        S = base.G.matrix + cert.mu * base.M.matrix
        rng = np.random.default_rng(11)
        for _ in range(1000):
            u = rng.standard_normal(128)
            assert u @ (S @ u) >= cert.c0 * base.A.quad(u)


class TestGapCertificates:
    def test_side_a_one_dimensional_relation(self):
        base = _interval_pencil(0.0, PI, 128, xi=-0.5)
        d = base.decomp
        lam1, lam2 = d.cluster_values[:2]
        eta_val = 0.5 * (lam1 + lam2)
        cert = lemma_gap_constant("a", d, 1, CoefficientField.constant(eta_val),
                                  base.mesh, base.G, base.A)
        assert cert.constant > 0
        e1 = d.vectors[:, 0]
        expected = (eta_val - lam1) / base.A.quad(e1)
        assert abs(cert.constant - expected) < 1e-10

    def test_eta_equal_to_eigenvalue_rejected(self):
        base = _interval_pencil(0.0, PI, 128, xi=-0.5)
        lam1 = base.decomp.cluster_values[0]
        with pytest.raises(HypothesisViolation):
            lemma_gap_constant("a", base.decomp, 1,
                               CoefficientField.constant(lam1), base.mesh,
                               base.G, base.A)

    def test_side_b_sampled_inequality(self):
        base = _interval_pencil(0.0, PI, 128, xi=-0.5)
        d = base.decomp
        m = 2
        eta_val = d.cluster_values[m - 1] - 1.0
        eta = CoefficientField.constant(eta_val)
        cert = lemma_gap_constant("b", d, m, eta, base.mesh, base.G, base.A)
        assert cert.constant > 0
        H = base.G.matrix - eta_val * base.M.matrix
        Y = d.block_basis(m - 1, d.n_clusters)
        rng = np.random.default_rng(13)
        for _ in range(1000):
            u = Y @ rng.standard_normal(Y.shape[1])
            assert u @ (H @ u) >= cert.constant * base.A.quad(u) - 1e-8

    def test_wrong_side_precondition(self):
        base = _interval_pencil(0.0, PI, 128, xi=-0.5)
        lam2 = base.decomp.cluster_values[1]
        with pytest.raises(HypothesisViolation):
            lemma_gap_constant("b", base.decomp, 2,
                               CoefficientField.constant(lam2 + 1.0), base.mesh,
                               base.G, base.A)

    def test_certificates_reproducible(self):
        base = _interval_pencil(0.0, PI, 64, xi=-0.5)
        eta = CoefficientField.constant(0.0)
        a1 = lemma_gap_constant("a", base.decomp, 1, eta, base.mesh, base.G,
                                base.A)
        a2 = lemma_gap_constant("a", base.decomp, 1, eta, base.mesh, base.G,
                                base.A)
        assert a1.constant == a2.constant

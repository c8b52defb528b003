"""Model reaction family, hypothesis audit, Nemytskii operations."""

import numpy as np
import pytest

from conftest import adaptive_simpson
from robinred.errors import HypothesisViolation
from robinred.fem import CoefficientField, assemble_mass, build_interval_mesh
from robinred.reactions import (AuditGrid, LinearReaction, ModelReaction,
                                SpectralRefs, SquareReaction, audit_hypotheses,
                                nemytskii_energy, nemytskii_jacobian,
                                nemytskii_load)

REFS = SpectralRefs(m=1, l=3, lam_m=-0.5, lam_m1=0.5, lam_lm1=0.5, lam_l=3.5)


def model_reaction(a_s=0.3, delta=0.1, refs=REFS):
    return ModelReaction(refs.lam_m, refs.lam_m1, refs.lam_lm1, refs.lam_l,
                         a_s=a_s, delta=delta, refs=refs)


class TestModelReaction:
    def test_zero_at_origin(self):
        r = model_reaction()
        assert r.f(0.0) == 0.0
        assert r.F(0.0) == 0.0

    def test_band_branch_is_linear(self):
        r = model_reaction()
        xs = np.linspace(-0.1, 0.1, 21)
        np.testing.assert_array_equal(r.f(xs), r.lam_lm1 * xs)
        np.testing.assert_array_equal(r.f(xs) * xs, r.lam_lm1 * xs**2)

    def test_continuity_at_band_edges(self):
        r = model_reaction()
        d = r.delta
        for s in (+1.0, -1.0):
            inner = r.lam_lm1 * s * d
            outer = (r.lam_m1 * s * d - r.a_s * s * d * (1 + d * d) ** -0.25
                     + r.c_j * s)
            assert abs(inner - outer) < 1e-15
            eps = 1e-12
            assert abs(float(r.f(s * (d + eps))) - inner) < 1e-10

    def test_odd_symmetry_exact(self):
        r = model_reaction()
        xs = np.geomspace(1e-4, 1e3, 200)
        np.testing.assert_array_equal(r.f(xs) + r.f(-xs), np.zeros_like(xs))
        np.testing.assert_array_equal(r.F(xs), r.F(-xs))

    def test_decade_growth_of_resonance_gap(self):
        # closed-form branches give f(x)x - 2F(x) ~ (a_s/3)|x|^{3/2}
        r = model_reaction()
        xs = np.array([1.0, 10.0, 100.0])       # 10 delta, 100 delta, 1000 delta
        Q = r.f(xs) * xs - 2.0 * r.F(xs)
        assert Q[0] > r.f(r.delta) * r.delta - 2.0 * r.F(r.delta)
        assert Q[1] > Q[0] and Q[2] > Q[1]
        assert Q[2] > 50.0
        assert abs(Q[2] / (r.a_s / 3.0 * 100.0**1.5) - 1.0) < 0.12

    def test_primitive_matches_adaptive_simpson(self):
        r = model_reaction()
        for x in (0.05, 0.1, 0.7, 3.0, 40.0, 1000.0, -2.5, -800.0):
            num = adaptive_simpson(lambda s: float(r.f(s)), 0.0, x)
            assert abs(num - float(r.F(x))) <= 1e-8 * max(1.0, abs(num))

    def test_derivative_floor(self):
        r = model_reaction()
        xs = np.concatenate([np.linspace(-1e3, 1e3, 4001), [r.delta, -r.delta]])
        assert r.fx(xs).min() >= r.monotonicity_floor - 1e-12

    def test_derivative_right_sided_at_kinks(self):
        r = model_reaction()
        assert float(r.fx(r.delta)) == pytest.approx(
            r.lam_m1 - r.a_s * (1 + 0.5 * r.delta**2) * (1 + r.delta**2) ** -1.25)
        assert float(r.fx(-r.delta)) == r.lam_lm1

    @pytest.mark.parametrize("kwargs,clause", [
        (dict(lam_m=0.5, lam_m1=0.5), "H(f)(ii)"),          # no spectral gap
        (dict(lam_lm1=4.0, lam_l=3.5), "H(f)(iv)"),          # theta above lam_l
        (dict(a_s=1.5), "H(f)(ii)"),                         # softening too big
        (dict(delta=-0.1), "H(f)(iv)"),
    ])
    def test_parameter_validation_names_clause(self, kwargs, clause):
        base = dict(lam_m=-0.5, lam_m1=0.5, lam_lm1=0.5, lam_l=3.5,
                    a_s=0.3, delta=0.1)
        base.update(kwargs)
        with pytest.raises(HypothesisViolation) as err:
            ModelReaction(**base)
        assert err.value.hypothesis == clause


class TestAudit:
    def test_model_passes_all_clauses(self):
        report = audit_hypotheses(model_reaction())
        assert report.passed
        assert set(report.clauses) == {"(i)", "(ii)", "(iii)", "(iv)"}

    def test_pure_resonance_fails_growth_gap(self):
        # f = lam_{m+1} x makes f(x)x - 2F(x) vanish identically
        r = LinearReaction(REFS.lam_m1)
        report = audit_hypotheses(r, refs=REFS)
        assert not report.passed
        assert not report.clauses["(iii)"].passed
        w = report.clauses["(iii)"].witness
        assert max(abs(v) for v in w["values"]) == 0.0
        assert report.clauses["(i)"].passed
        assert report.clauses["(ii)"].passed
        assert report.clauses["(iv)"].passed

    def test_square_fails_linear_growth(self):
        report = audit_hypotheses(SquareReaction(), refs=REFS)
        assert not report.clauses["(i)"].passed
        w = report.clauses["(i)"].witness
        assert abs(w["x"]) > 1.0
        assert abs(w["f"]) > w["bound"]

    def test_linear_below_band_fails_sandwich(self):
        r = LinearReaction(0.0)
        report = audit_hypotheses(r, refs=REFS)
        assert not report.clauses["(iv)"].passed

    def test_grid_must_reach_thousand_deltas(self):
        with pytest.raises(ValueError):
            AuditGrid(delta=0.1, x_max=50.0)

    def test_report_table_lists_all_clauses(self):
        table = audit_hypotheses(model_reaction()).table()
        for key in ("(i)", "(ii)", "(iii)", "(iv)"):
            assert key in table


class TestNemytskii:
    def setup_method(self):
        self.mesh = build_interval_mesh(0.0, np.pi, 65)
        self.M = assemble_mass(self.mesh)

    def test_zero_vector_maps_to_zero(self):
        r = model_reaction()
        u = np.zeros(65)
        assert np.abs(nemytskii_load(self.mesh, r, u)).max() == 0.0
        assert nemytskii_energy(self.mesh, r, u) == 0.0

    def test_linear_reaction_is_mass_action(self):
        c = -1.3
        r = LinearReaction(c)
        rng = np.random.default_rng(4)
        u = rng.standard_normal(65)
        np.testing.assert_allclose(nemytskii_load(self.mesh, r, u),
                                   c * self.M.dot(u), atol=1e-12)
        J = nemytskii_jacobian(self.mesh, r, u)
        assert abs(J.matrix - c * self.M.matrix).max() < 1e-12

    def test_energy_directional_derivative_matches_load(self):
        r = model_reaction()
        rng = np.random.default_rng(5)
        u = 0.3 * rng.standard_normal(65)
        h = rng.standard_normal(65)
        eps = 1e-5
        fd = (nemytskii_energy(self.mesh, r, u + eps * h)
              - nemytskii_energy(self.mesh, r, u - eps * h)) / (2 * eps)
        an = h @ nemytskii_load(self.mesh, r, u)
        assert abs(fd - an) <= 1e-6 * max(1.0, abs(fd))

    def test_jacobian_weighted_by_band_slope(self):
        r = model_reaction()
        u = np.full(65, 0.05)     # inside the band everywhere
        J = nemytskii_jacobian(self.mesh, r, u)
        assert abs(J.matrix - r.lam_lm1 * self.M.matrix).max() < 1e-12

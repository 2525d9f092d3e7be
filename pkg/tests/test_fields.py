import numpy as np
import pytest

from ellcalc import expr as ex
from ellcalc.expr import ONE, PHI, RHO, THETA, ZERO
from ellcalc.fields import (
    QuadratureConvergenceError,
    catalog,
    check_admissible,
    closed_form_vrho,
    construct_vrho,
    div3,
    divE,
    field_from_expressions,
    get_field,
    radial_integral,
)
from ellcalc.geometry import VectorField3
from ellcalc.grids import SurfaceGrid
from ellcalc.parser import ExprSyntaxError

from helpers import random_points

ADMISSIBLE = {"vrho_on_E": 1e-12, "divE": 1e-10, "div3": 1e-8}


def _vals(e, r, p, t, a):
    return np.broadcast_to(ex.evaluate_array(e, r, p, t, a), np.shape(r))


class TestDivergences:
    def test_div3_zonal_is_structurally_zero(self):
        h = ex.mul(ex.exp(RHO), ex.sin(PHI))
        assert div3(VectorField3(ZERO, ZERO, h)) is ZERO

    def test_div3_examples(self):
        r, p, t = np.array([0.9, 1.1]), np.array([0.4, 2.0]), np.array([0.0, 1.0])
        cot = np.cos(p) / np.sin(p)
        assert np.allclose(_vals(div3(VectorField3(ZERO, ONE, ZERO)), r, p, t, 1.0), cot, rtol=1e-14)
        assert np.allclose(_vals(div3(VectorField3(RHO, ZERO, ZERO)), r, p, t, 1.0), 3.0, rtol=1e-15)

    def test_divE_zonal(self):
        assert divE(VectorField3(ZERO, ZERO, ex.cos(PHI))) is ZERO

    def test_divE_sphere_coefficient_is_one(self):
        v = VectorField3(ZERO, ex.sin(THETA), ex.cos(PHI))
        R, P, T = SurfaceGrid(17, 17).mesh()
        got = _vals(divE(v), R, P, T, 1.0)
        assert np.allclose(got, np.cos(P) / np.sin(P) * np.sin(T), rtol=0, atol=1e-14)

    def test_divE_dphi_at_a2(self):
        R, P, T = SurfaceGrid(17, 17).mesh()
        s, c = np.sin(P), np.cos(P)
        want = c / s * (-2 * s * s + 4 * c * c) / (4 * c * c + s * s)
        got = _vals(divE(VectorField3(ZERO, ONE, ZERO)), R, P, T, 2.0)
        assert np.allclose(got, want, rtol=1e-13, atol=1e-14)


class TestRadialCompletion:
    RHO_BAND = np.linspace(0.8, 1.2, 41)

    def test_zero_divergence_gives_zero(self):
        assert construct_vrho(VectorField3(ZERO, ZERO, ex.sin(PHI))) is ZERO

    def test_unit_divergence_closed_form(self):
        # d_theta(theta) = 1, so div3 is the constant 1
        vr = construct_vrho(VectorField3(ZERO, ZERO, THETA), name="vrho_unit_test")
        assert vr.kind == "call"
        r = self.RHO_BAND
        want = -(r ** 3 - 1) / (3 * r ** 2)
        got = _vals(vr, r, 0.7, 0.3, 1.5)
        assert np.max(np.abs(got - want)) <= 1e-12
        assert np.max(np.abs(_vals(closed_form_vrho(ONE), r, 0.7, 0.3, 1.5) - want)) <= 1e-15

    def test_rejects_radial_input(self):
        with pytest.raises(ValueError):
            construct_vrho(VectorField3(RHO, ZERO, ZERO))

    def test_quadrature_disagreement_raises(self):
        with pytest.raises(QuadratureConvergenceError):
            radial_integral(ex.cos(ex.mul(1000, ex.sub(RHO, 1))), np.array([1.2]), 1.0, 0.0, 1.5)

    def test_oscillating_field_fails_to_converge(self):
        fld = field_from_expressions(
            "sin(phi)^2*cos(theta)*cos(1000*(rho-1))",
            "-(2+((2-a^2)*sin(phi)^2 + a^2*cos(phi)^2)/(a^2*cos(phi)^2 + sin(phi)^2))"
            "*sin(phi)*cos(phi)*sin(theta)*cos(1000*(rho-1))",
            name="oscillating_test",
        )
        with pytest.raises(QuadratureConvergenceError):
            check_admissible(fld, 1.5)

    def test_kernel_derivatives_against_finite_differences(self):
        vr = get_field("M1").vrho
        rng = np.random.default_rng(42)
        r, p, t, a = random_points(rng, 50)
        h = 1e-5
        shifts = {"rho": (h, 0, 0), "phi": (0, h, 0), "theta": (0, 0, h)}
        for var, (dr, dp, dt) in shifts.items():
            fd = (_vals(vr, r + dr, p + dp, t + dt, a) - _vals(vr, r - dr, p - dp, t - dt, a)) / (2 * h)
            got = _vals(ex.differentiate(vr, var), r, p, t, a)
            assert np.max(np.abs(got - fd)) <= 1e-6, var

    def test_second_order_rules(self):
        # d_phi d_rho via the rho rule applied to the phi kernel, against FD of d_rho
        vr = get_field("M1").vrho
        d_rho = ex.differentiate(vr, "rho")
        mixed = ex.differentiate(d_rho, "phi")
        rng = np.random.default_rng(43)
        r, p, t, a = random_points(rng, 50)
        h = 1e-5
        fd = (_vals(d_rho, r, p + h, t, a) - _vals(d_rho, r, p - h, t, a)) / (2 * h)
        assert np.max(np.abs(_vals(mixed, r, p, t, a) - fd)) <= 1e-6


class TestCatalog:
    def test_names(self):
        assert [f.name for f in catalog()] == ["Z1", "Z2", "Z3", "M2", "M1"]
        assert all(f.note for f in catalog())

    def test_unknown_name(self):
        with pytest.raises(KeyError):
            get_field("nope")

    @pytest.mark.parametrize("a", [1.0, 1.1, 1.5, 2.0])
    def test_admissible(self, a):
        for fld in catalog():
            report = check_admissible(fld, a)
            for key, tol in ADMISSIBLE.items():
                assert report[key] <= tol, (fld.name, key, report[key])

    def test_zonal_fields_are_exact(self):
        for name in ("Z1", "Z2"):
            fld = get_field(name)
            assert fld.vrho is ZERO
            assert divE(fld.base) is ZERO and div3(fld.field) is ZERO

    def test_only_M1_uses_quadrature(self):
        assert [f.name for f in catalog() if f.quadrature] == ["M1"]

    def test_vrho_vanishes_on_E(self):
        P, T = np.meshgrid(np.linspace(0.2, np.pi - 0.2, 9), np.linspace(-3, 3, 9), indexing="ij")
        for fld in catalog():
            assert np.all(_vals(fld.vrho, np.ones_like(P), P, T, 1.7) == 0.0)


class TestUserFields:
    def test_expression_pair_matches_Z1(self):
        fld = field_from_expressions("0", "sin(phi)")
        assert fld.vrho is ZERO and not fld.quadrature
        assert fld.base.v_theta is get_field("Z1").base.v_theta
        assert check_admissible(fld, 1.5) == {"vrho_on_E": 0.0, "divE": 0.0, "div3": 0.0}

    def test_non_admissible_is_detected(self):
        fld = field_from_expressions("sin(phi)", "0", name="bad_test")
        assert check_admissible(fld, 1.5)["divE"] > 1e-3

    def test_parse_errors_propagate(self):
        with pytest.raises(ExprSyntaxError):
            field_from_expressions("sin(", "0")

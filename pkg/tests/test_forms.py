import math

import numpy as np
import pytest

from ellcalc import expr as ex
from ellcalc.expr import ONE, PHI, RHO, THETA, ZERO
from ellcalc.fields import catalog
from ellcalc.forms import (
    DegreeError,
    DifferentialForm,
    exterior_derivative,
    flat,
    hodge_laplacian3,
    hodge_laplacian_E,
    hodge_star2,
    hodge_star3,
    interior_product,
    lie_derivative,
    one_form,
    pullback_E,
    scalar,
    sharp,
)
from ellcalc.geometry import VectorField3, embedding, make_context
from ellcalc.grids import AmbientGrid, SurfaceGrid
from ellcalc.verify import laplacian_E_display, lhs_display, lhs

import invariants
import oracles
from helpers import random_points, random_tree

GRID = AmbientGrid(5, 9, 9)


def _ev(e, mesh, a):
    return np.broadcast_to(ex.evaluate_array(e, *mesh, a), mesh[0].shape)


def _close(e, want, mesh, a, tol=1e-12):
    got = _ev(e, mesh, a)
    want = np.broadcast_to(want, got.shape)
    scale = max(1.0, float(np.max(np.abs(want))))
    assert np.max(np.abs(got - want)) <= tol * scale


class TestFlatSharp:
    def test_dtheta_at_a2(self):
        v = flat(VectorField3(ZERO, ZERO, ONE), make_context(2.0))
        R, P, T = mesh = GRID.mesh()
        _close(v[(2,)], 4 * R ** 2 * np.sin(P) ** 2, mesh, 2.0)
        assert v[(0,)] is ZERO and v[(1,)] is ZERO

    def test_drho_on_sphere(self):
        v = flat(VectorField3(ONE, ZERO, ZERO), make_context(1.0))
        mesh = GRID.mesh()
        _close(v[(0,)], 1.0, mesh, 1.0)
        _close(v[(1,)], 0.0, mesh, 1.0)

    def test_dphi_at_a2(self):
        v = flat(VectorField3(ZERO, ONE, ZERO), make_context(2.0))
        R, P, T = mesh = GRID.mesh()
        s, c = np.sin(P), np.cos(P)
        _close(v[(0,)], 3 * R * s * c, mesh, 2.0)
        _close(v[(1,)], 4 * R ** 2 * c ** 2 + R ** 2 * s ** 2, mesh, 2.0)

    def test_sharp_inverts_flat(self):
        rng = np.random.default_rng(8)
        r, p, t, a = random_points(rng, 200)
        ctx = make_context(1.0)
        for _ in range(10):
            X = invariants.random_vector(rng)
            back = sharp(flat(X, ctx), ctx)
            for got, want in zip(back.components, X.components):
                g, w = ex.evaluate_array(got, r, p, t, a), ex.evaluate_array(want, r, p, t, a)
                assert np.max(np.abs(g - w) / np.maximum(1, np.abs(w))) <= 1e-12


class TestExteriorDerivative:
    def test_hand_example(self):
        w = exterior_derivative(one_form(d_phi=ex.power(RHO, 2)))
        assert list(w.coeffs) == [(0, 1)]
        _close(w[(0, 1)], 2 * GRID.mesh()[0], GRID.mesh(), 1.0)

    def test_omega_entries(self):
        v = flat(VectorField3(ZERO, ZERO, ex.sin(PHI)), make_context(1.0))
        w = exterior_derivative(v)
        d = ex.differentiate
        mesh = GRID.mesh()
        for (i, j) in [(0, 1), (0, 2), (1, 2)]:
            want = ex.sub(d(v[(j,)], "rho phi theta".split()[i]), d(v[(i,)], "rho phi theta".split()[j]))
            _close(w[(i, j)], _ev(want, mesh, 1.5), mesh, 1.5)

    def test_dd_random_scalars(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            dd = exterior_derivative(exterior_derivative(scalar(random_tree(rng, 4))))
            mesh = GRID.mesh()
            for c in dd.coeffs.values():
                assert np.max(np.abs(_ev(c, mesh, 1.3))) <= 1e-13

    def test_top_degree_rejected(self):
        with pytest.raises(DegreeError):
            exterior_derivative(DifferentialForm(3, {(0, 1, 2): ONE}))


class TestStars:
    @pytest.mark.parametrize("a", [1.0, 1.5, 2.0])
    def test_three_ambient_identities(self, a):
        for key, worst in oracles.star_identity_residuals(a).items():
            assert worst <= 1e-12, key

    def test_sphere_dphi_dtheta(self):
        star = hodge_star3(DifferentialForm(2, {(1, 2): ONE}), make_context(1.0))
        R, P, T = mesh = GRID.mesh()
        _close(star[(0,)], 1 / (R ** 2 * np.sin(P)), mesh, 1.0)
        _close(star[(1,)], 0.0, mesh, 1.0)

    def test_surface_volume(self):
        ctx = make_context(2.0)
        R, P, T = mesh = SurfaceGrid(17, 17).mesh()
        star = hodge_star2(scalar(ONE, surface=True), ctx)
        lam = np.sqrt(4 * np.cos(P) ** 2 + np.sin(P) ** 2)
        _close(star[(1, 2)], lam * 2 * np.sin(P), mesh, 2.0)

    def test_surface_dphi(self):
        ctx = make_context(2.0)
        R, P, T = mesh = SurfaceGrid(17, 17).mesh()
        star = hodge_star2(one_form(d_phi=ONE, surface=True), ctx)
        lam = np.sqrt(4 * np.cos(P) ** 2 + np.sin(P) ** 2)
        _close(star[(2,)], 2 * np.sin(P) / lam, mesh, 2.0)
        _close(star[(1,)], 0.0, mesh, 2.0)

    def test_unit_sphere_dtheta(self):
        R, P, T = mesh = SurfaceGrid(17, 17).mesh()
        star = hodge_star2(one_form(d_theta=ONE, surface=True), make_context(1.0))
        _close(star[(1,)], -1 / np.sin(P), mesh, 1.0)

    def test_star_star_sign_law(self):
        assert invariants.star_star() <= 1e-12


class TestInterior:
    @pytest.mark.parametrize("a", [1.0, 1.5, 2.0])
    def test_three_grad_rho_identities(self, a):
        for key, worst in oracles.interior_identity_residuals(a).items():
            assert worst <= 1e-12, key

    def test_twice_vanishes(self):
        assert invariants.interior_twice() <= 1e-13

    def test_zero_form_rejected(self):
        with pytest.raises(DegreeError):
            interior_product(make_context(1.0).grad_rho, scalar(RHO))


class TestLie:
    Y = VectorField3(RHO, ZERO, ZERO)

    def test_scaling_field_hand_example(self):
        out = lie_derivative(self.Y, one_form(d_phi=ex.power(RHO, 2)))
        mesh = GRID.mesh()
        _close(out[(1,)], 2 * mesh[0] ** 2, mesh, 1.0)
        for key in ((0,), (2,)):
            if key in out.keys():
                _close(out[key], 0.0, mesh, 1.0)

    def _random_v(self, seed, a):
        rng = np.random.default_rng(seed)
        X = invariants.random_vector(rng)
        ctx = make_context(a)
        v = flat(X, ctx)
        return ctx, X, v, exterior_derivative(v)

    @pytest.mark.parametrize("a", [1.0, 2.0])
    def test_grad_rho_groups(self, a):
        # the four coefficient groups of L_{grad rho} v, with v^rho = (v#)^rho
        ctx, X, v, w = self._random_v(17, a)
        out = lie_derivative(ctx.grad_rho, v)
        mesh = R, P, T = AmbientGrid(5, 9, 9).mesh()
        s, c = np.sin(P), np.cos(P)
        lam2 = a * a * c * c + s * s
        h = (1 - a * a) / (a * a * R) * s * c
        W = {k: _ev(w[k], mesh, a) for k in w.keys()}
        dvr = exterior_derivative(scalar(X.v_rho))
        DV = [_ev(dvr[(i,)], mesh, a) for i in range(3)]
        want = [
            -W[(0, 1)] * h + DV[0],
            W[(0, 1)] * lam2 / (a * a) + DV[1],
            W[(0, 2)] * lam2 / (a * a) + W[(1, 2)] * h + DV[2],
        ]
        for i in range(3):
            _close(out[(i,)], want[i], mesh, a)

    def test_scaling_field_display(self):
        # L_Y v = rho w_rp dphi + rho w_rt dtheta + d(rho v_rho)
        ctx, X, v, w = self._random_v(23, 1.7)
        out = lie_derivative(self.Y, v)
        mesh = AmbientGrid(5, 9, 9).mesh()
        d = exterior_derivative(scalar(ex.mul(RHO, v[(0,)])))
        R = mesh[0]
        want = [
            _ev(d[(0,)], mesh, 1.7),
            R * _ev(w[(0, 1)], mesh, 1.7) + _ev(d[(1,)], mesh, 1.7),
            R * _ev(w[(0, 2)], mesh, 1.7) + _ev(d[(2,)], mesh, 1.7),
        ]
        for i in range(3):
            _close(out[(i,)], want[i], mesh, 1.7)

    def test_commutes_with_d(self):
        assert invariants.cartan_naturality() <= 1e-12


class TestPullback:
    def test_drho_dies(self):
        assert pullback_E(one_form(d_rho=ONE)).is_zero()

    def test_restriction(self):
        out = pullback_E(one_form(d_phi=ex.exp(RHO)))
        assert out.surface
        assert ex.evaluate(out[(1,)], (1.0, 0.5, 0.1), 1.0) == pytest.approx(math.e, rel=1e-15)

    def test_naturality(self):
        assert invariants.pullback_naturality() <= 1e-12

    def test_three_form_rejected(self):
        with pytest.raises(DegreeError):
            pullback_E(DifferentialForm(3, {(0, 1, 2): ONE}))


class TestAmbientLaplacian:
    @pytest.mark.parametrize("a", [1.0, 2.0])
    def test_rotation_field_is_harmonic(self, a):
        # d_theta is (-y, x, 0) in Cartesian coordinates: linear, so -Lap = 0
        ctx = make_context(a)
        out = hodge_laplacian3(flat(VectorField3(ZERO, ZERO, ONE), ctx), ctx)
        mesh = GRID.mesh()
        for key in out.keys():
            _close(out[key], 0.0, mesh, a)

    def test_gradient_of_harmonic(self):
        ctx = make_context(1.0)
        v = exterior_derivative(scalar(ex.mul(RHO, ex.cos(PHI))))
        out = hodge_laplacian3(v, ctx)
        mesh = GRID.mesh()
        for key in out.keys():
            _close(out[key], 0.0, mesh, 1.0)

    @pytest.mark.parametrize("a", [1.0, 1.5, 2.0])
    def test_quadratic_cartesian_field(self, a):
        # u = y^2 dx is divergence free with componentwise -Lap u = -2 dx
        ctx = make_context(a)
        x, y, _ = embedding()
        u = exterior_derivative(scalar(x)).scale(ex.power(y, 2))
        out = hodge_laplacian3(u, ctx)
        want = exterior_derivative(scalar(ex.mul(-2, x)))
        mesh = GRID.mesh()
        for i in range(3):
            _close(out[(i,)], _ev(want[(i,)], mesh, a), mesh, a, tol=1e-11)

    @pytest.mark.parametrize("a", [1.0, 2.0])
    def test_matches_F_assembly(self, a):
        mesh = SurfaceGrid(17, 17).mesh()
        for fld in catalog():
            got, want = lhs(fld), lhs_display(fld)
            for key in ((1,), (2,)):
                _close(got[key], _ev(want[key], mesh, a), mesh, a, tol=1e-12)

    def test_F_has_three_entries(self):
        ctx = make_context(1.5)
        v = flat(catalog()[3].field, ctx)
        F = exterior_derivative(hodge_star3(exterior_derivative(v), ctx))
        assert F.degree == 2 and set(F.keys()) <= {(0, 1), (0, 2), (1, 2)}


class TestSurfaceLaplacian:
    @pytest.mark.parametrize("a", [1.0, 2.0])
    def test_matches_display(self, a):
        mesh = SurfaceGrid(33, 33).mesh()
        ctx = make_context(a)
        for fld in catalog():
            alpha = pullback_E(flat(fld.field, ctx))
            got, want = hodge_laplacian_E(alpha, ctx), laplacian_E_display(fld)
            for key in ((1,), (2,)):
                _close(got[key], _ev(want[key], mesh, a), mesh, a)

    def test_closed_form_gives_zero(self):
        ctx = make_context(1.7)
        alpha = exterior_derivative(scalar(ex.mul(ex.cos(PHI), ex.sin(THETA)), surface=True))
        out = hodge_laplacian_E(alpha, ctx)
        mesh = SurfaceGrid(17, 17).mesh()
        for key in out.keys():
            _close(out[key], 0.0, mesh, 1.7)

    def test_unit_sphere_zonal(self):
        # by hand: star d alpha = 2 cos, d of it is -2 sin dphi, and
        # delta d alpha = -star(-2 sin dphi) = 2 sin^2 dtheta
        ctx = make_context(1.0)
        alpha = one_form(d_theta=ex.power(ex.sin(PHI), 2), surface=True)
        out = hodge_laplacian_E(alpha, ctx)
        R, P, T = mesh = SurfaceGrid(17, 17).mesh()
        _close(out[(2,)], 2 * np.sin(P) ** 2, mesh, 1.0)
        _close(out[(1,)], 0.0, mesh, 1.0)


class TestStructuralInvariants:
    def test_dd_zero(self):
        worst, structural = invariants.dd_zero()
        assert worst <= 1e-13
        assert structural > 0

    def test_mixed_partials(self):
        assert invariants.mixed_partials() <= 1e-12

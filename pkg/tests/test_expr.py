import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ellcalc import expr as ex
from ellcalc.expr import A, PHI, RHO, THETA, ZERO, EvaluationDomainError, NotDifferentiableError
from ellcalc.geometry import ChartPoint, make_context
from ellcalc.parser import ExprSyntaxError, UnknownIdentifierError, parse, to_text

from helpers import exprs, random_points, random_tree, rel_close


class TestParse:
    def test_pythagorean_sum(self):
        e = parse("sin(phi)^2 + cos(phi)^2")
        assert e.kind == "sum"
        first, second = e.args
        assert first.kind == "pow" and first.value == 2 and first.args[0] is ex.sin(PHI)
        assert second.kind == "pow" and second.value == 2 and second.args[0] is ex.cos(PHI)

    def test_lambda_squared_is_the_geometry_tree(self):
        # hash-consing makes structurally equal trees the same object
        assert parse("a^2*cos(phi)^2 + sin(phi)^2") is make_context(2.0).lambda_sq

    def test_unbalanced_paren_offset(self):
        with pytest.raises(ExprSyntaxError) as info:
            parse("sin(")
        assert info.value.position == 4
        assert "offset 4" in str(info.value)

    @pytest.mark.parametrize("text,pos", [("rho +* phi", 5), ("phi)", 3), ("cos phi", 4), ("", 0), ("phi^rho", 4)])
    def test_syntax_errors_carry_position(self, text, pos):
        with pytest.raises(ExprSyntaxError) as info:
            parse(text)
        assert info.value.position == pos

    def test_unknown_identifier(self):
        with pytest.raises(UnknownIdentifierError) as info:
            parse("2*x + 1")
        assert info.value.name == "x"
        assert info.value.position == 2

    def test_precedence(self):
        p = ChartPoint(1.1, 0.7, 0.3)
        assert ex.evaluate(parse("-phi^2"), p, 1.0) == pytest.approx(-(0.7 ** 2))
        assert ex.evaluate(parse("2^3^2"), p, 1.0) == 512.0
        assert ex.evaluate(parse("rho/phi/theta"), p, 1.0) == pytest.approx(1.1 / 0.7 / 0.3)
        assert ex.evaluate(parse("rho - phi*theta + a"), p, 2.0) == pytest.approx(1.1 - 0.21 + 2.0)

    def test_printing_is_a_fixpoint(self):
        for text in ["-(rho + phi)", "rho/(phi*theta)", "phi^(-2)", "0.001*rho", "exp(-sin(theta))"]:
            once = to_text(parse(text))
            assert to_text(parse(once)) == once

    @settings(max_examples=150, deadline=None)
    @given(exprs)
    def test_round_trip_property(self, e):
        text = to_text(e)
        back = parse(text)
        assert to_text(back) == text
        rng = np.random.default_rng(0)
        r, p, t, a = random_points(rng, 20)
        assert rel_close(ex.evaluate_array(back, r, p, t, a), ex.evaluate_array(e, r, p, t, a), 1e-12)


class TestConstruction:
    def test_trees_are_immutable(self):
        e = ex.add(RHO, PHI)
        with pytest.raises(AttributeError):
            e.kind = "prod"

    def test_zero_denominator_rejected(self):
        with pytest.raises(ZeroDivisionError):
            ex.div(PHI, 0)
        with pytest.raises(ZeroDivisionError):
            ex.div(PHI, ex.mul(RHO, 0))

    def test_structural_equality(self):
        assert ex.mul(ex.sin(PHI), RHO) is ex.mul(ex.sin(PHI), RHO)
        assert parse("rho + phi") == ex.add(RHO, PHI)

    def test_ln_of_nonpositive_constant(self):
        with pytest.raises(EvaluationDomainError):
            ex.ln(ex.const(-1.0))


class TestDifferentiate:
    def test_sin(self):
        assert ex.differentiate(ex.sin(PHI), "phi") is ex.cos(PHI)

    def test_lambda_over_a2(self):
        # d_phi(lambda^2/a^2) = -2 mu^2 sin cos
        lam2 = make_context(2.0).lambda_sq
        d = ex.differentiate(ex.div(lam2, ex.power(A, 2)), "phi")
        for a in (1.2, 2.0, 3.5):
            mu2 = (a * a - 1) / (a * a)
            for phi in (0.3, 1.1, 2.5):
                expect = -2 * mu2 * math.sin(phi) * math.cos(phi)
                assert ex.evaluate(d, (1.0, phi, 0.2), a) == pytest.approx(expect, rel=1e-13, abs=1e-15)

    def test_absent_variable_gives_zero(self):
        e = parse("a^2*cos(phi)^2 + exp(rho)")
        assert ex.differentiate(e, "theta") is ZERO

    def test_kernel_without_partial_refuses(self):
        k = ex.Kernel("k_no_partials_test", lambda r, p, t, a: r * p)
        with pytest.raises(NotDifferentiableError):
            ex.differentiate(ex.call(k), "phi")

    def test_kernel_chain_rule(self):
        k = ex.Kernel(
            "k_product_test",
            lambda r, p, t, a: r * np.sin(p),
            {"rho": ex.sin(PHI), "phi": ex.mul(RHO, ex.cos(PHI)), "theta": ZERO},
        )
        e = ex.call(k, (ex.power(RHO, 2), PHI, THETA))
        d = ex.differentiate(e, "rho")
        # d/drho [rho^2 sin(phi)] = 2 rho sin(phi)
        assert ex.evaluate(d, (1.3, 0.4, 0.0), 1.0) == pytest.approx(2 * 1.3 * math.sin(0.4))

    def test_mixed_partials_commute(self):
        rng = np.random.default_rng(20240611)
        r, p, t, a = random_points(rng, 100)
        for _ in range(50):
            e = random_tree(rng, depth=6)
            d1 = ex.differentiate(ex.differentiate(e, "phi"), "theta")
            d2 = ex.differentiate(ex.differentiate(e, "theta"), "phi")
            v1 = ex.evaluate_array(d1, r, p, t, a)
            v2 = ex.evaluate_array(d2, r, p, t, a)
            assert rel_close(v1, v2, 1e-12), to_text(e)

    @settings(max_examples=100, deadline=None)
    @given(exprs, exprs, st.floats(-3, 3), st.floats(-3, 3), st.sampled_from(["rho", "phi", "theta"]))
    def test_linearity(self, e1, e2, alpha, beta, var):
        rng = np.random.default_rng(1)
        r, p, t, a = random_points(rng, 20)
        lhs = ex.differentiate(ex.add(ex.mul(alpha, e1), ex.mul(beta, e2)), var)
        rhs = alpha * ex.evaluate_array(ex.differentiate(e1, var), r, p, t, a) + beta * ex.evaluate_array(
            ex.differentiate(e2, var), r, p, t, a
        )
        assert rel_close(ex.evaluate_array(lhs, r, p, t, a), rhs, 1e-12)


class TestEvaluate:
    def test_lambda_squared_equator(self):
        lam2 = make_context(2.0).lambda_sq
        assert ex.evaluate(lam2, ChartPoint(1, math.pi / 2, 0), 2.0) == pytest.approx(1.0, abs=1e-15)

    def test_lambda_squared_quarter(self):
        lam2 = make_context(2.0).lambda_sq
        assert ex.evaluate(lam2, ChartPoint(1, math.pi / 4, 0), 2.0) == pytest.approx(2.5, rel=1e-15)

    def test_pole_is_a_domain_error(self):
        with pytest.raises(EvaluationDomainError):
            ex.evaluate(ex.div(1, ex.sin(PHI)), (1.0, 0.0, 0.0), 1.0)

    def test_near_pole_is_large_but_finite(self):
        v = ex.evaluate(ex.div(1, ex.sin(PHI)), (1.0, 1e-8, 0.0), 1.0)
        assert np.isfinite(v) and v > 1e7

    def test_ln_domain(self):
        with pytest.raises(EvaluationDomainError):
            ex.evaluate(ex.ln(ex.sub(PHI, 3)), (1.0, 1.0, 0.0), 1.0)

    def test_rejects_nonpositive_a(self):
        with pytest.raises(ValueError):
            ex.evaluate(RHO, (1.0, 1.0, 0.0), 0.0)

    def test_chart_point_domain(self):
        for bad in [(0.0, 1.0, 0.0), (1.0, 0.0, 0.0), (1.0, math.pi, 0.0), (1.0, 1.0, math.pi)]:
            with pytest.raises(ValueError):
                ChartPoint(*bad)

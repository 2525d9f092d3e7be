"""Exterior calculus on the ellipsoidal chart and verifiers for the
restriction of the Hodge Laplacian to the ellipsoid x^2 + y^2 + a^2 z^2 = a^2."""

__version__ = "0.1.0"

from .expr import (
    EvaluationDomainError,
    Expr,
    Kernel,
    NotDifferentiableError,
    differentiate,
    evaluate,
    evaluate_array,
)
from .parser import ExprSyntaxError, UnknownIdentifierError, parse, to_text
from .geometry import ChartPoint, GeometryContext, VectorField3, chart_to_cartesian, make_context
from .forms import DifferentialForm
from .fields import AdmissibleField, catalog, construct_vrho, div3, divE, get_field
from .reports import ResidualReport
from .verify import verify_expansion, verify_identity, verify_sphere_reduction

__all__ = [
    "AdmissibleField",
    "ChartPoint",
    "DifferentialForm",
    "EvaluationDomainError",
    "Expr",
    "ExprSyntaxError",
    "GeometryContext",
    "Kernel",
    "NotDifferentiableError",
    "ResidualReport",
    "UnknownIdentifierError",
    "VectorField3",
    "catalog",
    "chart_to_cartesian",
    "construct_vrho",
    "differentiate",
    "div3",
    "divE",
    "evaluate",
    "evaluate_array",
    "get_field",
    "make_context",
    "parse",
    "to_text",
    "verify_expansion",
    "verify_identity",
    "verify_sphere_reduction",
]

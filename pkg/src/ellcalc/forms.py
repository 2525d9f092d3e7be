"""Differential forms with Expr coefficients on the chart and on E.

Coordinates are numbered ``0 = rho, 1 = phi, 2 = theta``.  A form stores a
sparse map from strictly increasing index tuples to coefficients; a missing
key is a zero coefficient.  Ambient forms live on ``(0, 1, 2)``, surface forms
on ``(1, 2)`` with rho-free coefficients.

Orientation is ``d rho ^ d phi ^ d theta`` (``d phi ^ d theta`` on E).  The
Hodge star is the metric one built from the inverse metric and sqrt(det g);
the codifferential on k-forms in dimension n is
``delta = (-1)^(n(k+1)+1) * star d star``, so the Hodge Laplacian on a
co-closed 1-form is ``delta d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping

from . import expr as ex
from .expr import ONE, ZERO, Expr
from .geometry import COORDS, GeometryContext, Metric, VectorField3

__all__ = [
    "DifferentialForm",
    "DegreeError",
    "scalar",
    "one_form",
    "flat",
    "sharp",
    "exterior_derivative",
    "hodge_star",
    "hodge_star3",
    "hodge_star2",
    "interior_product",
    "lie_derivative",
    "pullback_E",
    "codifferential",
    "hodge_laplacian3",
    "hodge_laplacian_E",
]

AMBIENT = (0, 1, 2)
SURFACE = (1, 2)


class DegreeError(ValueError):
    pass


@dataclass(frozen=True)
class DifferentialForm:
    degree: int
    coeffs: Mapping[tuple[int, ...], Expr] = field(default_factory=dict)
    surface: bool = False

    def __post_init__(self):
        space = self.space
        if not 0 <= self.degree <= len(space):
            raise DegreeError(f"degree {self.degree} out of range for a {len(space)}-dimensional space")
        clean = {}
        for key, c in self.coeffs.items():
            key = tuple(key)
            if len(key) != self.degree:
                raise DegreeError(f"key {key} does not match degree {self.degree}")
            if list(key) != sorted(set(key)):
                raise ValueError(f"keys must be strictly increasing, got {key}")
            if any(i not in space for i in key):
                raise ValueError(f"index out of range in {key} for {'surface' if self.surface else 'ambient'} form")
            c = ex._as_expr(c)
            if c is not ZERO:
                clean[key] = c
        object.__setattr__(self, "coeffs", clean)

    @property
    def space(self) -> tuple[int, ...]:
        return SURFACE if self.surface else AMBIENT

    @property
    def dim(self) -> int:
        return len(self.space)

    def __getitem__(self, key) -> Expr:
        if isinstance(key, int):
            key = (key,)
        if isinstance(key, str):
            key = tuple(COORDS.index(n) for n in key.split(","))
        return self.coeffs.get(tuple(key), ZERO)

    def keys(self):
        return combinations(self.space, self.degree)

    def _check_compatible(self, other: "DifferentialForm"):
        if self.degree != other.degree or self.surface != other.surface:
            raise DegreeError("forms must share degree and ambient/surface flag")

    def __add__(self, other: "DifferentialForm") -> "DifferentialForm":
        self._check_compatible(other)
        keys = set(self.coeffs) | set(other.coeffs)
        return DifferentialForm(
            self.degree, {k: ex.add(self[k], other[k]) for k in keys}, self.surface
        )

    def __neg__(self) -> "DifferentialForm":
        return self.scale(-1)

    def __sub__(self, other: "DifferentialForm") -> "DifferentialForm":
        return self + (-other)

    def scale(self, f) -> "DifferentialForm":
        return DifferentialForm(
            self.degree, {k: ex.mul(f, c) for k, c in self.coeffs.items()}, self.surface
        )

    def map(self, fn) -> "DifferentialForm":
        return DifferentialForm(self.degree, {k: fn(c) for k, c in self.coeffs.items()}, self.surface)

    def is_zero(self) -> bool:
        return not self.coeffs

    def __str__(self):
        if not self.coeffs:
            return "0"
        parts = []
        for k in sorted(self.coeffs):
            basis = "^".join("d" + COORDS[i] for i in k)
            parts.append(f"({self.coeffs[k]})" + (f" {basis}" if basis else ""))
        return " + ".join(parts)


def scalar(f, surface: bool = False) -> DifferentialForm:
    return DifferentialForm(0, {(): f}, surface)


def one_form(d_rho=ZERO, d_phi=ZERO, d_theta=ZERO, *, surface: bool = False) -> DifferentialForm:
    if surface:
        if d_rho is not ZERO:
            raise ValueError("surface 1-forms have no d rho component")
        return DifferentialForm(1, {(1,): d_phi, (2,): d_theta}, True)
    return DifferentialForm(1, {(0,): d_rho, (1,): d_phi, (2,): d_theta})


def _sort_sign(indices) -> tuple[int, tuple[int, ...]]:
    """Sign of the permutation that sorts ``indices`` (0 if any repeat)."""
    idx = list(indices)
    if len(set(idx)) != len(idx):
        return 0, ()
    sign = 1
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
    return sign, tuple(idx)


def _metric_for(alpha: DifferentialForm, ctx: GeometryContext) -> Metric:
    return ctx.metric2 if alpha.surface else ctx.metric3


def flat(v: VectorField3, ctx: GeometryContext) -> DifferentialForm:
    """Lower the index: v_i = g_ij v^j."""
    g = ctx.metric3
    comps = v.components
    return DifferentialForm(
        1, {(i,): ex.add(*(ex.mul(g[(i, j)], comps[j]) for j in AMBIENT)) for i in AMBIENT}
    )


def sharp(alpha: DifferentialForm, ctx: GeometryContext) -> VectorField3:
    """Raise the index of a 1-form.  Surface forms give a tangential field on E."""
    if alpha.degree != 1:
        raise DegreeError("sharp needs a 1-form")
    ginv = _metric_for(alpha, ctx).inverse
    comps = [ZERO, ZERO, ZERO]
    for i in alpha.space:
        comps[i] = ex.add(*(ex.mul(ginv[(i, j)], alpha[j]) for j in alpha.space))
    return VectorField3(*comps)


def exterior_derivative(alpha: DifferentialForm) -> DifferentialForm:
    if alpha.degree >= alpha.dim:
        raise DegreeError(f"d of a top-degree ({alpha.degree}) form is not defined here")
    out: dict[tuple[int, ...], list[Expr]] = {}
    for key, c in alpha.coeffs.items():
        for i in alpha.space:
            if i in key:
                continue
            dc = ex.differentiate(c, COORDS[i])
            if dc is ZERO:
                continue
            sign, new_key = _sort_sign((i,) + key)
            out.setdefault(new_key, []).append(dc if sign > 0 else ex.neg(dc))
    return DifferentialForm(alpha.degree + 1, {k: ex.add(*v) for k, v in out.items()}, alpha.surface)


def hodge_star(alpha: DifferentialForm, metric: Metric) -> DifferentialForm:
    """Metric Hodge star: (star alpha)_J = sqrt|g| sum_I alpha^I sign(I, J)."""
    space = metric.indices
    if alpha.space != space:
        raise ValueError("form and metric live on different spaces")
    ginv = metric.inverse
    k = alpha.degree
    vol = metric.volume
    out: dict[tuple[int, ...], list[Expr]] = {}
    for upper in combinations(space, k):
        # raise all indices: alpha^I = sum_K det(g^-1[I, K]) alpha_K
        raised = []
        for lower, c in alpha.coeffs.items():
            m = ginv.minor(upper, lower) if upper else ONE
            if m is not ZERO:
                raised.append(ex.mul(m, c))
        if not raised:
            continue
        comp = tuple(i for i in space if i not in upper)
        sign, _ = _sort_sign(upper + comp)
        term = ex.mul(vol, ex.add(*raised))
        out.setdefault(comp, []).append(term if sign > 0 else ex.neg(term))
    return DifferentialForm(len(space) - k, {key: ex.add(*v) for key, v in out.items()}, alpha.surface)


def hodge_star3(alpha: DifferentialForm, ctx: GeometryContext) -> DifferentialForm:
    if alpha.surface:
        raise ValueError("hodge_star3 takes an ambient form")
    return hodge_star(alpha, ctx.metric3)


def hodge_star2(alpha: DifferentialForm, ctx: GeometryContext) -> DifferentialForm:
    """Hodge star of the induced metric on E (volume a*lambda*sin(phi) dphi^dtheta)."""
    if not alpha.surface:
        raise ValueError("hodge_star2 takes a surface form")
    return hodge_star(alpha, ctx.metric2)


def interior_product(X: VectorField3, alpha: DifferentialForm) -> DifferentialForm:
    """Contraction of X into the first slot."""
    if alpha.degree < 1:
        raise DegreeError("interior product of a 0-form is not defined")
    comps = X.components
    out: dict[tuple[int, ...], list[Expr]] = {}
    for key, c in alpha.coeffs.items():
        for pos, i in enumerate(key):
            if comps[i] is ZERO:
                continue
            term = ex.mul(comps[i], c)
            rest = key[:pos] + key[pos + 1:]
            out.setdefault(rest, []).append(term if pos % 2 == 0 else ex.neg(term))
    return DifferentialForm(alpha.degree - 1, {k: ex.add(*v) for k, v in out.items()}, alpha.surface)


def lie_derivative(X: VectorField3, alpha: DifferentialForm, ctx: GeometryContext | None = None) -> DifferentialForm:
    """Cartan's formula L_X alpha = i_X d alpha + d(i_X alpha)."""
    parts = []
    if alpha.degree < alpha.dim:
        parts.append(interior_product(X, exterior_derivative(alpha)))
    if alpha.degree > 0:
        parts.append(exterior_derivative(interior_product(X, alpha)))
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


def pullback_E(alpha: DifferentialForm, ctx: GeometryContext | None = None) -> DifferentialForm:
    """Restrict to E: drop every d rho term and set rho = 1."""
    if alpha.surface:
        return alpha
    if alpha.degree > 2:
        raise DegreeError("a 3-form pulls back to zero on a surface; degree <= 2 expected")
    at_e = {"rho": ONE}
    return DifferentialForm(
        alpha.degree,
        {k: ex.substitute(c, at_e) for k, c in alpha.coeffs.items() if 0 not in k},
        surface=True,
    )


def codifferential(beta: DifferentialForm, ctx: GeometryContext) -> DifferentialForm:
    if beta.degree == 0:
        raise DegreeError("codifferential of a 0-form is zero; not defined here")
    n, k = beta.dim, beta.degree
    star = hodge_star2 if beta.surface else hodge_star3
    out = star(exterior_derivative(star(beta, ctx)), ctx)
    return out if (n * (k + 1) + 1) % 2 == 0 else -out


def hodge_laplacian3(v: DifferentialForm, ctx: GeometryContext) -> DifferentialForm:
    """delta d v for an ambient 1-form; the Hodge Laplacian when delta v = 0."""
    if v.surface or v.degree != 1:
        raise DegreeError("hodge_laplacian3 takes an ambient 1-form")
    return codifferential(exterior_derivative(v), ctx)


def hodge_laplacian_E(alpha: DifferentialForm, ctx: GeometryContext) -> DifferentialForm:
    """delta_E d_E alpha for a 1-form on E; the Hodge Laplacian when div_E = 0."""
    if not alpha.surface or alpha.degree != 1:
        raise DegreeError("hodge_laplacian_E takes a surface 1-form")
    return codifferential(exterior_derivative(alpha), ctx)

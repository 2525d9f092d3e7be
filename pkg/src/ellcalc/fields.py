"""Divergence operators and admissible test fields.

An admissible field is tangential to E (``v^rho = 0`` on ``rho = 1``) and
divergence free both in R^3 and on E.  Starting from a tangential field
``omega`` that is divergence free on E, the radial component is

    v^rho(rho, phi, theta) = -rho^-2 * int_1^rho tau^2 D(tau, phi, theta) dtau,

with ``D = div_R3(omega)``; it solves ``d_rho(rho^2 v^rho) = -rho^2 D`` with
``v^rho = 0`` on E.  The integral is evaluated by fixed-order Gauss-Legendre
quadrature and packaged as a family of kernels with explicit derivatives.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import expr as ex
from .expr import A, ONE, PHI, RHO, THETA, ZERO, Expr, GridEvaluator, Kernel, cos, sin
from .geometry import VectorField3
from .grids import AmbientGrid, SurfaceGrid
from .parser import parse

__all__ = [
    "div3",
    "divE",
    "QuadratureConvergenceError",
    "gauss_legendre",
    "radial_integral",
    "construct_vrho",
    "closed_form_vrho",
    "AdmissibleField",
    "catalog",
    "get_field",
    "field_from_expressions",
    "check_admissible",
    "QUAD_NODES",
    "QUAD_CHECK_NODES",
    "QUAD_RTOL",
]

QUAD_NODES = 32
QUAD_CHECK_NODES = 64
QUAD_RTOL = 1e-10
# rounding floor relative to int |integrand|, for integrals that cancel to ~0
QUAD_NOISE = 1e-12
# integrands below this size are rounding residue of an exact cancellation
QUAD_ATOL = 1e-14


class QuadratureConvergenceError(ArithmeticError):
    pass


def div3(v: VectorField3) -> Expr:
    """Euclidean divergence in chart coordinates.

    d_rho v^rho + (2/rho) v^rho + d_phi v^phi + cot(phi) v^phi + d_theta v^theta
    """
    vr, vp, vt = v.components
    return ex.add(
        ex.differentiate(vr, "rho"),
        ex.mul(ex.div(2, RHO), vr),
        ex.differentiate(vp, "phi"),
        ex.mul(ex.div(cos(PHI), sin(PHI)), vp),
        ex.differentiate(vt, "theta"),
    )


def divE(v: VectorField3) -> Expr:
    """Divergence on E of the tangential part; evaluate at rho = 1."""
    _, vp, vt = v.components
    s, c = sin(PHI), cos(PHI)
    a2 = ex.power(A, 2)
    num = ex.add(ex.mul(ex.sub(2, a2), ex.power(s, 2)), ex.mul(a2, ex.power(c, 2)))
    den = ex.add(ex.mul(a2, ex.power(c, 2)), ex.power(s, 2))
    return ex.add(
        ex.differentiate(vp, "phi"),
        ex.differentiate(vt, "theta"),
        ex.mul(ex.div(c, s), ex.div(num, den), vp),
    )


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return nodes, weights


def _integrate(integrand: Expr, rho, phi, theta, a, n: int):
    x, w = gauss_legendre(n)
    rho = np.asarray(rho, dtype=float)
    half = (rho - 1.0)[..., None] / 2.0
    tau = 1.0 + half * (x + 1.0)
    f = GridEvaluator(tau, np.asarray(phi)[..., None], np.asarray(theta)[..., None], np.asarray(a)[..., None])(integrand)
    terms = f * w
    return half[..., 0] * terms.sum(axis=-1), np.abs(half[..., 0]) * np.abs(terms).sum(axis=-1)


def radial_integral(integrand: Expr, rho, phi, theta, a, n: int = QUAD_NODES, check: int | None = QUAD_CHECK_NODES):
    """int_1^rho integrand(tau, phi, theta) dtau, with a higher-order cross-check.

    Raises QuadratureConvergenceError where the two rules disagree by more than
    QUAD_RTOL relative to the result, plus rounding floors for integrals that
    cancel to nearly zero.
    """
    rho, phi, theta, a = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (rho, phi, theta, a)))
    value, scale = _integrate(integrand, rho, phi, theta, a, n)
    if check:
        fine, _ = _integrate(integrand, rho, phi, theta, a, check)
        bad = np.abs(value - fine) > QUAD_RTOL * np.abs(fine) + QUAD_NOISE * scale + QUAD_ATOL * np.abs(rho - 1.0)
        if np.any(bad):
            worst = float(np.max(np.abs(value - fine)))
            raise QuadratureConvergenceError(
                f"{n}- and {check}-node quadrature disagree (max difference {worst:.3e})"
            )
    return value


class _VrhoFamily:
    """Kernels V_jk = d_phi^j d_theta^k v^rho for j + k <= 2.

    d_phi, d_theta act under the integral sign; d_rho uses the product and
    fundamental-theorem rules, d_rho V = -(2/rho) V - D.
    """

    MAX_ORDER = 2

    def __init__(self, name: str, divergence: Expr):
        self.name = name
        self.divergence = divergence
        self.kernels: dict[tuple[int, int], Kernel] = {}
        for j, k in sorted(
            ((j, k) for j in range(3) for k in range(3) if j + k <= self.MAX_ORDER),
            key=lambda jk: -(jk[0] + jk[1]),
        ):
            self.kernels[(j, k)] = self._make(j, k)

    def source(self, j: int, k: int) -> Expr:
        d = self.divergence
        for _ in range(j):
            d = ex.differentiate(d, "phi")
        for _ in range(k):
            d = ex.differentiate(d, "theta")
        return d

    def _make(self, j: int, k: int) -> Kernel:
        src = self.source(j, k)
        integrand = ex.mul(ex.power(RHO, 2), src)

        def value(rho, phi, theta, a, _integrand=integrand):
            rho = np.asarray(rho, dtype=float)
            return -radial_integral(_integrand, rho, phi, theta, a) / rho ** 2

        partials = {}
        suffix = "" if j + k == 0 else f"_d{'phi' * j}{'theta' * k}"
        kernel = Kernel(f"{self.name}{suffix}", value)

        def d_rho(kernel=kernel, src=src):
            return ex.sub(ex.mul(ex.div(-2, RHO), ex.call(kernel)), src)

        partials["rho"] = d_rho
        if j + k < self.MAX_ORDER:
            partials["phi"] = lambda j=j, k=k: ex.call(self.kernels[(j + 1, k)])
            partials["theta"] = lambda j=j, k=k: ex.call(self.kernels[(j, k + 1)])
        kernel._partials.update(partials)
        return ex.register_kernel(kernel)

    @property
    def root(self) -> Kernel:
        return self.kernels[(0, 0)]


_FAMILIES: dict[tuple[str, int], _VrhoFamily] = {}


def construct_vrho(omega: VectorField3, name: str = "vrho") -> Expr:
    """Radial completion of a tangential field as a quadrature-kernel call."""
    if omega.v_rho is not ZERO:
        raise ValueError("omega must have zero rho-component")
    divergence = div3(omega)
    if divergence is ZERO:
        return ZERO
    key = (name, id(divergence))
    fam = _FAMILIES.get(key)
    if fam is None:
        existing = ex.get_kernel(name)
        if existing is not None:
            # disambiguate: distinct fields must not share kernel names
            for n in itertools.count(2):
                if ex.get_kernel(f"{name}{n}") is None:
                    name = f"{name}{n}"
                    break
        fam = _VrhoFamily(name, divergence)
        _FAMILIES[key] = fam
    return ex.call(fam.root)


def closed_form_vrho(divergence_at_rho_free: Expr) -> Expr:
    """v^rho for a rho-independent divergence D: -D (rho^3 - 1) / (3 rho^2)."""
    if "rho" in ex.free_variables(divergence_at_rho_free):
        raise ValueError("closed form requires a rho-independent divergence")
    return ex.neg(
        ex.div(ex.mul(divergence_at_rho_free, ex.sub(ex.power(RHO, 3), 1)), ex.mul(3, ex.power(RHO, 2)))
    )


@dataclass(frozen=True)
class AdmissibleField:
    name: str
    base: VectorField3
    vrho: Expr
    note: str = ""
    quadrature: bool = False

    @property
    def field(self) -> VectorField3:
        return VectorField3(self.vrho, self.base.v_phi, self.base.v_theta)


def _divE_coefficient() -> Expr:
    s, c = sin(PHI), cos(PHI)
    a2 = ex.power(A, 2)
    return ex.div(
        ex.add(ex.mul(ex.sub(2, a2), ex.power(s, 2)), ex.mul(a2, ex.power(c, 2))),
        ex.add(ex.mul(a2, ex.power(c, 2)), ex.power(s, 2)),
    )


def _mixed_base(profile: Expr) -> VectorField3:
    # v^phi = sin^2(phi) cos(theta) r(rho); div_E = 0 at rho = 1 fixes
    # v^theta = -(2 + k(phi)) sin(phi) cos(phi) sin(theta) r(rho), k the div_E coefficient
    s, c = sin(PHI), cos(PHI)
    vp = ex.mul(ex.power(s, 2), cos(THETA), profile)
    vt = ex.neg(ex.mul(ex.add(2, _divE_coefficient()), s, c, sin(THETA), profile))
    return VectorField3(ZERO, vp, vt)


@lru_cache(maxsize=None)
def catalog() -> tuple[AdmissibleField, ...]:
    s, c = sin(PHI), cos(PHI)
    fields = [
        AdmissibleField(
            "Z1",
            VectorField3(ZERO, ZERO, s),
            ZERO,
            "zonal sin(phi) d_theta; both divergences vanish identically, v^rho = 0",
        ),
        AdmissibleField(
            "Z2",
            VectorField3(ZERO, ZERO, ex.mul(ex.power(s, 2), c)),
            ZERO,
            "zonal sin^2(phi) cos(phi) d_theta; v^rho = 0",
        ),
        AdmissibleField(
            "Z3",
            VectorField3(ZERO, ZERO, ex.mul(RHO, ex.power(s, 3))),
            ZERO,
            "rho-dependent zonal rho sin^3(phi) d_theta; v^rho = 0",
        ),
    ]
    m2 = _mixed_base(ONE)
    fields.append(
        AdmissibleField(
            "M2",
            m2,
            closed_form_vrho(div3(m2)),
            "mixed field with rho-independent tangential part; v^rho in closed form",
        )
    )
    m1 = _mixed_base(ex.exp(ex.sub(RHO, 1)))
    fields.append(
        AdmissibleField(
            "M1",
            m1,
            construct_vrho(m1, name="vrho_M1"),
            "mixed field with radial profile exp(rho - 1); v^rho by quadrature",
            quadrature=True,
        )
    )
    return tuple(fields)


def get_field(name: str) -> AdmissibleField:
    for f in catalog():
        if f.name == name:
            return f
    raise KeyError(f"no catalog field named {name!r}; known: {[f.name for f in catalog()]}")


def field_from_expressions(vphi: str, vtheta: str, name: str = "user") -> AdmissibleField:
    """Build a field from user expressions for (v^phi, v^theta).

    The radial completion is zero when the R^3 divergence vanishes
    structurally, otherwise a quadrature kernel.  Validation against div_E is
    left to :func:`check_admissible`, since it depends on ``a``.
    """
    base = VectorField3(ZERO, parse(vphi), parse(vtheta))
    d = div3(base)
    if d is ZERO:
        return AdmissibleField(name, base, ZERO, "user expressions; div_R3 = 0 structurally")
    return AdmissibleField(
        name, base, construct_vrho(base, name=f"vrho_{name}"), "user expressions; v^rho by quadrature", quadrature=True
    )


def check_admissible(
    fld: AdmissibleField,
    a: float,
    surface_grid: SurfaceGrid | None = None,
    ambient_grid: AmbientGrid | None = None,
) -> dict:
    """Max-abs values of v^rho on E, div_E(base) on E and div_R3(field) in a shell."""
    surface_grid = surface_grid or SurfaceGrid(33, 33)
    ambient_grid = ambient_grid or AmbientGrid(9, 17, 17)
    R, P, T = surface_grid.mesh()
    ev = GridEvaluator(R, P, T, a)
    vrho_on_e = float(np.max(np.abs(ev(fld.vrho))))
    dive = float(np.max(np.abs(ev(divE(fld.base)))))
    R3, P3, T3 = ambient_grid.mesh()
    d3 = float(np.max(np.abs(GridEvaluator(R3, P3, T3, a)(div3(fld.field)))))
    return {"vrho_on_E": vrho_on_e, "divE": dive, "div3": d3}

"""The ellipsoidal chart, its metrics, and derived geometric scalars.

The chart is ``Phi(rho, phi, theta) = (a rho sin(phi) cos(theta),
a rho sin(phi) sin(theta), rho cos(phi))`` and the ellipsoid E is the level
set ``rho = 1``, i.e. ``x^2 + y^2 + a^2 z^2 = a^2``.

Every tree here is written in terms of the variable ``a``; a numeric value
is only supplied when evaluating, so one :class:`GeometryContext` tree set
serves every eccentricity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from . import expr as ex
from .expr import A, ONE, PHI, RHO, THETA, ZERO, Expr, GridEvaluator, cos, sin
from .grids import AmbientGrid
from .reports import ResidualReport

__all__ = [
    "ChartPoint",
    "VectorField3",
    "Metric",
    "Metric3",
    "Metric2",
    "GeometryContext",
    "make_context",
    "chart_to_cartesian",
    "rho_of_cartesian",
    "embedding",
    "pullback_metric_check",
    "ellipsoid_gauss_curvature",
    "eccentricity",
]

COORDS = ("rho", "phi", "theta")


@dataclass(frozen=True)
class ChartPoint:
    rho: float
    phi: float
    theta: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not 0 < self.phi < math.pi:
            raise ValueError(f"phi must lie in (0, pi), got {self.phi}")
        if not -math.pi < self.theta < math.pi:
            raise ValueError(f"theta must lie in (-pi, pi), got {self.theta}")


@dataclass(frozen=True)
class VectorField3:
    """Ambient vector field ``v^rho d_rho + v^phi d_phi + v^theta d_theta``."""

    v_rho: Expr = ZERO
    v_phi: Expr = ZERO
    v_theta: Expr = ZERO

    def __post_init__(self):
        for name in ("v_rho", "v_phi", "v_theta"):
            object.__setattr__(self, name, ex._as_expr(getattr(self, name)))

    @property
    def components(self) -> tuple[Expr, Expr, Expr]:
        return (self.v_rho, self.v_phi, self.v_theta)

    def __add__(self, other: "VectorField3") -> "VectorField3":
        return VectorField3(*(ex.add(x, y) for x, y in zip(self.components, other.components)))

    def scale(self, f) -> "VectorField3":
        return VectorField3(*(ex.mul(f, c) for c in self.components))

    def apply(self, f: Expr) -> Expr:
        """Directional derivative X(f)."""
        return ex.add(
            *(ex.mul(c, ex.differentiate(f, name)) for c, name in zip(self.components, COORDS))
        )


class Metric:
    """Symmetric metric tensor with Expr entries, indexed by coordinate numbers.

    ``indices`` are the coordinates it acts on: ``(0, 1, 2)`` for the ambient
    chart, ``(1, 2)`` for the surface.
    """

    def __init__(self, indices: tuple[int, ...], entries: dict[tuple[int, int], Expr]):
        self.indices = tuple(indices)
        self._g = {}
        for i in self.indices:
            for j in self.indices:
                val = entries.get((i, j), entries.get((j, i), ZERO))
                self._g[(i, j)] = val
        for (i, j), v in entries.items():
            if entries.get((j, i), v) is not v:
                raise ValueError("metric entries must be symmetric")

    def __getitem__(self, ij) -> Expr:
        return self._g[ij]

    @property
    def dim(self) -> int:
        return len(self.indices)

    def matrix(self) -> list[list[Expr]]:
        return [[self._g[(i, j)] for j in self.indices] for i in self.indices]

    @cached_property
    def det(self) -> Expr:
        return _det(self.matrix())

    @cached_property
    def volume(self) -> Expr:
        """sqrt(det g), the coefficient of the coordinate volume form."""
        return ex.sqrt(self.det)

    @cached_property
    def inverse(self) -> "Metric":
        det = self.det
        idx = self.indices
        entries = {}
        for p, i in enumerate(idx):
            for q, j in enumerate(idx):
                if q < p:
                    continue
                cof = self.minor(tuple(k for k in idx if k != j), tuple(k for k in idx if k != i))
                if (p + q) % 2:
                    cof = ex.neg(cof)
                entries[(i, j)] = ex.div(cof, det)
        return Metric(idx, entries)

    def minor(self, rows: tuple[int, ...], cols: tuple[int, ...]) -> Expr:
        """det of the sub-matrix with the given coordinate rows and columns."""
        return _det([[self._g[(i, j)] for j in cols] for i in rows])

    def evaluate(self, rho, phi, theta, a) -> np.ndarray:
        ev = GridEvaluator(rho, phi, theta, a)
        n = self.dim
        out = np.empty(ev.shape + (n, n))
        for p, i in enumerate(self.indices):
            for q, j in enumerate(self.indices):
                out[..., p, q] = ev(self._g[(i, j)])
        return out


def _det(m: list[list[Expr]]) -> Expr:
    n = len(m)
    if n == 0:
        return ONE
    if n == 1:
        return m[0][0]
    if n == 2:
        return ex.sub(ex.mul(m[0][0], m[1][1]), ex.mul(m[0][1], m[1][0]))
    terms = []
    for j in range(n):
        if m[0][j] is ZERO:
            continue
        sub_m = [row[:j] + row[j + 1:] for row in m[1:]]
        t = ex.mul(m[0][j], _det(sub_m))
        terms.append(t if j % 2 == 0 else ex.neg(t))
    return ex.add(*terms)


class Metric3(Metric):
    def __init__(self, g_rr, g_rp, g_pp, g_tt):
        super().__init__((0, 1, 2), {(0, 0): g_rr, (0, 1): g_rp, (1, 1): g_pp, (2, 2): g_tt})


class Metric2(Metric):
    def __init__(self, g_pp, g_tt):
        super().__init__((1, 2), {(1, 1): g_pp, (2, 2): g_tt})


@dataclass(frozen=True)
class GeometryContext:
    """Ellipsoid parameter plus the (a-symbolic) geometric trees.

    ``mu`` is the eccentricity sqrt((a^2 - 1)/a^2), defined for a >= 1 only.
    """

    a: float
    mu: float | None
    metric3: Metric3 = field(repr=False)
    metric2: Metric2 = field(repr=False)
    lambda_sq: Expr = field(repr=False)
    grad_rho: VectorField3 = field(repr=False)
    grad_rho_norm_sq: Expr = field(repr=False)
    gauss_curvature: Expr = field(repr=False)

    @property
    def sqrt_gauss_curvature(self) -> Expr:
        return ex.power(self.lambda_sq, -1)

    @property
    def fourth_root_gauss_curvature(self) -> Expr:
        return ex.div(ONE, ex.sqrt(self.lambda_sq))

    def evaluator(self, rho, phi, theta) -> GridEvaluator:
        return GridEvaluator(rho, phi, theta, self.a)

    def header(self) -> dict:
        return {"a": self.a, "mu": self.mu}


def eccentricity(a: float) -> float | None:
    if a < 1:
        return None
    return math.sqrt((a * a - 1.0) / (a * a))


@lru_cache(maxsize=None)
def _trees():
    s, c = sin(PHI), cos(PHI)
    a2 = ex.power(A, 2)
    lam2 = ex.add(ex.mul(a2, ex.power(c, 2)), ex.power(s, 2))
    g_rr = ex.add(ex.mul(a2, ex.power(s, 2)), ex.power(c, 2))
    g_rp = ex.mul(ex.sub(a2, 1), RHO, s, c)
    g_pp = ex.add(ex.mul(a2, ex.power(RHO, 2), ex.power(c, 2)), ex.mul(ex.power(RHO, 2), ex.power(s, 2)))
    g_tt = ex.mul(a2, ex.power(RHO, 2), ex.power(s, 2))
    metric3 = Metric3(g_rr, g_rp, g_pp, g_tt)
    at_e = {"rho": ONE}
    metric2 = Metric2(ex.substitute(g_pp, at_e), ex.substitute(g_tt, at_e))
    norm_sq = ex.div(lam2, a2)
    grad = VectorField3(
        norm_sq,
        ex.mul(ex.div(ex.sub(1, a2), ex.mul(a2, RHO)), s, c),
        ZERO,
    )
    curvature = ex.power(lam2, -2)
    return metric3, metric2, lam2, grad, norm_sq, curvature


def make_context(a: float) -> GeometryContext:
    a = float(a)
    if not a > 0 or not math.isfinite(a):
        raise ValueError(f"the ellipsoid parameter a must be positive, got {a}")
    metric3, metric2, lam2, grad, norm_sq, curvature = _trees()
    return GeometryContext(
        a=a,
        mu=eccentricity(a),
        metric3=metric3,
        metric2=metric2,
        lambda_sq=lam2,
        grad_rho=grad,
        grad_rho_norm_sq=norm_sq,
        gauss_curvature=curvature,
    )


def embedding() -> tuple[Expr, Expr, Expr]:
    """The chart map as three trees (x, y, z)."""
    s = sin(PHI)
    return (
        ex.mul(A, RHO, s, cos(THETA)),
        ex.mul(A, RHO, s, sin(THETA)),
        ex.mul(RHO, cos(PHI)),
    )


def chart_to_cartesian(p: ChartPoint, a: float) -> tuple[float, float, float]:
    s = math.sin(p.phi)
    return (a * p.rho * s * math.cos(p.theta), a * p.rho * s * math.sin(p.theta), p.rho * math.cos(p.phi))


def rho_of_cartesian(x, y, z, a):
    """Defining function of the ellipsoid family; equals 1 exactly on E."""
    return np.sqrt((x * x + y * y + a * a * z * z) / (a * a))


def ellipsoid_gauss_curvature(x, y, z, a):
    """Gauss curvature of x^2/a^2 + y^2/a^2 + z^2 = 1 at an embedded point.

    Closed form for an ellipsoid with semi-axes (A, B, C):
    K = 1 / (A^2 B^2 C^2 (x^2/A^4 + y^2/B^4 + z^2/C^4)^2).
    """
    s = x * x / a ** 4 + y * y / a ** 4 + z * z
    return 1.0 / (a ** 4 * s * s)


def pullback_metric_check(a: float, grid: AmbientGrid | None = None, tolerance: float = 1e-12) -> ResidualReport:
    """Compare the stored metric with J^T J, J the Jacobian of the chart map."""
    grid = grid or AmbientGrid(5, 17, 17)
    R, P, T = grid.mesh()
    ev = GridEvaluator(R, P, T, a)
    xyz = embedding()
    jac = np.stack(
        [np.stack([ev(ex.differentiate(f, v)) for v in COORDS], axis=-1) for f in xyz], axis=-2
    )
    pulled = np.einsum("...ki,...kj->...ij", jac, jac)
    stored = make_context(a).metric3.evaluate(R, P, T, a)
    names = {}
    for i in range(3):
        for j in range(i, 3):
            names[f"g_{COORDS[i]}{COORDS[j]}"] = pulled[..., i, j] - stored[..., i, j]
    report = ResidualReport.from_residuals(
        "pullback_metric",
        names,
        grid=grid.spec(),
        params={"a": a},
        tolerance=tolerance,
        mode="absolute",
    )
    return report

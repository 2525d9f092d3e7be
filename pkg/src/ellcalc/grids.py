"""Interior sample grids on the chart (poles and the theta seam excluded)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PHI_MARGIN = 0.2
THETA_MARGIN = 0.1


@dataclass(frozen=True)
class SurfaceGrid:
    """Tensor grid in (phi, theta) on the ellipsoid rho = 1."""

    n_phi: int = 33
    n_theta: int = 33
    phi_range: tuple[float, float] = (PHI_MARGIN, math.pi - PHI_MARGIN)
    theta_range: tuple[float, float] = (-math.pi + THETA_MARGIN, math.pi - THETA_MARGIN)

    def __post_init__(self):
        _check_range("phi", self.phi_range, 0.0, math.pi)
        _check_range("theta", self.theta_range, -math.pi, math.pi)
        if self.n_phi < 1 or self.n_theta < 1:
            raise ValueError("grid dimensions must be positive")

    def mesh(self):
        phi = np.linspace(*self.phi_range, self.n_phi)
        theta = np.linspace(*self.theta_range, self.n_theta)
        P, T = np.meshgrid(phi, theta, indexing="ij")
        return np.ones_like(P), P, T

    @property
    def shape(self):
        return (self.n_phi, self.n_theta)

    def spec(self) -> dict:
        return {
            "kind": "surface",
            "n_phi": self.n_phi,
            "n_theta": self.n_theta,
            "phi_range": list(self.phi_range),
            "theta_range": list(self.theta_range),
        }


@dataclass(frozen=True)
class AmbientGrid:
    """Tensor grid in (rho, phi, theta) in a shell around the ellipsoid."""

    n_rho: int = 9
    n_phi: int = 17
    n_theta: int = 17
    rho_range: tuple[float, float] = (0.8, 1.2)
    phi_range: tuple[float, float] = (PHI_MARGIN, math.pi - PHI_MARGIN)
    theta_range: tuple[float, float] = (-math.pi + THETA_MARGIN, math.pi - THETA_MARGIN)

    def __post_init__(self):
        if self.rho_range[0] <= 0:
            raise ValueError("rho must stay positive")
        _check_range("phi", self.phi_range, 0.0, math.pi)
        _check_range("theta", self.theta_range, -math.pi, math.pi)

    def mesh(self):
        rho = np.linspace(*self.rho_range, self.n_rho)
        phi = np.linspace(*self.phi_range, self.n_phi)
        theta = np.linspace(*self.theta_range, self.n_theta)
        return np.meshgrid(rho, phi, theta, indexing="ij")

    @property
    def shape(self):
        return (self.n_rho, self.n_phi, self.n_theta)

    def spec(self) -> dict:
        return {
            "kind": "ambient",
            "n_rho": self.n_rho,
            "n_phi": self.n_phi,
            "n_theta": self.n_theta,
            "rho_range": list(self.rho_range),
            "phi_range": list(self.phi_range),
            "theta_range": list(self.theta_range),
        }


def _check_range(name, rng, lo, hi):
    a, b = rng
    if not (lo < a <= b < hi):
        raise ValueError(f"{name} range {rng} must lie strictly inside ({lo}, {hi})")


def parse_grid(text: str):
    """``"33x33"`` -> SurfaceGrid, ``"9x17x17"`` -> AmbientGrid (rho first)."""
    try:
        dims = [int(p) for p in text.lower().split("x")]
    except ValueError:
        raise ValueError(f"bad grid spec {text!r}; expected e.g. 33x33 or 9x17x17") from None
    if len(dims) == 2:
        return SurfaceGrid(*dims)
    if len(dims) == 3:
        return AmbientGrid(*dims)
    raise ValueError(f"bad grid spec {text!r}; expected 2 or 3 dimensions")

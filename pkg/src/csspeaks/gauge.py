"""Gauge fields slaved to a matter field and the static-system identities.

Given a matter density rho = u^2, the spatial components and the temporal
component of the gauge field are the singular-kernel convolutions

    a1(x) = +(1/4 pi) int (x2 - y2)/|x - y|^2 rho(y) dy,
    a2(x) = -(1/4 pi) int (x1 - y1)/|x - y|^2 rho(y) dy,
    a0(x) = K2 * (a1 rho) - K1 * (a2 rho),

the unique decaying solution of the first-order constraints

    d1 a2 - d2 a1 = -rho/2,   d1 a1 + d2 a2 = 0,
    d1 a0 = a2 rho,           d2 a0 = -a1 rho.

With this orientation the temporal component obtained from the constraints
coincides with the one produced by differentiating the reduced energy
functional, so critical points of the reduced functional satisfy the full
static system.  (The same fields with a1, a2 negated satisfy the curl
equation with the opposite sign and are not compatible with the energy's
Euler-Lagrange equation; see gauge_residuals' sign flag.)

The fields here are frame-agnostic: callers working in peak-scale
coordinates multiply by the appropriate powers of the semiclassical
parameter when converting to physical units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    Field2D,
    Grid2D,
    KernelId,
    check_same_grid,
    convolve_raw_many,
    gradient4,
    integrate,
)


def transverse_potentials(grid: Grid2D, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Raw-array (a1, a2) for a density rho; shares one forward transform."""
    k1, k2 = convolve_raw_many((KernelId.K1, KernelId.K2), grid, rho)
    # K_i * rho = -(1/2 pi) int (x_i - y_i)/|x-y|^2 rho, so a1 = -K2*rho/2, a2 = +K1*rho/2
    return -0.5 * k2, +0.5 * k1


def temporal_potential(grid: Grid2D, rho: np.ndarray, a1: np.ndarray,
                       a2: np.ndarray) -> np.ndarray:
    """Raw-array a0 = K2 * (a1 rho) - K1 * (a2 rho)."""
    c2 = convolve_raw_many((KernelId.K2,), grid, a1 * rho)[0]
    c1 = convolve_raw_many((KernelId.K1,), grid, a2 * rho)[0]
    return c2 - c1


@dataclass(frozen=True)
class GaugeFields:
    """The triple (a0, a1, a2) computed from one matter field."""

    a0: Field2D
    a1: Field2D
    a2: Field2D
    source_norm: float  # integral of u^2 recorded at build time

    @property
    def grid(self) -> Grid2D:
        return self.a0.grid

    def boundary_decay_ok(self) -> bool:
        """Transverse components fall off like mass/|x| toward the box edge.

        The far field of a localized source has magnitude source_norm /
        (4 pi |x|); the factor-two headroom absorbs off-center sources.
        """
        from .grid import boundary_ring_max

        bound = self.source_norm / (2.0 * np.pi * self.grid.half_width)
        ring = max(boundary_ring_max(self.a1.values),
                   boundary_ring_max(self.a2.values))
        return ring <= bound


def compute_gauge(u: Field2D) -> GaugeFields:
    """All three gauge components generated by the matter field u."""
    grid = u.grid
    rho = u.values ** 2
    a1, a2 = transverse_potentials(grid, rho)
    a0 = temporal_potential(grid, rho, a1, a2)
    return GaugeFields(
        a0=Field2D(grid, a0),
        a1=Field2D(grid, a1),
        a2=Field2D(grid, a2),
        source_norm=integrate(Field2D(grid, rho)),
    )


def _interior(values: np.ndarray) -> np.ndarray:
    """Restriction to the inner half-box, where free-space truncation is benign."""
    n = values.shape[0]
    q = n // 4
    return values[q:-q, q:-q]


@dataclass(frozen=True)
class ResidualReport:
    """Max-norm interior residuals of the four gauge constraint equations."""

    curl: float              # d1 a2 - d2 a1 + rho/2
    coulomb: float           # d1 a1 + d2 a2
    a0_grad1: float          # d1 a0 - a2 rho
    a0_grad2: float          # d2 a0 + a1 rho
    curl_scale: float        # max interior rho/2
    a0_scale: float          # max interior |a| rho
    curl_sign: float         # fitted proportionality of (d1 a2 - d2 a1) vs rho

    def within(self, rel: float) -> bool:
        curl_ok = max(self.curl, self.coulomb) <= rel * max(self.curl_scale, 1e-300)
        a0_ok = max(self.a0_grad1, self.a0_grad2) <= rel * max(self.a0_scale, 1e-300)
        return curl_ok and a0_ok


def gauge_residuals(u: Field2D, g: GaugeFields) -> ResidualReport:
    """Check the four constraint equations on the inner half-box.

    The derivatives here use 4th-order interior stencils so the report
    reflects the gauge fields rather than the differencing.
    """
    check_same_grid(u, g.a0, g.a1, g.a2)
    h = u.grid.spacing
    rho = u.values ** 2
    d1a1 = gradient4(g.a1.values, h, 0)
    d2a1 = gradient4(g.a1.values, h, 1)
    d1a2 = gradient4(g.a2.values, h, 0)
    d2a2 = gradient4(g.a2.values, h, 1)
    d1a0 = gradient4(g.a0.values, h, 0)
    d2a0 = gradient4(g.a0.values, h, 1)

    curl = _interior(d1a2 - d2a1 + 0.5 * rho)
    coulomb = _interior(d1a1 + d2a2)
    res1 = _interior(d1a0 - g.a2.values * rho)
    res2 = _interior(d2a0 + g.a1.values * rho)

    rho_in = _interior(rho)
    a_mag = np.hypot(_interior(g.a1.values), _interior(g.a2.values))
    curl_field = _interior(d1a2 - d2a1)
    denom = float(np.sum(rho_in ** 2))
    sign = float(np.sum(curl_field * rho_in) / denom) if denom > 0 else 0.0

    return ResidualReport(
        curl=float(np.max(np.abs(curl))),
        coulomb=float(np.max(np.abs(coulomb))),
        a0_grad1=float(np.max(np.abs(res1))),
        a0_grad2=float(np.max(np.abs(res2))),
        curl_scale=float(np.max(0.5 * rho_in)),
        a0_scale=float(np.max(a_mag * rho_in)),
        curl_sign=sign,
    )


def chern_simons_identity(u: Field2D, g: GaugeFields) -> tuple[float, float]:
    """Both sides of int a0 F12 dx = -1/2 int a0 u^2 dx, computed separately."""
    check_same_grid(u, g.a0, g.a1, g.a2)
    h = u.grid.spacing
    f12 = gradient4(g.a2.values, h, 0) - gradient4(g.a1.values, h, 1)
    grid = u.grid
    lhs = integrate(Field2D(grid, g.a0.values * f12))
    rhs = -0.5 * integrate(Field2D(grid, g.a0.values * u.values ** 2))
    return lhs, rhs

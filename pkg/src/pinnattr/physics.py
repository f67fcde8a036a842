"""Steady incompressible Navier-Stokes residuals and boundary conditions.

Interior residuals follow the stationary momentum equations plus continuity
for velocity (u1, u2) and pressure p.  The "broken" variant omits the
u1 * du1/dx convective term from the x-momentum residual only, modelling a
model trained on wrong physics.  Boundary conditions: no-slip walls and
cylinder, parabolic inflow, directional do-nothing outflow
nu * grad(u1) - (p / rho, 0)^T = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .autodiff import Jet2
from .errors import ContractViolation
from .geometry import BoundarySegment, DomainSpec, Point2


@dataclass(frozen=True)
class FluidParams:
    rho: float = 1.0     # density, rho = 1 convention
    nu: float = 0.001    # kinematic viscosity [m^2/s]
    u_max: float = 0.3   # peak inflow speed [m/s]

    def __post_init__(self):
        if self.rho <= 0.0 or self.nu <= 0.0 or self.u_max < 0.0:
            raise ContractViolation("fluid parameters out of range")


class PdeVariant(Enum):
    FULL = "full"
    BROKEN = "broken"  # x-momentum loses its u1 * du1/dx term


@dataclass
class FieldJet:
    """Jets of the three predicted fields at one location (or batch)."""

    u1: Jet2
    u2: Jet2
    p: Jet2


@dataclass
class ResidualVector:
    r_mom_x: object  # [m/s^2]
    r_mom_y: object  # [m/s^2]
    r_cont: object   # [1/s]

    def components(self):
        return (self.r_mom_x, self.r_mom_y, self.r_cont)


def ns_residual(f: FieldJet, params: FluidParams,
                variant: PdeVariant = PdeVariant.FULL) -> ResidualVector:
    """Momentum and continuity residuals from field jets."""
    u1, u2, p = f.u1, f.u2, f.p
    inv_rho = 1.0 / params.rho
    nu = params.nu
    conv_x = u2.v * u1.dy
    if variant is PdeVariant.FULL:
        conv_x = u1.v * u1.dx + conv_x
    r_mom_x = conv_x + p.dx * inv_rho - (u1.dxx + u1.dyy) * nu
    r_mom_y = u1.v * u2.dx + u2.v * u2.dy + p.dy * inv_rho \
        - (u2.dxx + u2.dyy) * nu
    r_cont = u1.dx + u2.dy
    return ResidualVector(r_mom_x, r_mom_y, r_cont)


def inflow_profile(y: float, params: FluidParams, spec: DomainSpec) -> float:
    """Parabolic inlet profile u_max * y * (y_max - y) / y_max^2."""
    if not (spec.y_min <= y <= spec.y_max):
        raise ContractViolation(f"inlet ordinate {y} outside the cavity")
    return params.u_max * y * (spec.y_max - y) / spec.y_max ** 2


def bc_residual(point: Point2, seg: BoundarySegment, f: FieldJet,
                params: FluidParams, spec: DomainSpec) -> list:
    """Boundary residual components for one tagged boundary point."""
    if seg in (BoundarySegment.BOTTOM, BoundarySegment.TOP,
               BoundarySegment.CYLINDER):
        return [f.u1.v, f.u2.v]
    if seg is BoundarySegment.INLET:
        return [f.u1.v - inflow_profile(point.y, params, spec), f.u2.v]
    if seg is BoundarySegment.OUTLET:
        inv_rho = 1.0 / params.rho
        return [f.u1.dx * params.nu - f.p.v * inv_rho,
                f.u1.dy * params.nu]
    raise ContractViolation(f"unknown boundary segment {seg!r}")

"""Cavity-with-cylinder domain, Hammersley collocation sampling, predicates.

The domain is a rectangle with a circular obstacle.  All sampling is
deterministic: interior points come from a 2-D Hammersley set mapped onto the
rectangle with cylinder hits skipped, boundary points from a 1-D Hammersley
sequence over the arclength of the closed boundary (rectangle perimeter plus
cylinder circle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ContractViolation, EmptySetError

ON_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ContractViolation("point coordinates must be finite")


class BoundarySegment(Enum):
    INLET = "inlet"
    OUTLET = "outlet"
    TOP = "top"
    BOTTOM = "bottom"
    CYLINDER = "cylinder"


@dataclass(frozen=True)
class DomainSpec:
    """Rectangular cavity with an interior circular cylinder."""

    x_min: float = 0.0
    x_max: float = 2.2
    y_min: float = 0.0
    y_max: float = 0.41
    cylinder_center: Point2 = field(default_factory=lambda: Point2(0.2, 0.2))
    cylinder_radius: float = 0.05

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ContractViolation("rectangle bounds must be ordered")
        c, r = self.cylinder_center, self.cylinder_radius
        if r <= 0.0:
            raise ContractViolation("cylinder radius must be positive")
        if not (self.x_min < c.x - r and c.x + r < self.x_max
                and self.y_min < c.y - r and c.y + r < self.y_max):
            raise ContractViolation("cylinder must lie strictly inside"
                                    " the rectangle")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def boundary_arclength(self) -> float:
        return 2.0 * (self.width + self.height) \
            + 2.0 * math.pi * self.cylinder_radius

    def contains_interior(self, p: Point2) -> bool:
        """Strictly inside the rectangle and strictly outside the cylinder."""
        if not (self.x_min < p.x < self.x_max and self.y_min < p.y < self.y_max):
            return False
        return self.distance_to_cylinder_center(p) > self.cylinder_radius

    def distance_to_cylinder_center(self, p: Point2) -> float:
        return math.hypot(p.x - self.cylinder_center.x,
                          p.y - self.cylinder_center.y)

    def on_boundary(self, p: Point2, tol: float = ON_BOUNDARY_TOL) -> bool:
        on_rect = (
            (abs(p.x - self.x_min) <= tol or abs(p.x - self.x_max) <= tol)
            and self.y_min - tol <= p.y <= self.y_max + tol
        ) or (
            (abs(p.y - self.y_min) <= tol or abs(p.y - self.y_max) <= tol)
            and self.x_min - tol <= p.x <= self.x_max + tol
        )
        on_circle = abs(self.distance_to_cylinder_center(p)
                        - self.cylinder_radius) <= tol
        return on_rect or on_circle


@dataclass
class CollocationSet:
    """Training points: interior first, then boundary; weights align with the
    concatenated order.  Weight of a point is N / (size of its group), so the
    single-mean loss (1/N) * sum_i w_i * l_i equals the two group means."""

    interior: list[Point2]
    boundary: list[tuple[Point2, BoundarySegment]]
    weights: np.ndarray

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary)

    @property
    def n_total(self) -> int:
        return self.n_interior + self.n_boundary

    def all_points(self) -> list[Point2]:
        return list(self.interior) + [p for p, _ in self.boundary]

    def tags(self) -> list[str]:
        return ["interior"] * self.n_interior \
            + [seg.value for _, seg in self.boundary]


def radical_inverse_base2(i: int) -> float:
    """Van der Corput radical inverse: reverse the binary digits of i."""
    if i < 0:
        raise ContractViolation("index must be non-negative")
    result = 0.0
    scale = 0.5
    while i > 0:
        result += (i & 1) * scale
        i >>= 1
        scale *= 0.5
    return result


def hammersley(n: int, index_offset: int = 1) -> list[tuple[float, float]]:
    """2-D Hammersley points (i/n, radical_inverse_base2(i)) for n indices
    starting at index_offset."""
    if n < 1:
        raise EmptySetError("hammersley requires n >= 1")
    return [(i / n, radical_inverse_base2(i))
            for i in range(index_offset, index_offset + n)]


def sample_interior(spec: DomainSpec, n: int, index_offset: int = 1) -> list[Point2]:
    """Exactly n points strictly inside the domain.

    The Hammersley first coordinate cycles with period n (denominator fixed at
    n) while the radical inverse keeps advancing, so rejected indices --
    cylinder hits and the i = n edge landing on x_max -- are replaced by
    extending the sequence instead of resampling.
    """
    if n < 1:
        raise EmptySetError("sample_interior requires n >= 1")
    out: list[Point2] = []
    i = index_offset
    while len(out) < n:
        fx = ((i - 1) % n + 1) / n
        fy = radical_inverse_base2(i)
        p = Point2(spec.x_min + fx * spec.width, spec.y_min + fy * spec.height)
        if spec.contains_interior(p):
            out.append(p)
        i += 1
    return out


def sample_boundary(spec: DomainSpec, n: int,
                    index_offset: int = 1) -> list[tuple[Point2, BoundarySegment]]:
    """n points on the closed boundary, placed by a 1-D Hammersley sequence
    over total arclength and tagged by segment.

    Arclength runs: bottom, outlet (right), top, inlet (left), cylinder.
    Rectangle corners are tagged with the horizontal segment so the no-slip
    condition wins where walls meet inlet/outlet.
    """
    if n < 5:
        raise ContractViolation(
            "sample_boundary requires n >= 5 for segment coverage")
    total = spec.boundary_arclength()
    out = []
    for i in range(index_offset, index_offset + n):
        s = (((i - 1) % n + 1) / n) * total
        out.append(_point_at_arclength(spec, s))
    return out


def _point_at_arclength(spec: DomainSpec, s: float) -> tuple[Point2, BoundarySegment]:
    w, h = spec.width, spec.height
    rect = 2.0 * (w + h)
    s = s % spec.boundary_arclength()
    if s < rect:
        if s < w:
            p = Point2(spec.x_min + s, spec.y_min)
        elif s < w + h:
            p = Point2(spec.x_max, spec.y_min + (s - w))
        elif s < 2.0 * w + h:
            p = Point2(spec.x_max - (s - w - h), spec.y_max)
        else:
            p = Point2(spec.x_min, spec.y_max - (s - 2.0 * w - h))
        return p, _rect_tag(spec, p)
    angle = (s - rect) / spec.cylinder_radius
    c = spec.cylinder_center
    p = Point2(c.x + spec.cylinder_radius * math.cos(angle),
               c.y + spec.cylinder_radius * math.sin(angle))
    return p, BoundarySegment.CYLINDER


def _rect_tag(spec: DomainSpec, p: Point2) -> BoundarySegment:
    # horizontal segments claim the corners
    if abs(p.y - spec.y_min) <= ON_BOUNDARY_TOL:
        return BoundarySegment.BOTTOM
    if abs(p.y - spec.y_max) <= ON_BOUNDARY_TOL:
        return BoundarySegment.TOP
    if abs(p.x - spec.x_min) <= ON_BOUNDARY_TOL:
        return BoundarySegment.INLET
    return BoundarySegment.OUTLET


def build_collocation(spec: DomainSpec, n_pde: int, n_bc: int,
                      index_offset: int = 1) -> CollocationSet:
    """Sample a complete training set and attach per-point loss weights."""
    interior = sample_interior(spec, n_pde, index_offset)
    boundary = sample_boundary(spec, n_bc, index_offset)
    n = n_pde + n_bc
    weights = np.concatenate([
        np.full(n_pde, n / n_pde),
        np.full(n_bc, n / n_bc),
    ])
    return CollocationSet(interior=interior, boundary=boundary, weights=weights)


def downstream_mask(test: Point2, train_points: list[Point2]) -> list[bool]:
    """True where a training point lies strictly downstream (larger x)."""
    return [p.x > test.x for p in train_points]

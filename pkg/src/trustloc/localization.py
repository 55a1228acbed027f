"""Planar multilateration from ranging circles.

Distance comes from two-way-ranging timestamps; position comes from
intersecting the circles of the three most trusted anchors and validating
the candidate against the third circle's residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .domain import DeviceRecord

SPEED_OF_LIGHT_M_S = 299_792_458.0

Point = tuple[float, float]


class NegativeRange(ValueError):
    """Reply timestamp precedes the poll timestamp: inconsistent clocks."""


class InsufficientAnchors(ValueError):
    """Fewer devices available than anchors requested."""

    def __init__(self, have: int, need: int):
        super().__init__(f"need {need} anchors, have {have}")
        self.have = have
        self.need = need


class Reason(Enum):
    NO_INTERSECTION = "NoIntersection"
    RESIDUAL_TOO_LARGE = "ResidualTooLarge"


class NotComputable(Exception):
    """Position cannot be determined from the given anchors."""

    def __init__(self, reason: Reason):
        super().__init__(reason.value)
        self.reason = reason


@dataclass(frozen=True)
class Anchor:
    id: str
    center: Point
    radius: float
    trust: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be non-negative")


class IntersectKind(Enum):
    NONE = "none"
    TANGENT = "tangent"
    TWO = "two"


@dataclass(frozen=True)
class IntersectionResult:
    kind: IntersectKind
    points: tuple[Point, ...] = ()


def tof_distance(t1: float, t2: float) -> float:
    """Distance in meters from round-trip timestamps: ToF = (t1 - t2)/2."""
    if t1 < t2:
        raise NegativeRange(f"t1 ({t1}) precedes t2 ({t2})")
    return (t1 - t2) / 2 * SPEED_OF_LIGHT_M_S


def intersect_circles(c1: Point, r1: float, c2: Point, r2: float) -> IntersectionResult:
    """Classify and compute the intersection of two circles.

    Tangency is detected within 1e-9 x max(1, d) of either boundary, since
    mm-rounded inputs never sit exactly on it. Coincident circles yield no
    usable intersection.
    """
    d = math.dist(c1, c2)
    tol = 1e-9 * max(1.0, d)
    if d == 0:
        # Concentric (and in particular coincident) circles never yield a
        # usable intersection point.
        return IntersectionResult(IntersectKind.NONE)
    if abs(d - (r1 + r2)) <= tol or abs(d - abs(r1 - r2)) <= tol:
        # Single touching point along the center line.
        a = (d * d - r2 * r2 + r1 * r1) / (2 * d)
        px = c1[0] + a * (c2[0] - c1[0]) / d
        py = c1[1] + a * (c2[1] - c1[1]) / d
        return IntersectionResult(IntersectKind.TANGENT, ((px, py),))
    if d > r1 + r2 or d < abs(r1 - r2):
        return IntersectionResult(IntersectKind.NONE)
    # Radical line: foot of the chord at distance a from c1, half-chord h.
    a = (d * d - r2 * r2 + r1 * r1) / (2 * d)
    h = math.sqrt(max(r1 * r1 - a * a, 0.0))
    mx = c1[0] + a * (c2[0] - c1[0]) / d
    my = c1[1] + a * (c2[1] - c1[1]) / d
    ox = h * (c2[1] - c1[1]) / d
    oy = h * (c2[0] - c1[0]) / d
    p = (mx + ox, my - oy)
    q = (mx - ox, my + oy)
    return IntersectionResult(IntersectKind.TWO, (p, q))


def residual(pt: Point, c: Point, r: float) -> float:
    """Signed distance-squared slack of pt against circle (c, r)."""
    return (pt[0] - c[0]) ** 2 + (pt[1] - c[1]) ** 2 - r * r


def select_anchors(devices: list[DeviceRecord], k: int,
                   mm_per_unit: float = 1000.0) -> list[Anchor]:
    """Pick the k most trusted devices as anchors, ties broken by ascending id.

    Radii convert the stored millimeter distances to coordinate units.
    """
    if len(devices) < k:
        raise InsufficientAnchors(len(devices), k)
    ranked = sorted(devices, key=lambda dev: (-dev.trust, dev.id))
    return [Anchor(id=dev.id, center=(dev.x, dev.y),
                   radius=dev.dist / mm_per_unit, trust=dev.trust)
            for dev in ranked[:k]]


def multilaterate(anchors: list[Anchor], max_error: float) -> Point:
    """Position from exactly three trust-ordered anchors.

    The two most trusted circles intersect; a tangent point is accepted
    directly, a two-point intersection is disambiguated and gated by the
    third circle's residual.
    """
    if len(anchors) != 3:
        raise InsufficientAnchors(len(anchors), 3)
    first, second, third = anchors
    inter = intersect_circles(first.center, first.radius,
                              second.center, second.radius)
    if inter.kind is IntersectKind.NONE:
        raise NotComputable(Reason.NO_INTERSECTION)
    if inter.kind is IntersectKind.TANGENT:
        return inter.points[0]
    best: Optional[Point] = None
    best_res = math.inf
    for pt in inter.points:
        res = abs(residual(pt, third.center, third.radius))
        if res < best_res or (res == best_res and best is not None
                              and (pt[1], pt[0]) < (best[1], best[0])):
            best, best_res = pt, res
    if best_res > max_error:
        raise NotComputable(Reason.RESIDUAL_TOO_LARGE)
    return best

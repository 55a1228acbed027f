"""Trust model: confidence from RSSI, neighbor evidence, reputation, trust.

All four computations are pure functions over value inputs. Evidence uses
the triangle inequality between two anchor circles: if some point could lie
on both ranging circles, the neighbor's observation supports this device's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .domain import ExperimentParams

Point = tuple[float, float]


@dataclass(frozen=True)
class NeighborView:
    """What one device knows about a neighbor: position, last range, confidence."""

    id: str
    x: float
    y: float
    dist: float
    conf: float

    def __post_init__(self):
        if self.dist < 0:
            raise ValueError("dist must be non-negative")


def confidence(rssi_dbm: float, p: ExperimentParams) -> float:
    """Map RSSI to observation confidence.

    Piecewise: saturates at max_conf above rssi_up, at min_conf below
    rssi_inf, linear 9/4 + rssi/40 between. The default thresholds are the
    unique pair making the curve continuous.
    """
    if rssi_dbm > p.rssi_up:
        return p.max_conf
    if rssi_dbm < p.rssi_inf:
        return p.min_conf
    # Clamped so float rounding at the band edges cannot step one ulp
    # outside [min_conf, max_conf].
    return min(max(9 / 4 + rssi_dbm / 40, p.min_conf), p.max_conf)


def triangle_supports(pos_a: Point, r_a: float, pos_b: Point, r_b: float) -> bool:
    """True when circles (pos_a, r_a) and (pos_b, r_b) could share a point.

    Boundary equality counts as support. Symmetric in its two arguments.
    """
    d = math.dist(pos_a, pos_b)
    return abs(r_a - r_b) <= d <= r_a + r_b


def evidence(own: NeighborView, neighbors: list[NeighborView]) -> float:
    """Signed mean of neighbor confidences: + for supporting, - for contradicting.

    An empty neighbor list yields the neutral value 0.
    """
    if not neighbors:
        return 0.0
    total = 0.0
    for nb in neighbors:
        supports = triangle_supports((own.x, own.y), own.dist, (nb.x, nb.y), nb.dist)
        total += nb.conf if supports else -nb.conf
    return total / len(neighbors)


def update_reputation(rep: float, conf: float, evi: float,
                      p: ExperimentParams) -> float:
    """Step reputation by the four-case reward/penalty schedule, clamped.

    Supported evidence rewards (+prh for confident observations, +prl
    otherwise); contradicted evidence penalizes one unit harder than the
    corresponding reward. Result stays in [0, max_rep].
    """
    if evi >= p.thresh_ev:
        step = p.prh if conf >= p.thresh_conf else p.prl
    else:
        step = -(p.prh + 1) if conf >= p.thresh_conf else -(p.prl + 1)
    return min(max(rep + step, 0.0), p.max_rep)


def trust(conf: float, rep: float, evi: float) -> float:
    """Trust is the plain product: confidence x reputation x evidence."""
    return conf * rep * evi

"""Positions, hull-based density estimates and the cooperative interference footprint."""

import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import ZeroArea, ZeroDensity


class Position(NamedTuple):
    x: float
    y: float


def distance(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])


def centroid(points):
    """Virtual center of a group: arithmetic mean of member positions."""
    pts = list(points)
    n = len(pts)
    return Position(sum(p[0] for p in pts) / n, sum(p[1] for p in pts) / n)


@dataclass(frozen=True)
class PropagationConfig:
    """Free-space factor c (m^2) and the secondary interference limit P_int (W)."""

    fsp_constant: float
    interference_limit: float

    def __post_init__(self):
        if not (self.fsp_constant > 0 and self.interference_limit > 0):
            raise ValueError("fsp_constant and interference_limit must be > 0")


@dataclass(frozen=True)
class DensityEstimate:
    flow_density: float
    node_density: float
    flows_per_node: float


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points):
    """Andrew's monotone chain; returns hull vertices counter-clockwise."""
    pts = sorted(set((float(p[0]), float(p[1])) for p in points))
    if len(pts) <= 2:
        return pts
    lower = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def polygon_area(vertices):
    n = len(vertices)
    acc = 0.0
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        acc += x1 * y2 - x2 * y1
    return abs(acc) / 2.0


def hull_area(points, tx_range=125.0):
    """Area of the convex hull of ``points``.

    Fewer than three non-collinear points fall back to the area of a
    transmission disk so downstream densities stay finite.
    """
    hull = convex_hull(points)
    area = polygon_area(hull) if len(hull) >= 3 else 0.0
    if area <= 1e-9:
        return math.pi * tx_range**2
    return area


def flow_density(distinct_flows, area):
    if area <= 0:
        raise ZeroArea(f"area must be > 0, got {area}")
    return distinct_flows / area


def node_density(node_count, area):
    if area <= 0:
        raise ZeroArea(f"area must be > 0, got {area}")
    return node_count / area


def flows_per_node(d_f, d_n):
    if d_n == 0:
        raise ZeroDensity("node density is zero")
    return d_f / d_n


def interference_radius(weight_power_sum, tx_power, prop):
    """Radius inside which a coherent group emission exceeds P_int under free-space loss."""
    return math.sqrt(prop.fsp_constant * tx_power * weight_power_sum / prop.interference_limit)


def estimate_affected_flows(d_f, d_r):
    # kept fractional on purpose: it feeds a ratio metric
    return d_f * math.pi * d_r**2

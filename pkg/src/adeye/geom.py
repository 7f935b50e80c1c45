"""2D geometry primitives shared by the world model, sensors and safety grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a > math.pi:
        a -= TWO_PI
    elif a <= -math.pi:
        a += TWO_PI
    return a


def angle_in_interval(a: float, start: float, end: float) -> bool:
    """True if angle `a` lies in the (possibly wrapping) interval [start, end]."""
    a = normalize_angle(a)
    start = normalize_angle(start)
    end = normalize_angle(end)
    if start <= end:
        return start <= a <= end
    return a >= start or a <= end


@dataclass
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.heading)):
            raise ValidationError("pose", "coordinates must be finite")
        self.heading = normalize_angle(self.heading)


class ValidationError(ValueError):
    """Raised when a domain value violates its declared invariant."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass
class Circle:
    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValidationError("radius", f"must be > 0, got {self.radius}")


@dataclass
class ConvexPolygon:
    """Convex polygon, vertices counterclockwise, non-degenerate."""

    vertices: np.ndarray  # (n, 2)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise ValidationError("vertices", "polygon needs >= 3 2D vertices")
        self.vertices = v
        area = polygon_area(v)
        if area <= 1e-12:
            raise ValidationError("vertices", "polygon must be counterclockwise with area > 0")
        n = len(v)
        for i in range(n):
            a, b, c = v[i], v[(i + 1) % n], v[(i + 2) % n]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross < -1e-9:
                raise ValidationError("vertices", "polygon must be convex")


def polygon_area(vertices: np.ndarray) -> float:
    x = vertices[:, 0]
    y = vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def rect_corners(cx: float, cy: float, heading: float, length: float, width: float) -> np.ndarray:
    """Corners of an oriented rectangle centered at (cx, cy), counterclockwise."""
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([cx, cy])


def polygon_segments(vertices: np.ndarray) -> np.ndarray:
    """Edges of a closed polygon as an (n, 4) array of x1,y1,x2,y2."""
    nxt = np.roll(vertices, -1, axis=0)
    return np.hstack([vertices, nxt])


def point_in_convex_polygon(px: float, py: float, vertices: np.ndarray) -> bool:
    n = len(vertices)
    for i in range(n):
        ax, ay = vertices[i]
        bx, by = vertices[(i + 1) % n]
        if (bx - ax) * (py - ay) - (by - ay) * (px - ax) < 0:
            return False
    return True


def convex_polygons_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis overlap test for two convex polygons (closed boundaries count)."""
    for poly, other in ((a, b), (b, a)):
        n = len(poly)
        for i in range(n):
            ex = poly[(i + 1) % n, 0] - poly[i, 0]
            ey = poly[(i + 1) % n, 1] - poly[i, 1]
            nx, ny = -ey, ex
            pa = poly @ (nx, ny)
            pb = other @ (nx, ny)
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def circle_polygon_overlap(cx: float, cy: float, r: float, poly: np.ndarray) -> bool:
    if point_in_convex_polygon(cx, cy, poly):
        return True
    segs = polygon_segments(poly)
    return float(np.min(segment_point_distances(segs, cx, cy))) <= r


def segment_point_distances(segs: np.ndarray, px: float, py: float) -> np.ndarray:
    """Distance from point to each segment in an (n, 4) array."""
    x1, y1, x2, y2 = segs[:, 0], segs[:, 1], segs[:, 2], segs[:, 3]
    dx, dy = x2 - x1, y2 - y1
    ln2 = dx * dx + dy * dy
    ln2 = np.where(ln2 == 0, 1.0, ln2)
    t = np.clip(((px - x1) * dx + (py - y1) * dy) / ln2, 0.0, 1.0)
    qx = x1 + t * dx
    qy = y1 + t * dy
    return np.hypot(px - qx, py - qy)


def convex_polygon_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Distance between two convex polygons; 0 when they overlap."""
    if convex_polygons_overlap(a, b):
        return 0.0
    sa = polygon_segments(a)
    best = math.inf
    for px, py in b:
        best = min(best, float(np.min(segment_point_distances(sa, px, py))))
    sb = polygon_segments(b)
    for px, py in a:
        best = min(best, float(np.min(segment_point_distances(sb, px, py))))
    # vertex-vertex handled above; segment-segment minimum for non-overlapping
    # convex polygons is attained at a vertex of one of them
    return best


def circle_polygon_distance(cx: float, cy: float, r: float, poly: np.ndarray) -> float:
    if point_in_convex_polygon(cx, cy, poly):
        return 0.0
    d = float(np.min(segment_point_distances(polygon_segments(poly), cx, cy)))
    return max(0.0, d - r)


def polyline_lengths(points: np.ndarray) -> np.ndarray:
    """Cumulative arc length at each polyline point, starting at 0."""
    d = np.hypot(np.diff(points[:, 0]), np.diff(points[:, 1]))
    return np.concatenate([[0.0], np.cumsum(d)])

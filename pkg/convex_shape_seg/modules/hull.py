"""
Purpose:
    Convex hull of labeled pixels (monotone chain) and polygon rasterization.

    A pixel (x, y) belongs to a polygon iff its center, the lattice point
    (x, y), lies inside or on the polygon. Edge tests use cross products with
    no division, so lattice points exactly on an edge are always included.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

from convex_shape_seg.modules.grid import BinaryField, PixelSet


@dataclass(frozen=True)
class Polygon:
    """
    Vertices (n, 2) as (x, y), counterclockwise. One vertex is a point, two a segment.
    """

    vertices: np.ndarray

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        if len(vertices) == 0:
            raise ValueError("polygon needs at least one vertex")
        object.__setattr__(self, "vertices", vertices)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def is_degenerate(self) -> bool:
        return len(self.vertices) < 3

    @property
    def area(self) -> float:
        if self.is_degenerate:
            return 0.0
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """
        Inside-or-on test for an (n, 2) array of (x, y) points.
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return _inside_or_on(self.vertices, points[:, 0], points[:, 1])


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Union[PixelSet, np.ndarray]) -> Polygon:
    """
    Andrew's monotone chain. Collinear points are dropped; degenerate inputs
    give a single point or a segment.
    """
    coords = points.coords if isinstance(points, PixelSet) else np.asarray(points)
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    if len(coords) == 0:
        raise ValueError("no object labels")

    pts = sorted(set(map(tuple, coords.tolist())))
    if len(pts) <= 2:
        return Polygon(np.array(pts))

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

    # all points collinear: the ring collapses to the two end points
    ring = lower[:-1] + upper[:-1]
    return Polygon(np.array(ring))


# ------------------ rasterization ------------------


def _on_segment(x0, y0, x1, y1, px, py) -> np.ndarray:
    cross = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
    within_x = (px >= min(x0, x1)) & (px <= max(x0, x1))
    within_y = (py >= min(y0, y1)) & (py <= max(y0, y1))
    return (cross == 0) & within_x & within_y


def _inside_or_on(vertices: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """
    Even-odd crossing test with a half-open rule on y, plus exact on-edge inclusion.
    """
    n = len(vertices)
    inside = np.zeros(px.shape, dtype=bool)
    on_edge = np.zeros(px.shape, dtype=bool)

    if n == 1:
        x0, y0 = vertices[0]
        return (px == x0) & (py == y0)

    edges = n if n > 2 else 1
    for i in range(edges):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        on_edge |= _on_segment(x0, y0, x1, y1, px, py)
        if n < 3:
            continue
        straddles = (y0 <= py) != (y1 <= py)
        # px < x-intercept of the edge at py, written without division
        cross = (x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)
        left_of = cross * (y1 - y0) > 0
        inside ^= straddles & left_of

    return inside | on_edge


def rasterize_polygon(vertices: np.ndarray, width: int, height: int) -> np.ndarray:
    """
    Boolean mask of pixels whose centers lie inside or on a simple polygon.
    """
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 2)
    mask = np.zeros((height, width), dtype=bool)

    # scan only the bounding box
    x_lo = max(int(np.ceil(vertices[:, 0].min())), 0)
    x_hi = min(int(np.floor(vertices[:, 0].max())), width - 1)
    y_lo = max(int(np.ceil(vertices[:, 1].min())), 0)
    y_hi = min(int(np.floor(vertices[:, 1].max())), height - 1)
    if x_lo > x_hi or y_lo > y_hi:
        return mask

    py, px = np.mgrid[y_lo : y_hi + 1, x_lo : x_hi + 1].astype(np.float64)
    mask[y_lo : y_hi + 1, x_lo : x_hi + 1] = _inside_or_on(vertices, px, py)
    return mask


def rasterize_hull(poly: Polygon, width: int, height: int) -> BinaryField:
    """
    Indicator of the hull: 0 on pixels covered by the polygon, 1 elsewhere.
    """
    return BinaryField.from_object_mask(rasterize_polygon(poly.vertices, width, height))

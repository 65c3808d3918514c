"""
Purpose:
    Synthetic test images with known ground truth.

    gen_phantom draws one object on a flat background, adds seeded Gaussian
    noise, and derives the label masks a user would have scribbled:
        - foreground: the object core, pixels deeper than `seed_margin` inside it
        - background: a thin ring around the convex hull of the object
    Labels never touch the hull of the object, so they can not prevent
    convexification of a nonconvex truth.
"""

import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
from scipy import ndimage

from convex_shape_seg.modules import hull
from convex_shape_seg.modules.grid import BinaryField, PixelSet, perimeter_mask

logger = logging.getLogger(__name__)

ShapeKind = Literal[
    "disc",
    "rectangle",
    "l-shape",
    "random-convex-polygon",
    "random-notched-polygon",
]
SHAPES = (
    "disc",
    "rectangle",
    "l-shape",
    "random-convex-polygon",
    "random-notched-polygon",
)


@dataclass
class PhantomSpec:
    shape: ShapeKind = "disc"
    width: int = 64
    height: int = 64
    fg_intensity: float = 200.0
    bg_intensity: float = 50.0
    noise_std: float = 0.0
    seed: int = 0
    # disc radius; half side of the rectangle / l-shape bounding square
    radius: float = 15.0
    # rectangle half height, defaults to radius
    half_height: Optional[float] = None
    # polygon vertex count (the notch adds three more)
    n_vertices: int = 8
    # a core corner sits seed_margin * sqrt(2) from the truth corner; that has to stay
    # within the solver margin s = 5 or object pixels land in the background fit
    seed_margin: float = 3.0
    ring_inner: float = 6.0
    ring_outer: float = 8.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown phantom shape '{self.shape}', expected one of {', '.join(SHAPES)}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"canvas must be non-empty, got {self.width}x{self.height}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be non-negative, got {self.noise_std}")
        if not 0 <= self.ring_inner < self.ring_outer:
            raise ValueError("ring_inner must be non-negative and below ring_outer")
        if self.n_vertices < 3:
            raise ValueError(f"a polygon needs at least 3 vertices, got {self.n_vertices}")

    @property
    def center(self) -> Tuple[float, float]:
        return (self.width - 1) / 2.0, (self.height - 1) / 2.0


# ------------------ random polygons ------------------


def _check_fits(spec: PhantomSpec, half_w: float, half_h: float):
    cx, cy = spec.center
    if cx - half_w < 0 or cx + half_w > spec.width - 1 or cy - half_h < 0 or cy + half_h > spec.height - 1:
        raise ValueError(
            f"{spec.shape} of half extent {half_w:g}x{half_h:g} does not fit the {spec.width}x{spec.height} canvas"
        )


def random_convex_polygon(
    rng: np.random.Generator,
    center: Tuple[float, float],
    r_min: float,
    r_max: float,
    n: int = 8,
) -> hull.Polygon:
    """
    Hull of n points, one per angular sector, at radii drawn from [r_min, r_max].
    """
    sectors = 2.0 * math.pi / n
    angles = (np.arange(n) + rng.uniform(0.1, 0.9, size=n)) * sectors
    radii = rng.uniform(r_min, r_max, size=n)
    points = np.column_stack(
        [center[0] + radii * np.cos(angles), center[1] + radii * np.sin(angles)]
    )
    return hull.convex_hull(points)


def random_notched_polygon(
    rng: np.random.Generator,
    center: Tuple[float, float],
    r_min: float,
    r_max: float,
    n: int = 8,
) -> hull.Polygon:
    """
    Polygon inscribed in a circle with a V-shaped notch cut in from one side.

    The notch mouth spans 50-70 degrees of the circle and goes 10-14 pixels
    deep, so its opening lies between about 65 and 115 degrees and the
    reentrant vertex has an interior angle above 240 degrees.
    """
    R = rng.uniform(r_min, r_max)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    delta = math.radians(rng.uniform(25.0, 35.0))
    depth = rng.uniform(10.0, 14.0)
    if R * math.cos(delta) - depth <= 1.0:
        raise ValueError(f"notch of depth {depth:.1f} does not fit a polygon of radius {R:.1f}")

    # remaining vertices keep 10 degrees clear of the notch mouth
    gap = math.radians(10.0)
    start, stop = phi + delta + gap, phi + 2.0 * math.pi - delta - gap
    angles = np.sort(rng.uniform(start, stop, size=n))

    def on_circle(theta):
        return center[0] + R * math.cos(theta), center[1] + R * math.sin(theta)

    apex_distance = R * math.cos(delta) - depth
    apex = (center[0] + apex_distance * math.cos(phi), center[1] + apex_distance * math.sin(phi))

    # counterclockwise: mouth end, the arc, mouth start, apex
    vertices = [on_circle(phi + delta)]
    vertices += [on_circle(theta) for theta in angles]
    vertices += [on_circle(phi - delta), apex]
    return hull.Polygon(np.array(vertices))


# ------------------ truth masks ------------------


def _truth_mask(spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    cx, cy = spec.center
    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width]
    r = spec.radius

    if spec.shape == "disc":
        _check_fits(spec, r, r)
        return (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r

    if spec.shape == "rectangle":
        half_h = spec.half_height if spec.half_height is not None else r
        _check_fits(spec, r, half_h)
        return (np.abs(xs - cx) <= r) & (np.abs(ys - cy) <= half_h)

    if spec.shape == "l-shape":
        # square of side 2r with its upper right quadrant removed
        _check_fits(spec, r, r)
        square = (np.abs(xs - cx) <= r) & (np.abs(ys - cy) <= r)
        quadrant = (xs > cx) & (ys < cy)
        return square & ~quadrant

    _check_fits(spec, r, r)
    if spec.shape == "random-convex-polygon":
        polygon = random_convex_polygon(rng, spec.center, 0.55 * r, r, spec.n_vertices)
    else:
        polygon = random_notched_polygon(rng, spec.center, 0.85 * r, r, spec.n_vertices)
    return hull.rasterize_polygon(polygon.vertices, spec.width, spec.height)


def seed_masks(truth: BinaryField, spec: PhantomSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    (foreground core, background ring) as boolean masks.
    """
    obj = truth.object_mask
    depth = ndimage.distance_transform_edt(obj)
    fg = depth > spec.seed_margin
    if not fg.any():
        # thin object: fall back to its deepest pixel
        fg = np.zeros_like(obj)
        fg[np.unravel_index(np.argmax(depth), depth.shape)] = True
        logger.warning(f"object thinner than seed_margin={spec.seed_margin}, using a single seed pixel")

    polygon = hull.convex_hull(PixelSet.from_mask(perimeter_mask(truth)))
    hull_mask = hull.rasterize_polygon(polygon.vertices, truth.width, truth.height)
    distance = ndimage.distance_transform_edt(~hull_mask)
    bg = (distance > spec.ring_inner) & (distance <= spec.ring_outer)
    return fg, bg


def gen_phantom(spec: PhantomSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray, BinaryField]:
    """
    Returns (image uint8 (H, W), fg_mask, bg_mask, ground truth u).
    """
    rng = np.random.default_rng(spec.seed)
    obj = _truth_mask(spec, rng)
    if not obj.any():
        raise ValueError(f"{spec.shape} phantom rasterized to an empty object")
    truth = BinaryField.from_object_mask(obj)

    image = np.where(obj, spec.fg_intensity, spec.bg_intensity).astype(np.float64)
    if spec.noise_std > 0:
        image = image + rng.normal(0.0, spec.noise_std, size=image.shape)
    image = np.clip(np.rint(image), 0, 255).astype(np.uint8)

    fg, bg = seed_masks(truth, spec)
    logger.debug(
        f"phantom {spec.shape}: {truth.object_count} object pixels, {fg.sum()} fg / {bg.sum()} bg seeds"
    )
    return image, fg, bg, truth

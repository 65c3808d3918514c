"""
Purpose:
    Evaluate the convexity constraint field
        C_r(u) = u * (b_r * u) - u / 2
    and provide geometric convexity checks that do not depend on it.

    The object {u = 0} is convex iff C_r(u) >= 0 everywhere for every radius r.
    On the lattice a convex raster keeps C_r(u) >= 1/(2N) off the object, so
    all assertions here carry the slack 1/(2N) of the kernel in use.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Tuple

import numpy as np

from convex_shape_seg.modules import hull
from convex_shape_seg.modules.conv import (
    BACKGROUND_PAD,
    Kernel,
    convolve_values,
    make_disc_kernel,
)
from convex_shape_seg.modules.grid import BinaryField, PixelSet, ScalarField, perimeter_mask

logger = logging.getLogger(__name__)

DEFAULT_CONVEXITY_TOLERANCE = 0.01


@dataclass(frozen=True)
class ConstraintField:
    radius: float
    values: ScalarField

    @property
    def min(self) -> float:
        return float(self.values.values.min())


def constraint_values(u: BinaryField, disc_conv: np.ndarray) -> np.ndarray:
    """
    C_r(u) from an already computed b_r * u. The prefactor is always the strict indicator.
    """
    strict = u.as_float()
    return strict * disc_conv - 0.5 * strict


def constraint_field(u: BinaryField, kernel: Kernel, ternary: bool = True) -> ConstraintField:
    """
    C_r(u) per pixel. With `ternary` the object perimeter enters the convolution as 0.5.
    """
    if kernel.kind != "disc":
        raise ValueError("constraint requires radial kernel")
    conv_input = u.ternary_view().values if ternary else u.as_float()
    disc_conv = convolve_values(conv_input, kernel, BACKGROUND_PAD)
    return ConstraintField(radius=kernel.radius, values=ScalarField(constraint_values(u, disc_conv)))


def violations_by_radius(
    u: BinaryField, radii: Iterable[float], ternary: bool = True
) -> Dict[float, float]:
    return {
        float(r): constraint_field(u, make_disc_kernel(r), ternary=ternary).min for r in radii
    }


def min_violation(u: BinaryField, radii: Iterable[float], ternary: bool = True) -> float:
    """
    Min over radii and pixels of C_r(u). Non-negative certifies the discrete constraint set.
    """
    radii = list(radii)
    if not radii:
        raise ValueError("at least one radius is required")
    return min(violations_by_radius(u, radii, ternary=ternary).values())


def discretization_slack(radii: Iterable[float]) -> float:
    """
    1/(2 N_min) for the smallest disc among the radii.
    """
    return make_disc_kernel(min(radii)).slack


def half_ball_test(
    D: BinaryField, r: float, x: Tuple[int, int], ternary: bool = False
) -> float:
    """
    Fraction of the lattice disc B_r(x) lying in the background D^c.

    x has to be a perimeter pixel of the object. Outside the image counts as
    background. With `ternary` perimeter pixels count half, which makes a
    straight edge read exactly one half.
    """
    px, py = x
    perimeter = perimeter_mask(D)
    if not (0 <= px < D.width and 0 <= py < D.height) or not perimeter[py, px]:
        raise ValueError(f"pixel {x} is not on the object boundary")

    kernel = make_disc_kernel(r)
    k = kernel.half_width
    background = D.as_float()
    if ternary:
        background[perimeter] = 0.5
    padded = np.pad(background, k, mode="constant", constant_values=1.0)
    window = padded[py : py + kernel.size, px : px + kernel.size]
    support = kernel.support
    return float((window * support).sum() / support.sum())


def within_slack(violations: Mapping[float, float]) -> bool:
    """
    True when min C_r(u) >= -1/(2 N_min) for every radius: the object passes each
    disc test up to the resolution of the smallest lattice disc. Vacuous without radii.
    """
    if not violations:
        return True
    slack = discretization_slack(violations)
    return min(violations.values()) >= -slack - 1e-12


def raster_hull(D: BinaryField) -> BinaryField:
    """
    Indicator of the pixels inside or on the convex hull of the object, the
    discretely convex set spanned by D.
    """
    # the hull of a pixel set is the hull of its perimeter
    polygon = hull.convex_hull(PixelSet.from_mask(perimeter_mask(D)))
    return hull.rasterize_hull(polygon, D.width, D.height)


def convexity_score(D: BinaryField) -> float:
    """
    |raster hull(D) minus D| / |D|.
    """
    obj = D.object_mask
    if not obj.any():
        raise ValueError("empty object region")
    hull_mask = raster_hull(D).object_mask
    return np.count_nonzero(hull_mask & ~obj) / np.count_nonzero(obj)


def is_convex_discrete(
    D: BinaryField, tol: float = DEFAULT_CONVEXITY_TOLERANCE
) -> Tuple[bool, float]:
    score = convexity_score(D)
    logger.debug(f"convexity score {score:.5f} (tol {tol})")
    return score <= tol, score

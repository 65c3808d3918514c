"""
Purpose:
    Lattice containers shared by every other module.
    Fields are indexed [y, x] (row-major) on a unit mesh, so a pixel (x, y)
    lives at values[y, x].

    The binary indicator u follows the segmentation convention:
        u = 1 on the background, u = 0 on the object.
"""

from dataclasses import dataclass
from typing import Iterable, Iterator, Tuple

import numpy as np
from scipy import ndimage

# 4-connectivity cross used for perimeter extraction
FOUR_NEIGHBORS = ndimage.generate_binary_structure(2, 1)


# ------------------ containers ------------------


@dataclass(frozen=True)
class ScalarField:
    """
    Real-valued function on the pixel lattice (forces, convolutions, multipliers).
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise ValueError(f"ScalarField needs a non-empty 2D array, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("ScalarField values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def filled(cls, width: int, height: int, value: float) -> "ScalarField":
        return cls(np.full((height, width), float(value)))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def at(self, x: int, y: int) -> float:
        return float(self.values[y, x])


@dataclass(frozen=True)
class BinaryField:
    """
    {0, 1} indicator on the lattice. 1 = background, 0 = object.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2 or values.size == 0:
            raise ValueError(f"BinaryField needs a non-empty 2D array, got {values.shape}")
        if not np.all((values == 0) | (values == 1)):
            raise ValueError("BinaryField values must be 0 or 1")
        values = values.astype(np.uint8, copy=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def background(cls, width: int, height: int) -> "BinaryField":
        return cls(np.ones((height, width), dtype=np.uint8))

    @classmethod
    def from_object_mask(cls, mask: np.ndarray) -> "BinaryField":
        """
        Build u from a boolean object mask (True = object -> u = 0).
        """
        return cls((~np.asarray(mask, dtype=bool)).astype(np.uint8))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def object_mask(self) -> np.ndarray:
        return self.values == 0

    @property
    def object_count(self) -> int:
        return int(np.count_nonzero(self.values == 0))

    def as_float(self) -> np.ndarray:
        return self.values.astype(np.float64)

    def ternary_view(self) -> ScalarField:
        """
        u with the object perimeter set to 0.5.
        Only meant as a convolution input, the strict field stays the indicator.
        """
        ternary = self.as_float()
        ternary[perimeter_mask(self)] = 0.5
        return ScalarField(ternary)


@dataclass(frozen=True)
class PixelSet:
    """
    Unique in-bounds lattice coordinates, stored as an (n, 2) array of (x, y).
    """

    coords: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 2)
        if coords.size:
            xs, ys = coords[:, 0], coords[:, 1]
            if xs.min() < 0 or ys.min() < 0 or xs.max() >= self.width or ys.max() >= self.height:
                raise ValueError("PixelSet coordinates out of bounds")
            if len(np.unique(coords, axis=0)) != len(coords):
                raise ValueError("PixelSet coordinates must be unique")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "PixelSet":
        mask = np.asarray(mask, dtype=bool)
        ys, xs = np.nonzero(mask)
        return cls(np.column_stack([xs, ys]), width=mask.shape[1], height=mask.shape[0])

    @classmethod
    def from_points(
        cls, points: Iterable[Tuple[int, int]], width: int, height: int
    ) -> "PixelSet":
        return cls(np.array(list(points), dtype=np.int64), width=width, height=height)

    def to_mask(self) -> np.ndarray:
        mask = np.zeros((self.height, self.width), dtype=bool)
        if len(self):
            mask[self.coords[:, 1], self.coords[:, 0]] = True
        return mask

    def __len__(self) -> int:
        return len(self.coords)

    def __iter__(self) -> Iterator[Tuple[int, int]]:
        for x, y in self.coords:
            yield int(x), int(y)

    def __contains__(self, point) -> bool:
        x, y = point
        if not (0 <= x < self.width and 0 <= y < self.height):
            return False
        return bool(np.any((self.coords[:, 0] == x) & (self.coords[:, 1] == y)))


# ------------------ pixel-set operations ------------------


def perimeter_mask(u: BinaryField) -> np.ndarray:
    """
    Object pixels with a 4-neighbor on the background. Outside the image counts as background.
    """
    obj = u.object_mask
    interior = ndimage.binary_erosion(obj, structure=FOUR_NEIGHBORS, border_value=0)
    return obj & ~interior


def boundary_extract(u: BinaryField) -> PixelSet:
    """
    Perimeter of the object {u = 0}, bwperim style with 4-connectivity.
    """
    return PixelSet.from_mask(perimeter_mask(u))


def distance_beyond(D: BinaryField, s: float) -> PixelSet:
    """
    Pixels whose Euclidean distance to the nearest object pixel of D is strictly larger than s.
    """
    if s < 0:
        raise ValueError(f"margin must be non-negative, got {s}")
    return PixelSet.from_mask(distance_beyond_mask(D, s))


def distance_beyond_mask(D: BinaryField, s: float) -> np.ndarray:
    obj = D.object_mask
    if not obj.any():
        raise ValueError("empty object region")
    # distance from every pixel to the nearest object pixel (object pixels are the zeros)
    distance = ndimage.distance_transform_edt(~obj)
    return distance > s


def relative_variation(v1: BinaryField, v2: BinaryField) -> float:
    """
    R(v1, v2) = sum |v2 - v1| / sum v1, with v1 as the reference field.
    """
    if v1.shape != v2.shape:
        raise ValueError(f"field shapes differ: {v1.shape} vs {v2.shape}")
    denominator = int(np.count_nonzero(v1.values))
    if denominator == 0:
        raise ValueError("zero denominator in relative variation")
    changed = int(np.count_nonzero(v1.values != v2.values))
    return changed / denominator


def jaccard(a: BinaryField, b: BinaryField) -> float:
    """
    Intersection over union of the two object regions.
    """
    if a.shape != b.shape:
        raise ValueError(f"field shapes differ: {a.shape} vs {b.shape}")
    obj_a, obj_b = a.object_mask, b.object_mask
    union = np.count_nonzero(obj_a | obj_b)
    if union == 0:
        return 1.0
    return np.count_nonzero(obj_a & obj_b) / union

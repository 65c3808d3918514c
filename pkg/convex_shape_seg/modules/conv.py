"""
Purpose:
    Kernel construction and 2D convolution.
    `convolve` runs through scipy's FFT convolution, `convolve_direct` is the
    literal offset-by-offset summation used to check it.

    Both compute
        out(x) = sum_o w(o) * field(x + o)
    with out-of-domain reads resolved by a Padding.
"""

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.signal import fftconvolve

from convex_shape_seg.modules.grid import ScalarField

KernelKind = Literal["disc", "gaussian"]


@dataclass(frozen=True)
class Padding:
    """
    How reads outside the image are resolved: a constant value, or the nearest edge pixel.
    """

    mode: Literal["constant", "edge"]
    value: float = 0.0

    def apply(self, values: np.ndarray, width: int) -> np.ndarray:
        if self.mode == "constant":
            return np.pad(values, width, mode="constant", constant_values=self.value)
        return np.pad(values, width, mode="edge")


# constraint convolutions b_r * u: the image exterior is background
BACKGROUND_PAD = Padding("constant", 1.0)
# multipliers vanish outside the image
ZERO_PAD = Padding("constant", 0.0)
# length term and band statistic: no artificial edge at the border
EDGE_PAD = Padding("edge")


@dataclass(frozen=True)
class Kernel:
    """
    Nonnegative weights on a (2k+1) x (2k+1) stencil.
    """

    weights: np.ndarray
    kind: KernelKind
    radius: float

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 2 or weights.shape[0] != weights.shape[1] or weights.shape[0] % 2 == 0:
            raise ValueError(f"kernel stencil must be odd and square, got {weights.shape}")
        if np.any(weights < 0):
            raise ValueError("kernel weights must be non-negative")
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def half_width(self) -> int:
        return self.size // 2

    @property
    def support(self) -> np.ndarray:
        """
        0/1 stencil of the offsets carrying weight.
        """
        return (self.weights > 0).astype(np.float64)

    @property
    def count(self) -> int:
        """
        Number of lattice offsets carrying weight (N for a disc).
        """
        return int(np.count_nonzero(self.weights))

    @property
    def slack(self) -> float:
        """
        Lattice discretization slack 1/(2N).
        """
        return 1.0 / (2 * self.count)


# ------------------ kernel builders ------------------


def make_disc_kernel(r: float) -> Kernel:
    """
    Uniform disc b_r: weight 1/N on every offset with dx^2 + dy^2 <= r^2.

    N is the lattice count of the disc, so the weights sum to exactly one.
    """
    if r < 1:
        raise ValueError("radius below mesh size")
    k = math.ceil(r)
    dy, dx = np.mgrid[-k : k + 1, -k : k + 1]
    inside = (dx * dx + dy * dy) <= r * r
    weights = inside / np.count_nonzero(inside)
    return Kernel(weights=weights, kind="disc", radius=float(r))


def make_gaussian_kernel(size: int = 5, sigma: float = 0.5) -> Kernel:
    """
    fspecial('gaussian', size, sigma): exp(-(dx^2 + dy^2) / (2 sigma^2)) normalized to sum one.
    """
    if size < 3 or size % 2 == 0:
        raise ValueError(f"gaussian kernel size must be odd and >= 3, got {size}")
    if sigma <= 0:
        raise ValueError(f"gaussian sigma must be positive, got {sigma}")
    k = size // 2
    dy, dx = np.mgrid[-k : k + 1, -k : k + 1]
    weights = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
    weights[weights < np.finfo(np.float64).eps * weights.max()] = 0.0
    weights /= weights.sum()
    return Kernel(weights=weights, kind="gaussian", radius=float(sigma))


# ------------------ convolution ------------------


def _check_fits(field: ScalarField, kernel: Kernel):
    if kernel.size > field.width or kernel.size > field.height:
        raise ValueError(
            f"kernel of size {kernel.size} is larger than the {field.width}x{field.height} field"
        )


def convolve_values(values: np.ndarray, kernel: Kernel, pad: Padding) -> np.ndarray:
    """
    Array-level fast path, used inside the solver loop.
    """
    k = kernel.half_width
    padded = pad.apply(values, k)
    # correlation == convolution with the flipped stencil
    return fftconvolve(padded, kernel.weights[::-1, ::-1], mode="valid")


def convolve(field: ScalarField, kernel: Kernel, pad: Padding = BACKGROUND_PAD) -> ScalarField:
    _check_fits(field, kernel)
    return ScalarField(convolve_values(field.values, kernel, pad))


def convolve_direct(field: ScalarField, kernel: Kernel, pad: Padding = BACKGROUND_PAD) -> ScalarField:
    """
    Reference implementation: accumulate every stencil offset in turn.
    """
    _check_fits(field, kernel)
    k = kernel.half_width
    padded = pad.apply(field.values, k)
    out = np.zeros_like(field.values)
    height, width = field.shape
    for j in range(kernel.size):
        for i in range(kernel.size):
            weight = kernel.weights[j, i]
            if weight == 0.0:
                continue
            # offset (dx, dy) = (i - k, j - k); padded index = index + k + offset
            out += weight * padded[j : j + height, i : i + width]
    return ScalarField(out)

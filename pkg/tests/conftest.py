import numpy as np
import pytest

from convex_shape_seg.modules.grid import BinaryField


def _disc(width, height, cx, cy, r) -> BinaryField:
    ys, xs = np.mgrid[0:height, 0:width]
    return BinaryField.from_object_mask((xs - cx) ** 2 + (ys - cy) ** 2 <= r * r)


def _l_shape(width, height, x0, y0, size) -> BinaryField:
    """
    size x size square at (x0, y0) without its upper right quadrant.
    """
    obj = np.zeros((height, width), dtype=bool)
    obj[y0 : y0 + size, x0 : x0 + size] = True
    half = size // 2
    obj[y0 : y0 + half, x0 + half : x0 + size] = False
    return BinaryField.from_object_mask(obj)


@pytest.fixture
def disc_field():
    return _disc


@pytest.fixture
def l_shape_field():
    return _l_shape


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_tone_image():
    """
    64x64 single channel image: a disc of radius 15 at 200 on a 50 background, noise std 10.
    """
    generator = np.random.default_rng(7)
    obj = _disc(64, 64, 31.5, 31.5, 15).object_mask
    image = np.where(obj, 200.0, 50.0) + generator.normal(0.0, 10.0, size=(64, 64))
    return np.clip(image, 0, 255)[:, :, None], obj

import numpy as np
import pytest

from convex_shape_seg.modules.grid import (
    BinaryField,
    PixelSet,
    ScalarField,
    boundary_extract,
    distance_beyond,
    jaccard,
    perimeter_mask,
    relative_variation,
)


# ------------------ containers ------------------


def test_scalar_field_validates_shape_and_values():
    with pytest.raises(ValueError):
        ScalarField(np.zeros(5))
    with pytest.raises(ValueError):
        ScalarField(np.array([[0.0, np.nan]]))
    field = ScalarField.filled(3, 2, 1.5)
    assert field.shape == (2, 3)
    assert field.width == 3 and field.height == 2
    assert field.at(2, 1) == 1.5


def test_binary_field_rejects_non_binary_values():
    with pytest.raises(ValueError, match="0 or 1"):
        BinaryField(np.array([[0, 2]]))
    with pytest.raises(ValueError):
        BinaryField(np.array([[0.5, 1.0]]))


def test_binary_field_object_convention():
    mask = np.zeros((4, 5), dtype=bool)
    mask[1:3, 1:4] = True
    u = BinaryField.from_object_mask(mask)
    assert u.values[1, 1] == 0
    assert u.values[0, 0] == 1
    assert u.object_count == 6
    assert np.array_equal(u.object_mask, mask)
    assert BinaryField.background(5, 4).object_count == 0


def test_ternary_view_marks_perimeter_with_half():
    mask = np.zeros((9, 9), dtype=bool)
    mask[2:7, 2:7] = True
    u = BinaryField.from_object_mask(mask)
    ternary = u.ternary_view().values

    assert np.count_nonzero(ternary == 0.5) == 16
    assert np.count_nonzero(ternary == 0.0) == 9
    assert np.count_nonzero(ternary == 1.0) == 81 - 25
    # the strict field is untouched
    assert set(np.unique(u.values)) == {0, 1}


def test_pixel_set_bounds_and_uniqueness():
    with pytest.raises(ValueError, match="out of bounds"):
        PixelSet.from_points([(4, 0)], width=4, height=4)
    with pytest.raises(ValueError, match="unique"):
        PixelSet.from_points([(1, 1), (1, 1)], width=4, height=4)

    pixels = PixelSet.from_points([(0, 0), (3, 2)], width=4, height=3)
    mask = pixels.to_mask()
    assert mask.shape == (3, 4)
    assert mask[2, 3] and mask[0, 0]
    assert (3, 2) in pixels and (2, 3) not in pixels
    assert sorted(pixels) == [(0, 0), (3, 2)]
    assert len(PixelSet.from_mask(mask)) == 2


# ------------------ pixel-set operations ------------------


def test_single_pixel_is_its_own_perimeter():
    mask = np.zeros((5, 5), dtype=bool)
    mask[2, 2] = True
    u = BinaryField.from_object_mask(mask)
    assert np.array_equal(perimeter_mask(u), mask)
    assert list(boundary_extract(u)) == [(2, 2)]


def test_perimeter_at_image_border():
    # the image exterior counts as background
    u = BinaryField(np.zeros((4, 4), dtype=np.uint8))
    perimeter = perimeter_mask(u)
    assert np.count_nonzero(perimeter) == 12
    assert not perimeter[1:3, 1:3].any()


def test_distance_beyond_is_strict():
    mask = np.zeros((11, 11), dtype=bool)
    mask[5, 5] = True
    far = distance_beyond(BinaryField.from_object_mask(mask), 2.0)
    assert (5, 8) in far
    assert (5, 7) not in far
    assert (5, 5) not in far


def test_distance_beyond_errors():
    with pytest.raises(ValueError, match="empty object region"):
        distance_beyond(BinaryField.background(4, 4), 1.0)
    u = BinaryField.from_object_mask(np.eye(4, dtype=bool))
    with pytest.raises(ValueError):
        distance_beyond(u, -1.0)


def test_relative_variation():
    v1 = BinaryField.background(4, 4)
    values = v1.values.copy()
    values[0, :] = 0
    v2 = BinaryField(values)
    assert relative_variation(v1, v2) == pytest.approx(0.25)
    assert relative_variation(v1, v1) == 0.0


def test_relative_variation_errors():
    zeros = BinaryField(np.zeros((3, 3), dtype=np.uint8))
    with pytest.raises(ValueError, match="zero denominator"):
        relative_variation(zeros, BinaryField.background(3, 3))
    with pytest.raises(ValueError):
        relative_variation(BinaryField.background(3, 3), BinaryField.background(4, 3))


def test_jaccard(disc_field):
    a = disc_field(32, 32, 15, 15, 6)
    assert jaccard(a, a) == 1.0
    b = BinaryField.background(32, 32)
    assert jaccard(a, b) == 0.0


def test_boundary_of_block_and_of_nothing():
    mask = np.zeros((7, 7), dtype=bool)
    mask[2:5, 2:5] = True
    boundary = boundary_extract(BinaryField.from_object_mask(mask))
    assert len(boundary) == 8
    assert (3, 3) not in boundary
    assert len(boundary_extract(BinaryField.background(7, 7))) == 0


def test_distance_beyond_limits():
    mask = np.zeros((20, 20), dtype=bool)
    mask[10, 10] = True
    u = BinaryField.from_object_mask(mask)
    assert np.array_equal(distance_beyond(u, 0.0).to_mask(), ~mask)
    assert len(distance_beyond(u, float(np.hypot(20, 20)))) == 0

    ys, xs = np.mgrid[0:20, 0:20]
    expected = (xs - 10) ** 2 + (ys - 10) ** 2 > 25
    assert np.array_equal(distance_beyond(u, 5.0).to_mask(), expected)


def test_relative_variation_of_complement():
    values = np.zeros((8, 8), dtype=np.uint8)
    values.flat[:40] = 1
    v1 = BinaryField(values)
    v2 = BinaryField(1 - values)
    assert relative_variation(v1, v2) == pytest.approx(1.6)


def test_distance_beyond_shrinks_as_the_margin_grows(disc_field):
    u = disc_field(64, 64, 20.0, 40.0, 7)
    margins = [0.0, 1.0, 2.5, 5.0, 10.0, 20.0]
    regions = [distance_beyond(u, s).to_mask() for s in margins]
    for wide, narrow in zip(regions, regions[1:]):
        assert not np.any(narrow & ~wide)
    assert np.count_nonzero(regions[0]) > np.count_nonzero(regions[-1])

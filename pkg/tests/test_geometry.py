import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from objground.errors import DimensionError, GeometryError, ObjGroundError
from objground.geometry import (
    Box,
    Mask,
    decode_rle,
    encode_rle,
    giou,
    hull,
    intersection_area,
    iou,
    mask_intersection_area,
    mask_to_box,
    union_box,
)

coord = st.floats(min_value=-100, max_value=100, allow_nan=False)


@st.composite
def boxes(draw, min_side=0.0):
    x1, y1 = draw(coord), draw(coord)
    w = draw(st.floats(min_value=min_side, max_value=80))
    h = draw(st.floats(min_value=min_side, max_value=80))
    return Box(x1, y1, x1 + w, y1 + h)


def test_iou_hand_values():
    a, b = Box(0, 0, 2, 2), Box(1, 1, 3, 3)
    # inter 1, union 7, hull 9
    assert iou(a, b) == pytest.approx(1 / 7, abs=1e-15)
    assert giou(a, b) == pytest.approx(1 / 7 - 2 / 9, abs=1e-15)


def test_giou_disjoint_and_touching():
    a, b = Box(0, 0, 1, 1), Box(2, 0, 3, 1)
    assert iou(a, b) == 0.0
    # union 2, hull 3
    assert giou(a, b) == pytest.approx(-1 / 3)
    touching = Box(1, 0, 2, 1)
    assert iou(a, touching) == 0.0
    assert giou(a, touching) == 0.0


def test_identical_boxes():
    a = Box(3, 4, 10, 12)
    assert iou(a, a) == 1.0
    assert giou(a, a) == 1.0


def test_both_degenerate_raises():
    with pytest.raises(GeometryError):
        iou(Box(1, 1, 1, 1), Box(2, 2, 2, 5))
    with pytest.raises(GeometryError):
        giou(Box(1, 1, 1, 1), Box(1, 1, 1, 1))


def test_one_degenerate_is_zero():
    assert iou(Box(0, 0, 0, 5), Box(0, 0, 4, 4)) == 0.0


def test_invalid_box_rejected():
    with pytest.raises(GeometryError):
        Box(2, 0, 1, 1)
    with pytest.raises(GeometryError):
        Box(0, 0, float("nan"), 1)
    with pytest.raises(GeometryError):
        Box.from_list([0, 0, 1])


def test_union_box_and_hull():
    assert union_box([Box(0, 0, 1, 1), Box(5, 2, 6, 9)]) == Box(0, 0, 6, 9)
    assert hull(Box(0, 0, 1, 1), Box(5, 2, 6, 9)) == Box(0, 0, 6, 9)
    with pytest.raises(ObjGroundError):
        union_box([])


@settings(max_examples=300, deadline=None)
@given(boxes(min_side=0.01), boxes(min_side=0.01))
def test_iou_giou_properties(a, b):
    v, g = iou(a, b), giou(a, b)
    assert 0.0 <= v <= 1.0
    assert -1.0 <= g <= v + 1e-12
    assert v == pytest.approx(iou(b, a), abs=1e-12)
    assert g == pytest.approx(giou(b, a), abs=1e-12)
    assert intersection_area(a, b) <= min(a.area, b.area) + 1e-9


@settings(max_examples=100, deadline=None)
@given(boxes(min_side=0.01))
def test_contained_box_iou_is_area_ratio(a):
    inner = Box(a.x1, a.y1, a.x1 + a.width / 2, a.y2)
    assert iou(a, inner) == pytest.approx(inner.area / a.area, rel=1e-9)
    assert giou(a, inner) == pytest.approx(iou(a, inner), rel=1e-9)


def test_rle_column_major_hand_example():
    grid = np.array([[0, 1, 1],
                     [0, 1, 0]], dtype=bool)
    # Column-major walk: 0 0 | 1 1 | 1 0
    assert encode_rle(grid) == [2, 3, 1]
    assert np.array_equal(decode_rle([2, 3, 1], 3, 2), grid)


def test_rle_starts_with_background_run():
    grid = np.ones((2, 2), dtype=bool)
    assert encode_rle(grid) == [0, 4]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.data())
def test_rle_round_trip(h, w, data):
    bits = data.draw(st.lists(st.booleans(), min_size=h * w, max_size=h * w))
    grid = np.array(bits, dtype=bool).reshape(h, w)
    runs = encode_rle(grid)
    assert sum(runs) == h * w
    assert np.array_equal(decode_rle(runs, w, h), grid)
    m = Mask(w, h, runs)
    assert m.area == int(grid.sum())
    assert Mask.from_grid(grid) == m


def test_mask_validates_run_total():
    with pytest.raises(DimensionError):
        Mask(2, 2, [1, 2])


def test_mask_depth_ordering_follows_rle():
    depth_img = np.arange(6, dtype=float).reshape(2, 3)
    grid = np.array([[1, 0, 1],
                     [1, 1, 0]], dtype=bool)
    m = Mask.from_grid(grid, depth_img)
    # Column-major foreground: (0,0)=0, (1,0)=3, (1,1)=4, (0,2)=2
    assert m.depth.tolist() == [0.0, 3.0, 4.0, 2.0]


def test_mask_to_box_half_open():
    m = Mask.from_box(10, 8, Box(2, 3, 5, 7))
    assert mask_to_box(m) == Box(2, 3, 5, 7)
    assert m.area == 12


def test_mask_intersection():
    a = Mask.from_box(10, 10, Box(0, 0, 4, 4))
    b = Mask.from_box(10, 10, Box(2, 2, 6, 6))
    assert mask_intersection_area(a, b) == 4


def test_box_coerces_to_float():
    b = Box(1, 2, 3, 4)
    assert b.to_list() == [1.0, 2.0, 3.0, 4.0]
    assert all(type(c) is float for c in b.to_list())
    with pytest.raises(GeometryError):
        Box.from_list(["a", 0, 1, 1])

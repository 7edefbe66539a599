import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from occtrack.errors import InvalidBox
from occtrack.geometry import BBox, aspect_penalty, ciou_loss, iou, iou_distance, iou_matrix

coord = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
size = st.floats(1e-2, 1e3, allow_nan=False, allow_infinity=False)
boxes = st.builds(BBox, coord, coord, size, size)


def test_iou_identical():
    assert iou(BBox(0, 0, 2, 2), BBox(0, 0, 2, 2)) == 1.0


def test_iou_disjoint():
    assert iou(BBox(0, 0, 1, 1), BBox(5, 5, 1, 1)) == 0.0


def test_iou_half_shifted():
    # intersection 1x2 = 2, union 4 + 4 - 2 = 6
    assert iou(BBox(0, 0, 2, 2), BBox(1, 0, 2, 2)) == pytest.approx(1 / 3, abs=1e-15)


def test_edge_touching_has_no_overlap():
    assert iou(BBox(0, 0, 1, 1), BBox(1, 0, 1, 1)) == 0.0


def test_iou_distance_examples():
    assert iou_distance(BBox(0, 0, 2, 2), BBox(0, 0, 2, 2)) == 0.0
    assert iou_distance(BBox(0, 0, 1, 1), BBox(5, 5, 1, 1)) == 1.0
    assert iou_distance(BBox(0, 0, 2, 2), BBox(1, 0, 2, 2)) == pytest.approx(2 / 3, abs=1e-15)


@pytest.mark.parametrize("args", [(0, 0, 0, 1), (0, 0, 1, -1), (math.nan, 0, 1, 1),
                                  (0, math.inf, 1, 1)])
def test_invalid_boxes_rejected(args):
    with pytest.raises(InvalidBox):
        BBox(*args)


def test_ciou_identical_is_zero():
    assert ciou_loss(BBox(3, 4, 5, 6), BBox(3, 4, 5, 6)) == 0.0


def test_ciou_concentric_same_aspect():
    # IoU = 1/4, centers coincide, equal aspect => loss = 1 - 1/4
    assert ciou_loss(BBox(-0.5, -0.5, 1, 1), BBox(-1, -1, 2, 2)) == pytest.approx(0.75, abs=1e-15)


def test_ciou_disjoint_same_shape():
    pred, gt = BBox(0, 0, 2, 2), BBox(4, 0, 2, 2)
    # centers (1,1) and (5,1): rho^2 = 16; enclosing box 6x2: c^2 = 40
    assert ciou_loss(pred, gt) == pytest.approx(1 + 16 / 40, abs=1e-15)


def test_ciou_aspect_term_by_hand():
    pred, gt = BBox(0, 0, 2, 1), BBox(0, 0, 1, 1)
    overlap = 1 / 2
    rho2 = 0.5**2
    c2 = 2**2 + 1**2
    v = 4 / math.pi**2 * (math.atan(1) - math.atan(2)) ** 2
    expected = 1 - (overlap - rho2 / c2 - v * v / (1 - overlap + v))
    assert ciou_loss(pred, gt) == pytest.approx(expected, abs=1e-15)


def _brute_iou_matrix(a, b):
    return np.array([[iou(x, y) for y in b] for x in a])


def test_iou_matrix_matches_scalar(rng):
    from conftest import random_box

    a = [random_box(rng) for _ in range(7)]
    b = [random_box(rng) for _ in range(5)]
    ta = np.array([x.as_tlwh() for x in a])
    tb = np.array([x.as_tlwh() for x in b])
    np.testing.assert_allclose(iou_matrix(ta, tb), _brute_iou_matrix(a, b), atol=1e-12)
    assert iou_matrix(ta, np.zeros((0, 4))).shape == (7, 0)


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    x = iou(a, b)
    assert x == pytest.approx(iou(b, a), abs=1e-12)
    assert 0.0 <= x <= 1.0


@given(boxes)
def test_iou_self_is_one_and_ciou_self_is_zero(a):
    assert iou(a, a) == pytest.approx(1.0, abs=1e-12)
    assert ciou_loss(a, a) == pytest.approx(0.0, abs=1e-12)


@given(boxes, boxes)
def test_ciou_lower_bound_and_v_range(a, b):
    overlap = iou(a, b)
    (ax, ay), (bx, by) = a.center, b.center
    cw = max(a.x_right, b.x_right) - min(a.x_left, b.x_left)
    ch = max(a.y_bottom, b.y_bottom) - min(a.y_top, b.y_top)
    rho2_c2 = ((ax - bx) ** 2 + (ay - by) ** 2) / (cw**2 + ch**2)
    assert ciou_loss(a, b) >= 1 - overlap - rho2_c2 - 1e-12
    assert 0.0 <= aspect_penalty(a, b) <= 1.0


@given(boxes, boxes, coord, coord)
def test_translation_invariance(a, b, dx, dy):
    a2, b2 = a.translate(dx, dy), b.translate(dx, dy)
    assert iou(a2, b2) == pytest.approx(iou(a, b), abs=1e-6)
    assert aspect_penalty(a2, b2) == pytest.approx(aspect_penalty(a, b), abs=1e-12)
    assert ciou_loss(a2, b2) == pytest.approx(ciou_loss(a, b), abs=1e-6)

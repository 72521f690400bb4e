import numpy as np
import pytest

from src.core.errors import RleDecodeError, ShapeMismatchError
from src.core.geometry import (EMPTY_BOX, BinaryMask, Box, RleMask, box_iou, box_iou_matrix, mask_iou,
                               mask_iou_matrix, mask_to_box, rasterize_box, rle_decode, rle_encode)


def _mask(rows):
    return BinaryMask(np.array(rows, dtype=bool))


def test_box_iou_hand_cases():
    assert box_iou(Box(0, 0, 1, 1), Box(0, 0, 1, 1)) == pytest.approx(1.0)
    assert box_iou(Box(0, 0, 2, 2), Box(4, 4, 6, 6)) == 0.0
    assert box_iou(Box(0, 0, 2, 2), Box(1, 1, 3, 3)) == pytest.approx(1 / 7)


def test_box_iou_degenerate_box_is_zero():
    assert box_iou(Box(1, 1, 1, 1), Box(1, 1, 1, 1)) == 0.0
    assert box_iou(EMPTY_BOX, Box(0, 0, 3, 3)) == 0.0


def test_box_rejects_out_of_order_corners():
    with pytest.raises(ValueError):
        Box(2, 0, 1, 1)


def test_mask_iou_hand_cases():
    m = _mask([[1, 0], [1, 1]])
    assert mask_iou(m, m) == 1.0
    assert mask_iou(m, ~m) == 0.0
    # {TL, TR} vs {TR, BR}
    assert mask_iou(_mask([[1, 1], [0, 0]]), _mask([[0, 1], [0, 1]])) == pytest.approx(1 / 3)
    assert mask_iou(BinaryMask.zeros(2, 2), BinaryMask.zeros(2, 2)) == 0.0


def test_mask_iou_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        mask_iou(BinaryMask.zeros(2, 2), BinaryMask.zeros(3, 2))


def test_mask_to_box():
    full = BinaryMask(np.ones((4, 5), dtype=bool))
    assert mask_to_box(full) == Box(0, 0, 5, 4)

    single = BinaryMask.zeros(4, 5).data.copy()
    single[2, 3] = True
    assert mask_to_box(BinaryMask(single)) == Box(3, 2, 4, 3)

    corners = np.zeros((4, 5), dtype=bool)
    corners[0, 0] = corners[3, 4] = True
    assert mask_to_box(BinaryMask(corners)) == Box(0, 0, 5, 4)

    assert mask_to_box(BinaryMask.zeros(3, 3)) is EMPTY_BOX


def test_rle_hand_cases():
    assert rle_encode(BinaryMask.zeros(2, 2)).runs == (4,)
    assert rle_encode(BinaryMask(np.ones((2, 2), dtype=bool))).runs == (0, 4)
    # column-major 0,1,1,0: column 0 is (0,1), column 1 is (1,0)
    assert rle_encode(_mask([[0, 1], [1, 0]])).runs == (1, 2, 1)


def test_rle_round_trip_random_masks():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        h, w = rng.integers(1, 9, size=2)
        m = BinaryMask(rng.random((h, w)) < rng.random())
        assert rle_decode(rle_encode(m)) == m
        assert rle_decode(RleMask.from_dict(rle_encode(m).to_dict())) == m


def test_rle_decode_rejects_bad_runs():
    with pytest.raises(RleDecodeError):
        rle_decode(RleMask(2, 2, (1, 2)))
    with pytest.raises(RleDecodeError):
        rle_decode(RleMask(2, 2, (5, -1)))


def test_box_contains_mask_and_iou_properties():
    rng = np.random.default_rng(3)
    for _ in range(30):
        a = BinaryMask(rng.random((6, 6)) < 0.3)
        b = BinaryMask(rng.random((6, 6)) < 0.3)
        assert mask_iou(a, b) == pytest.approx(mask_iou(b, a))
        assert 0.0 <= mask_iou(a, b) <= 1.0
        if a.is_empty():
            continue
        boxed = rasterize_box(mask_to_box(a), 6, 6)
        assert np.all(boxed.data[a.data])
        assert mask_iou(boxed, a) <= 1.0


def test_iou_matrices_match_scalar_versions():
    boxes = np.array([[0, 0, 2, 2], [1, 1, 3, 3], [4, 4, 6, 6]], dtype=float)
    matrix = box_iou_matrix(boxes, boxes)
    for i in range(3):
        for j in range(3):
            assert matrix[i, j] == pytest.approx(box_iou(Box.from_array(boxes[i]), Box.from_array(boxes[j])))

    rng = np.random.default_rng(0)
    stack = rng.random((3, 5, 5)) < 0.4
    masks = mask_iou_matrix(stack, stack)
    for i in range(3):
        for j in range(3):
            assert masks[i, j] == pytest.approx(mask_iou(BinaryMask(stack[i]), BinaryMask(stack[j])))


def test_binary_mask_is_immutable_copy():
    raw = np.zeros((2, 2), dtype=bool)
    m = BinaryMask(raw)
    raw[0, 0] = True
    assert m.is_empty()
    with pytest.raises(ValueError):
        m.data[0, 0] = True

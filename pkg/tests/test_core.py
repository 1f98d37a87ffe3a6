import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hybridgl.core import (EmptyMaskError, MaskProposal, as_image, bbox_and_center, mask_iou,
                           order_proposals, rle_decode, rle_encode)


def test_rle_all_false():
    assert rle_encode(np.zeros((2, 2), bool)) == {"size": [2, 2], "counts": [4]}


def test_rle_all_true_starts_with_zero_run():
    assert rle_encode(np.ones((2, 2), bool)) == {"size": [2, 2], "counts": [0, 4]}


def test_rle_is_column_major():
    m = np.array([[1, 0], [1, 0]], bool)
    assert rle_encode(m)["counts"] == [0, 2, 2]
    m = np.array([[1, 1], [0, 0]], bool)
    assert rle_encode(m)["counts"] == [0, 1, 1, 1, 1]


def test_rle_round_trip_1000_seeded():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        m = rng.random((16, 16)) < rng.random()
        back = rle_decode(rle_encode(m))
        assert back.dtype == bool and np.array_equal(back, m)


@given(arrays(bool, st.tuples(st.integers(1, 9), st.integers(1, 9))))
def test_rle_round_trip_property(m):
    enc = rle_encode(m)
    assert sum(enc["counts"]) == m.size
    assert np.array_equal(rle_decode(enc), m)


def test_rle_decode_rejects_bad_sum():
    with pytest.raises(ValueError):
        rle_decode({"size": [2, 2], "counts": [1, 2]})


def test_iou_examples():
    m = np.zeros((4, 4), bool)
    m[1:3, 1:3] = True
    assert mask_iou(m, m) == 1.0
    other = np.zeros((4, 4), bool)
    other[0, 0] = True
    assert mask_iou(m, other) == 0.0
    top = np.zeros((4, 4), bool)
    top[:2] = True
    assert mask_iou(top, np.ones((4, 4), bool)) == 0.5


def test_iou_shape_mismatch():
    with pytest.raises(ValueError):
        mask_iou(np.ones((2, 2)), np.ones((2, 3)))


@settings(max_examples=50)
@given(arrays(bool, (6, 6)), arrays(bool, (6, 6)))
def test_iou_symmetric_and_bounded(a, b):
    v = mask_iou(a, b)
    assert v == mask_iou(b, a)
    assert 0.0 <= v <= 1.0


def test_bbox_single_pixel():
    m = np.zeros((8, 8), bool)
    m[5, 3] = True  # x=3, y=5
    box, center = bbox_and_center(m)
    assert tuple(box) == (3, 5, 3, 5)
    assert center == (3.0, 5.0)


def test_bbox_full():
    box, center = bbox_and_center(np.ones((10, 10), bool))
    assert tuple(box) == (0, 0, 9, 9)
    assert center == (4.5, 4.5)


def test_bbox_center_is_midpoint_not_centroid():
    m = np.zeros((10, 10), bool)
    m[:, 0:2] = True   # tall bar
    m[8:10, :] = True  # foot of the L
    _, (cx, cy) = bbox_and_center(m)
    ys, xs = np.nonzero(m)
    centroid = (xs.mean(), ys.mean())
    assert (cx, cy) == (4.5, 4.5)
    assert abs(centroid[0] - cx) > 1 and abs(centroid[1] - cy) > 1


def test_bbox_empty():
    with pytest.raises(EmptyMaskError, match="empty mask"):
        bbox_and_center(np.zeros((3, 3), bool))


def test_as_image_validates():
    with pytest.raises(ValueError):
        as_image(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        as_image(np.full((2, 2, 3), 300))
    img = as_image(np.zeros((2, 2, 3), float))
    assert img.dtype == np.uint8 and not img.flags.writeable


def test_proposal_validates_scores():
    with pytest.raises(ValueError):
        MaskProposal(np.ones((2, 2)), predicted_iou=1.5)


def test_order_is_area_descending_then_rle():
    a = np.zeros((4, 4), bool); a[0, 0] = True
    b = np.zeros((4, 4), bool); b[3, 3] = True
    c = np.zeros((4, 4), bool); c[:2, :2] = True
    ranked = order_proposals([MaskProposal(a), MaskProposal(b), MaskProposal(c)])
    assert [p.area for p in ranked] == [4, 1, 1]
    assert [p.index for p in ranked] == [0, 1, 2]
    # a (counts [0, 1, 15]) sorts before b (counts [15, 1])
    assert np.array_equal(ranked[1].mask, a)

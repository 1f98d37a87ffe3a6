"""Mask geometry, run-length encoding and the proposal record shared by every stage."""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, List, NamedTuple, Sequence, Tuple

import numpy as np


class EmptyMaskError(ValueError):
    """Raised where a downstream formula would divide by the mask area."""


def as_image(pixels) -> np.ndarray:
    """Validate an RGB image and return it as a read-only ``uint8`` (H, W, 3) array."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"image must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255):
            raise ValueError("pixel values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


def as_mask(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
    arr = np.array(arr, dtype=bool, copy=True)
    arr.flags.writeable = False
    return arr


# ---------------------------------------------------------------------------
# run-length encoding (COCO-style uncompressed, column-major)
# ---------------------------------------------------------------------------

def rle_encode(mask) -> dict:
    """Encode a binary mask as ``{"size": [H, W], "counts": [...]}``.

    Pixels are read in column-major order and the first run always counts
    false pixels, so a mask starting with a true pixel begins with ``0``.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    flat = mask.ravel(order="F")
    if flat.size == 0:
        return {"size": [int(h), int(w)], "counts": []}
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return {"size": [int(h), int(w)], "counts": [int(c) for c in runs]}


def rle_decode(rle: dict) -> np.ndarray:
    h, w = (int(v) for v in rle["size"])
    counts = np.asarray(rle["counts"], dtype=np.int64)
    if np.any(counts < 0):
        raise ValueError("RLE counts must be non-negative")
    if counts.sum() != h * w:
        raise ValueError(f"RLE counts sum to {counts.sum()}, expected {h * w}")
    values = np.zeros(len(counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    return flat.reshape((h, w), order="F")


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

class BoundingBox(NamedTuple):
    """Inclusive pixel bounds of a non-empty mask."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int


def mask_iou(a, b) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def bbox_and_center(mask) -> Tuple[BoundingBox, Tuple[float, float]]:
    """Tight bounding box and its midpoint in (x, y) pixel coordinates."""
    mask = np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise EmptyMaskError("empty mask")
    box = BoundingBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
    return box, ((box.x_min + box.x_max) / 2.0, (box.y_min + box.y_max) / 2.0)


# ---------------------------------------------------------------------------
# proposals
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MaskProposal:
    """A candidate mask with the quality estimates reported by its generator."""

    mask: np.ndarray
    predicted_iou: float = 1.0
    stability_score: float = 1.0
    index: int = -1

    def __post_init__(self):
        object.__setattr__(self, "mask", as_mask(self.mask))
        for name in ("predicted_iou", "stability_score"):
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
            object.__setattr__(self, name, value)

    @cached_property
    def area(self) -> int:
        return int(np.count_nonzero(self.mask))

    @cached_property
    def rle(self) -> dict:
        return rle_encode(self.mask)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape

    def sort_key(self):
        return (-self.area, tuple(self.rle["counts"]))

    def with_index(self, index: int) -> "MaskProposal":
        return replace(self, index=index)


def order_proposals(proposals: Iterable[MaskProposal]) -> List[MaskProposal]:
    """Canonical order: area descending, ties broken by RLE counts; indices follow."""
    ranked = sorted(proposals, key=MaskProposal.sort_key)
    return [p.with_index(i) for i, p in enumerate(ranked)]


def check_same_shape(masks: Sequence[np.ndarray], shape) -> None:
    for i, m in enumerate(masks):
        if tuple(m.shape) != tuple(shape):
            raise ValueError(f"mask {i} has shape {tuple(m.shape)}, expected {tuple(shape)}")

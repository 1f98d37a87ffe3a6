"""Per-mask image preparation for the two encoder branches."""
from __future__ import annotations

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from ..core import EmptyMaskError, as_image, as_mask, bbox_and_center


def resize_image(image: np.ndarray, side: int) -> np.ndarray:
    image = np.asarray(image, dtype=np.uint8)
    if image.shape[:2] == (side, side):
        return image
    return np.asarray(Image.fromarray(image).resize((side, side), Image.BILINEAR))


def resize_mask(mask: np.ndarray, side: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape == (side, side):
        return mask
    img = Image.fromarray(mask.astype(np.uint8) * 255)
    return np.asarray(img.resize((side, side), Image.NEAREST)) > 127


def _check(image, mask):
    image = as_image(image)
    mask = as_mask(mask)
    if image.shape[:2] != mask.shape:
        raise ValueError(f"mask shape {mask.shape} does not match image shape {image.shape[:2]}")
    return image, mask


def preprocess_local(image, mask) -> np.ndarray:
    """Zero every pixel outside the mask. No cropping."""
    image, mask = _check(image, mask)
    return np.where(mask[..., None], image, np.uint8(0))


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Per-channel Gaussian blur, kernel radius 2*sigma, reflected borders."""
    if sigma <= 0:
        return np.asarray(image, dtype=np.uint8)
    out = gaussian_filter(np.asarray(image, dtype=np.float64), sigma=(sigma, sigma, 0),
                          mode="reflect", truncate=2.0)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def preprocess_global(image, mask, sigma: float) -> np.ndarray:
    """Keep the mask region intact and replace the rest by a blurred copy of the image."""
    image, mask = _check(image, mask)
    if mask.all():
        return np.array(image)
    return np.where(mask[..., None], image, gaussian_blur(image, sigma))


def _overlap_matrix(n_pixels: int, n_cells: int) -> np.ndarray:
    """Fraction of each cell (rows) covered by each unit pixel (columns)."""
    edges = np.linspace(0.0, n_pixels, n_cells + 1)
    lo = np.maximum(edges[:-1, None], np.arange(n_pixels)[None, :])
    hi = np.minimum(edges[1:, None], np.arange(1, n_pixels + 1)[None, :])
    return np.clip(hi - lo, 0.0, None) / (n_pixels / n_cells)


def cell_coverage(mask, grid_side: int) -> np.ndarray:
    """Mean mask coverage of each cell of a ``grid_side`` x ``grid_side`` grid."""
    mask = np.asarray(mask, dtype=np.float64)
    h, w = mask.shape
    return _overlap_matrix(h, grid_side) @ mask @ _overlap_matrix(w, grid_side).T


def token_mask_of(mask, grid_side: int) -> np.ndarray:
    """Image tokens (row-major over the grid) that belong to the mask.

    A token is in when at least half its cell is covered. Masks too small to
    cover half a cell fall back to any coverage, then to the cell holding the
    bounding-box center.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMaskError("empty mask")
    cov = cell_coverage(mask, grid_side)
    bits = cov >= 0.5 - 1e-12
    if not bits.any():
        bits = cov > 1e-12
    if not bits.any():
        h, w = mask.shape
        _, (cx, cy) = bbox_and_center(mask)
        row = min(grid_side - 1, int((cy + 0.5) * grid_side / h))
        col = min(grid_side - 1, int((cx + 0.5) * grid_side / w))
        bits = np.zeros((grid_side, grid_side), dtype=bool)
        bits[row, col] = True
    return bits.ravel()

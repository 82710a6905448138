"""Morphological cleanup of predicted masks.

Liver: one binary erosion with the 6-connected cross, keep the largest
26-connected component, then dilate once with the same element. Tumor
predictions are finally restricted to the cleaned liver mask.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import ShapeMismatchError

CROSS_3D = ndimage.generate_binary_structure(3, 1)  # 6-connectivity
CUBE_3D = ndimage.generate_binary_structure(3, 3)  # 26-connectivity


def _as_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 3:
        raise ShapeMismatchError(f"expected a 3D mask, got shape {mask.shape}")
    return mask.astype(bool, copy=False)


def binary_erode(mask: np.ndarray, iterations: int = 1) -> np.ndarray:
    """Erode with the 6-connected cross; voxels beyond the border count as
    background, so the mask shrinks at volume edges too."""
    mask = _as_mask(mask)
    if iterations == 0:
        return mask.copy()
    return ndimage.binary_erosion(mask, structure=CROSS_3D, iterations=iterations, border_value=0)


def binary_dilate(mask: np.ndarray, iterations: int = 1) -> np.ndarray:
    mask = _as_mask(mask)
    if iterations == 0:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=CROSS_3D, iterations=iterations, border_value=0)


def largest_connected_component(mask: np.ndarray) -> np.ndarray:
    """Largest 26-connected component (voxel count); ties resolve to the
    component whose first voxel in array scan order comes first, which is
    exactly the lowest scipy label id. Empty input stays empty."""
    mask = _as_mask(mask)
    if not mask.any():
        return np.zeros_like(mask)
    labels, n = ndimage.label(mask, structure=CUBE_3D)
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    keep = int(np.argmax(counts))  # argmax returns the first maximal index
    return labels == keep


def liver_postprocess(mask: np.ndarray, iterations: int = 1) -> np.ndarray:
    """Erode -> largest component -> dilate.

    A mask that vanishes entirely under erosion comes back empty; callers
    treat that as "no liver found".
    """
    eroded = binary_erode(mask, iterations)
    kept = largest_connected_component(eroded)
    return binary_dilate(kept, iterations)


def mask_tumor_by_liver(tumor_mask: np.ndarray, liver_mask: np.ndarray) -> np.ndarray:
    """Keep tumor voxels only inside the (post-processed) liver."""
    tumor_mask = _as_mask(tumor_mask)
    liver_mask = _as_mask(liver_mask)
    if tumor_mask.shape != liver_mask.shape:
        raise ShapeMismatchError(
            f"tumor {tumor_mask.shape} vs liver {liver_mask.shape}"
        )
    return tumor_mask & liver_mask

"""Per-pixel loss weight maps derived from ground-truth label slices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation, binary_erosion

DEFAULT_BOUNDARY_BAND = 3
DEFAULT_BOUNDARY_WEIGHT = 5.0
DEFAULT_TUMOR_WEIGHT = 10.0

# 3x3 square: Chebyshev-metric structuring element
_SQUARE = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class WeightMap:
    """Strictly positive per-pixel weights aligned with one label slice."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ValueError(f"weight map must be 2D, got shape {data.shape}")
        if not np.isfinite(data).all() or (data <= 0).any():
            raise ValueError("weights must be finite and strictly positive")
        object.__setattr__(self, "data", data)


def liver_boundary_weights(
    label_slice: np.ndarray,
    band: int = DEFAULT_BOUNDARY_BAND,
    w_edge: float = DEFAULT_BOUNDARY_WEIGHT,
) -> WeightMap:
    """Weight `w_edge` within `band` pixels (Chebyshev) of the mask boundary.

    The boundary is the mask minus its 1-pixel erosion; pixels of a mask
    touching the image border count as boundary. A slice with no foreground
    gets an all-ones map.
    """
    if w_edge <= 1.0:
        raise ValueError("edge weight must exceed the interior weight of 1.0")
    mask = np.asarray(label_slice).astype(bool)
    weights = np.ones(mask.shape, dtype=np.float32)
    if band < 0:
        raise ValueError("band must be >= 0")
    if mask.any():
        boundary = mask & ~binary_erosion(mask, structure=_SQUARE, border_value=0)
        emphasized = boundary
        if band > 0:
            emphasized = binary_dilation(boundary, structure=_SQUARE, iterations=band)
        weights[emphasized] = w_edge
    return WeightMap(weights)


def tumor_class_weights(
    label_slice: np.ndarray, w_tumor: float = DEFAULT_TUMOR_WEIGHT
) -> WeightMap:
    """Weight `w_tumor` on tumor pixels, 1.0 on background."""
    if w_tumor <= 1.0:
        raise ValueError("tumor weight must exceed the background weight of 1.0")
    mask = np.asarray(label_slice).astype(bool)
    weights = np.where(mask, np.float32(w_tumor), np.float32(1.0))
    return WeightMap(weights)

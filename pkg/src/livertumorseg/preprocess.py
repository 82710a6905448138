"""HU windowing, normalization, downsampling and slice sampling rules.

All transforms are pure functions and safe to run per-slice in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyTargetError, OddDimensionError
from .volumes import LIVER, TUMOR, CtVolume, LabelVolume

LIVER_WINDOW = (-100.0, 300.0)
TUMOR_WINDOWS = ((0.0, 100.0), (-100.0, 200.0), (-100.0, 400.0))

LIVER_SLICE_MARGIN = 10
TUMOR_SLICE_MARGIN = 5


@dataclass(frozen=True)
class HuWindow:
    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"window low must be < high, got [{self.low}, {self.high}]")


@dataclass(frozen=True)
class SlicePlan:
    """Axial slice indices of one case eligible for training sampling."""

    case_id: str
    indices: tuple[int, ...]
    target: str  # "liver" or "tumor"

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("slice indices must be strictly increasing")
        if any(i < 0 for i in idx):
            raise ValueError("slice indices must be non-negative")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)


def window_and_normalize(data: np.ndarray, window: HuWindow) -> np.ndarray:
    """Clamp HU to the window and rescale to [0,1] by the window bounds."""
    data = np.asarray(data, dtype=np.float32)
    out = (np.clip(data, window.low, window.high) - window.low) / (window.high - window.low)
    return out.astype(np.float32)


def downsample_slice(img: np.ndarray) -> np.ndarray:
    """Area-consistent factor-2 downsampling (2x2 block average)."""
    img = np.asarray(img, dtype=np.float32)
    h, w = img.shape
    if h % 2 or w % 2:
        raise OddDimensionError(f"slice dims must be even, got {h}x{w}")
    return img.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def liver_model_input(vol: CtVolume, slice_index: int) -> np.ndarray:
    """Single-channel liver-model input: windowed, normalized, half-size."""
    if not 0 <= slice_index < vol.shape[0]:
        raise IndexError(f"slice {slice_index} outside z-extent {vol.shape[0]}")
    low, high = LIVER_WINDOW
    normalized = window_and_normalize(vol.data[slice_index], HuWindow(low, high))
    return downsample_slice(normalized)[np.newaxis]


def stack_tumor_channels(vol: CtVolume, slice_index: int) -> np.ndarray:
    """3-channel tumor-model input: the same slice at the three HU windows."""
    if not 0 <= slice_index < vol.shape[0]:
        raise IndexError(f"slice {slice_index} outside z-extent {vol.shape[0]}")
    axial = vol.data[slice_index]
    channels = [window_and_normalize(axial, HuWindow(lo, hi)) for lo, hi in TUMOR_WINDOWS]
    return np.stack(channels, axis=0)


def plan_slices(labels: LabelVolume, target: str) -> SlicePlan:
    """Eligible z-indices for a case.

    liver: every slice containing liver or tumor, padded by 10 slices above
    the topmost and below the bottommost occurrence. tumor: every slice
    containing tumor, each padded by 5 slices. Both clipped to the volume.
    """
    nz = labels.shape[0]
    if target == "liver":
        present = np.flatnonzero(labels.liver_region().any(axis=(1, 2)))
        if present.size == 0:
            raise EmptyTargetError(f"case {labels.id!r} has no liver voxels")
        lo = max(0, int(present[0]) - LIVER_SLICE_MARGIN)
        hi = min(nz - 1, int(present[-1]) + LIVER_SLICE_MARGIN)
        indices = range(lo, hi + 1)
    elif target == "tumor":
        present = np.flatnonzero(labels.tumor_region().any(axis=(1, 2)))
        if present.size == 0:
            raise EmptyTargetError(f"case {labels.id!r} has no tumor voxels")
        eligible = set()
        for z in present:
            lo = max(0, int(z) - TUMOR_SLICE_MARGIN)
            hi = min(nz - 1, int(z) + TUMOR_SLICE_MARGIN)
            eligible.update(range(lo, hi + 1))
        indices = sorted(eligible)
    else:
        raise ValueError(f"target must be 'liver' or 'tumor', got {target!r}")
    return SlicePlan(case_id=labels.id, indices=tuple(indices), target=target)


def target_slice(labels: LabelVolume, slice_index: int, target: str) -> np.ndarray:
    """Binarized label slice for the given model target (uint8 0/1)."""
    axial = labels.data[slice_index]
    if target == "liver":
        return (axial >= LIVER).astype(np.uint8)
    if target == "tumor":
        return (axial == TUMOR).astype(np.uint8)
    raise ValueError(f"target must be 'liver' or 'tumor', got {target!r}")

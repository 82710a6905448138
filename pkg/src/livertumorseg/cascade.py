"""Two-stage inference: the liver model localizes, the tumor model segments
within the localized slab, and the final tumor mask is confined to the
post-processed liver."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from .errors import ModelInputMismatchError
from .postprocess import liver_postprocess, mask_tumor_by_liver
from .preprocess import liver_model_input, stack_tumor_channels
from .volumes import LIVER, TUMOR, CtVolume, LabelVolume

DEFAULT_Z_MARGIN = 2
_SLICE_BATCH = 8


@dataclass(frozen=True)
class CascadePrediction:
    labels: LabelVolume
    liver_mask_raw: np.ndarray
    liver_mask_post: np.ndarray
    tumor_mask_raw: np.ndarray
    tumor_mask_final: np.ndarray
    timing: dict  # stage -> seconds


def _batched(items, size):
    for i in range(0, len(items), size):
        yield items[i : i + size]


def predict_liver(vol: CtVolume, model, batch_size: int = _SLICE_BATCH) -> np.ndarray:
    """Slice-wise liver foreground mask at the volume's full resolution.

    Each axial slice is windowed, normalized, and downsampled to half size;
    the model's final upscale brings the prediction back to full resolution,
    where argmax decides the class.
    """
    if model.spec.in_channels != 1 or not model.spec.final_sbu:
        raise ModelInputMismatchError(
            "liver stage needs a 1-channel model with a final upscale, got "
            f"in_channels={model.spec.in_channels} final_sbu={model.spec.final_sbu}"
        )
    model.eval()
    nz = vol.shape[0]
    mask = np.zeros(vol.shape, dtype=bool)
    with torch.no_grad():
        for zs in _batched(range(nz), batch_size):
            x = torch.from_numpy(np.stack([liver_model_input(vol, z) for z in zs]))
            pred = model(x).argmax(dim=1).numpy()
            if pred.shape[1:] != vol.shape[1:]:
                raise ModelInputMismatchError(
                    f"model emits {pred.shape[1:]} for {vol.shape[1:]} slices"
                )
            for row, z in enumerate(zs):
                mask[z] = pred[row] == 1
    return mask


def localize(liver_post: np.ndarray, margin: int = DEFAULT_Z_MARGIN) -> tuple[int, int] | None:
    """Inclusive z-range of the mask expanded by `margin` slices and clipped
    to the volume; None when the mask is empty."""
    zs = np.flatnonzero(liver_post.any(axis=(1, 2)))
    if zs.size == 0:
        return None
    lo = max(0, int(zs[0]) - margin)
    hi = min(liver_post.shape[0] - 1, int(zs[-1]) + margin)
    return lo, hi


def predict_tumor(
    vol: CtVolume,
    z_range: tuple[int, int] | None,
    model,
    batch_size: int = _SLICE_BATCH,
) -> np.ndarray:
    """Slice-wise tumor mask on slices within the inclusive z_range; all
    other slices stay background. Channels are the three tumor windows of
    the same slice at full resolution."""
    if model.spec.in_channels != 3 or model.spec.final_sbu:
        raise ModelInputMismatchError(
            "tumor stage needs a 3-channel model without a final upscale, got "
            f"in_channels={model.spec.in_channels} final_sbu={model.spec.final_sbu}"
        )
    mask = np.zeros(vol.shape, dtype=bool)
    if z_range is None:
        return mask
    model.eval()
    lo, hi = z_range
    with torch.no_grad():
        for zs in _batched(range(lo, hi + 1), batch_size):
            x = torch.from_numpy(np.stack([stack_tumor_channels(vol, z) for z in zs]))
            pred = model(x).argmax(dim=1).numpy()
            if pred.shape[1:] != vol.shape[1:]:
                raise ModelInputMismatchError(
                    f"model emits {pred.shape[1:]} for {vol.shape[1:]} slices"
                )
            for row, z in enumerate(zs):
                mask[z] = pred[row] == 1
    return mask


def predict_case(
    vol: CtVolume,
    liver_model,
    tumor_model,
    margin: int = DEFAULT_Z_MARGIN,
) -> CascadePrediction:
    """Full cascade for one volume; the returned labels put tumor (2) over
    liver (1), and the final tumor mask is a subset of the cleaned liver by
    construction."""
    timing = {}
    t0 = time.perf_counter()
    liver_raw = predict_liver(vol, liver_model)
    timing["liver"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    liver_post = liver_postprocess(liver_raw)
    z_range = localize(liver_post, margin)
    timing["postprocess"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tumor_raw = predict_tumor(vol, z_range, tumor_model)
    timing["tumor"] = time.perf_counter() - t0

    tumor_final = mask_tumor_by_liver(tumor_raw, liver_post)
    assert not np.any(tumor_final & ~liver_post)

    data = np.zeros(vol.shape, dtype=np.uint8)
    data[liver_post] = LIVER
    data[tumor_final] = TUMOR
    labels = LabelVolume(data=data, spacing=vol.spacing, id=vol.id)
    return CascadePrediction(
        labels=labels,
        liver_mask_raw=liver_raw,
        liver_mask_post=liver_post,
        tumor_mask_raw=tumor_raw,
        tumor_mask_final=tumor_final,
        timing=timing,
    )

"""Volumetric data types, NIfTI I/O and the synthetic phantom generator.

All in-memory volumes use axis order (z, y, x) with per-axis spacing in mm.
Instances are treated as immutable after construction and are safe to share
across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import InvalidShapeError
from .nifti import read_nifti, reorient_to_zyx, write_nifti

LIVER = 1
TUMOR = 2


def _as_spacing(spacing) -> tuple[float, float, float]:
    # quantize to float32, the precision the NIfTI header stores
    s = tuple(float(np.float32(v)) for v in spacing)
    if len(s) != 3 or any(v <= 0 for v in s):
        raise ValueError(f"spacing must be 3 positive values, got {spacing}")
    return s


@dataclass(frozen=True)
class CtVolume:
    """3D grid of Hounsfield units, axes (z,y,x), spacing in mm."""

    data: np.ndarray
    spacing: tuple[float, float, float]
    id: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"CT data must be 3D, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("CT data contains NaN or Inf")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", _as_spacing(self.spacing))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class LabelVolume:
    """3D grid of class labels: 0 background, 1 liver, 2 tumor."""

    data: np.ndarray
    spacing: tuple[float, float, float]
    id: str = ""

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"label data must be 3D, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.integer):
            raise ValueError(f"labels must be integers, got dtype {data.dtype}")
        if data.size and (data.min() < 0 or data.max() > TUMOR):
            raise ValueError("labels outside {0, 1, 2}")
        object.__setattr__(self, "data", data.astype(np.uint8, copy=False))
        object.__setattr__(self, "spacing", _as_spacing(self.spacing))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def liver_region(self) -> np.ndarray:
        """Boolean mask of the liver extent (labels 1 and 2)."""
        return self.data >= LIVER

    def tumor_region(self) -> np.ndarray:
        return self.data == TUMOR


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "validation", tuple(self.validation))
        object.__setattr__(self, "test", tuple(self.test))
        groups = (set(self.train), set(self.validation), set(self.test))
        total = sum(len(g) for g in groups)
        if len(set().union(*groups)) != total:
            raise ValueError("split groups overlap")


def case_id_from_path(path) -> str:
    name = Path(path).name
    for suffix in (".nii.gz", ".nii"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return Path(path).stem


def load_volume(path) -> CtVolume:
    """Load a NIfTI CT volume, reoriented to canonical (z,y,x) axes."""
    img = read_nifti(path)
    data, spacing = reorient_to_zyx(img)
    return CtVolume(data=data.astype(np.float32), spacing=spacing, id=case_id_from_path(path))


def load_labels(path) -> LabelVolume:
    """Load a NIfTI label volume (classes 0/1/2), canonical (z,y,x)."""
    img = read_nifti(path)
    data, spacing = reorient_to_zyx(img)
    rounded = np.rint(data)
    if not np.array_equal(rounded, data):
        raise ValueError(f"{path}: label volume has non-integer voxels")
    return LabelVolume(
        data=rounded.astype(np.int64), spacing=spacing, id=case_id_from_path(path)
    )


def _diag_affine(spacing_zyx) -> np.ndarray:
    sz, sy, sx = spacing_zyx
    return np.diag([sx, sy, sz, 1.0])


def save_labels(labels: LabelVolume, path) -> None:
    """Write labels as unsigned 8-bit NIfTI; round-trips bit-exactly."""
    write_nifti(path, labels.data.transpose(2, 1, 0), _diag_affine(labels.spacing))


def save_volume(vol: CtVolume, path) -> None:
    """Write a CT volume as float32 NIfTI."""
    write_nifti(path, vol.data.transpose(2, 1, 0), _diag_affine(vol.spacing))


def save_split(split: DatasetSplit, path) -> None:
    payload = {
        "train": list(split.train),
        "validation": list(split.validation),
        "test": list(split.test),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_split(path) -> DatasetSplit:
    payload = json.loads(Path(path).read_text())
    return DatasetSplit(
        train=payload["train"], validation=payload["validation"], test=payload["test"]
    )


# ---------------------------------------------------------------------------
# Synthetic phantom
#
# An ellipsoidal liver (HU around 60+-6) inside a soft-tissue body cylinder,
# with darker spherical tumors (HU around 30) placed strictly inside the
# liver. Substitutes for real abdominal CT at desk scale.
# ---------------------------------------------------------------------------

_TUMOR_MARGIN = 2.2  # voxels kept between tumor surface and liver boundary


def _ellipsoid(shape, center, semi_axes) -> np.ndarray:
    zz, yy, xx = np.ogrid[: shape[0], : shape[1], : shape[2]]
    terms = (
        ((zz - center[0]) / semi_axes[0]) ** 2
        + ((yy - center[1]) / semi_axes[1]) ** 2
        + ((xx - center[2]) / semi_axes[2]) ** 2
    )
    return terms <= 1.0


def generate_phantom(
    seed: int,
    shape: tuple[int, int, int],
    n_tumors: int,
    spacing: tuple[float, float, float] = (2.0, 1.0, 1.0),
) -> tuple[CtVolume, LabelVolume]:
    """Deterministically synthesize a (CT, label) pair for the given seed.

    Raises InvalidShapeError when a dimension is below 16 voxels or the
    requested tumors cannot be placed strictly inside the liver.
    """
    shape = tuple(int(v) for v in shape)
    if len(shape) != 3 or min(shape) < 16:
        raise InvalidShapeError(f"phantom shape must be >= 16 per axis, got {shape}")
    if n_tumors < 0:
        raise ValueError("n_tumors must be >= 0")

    rng = np.random.default_rng(seed)
    nz, ny, nx = shape
    hu = rng.normal(-995.0, 4.0, size=shape).astype(np.float32)
    np.clip(hu, -1000.0, -980.0, out=hu)

    # body: elliptical soft-tissue cylinder through all slices
    yy, xx = np.ogrid[:ny, :nx]
    body2d = ((yy - ny / 2) / (0.46 * ny)) ** 2 + ((xx - nx / 2) / (0.46 * nx)) ** 2 <= 1.0
    body = np.broadcast_to(body2d, shape)
    hu[body] = np.clip(rng.normal(18.0, 7.0, size=int(body.sum())), -120.0, 40.0)

    center = [shape[i] * (0.5 + rng.uniform(-0.04, 0.04)) for i in range(3)]
    semi = [shape[i] * rng.uniform(0.28, 0.34) for i in range(3)]
    liver = _ellipsoid(shape, center, semi)
    liver_base = rng.uniform(54.0, 66.0)
    hu[liver] = liver_base + rng.normal(0.0, 3.0, size=int(liver.sum()))

    labels = np.zeros(shape, dtype=np.uint8)
    labels[liver] = LIVER

    interior = distance_transform_edt(liver)
    placed: list[tuple[np.ndarray, float]] = []
    for _ in range(n_tumors):
        radius = float(rng.uniform(2.0, 4.5))
        chosen = None
        while chosen is None:
            ok = interior >= radius + _TUMOR_MARGIN
            for prev_center, prev_r in placed:
                zz, yy, xx = np.ogrid[:nz, :ny, :nx]
                dist2 = (
                    (zz - prev_center[0]) ** 2
                    + (yy - prev_center[1]) ** 2
                    + (xx - prev_center[2]) ** 2
                )
                ok &= dist2 >= (radius + prev_r + 2.0) ** 2
            candidates = np.flatnonzero(ok)
            if candidates.size:
                chosen = np.array(np.unravel_index(rng.choice(candidates), shape))
            elif radius > 2.0:
                radius = max(2.0, radius - 0.5)
            else:
                raise InvalidShapeError(
                    f"cannot place {n_tumors} tumors inside a liver of shape {shape}"
                )
        zz, yy, xx = np.ogrid[:nz, :ny, :nx]
        sphere = (zz - chosen[0]) ** 2 + (yy - chosen[1]) ** 2 + (xx - chosen[2]) ** 2 <= radius**2
        hu[sphere] = 30.0 + rng.normal(0.0, 5.0, size=int(sphere.sum()))
        labels[sphere] = TUMOR
        placed.append((chosen, radius))

    case_id = f"phantom_{seed:05d}"
    vol = CtVolume(data=hu, spacing=spacing, id=case_id)
    lab = LabelVolume(data=labels, spacing=spacing, id=case_id)
    return vol, lab

"""Minimal NIfTI-1 reader/writer.

Single-file images (.nii, .nii.gz) only. Covers the scalar integer and float
datatypes used for CT volumes and label maps, slope/intercept rescaling, and
sform/qform orientation, which is enough to round-trip our own files and to
ingest stock medical volumes.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MalformedHeaderError, NonScalarImageError

HEADER_SIZE = 348
_HEADER_FMT = (
    "i 10s 18s i h B B 8h 3f h h h h 8f f f f h B B f f f f i i "
    "80s 24s h h 3f 3f 4f 4f 4f 16s 4s"
)

# NIfTI-1 datatype code -> numpy dtype (scalar types only)
_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
    1024: np.int64,
    1280: np.uint64,
}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


@dataclass
class NiftiImage:
    """Voxel data exactly as stored on disk (axes i,j,k) plus its affine."""

    data: np.ndarray
    affine: np.ndarray  # 4x4 voxel index -> world RAS mm


def _open_maybe_gzip(path: Path):
    f = open(path, "rb")
    magic = f.read(2)
    f.seek(0)
    if magic == b"\x1f\x8b":
        return gzip.GzipFile(fileobj=f)
    return f


def _quaternion_to_affine(b, c, d, qfac, pixdim, offsets):
    a2 = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(max(a2, 0.0))
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    rot[:, 0] *= pixdim[0]
    rot[:, 1] *= pixdim[1]
    rot[:, 2] *= pixdim[2] * qfac
    affine = np.eye(4)
    affine[:3, :3] = rot
    affine[:3, 3] = offsets
    return affine


def read_nifti(path) -> NiftiImage:
    """Read a 3D scalar NIfTI-1 file (optionally gzipped)."""
    path = Path(path)
    with _open_maybe_gzip(path) as f:
        raw = f.read(HEADER_SIZE)
        if len(raw) < HEADER_SIZE:
            raise MalformedHeaderError(f"{path}: file shorter than a NIfTI-1 header")
        for byte_order in ("<", ">"):
            (sizeof_hdr,) = struct.unpack(byte_order + "i", raw[:4])
            if sizeof_hdr == HEADER_SIZE:
                break
        else:
            raise MalformedHeaderError(f"{path}: sizeof_hdr is not 348; not NIfTI-1")
        fields = struct.unpack(byte_order + _HEADER_FMT.replace(" ", ""), raw)

        dim = fields[7:15]
        datatype = fields[19]
        pixdim = fields[22:30]
        vox_offset = int(fields[30])
        scl_slope, scl_inter = fields[31], fields[32]
        qform_code, sform_code = fields[44], fields[45]
        quatern = fields[46:49]
        qoffset = fields[49:52]
        srow = np.array([fields[52:56], fields[56:60], fields[60:64]])
        magic = fields[65]

        if magic not in (b"n+1\x00", b"n+1 "):
            raise MalformedHeaderError(
                f"{path}: magic {magic!r}; only single-file NIfTI-1 is supported"
            )

        ndim = dim[0]
        shape = tuple(int(n) for n in dim[1 : 1 + max(ndim, 0)])
        if ndim == 4 and shape[3] == 1:
            ndim, shape = 3, shape[:3]
        if ndim != 3:
            raise NonScalarImageError(f"{path}: {ndim}D image, expected a 3D volume")
        if any(n < 1 for n in shape):
            raise MalformedHeaderError(f"{path}: non-positive dimension in {shape}")
        if datatype not in _DTYPES:
            raise NonScalarImageError(
                f"{path}: datatype code {datatype} is not a supported scalar type"
            )

        dtype = np.dtype(_DTYPES[datatype]).newbyteorder(byte_order)
        count = int(np.prod(shape))
        f.read(max(vox_offset, HEADER_SIZE) - HEADER_SIZE)
        buf = f.read(count * dtype.itemsize)
        if len(buf) < count * dtype.itemsize:
            raise MalformedHeaderError(f"{path}: truncated voxel data")

    data = np.frombuffer(buf, dtype=dtype).reshape(shape, order="F")
    data = np.asarray(data, dtype=dtype.newbyteorder("="))
    if scl_slope not in (0.0, 1.0) or (scl_slope == 1.0 and scl_inter != 0.0):
        data = data * scl_slope + scl_inter

    if sform_code > 0:
        affine = np.eye(4)
        affine[:3, :] = srow
    elif qform_code > 0:
        qfac = -1.0 if pixdim[0] == -1.0 else 1.0
        affine = _quaternion_to_affine(*quatern, qfac, pixdim[1:4], qoffset)
    else:
        affine = np.diag([pixdim[1], pixdim[2], pixdim[3], 1.0])
    return NiftiImage(data=data, affine=affine)


def write_nifti(path, data: np.ndarray, affine: np.ndarray) -> None:
    """Write a 3D array (disk axis order i,j,k) as a single-file NIfTI-1.

    Gzipped when the path ends in .gz; the gzip mtime is pinned to zero so
    identical inputs produce byte-identical files.
    """
    path = Path(path)
    data = np.asarray(data)
    if data.ndim != 3:
        raise NonScalarImageError(f"can only write 3D volumes, got {data.ndim}D")
    dtype = np.dtype(data.dtype).newbyteorder("=")
    if dtype not in _DTYPE_CODES:
        raise ValueError(f"unsupported dtype {data.dtype}")
    affine = np.asarray(affine, dtype=np.float64)

    spacing = np.sqrt((affine[:3, :3] ** 2).sum(axis=0))
    dim = (3, *data.shape, 1, 1, 1, 1)
    pixdim = (1.0, *spacing, 0.0, 0.0, 0.0, 0.0)
    header = struct.pack(
        "<" + _HEADER_FMT.replace(" ", ""),
        HEADER_SIZE,
        b"",
        b"",
        0,
        0,
        0,
        0,
        *dim,
        0.0,
        0.0,
        0.0,
        0,
        _DTYPE_CODES[dtype],
        dtype.itemsize * 8,
        0,
        *pixdim,
        352.0,  # vox_offset
        1.0,  # scl_slope
        0.0,  # scl_inter
        0,
        0,
        2,  # xyzt_units: mm
        0.0,
        0.0,
        0.0,
        0.0,
        0,
        0,
        b"livertumorseg",
        b"",
        0,  # qform_code
        1,  # sform_code
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        *affine[0, :],
        *affine[1, :],
        *affine[2, :],
        b"",
        b"n+1\x00",
    )
    payload = header + b"\x00\x00\x00\x00" + np.asfortranarray(data).tobytes(order="F")
    if path.suffix == ".gz":
        with open(path, "wb") as f:
            # filename="" keeps the member name out of the gzip header so
            # identical volumes serialize to identical bytes at any path
            with gzip.GzipFile(filename="", fileobj=f, mode="wb", mtime=0) as gz:
                gz.write(payload)
    else:
        path.write_bytes(payload)


def reorient_to_zyx(img: NiftiImage):
    """Reorder/flip disk axes into the canonical (z,y,x) layout.

    The voxel axis most aligned with each world axis is found greedily from
    the affine, negative directions are flipped, and the axes are arranged so
    index 0 walks inferior->superior, 1 posterior->anterior, 2 left->right.

    Returns (data_zyx, spacing_zyx).
    """
    rot = img.affine[:3, :3].astype(np.float64)
    scale = np.abs(rot.copy())
    world_for_axis = [-1, -1, -1]  # voxel axis -> world axis
    for _ in range(3):
        w, a = np.unravel_index(np.argmax(scale), scale.shape)
        world_for_axis[a] = w
        scale[w, :] = -1.0
        scale[:, a] = -1.0

    data = img.data
    for axis in range(3):
        if rot[world_for_axis[axis], axis] < 0:
            data = np.flip(data, axis=axis)
    # output axis order (z,y,x) = voxel axes aligned with world (S, A, R)
    order = [world_for_axis.index(w) for w in (2, 1, 0)]
    data = np.transpose(data, order)
    spacing = np.sqrt((rot**2).sum(axis=0))
    spacing_zyx = tuple(float(spacing[a]) for a in order)
    return np.ascontiguousarray(data), spacing_zyx

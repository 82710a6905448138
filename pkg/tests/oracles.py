"""Brute-force reference implementations used to cross-check the library.

Everything here is written from first principles (explicit loops, set
arithmetic, all-pairs distances) and deliberately avoids the library code
and the scipy routines the library relies on.
"""

from __future__ import annotations

import math
from collections import deque
from fractions import Fraction

import numpy as np

_OFFSETS_6 = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
_OFFSETS_26 = [
    (dz, dy, dx)
    for dz in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dx in (-1, 0, 1)
    if (dz, dy, dx) != (0, 0, 0)
]


def central_difference(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Numeric gradient of scalar f at x, one central difference per
    coordinate with a magnitude-scaled step."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        h = eps * max(1.0, abs(flat[i]))
        orig = flat[i]
        flat[i] = orig + h
        f_plus = f(x)
        flat[i] = orig - h
        f_minus = f(x)
        flat[i] = orig
        out[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def _in_bounds(shape, z, y, x):
    return 0 <= z < shape[0] and 0 <= y < shape[1] and 0 <= x < shape[2]


def erode_oracle(mask: np.ndarray) -> np.ndarray:
    """6-connected binary erosion; outside the array counts as background."""
    mask = np.asarray(mask, dtype=bool)
    out = np.zeros_like(mask)
    for z, y, x in np.argwhere(mask):
        keep = True
        for dz, dy, dx in _OFFSETS_6:
            nz, ny, nx = z + dz, y + dy, x + dx
            if not _in_bounds(mask.shape, nz, ny, nx) or not mask[nz, ny, nx]:
                keep = False
                break
        out[z, y, x] = keep
    return out


def dilate_oracle(mask: np.ndarray) -> np.ndarray:
    """6-connected binary dilation."""
    mask = np.asarray(mask, dtype=bool)
    out = mask.copy()
    for z, y, x in np.argwhere(mask):
        for dz, dy, dx in _OFFSETS_6:
            nz, ny, nx = z + dz, y + dy, x + dx
            if _in_bounds(mask.shape, nz, ny, nx):
                out[nz, ny, nx] = True
    return out


def border_voxels_oracle(mask: np.ndarray) -> np.ndarray:
    """Mask voxels with at least one 6-neighbor outside the mask (array
    boundary counts as outside)."""
    mask = np.asarray(mask, dtype=bool)
    return mask & ~erode_oracle(mask)


def flood_fill_components(mask: np.ndarray, connectivity: int = 26):
    """(labels, count) by explicit breadth-first flood fill in scan order."""
    offsets = _OFFSETS_26 if connectivity == 26 else _OFFSETS_6
    mask = np.asarray(mask, dtype=bool)
    labels = np.zeros(mask.shape, dtype=np.int32)
    count = 0
    for z, y, x in np.argwhere(mask):
        if labels[z, y, x]:
            continue
        count += 1
        queue = deque([(z, y, x)])
        labels[z, y, x] = count
        while queue:
            cz, cy, cx = queue.popleft()
            for dz, dy, dx in offsets:
                nz, ny, nx = cz + dz, cy + dy, cx + dx
                if (
                    _in_bounds(mask.shape, nz, ny, nx)
                    and mask[nz, ny, nx]
                    and not labels[nz, ny, nx]
                ):
                    labels[nz, ny, nx] = count
                    queue.append((nz, ny, nx))
    return labels, count


def largest_component_oracle(mask: np.ndarray) -> np.ndarray:
    """Largest 26-connected component; ties go to the component whose
    first voxel appears earliest in scan order."""
    labels, count = flood_fill_components(mask, 26)
    if count == 0:
        return np.zeros_like(np.asarray(mask, dtype=bool))
    sizes = [(labels == i).sum() for i in range(1, count + 1)]
    best = 1 + int(np.argmax(sizes))  # argmax takes the first max: scan order
    return labels == best


def overlap_oracle(p: np.ndarray, g: np.ndarray):
    """(dice, jaccard, voe, rvd) from explicit voxel index sets."""
    pset = {tuple(v) for v in np.argwhere(np.asarray(p, dtype=bool))}
    gset = {tuple(v) for v in np.argwhere(np.asarray(g, dtype=bool))}
    inter = len(pset & gset)
    union = len(pset | gset)
    dice = 1.0 if not pset and not gset else 2.0 * inter / (len(pset) + len(gset))
    jaccard = 1.0 if union == 0 else inter / union
    voe = 1.0 - jaccard
    rvd = math.nan if not gset else (len(pset) - len(gset)) / len(gset)
    return dice, jaccard, voe, rvd


def surface_distance_oracle(p: np.ndarray, g: np.ndarray, spacing):
    """(assd, msd, rmsd) via the full all-pairs distance matrix between
    border-voxel center coordinates."""
    spacing = np.asarray(spacing, dtype=np.float64)
    pts_p = np.argwhere(border_voxels_oracle(p)) * spacing
    pts_g = np.argwhere(border_voxels_oracle(g)) * spacing
    diff = pts_p[:, None, :] - pts_g[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    d_pg = dist.min(axis=1)
    d_gp = dist.min(axis=0)
    both = np.concatenate([d_pg, d_gp])
    return float(both.mean()), float(both.max()), float(np.sqrt((both**2).mean()))


def chebyshev_band_oracle(mask: np.ndarray, band: int, w_edge: float) -> np.ndarray:
    """Expected boundary-emphasis weights: w_edge on every pixel within
    Chebyshev distance `band` of a boundary pixel, 1.0 elsewhere. The 2D
    boundary is the mask minus its 8-connected erosion (image border counts
    as outside)."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    boundary = np.zeros_like(mask)
    for y, x in np.argwhere(mask):
        on_edge = False
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if not (0 <= ny < h and 0 <= nx < w) or not mask[ny, nx]:
                    on_edge = True
        if on_edge:
            boundary[y, x] = True
    weights = np.ones(mask.shape, dtype=np.float64)
    bpts = np.argwhere(boundary)
    for y in range(h):
        for x in range(w):
            if bpts.size and np.max(np.abs(bpts - (y, x)), axis=1).min() <= band:
                weights[y, x] = w_edge
    return weights


def parameter_count_oracle(
    in_channels: int,
    initial_filters: int,
    growth_rate: int,
    layers_per_block: int,
    n_pool: int,
    n_classes: int,
) -> int:
    """Independent layer-by-layer parameter enumeration for the dense FCN.

    Counts learnable tensors only: conv kernels+biases and batch-norm
    scale+shift (running statistics are not parameters). The final upscale
    is parameter-free, so the count is identical with or without it.
    """

    def conv(cin, cout, k):
        return cin * cout * k * k + cout

    def bn(c):
        return 2 * c

    def dense_block(cin):
        total = 0
        for i in range(layers_per_block):
            c = cin + i * growth_rate
            total += bn(c) + conv(c, growth_rate, 3)
        return total

    block_growth = layers_per_block * growth_rate
    total = conv(in_channels, initial_filters, 3)
    c = initial_filters
    for _ in range(n_pool):
        total += dense_block(c)
        c += block_growth
        total += bn(c) + conv(c, c, 1)  # transition down
    total += dense_block(c)
    c += block_growth
    for _ in range(n_pool):
        total += conv(c, block_growth, 3) + bn(block_growth)  # transition up
        c = block_growth
        total += dense_block(c)
    total += conv(c, n_classes, 3)
    return total


def dice_from_jaccard_fraction(inter: int, n_p: int, n_g: int) -> tuple[float, float]:
    """Exact (dice, 2J/(1+J)) from integer counts via rational arithmetic."""
    if n_p + n_g == 0:
        return 1.0, 1.0
    dice = Fraction(2 * inter, n_p + n_g)
    union = n_p + n_g - inter
    jacc = Fraction(inter, union) if union else Fraction(1)
    return float(dice), float(2 * jacc / (1 + jacc))

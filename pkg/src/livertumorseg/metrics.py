"""Segmentation evaluation: volume overlap, surface distances, lesion
detection, and tumor burden, with CSV reporting.

Per-case values that have no defined answer (relative volume difference
against an empty reference, surface distances of an empty mask) are carried
as NaN sentinels rather than raised, so batch reports never abort; the
lower-level functions do raise, and the report assembly catches.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import EmptyLiverError, EmptyMaskError, ShapeMismatchError
from .postprocess import CROSS_3D, CUBE_3D
from .volumes import LIVER, TUMOR

DETECTION_THRESHOLD = 0.5

CSV_COLUMNS = (
    "case",
    "organ",
    "voe",
    "dice global",
    "dice",
    "rmsd",
    "rvd",
    "assd",
    "jaccard",
    "dice_per_case",
    "msd",
    "recall",
    "precision_greater_zero",
    "precision",
    "recall_greater_zero",
    "rmse",
    "max",
)


def _check_pair(p: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p).astype(bool, copy=False)
    g = np.asarray(g).astype(bool, copy=False)
    if p.shape != g.shape:
        raise ShapeMismatchError(f"pred {p.shape} vs gt {g.shape}")
    return p, g


def dice_binary(p: np.ndarray, g: np.ndarray) -> float:
    """2|P∩G| / (|P|+|G|); two empty masks count as a perfect match."""
    p, g = _check_pair(p, g)
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / denom


def overlap_metrics(p: np.ndarray, g: np.ndarray) -> tuple[float, float, float]:
    """(voe, jaccard, rvd). rvd is NaN when the reference is empty."""
    p, g = _check_pair(p, g)
    union = int((p | g).sum())
    jaccard = 1.0 if union == 0 else int((p & g).sum()) / union
    n_g = int(g.sum())
    rvd = math.nan if n_g == 0 else (int(p.sum()) - n_g) / n_g
    return 1.0 - jaccard, jaccard, rvd


def _border_points(mask: np.ndarray, spacing) -> np.ndarray:
    """Physical coordinates (mm) of border voxels: the mask minus its
    6-connected erosion (voxels beyond the array count as background)."""
    inner = ndimage.binary_erosion(mask, structure=CROSS_3D, border_value=0)
    return np.argwhere(mask & ~inner) * np.asarray(spacing, dtype=float)


def surface_distances(
    p: np.ndarray, g: np.ndarray, spacing
) -> tuple[float, float, float]:
    """(assd, msd, rmsd) in mm between border-voxel point sets.

    assd is the mean over both directed nearest-neighbor distance sets,
    msd the maximum (symmetric Hausdorff), rmsd the root mean square.
    """
    p, g = _check_pair(p, g)
    if not p.any() or not g.any():
        raise EmptyMaskError("surface distances need two non-empty masks")
    pts_p = _border_points(p, spacing)
    pts_g = _border_points(g, spacing)
    d_pg = cKDTree(pts_g).query(pts_p)[0]
    d_gp = cKDTree(pts_p).query(pts_g)[0]
    both = np.concatenate([d_pg, d_gp])
    return float(both.mean()), float(both.max()), float(np.sqrt((both**2).mean()))


def dice_scores(cases: Sequence[tuple[np.ndarray, np.ndarray]]) -> tuple[float, float]:
    """(dice_global, dice_per_case).

    Global pools every voxel of every case into one overlap ratio, so large
    cases dominate; per-case is the unweighted mean of per-case dice.
    """
    if not cases:
        raise ShapeMismatchError("need at least one case")
    inter = total = 0
    per_case = []
    for p, g in cases:
        p, g = _check_pair(p, g)
        inter += int((p & g).sum())
        total += int(p.sum()) + int(g.sum())
        per_case.append(dice_binary(p, g))
    dice_global = 1.0 if total == 0 else 2.0 * inter / total
    return dice_global, float(np.mean(per_case))


def _components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    return ndimage.label(mask, structure=CUBE_3D)


def lesion_detection_counts(
    p: np.ndarray, g: np.ndarray, threshold: float
) -> tuple[int, int, int, int]:
    """(detected_gt, total_gt, true_positive_pred, total_pred) at a strict
    overlap-fraction threshold.

    Matching is between individual components: a reference lesion counts as
    detected when a single predicted component covers more than `threshold`
    of its volume; a predicted component is a true positive when a single
    reference lesion covers more than `threshold` of it.
    """
    p, g = _check_pair(p, g)
    gt_labels, n_gt = _components(g)
    pred_labels, n_pred = _components(p)
    if n_gt == 0 and n_pred == 0:
        return 0, 0, 0, 0
    pairs = gt_labels.astype(np.int64).ravel() * (n_pred + 1) + pred_labels.ravel()
    table = np.bincount(pairs, minlength=(n_gt + 1) * (n_pred + 1)).reshape(
        n_gt + 1, n_pred + 1
    )
    detected = 0
    if n_gt:
        gt_sizes = table[1:].sum(axis=1)
        best = table[1:, 1:].max(axis=1) if n_pred else np.zeros(n_gt, dtype=np.int64)
        detected = int(np.sum(best > threshold * gt_sizes))
    true_pos = 0
    if n_pred:
        pred_sizes = table[:, 1:].sum(axis=0)
        best = table[1:, 1:].max(axis=0) if n_gt else np.zeros(n_pred, dtype=np.int64)
        true_pos = int(np.sum(best > threshold * pred_sizes))
    return detected, n_gt, true_pos, n_pred


def lesion_detection(
    p: np.ndarray, g: np.ndarray, threshold: float = DETECTION_THRESHOLD
) -> tuple[float, float]:
    """(recall, precision) at the given threshold; NaN when the respective
    denominator (reference lesions / predicted components) is zero."""
    detected, n_gt, true_pos, n_pred = lesion_detection_counts(p, g, threshold)
    recall = math.nan if n_gt == 0 else detected / n_gt
    precision = math.nan if n_pred == 0 else true_pos / n_pred
    return recall, precision


def _burden(labels: np.ndarray) -> float:
    liver_voxels = int((labels >= LIVER).sum())
    tumor_voxels = int((labels == TUMOR).sum())
    if liver_voxels == 0:
        # Empty predicted liver means an empty tumor too; call that zero burden.
        return 0.0
    return tumor_voxels / liver_voxels


def tumor_burden(
    cases: Sequence[tuple[np.ndarray, np.ndarray]]
) -> tuple[float, float]:
    """(rmse, max_error) of per-case tumor/liver volume ratios, prediction
    vs reference. The reference must contain liver in every case."""
    if not cases:
        raise ShapeMismatchError("need at least one case")
    errors = []
    for pred, gt in cases:
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise ShapeMismatchError(f"pred {pred.shape} vs gt {gt.shape}")
        if not (gt >= LIVER).any():
            raise EmptyLiverError("reference case has no liver voxels")
        errors.append(_burden(pred) - _burden(gt))
    errors = np.asarray(errors, dtype=float)
    return float(np.sqrt(np.mean(errors**2))), float(np.max(np.abs(errors)))


@dataclass(frozen=True)
class CaseResult:
    case: str
    organ: str  # liver | lesion
    dice: float
    jaccard: float
    voe: float
    rvd: float
    assd: float
    msd: float
    rmsd: float


@dataclass(frozen=True)
class OrganSummary:
    organ: str
    dice_global: float
    dice_per_case: float
    voe: float
    jaccard: float
    rvd: float
    assd: float
    msd: float
    rmsd: float


@dataclass(frozen=True)
class MetricsReport:
    cases: tuple[CaseResult, ...]
    liver: OrganSummary
    lesion: OrganSummary
    recall: float
    precision: float
    recall_greater_zero: float
    precision_greater_zero: float
    burden_rmse: float
    burden_max: float


def _case_result(case_id: str, organ: str, p, g, spacing) -> CaseResult:
    voe, jaccard, rvd = overlap_metrics(p, g)
    try:
        assd, msd, rmsd = surface_distances(p, g, spacing)
    except EmptyMaskError:
        assd = msd = rmsd = math.nan
    return CaseResult(
        case=case_id,
        organ=organ,
        dice=dice_binary(p, g),
        jaccard=jaccard,
        voe=voe,
        rvd=rvd,
        assd=assd,
        msd=msd,
        rmsd=rmsd,
    )


def _summarize(organ: str, results: list[CaseResult], masks) -> OrganSummary:
    dice_global, dice_per_case = dice_scores(masks)
    def agg(name):
        values = [getattr(r, name) for r in results]
        finite = [v for v in values if not math.isnan(v)]
        return float(np.mean(finite)) if finite else math.nan
    return OrganSummary(
        organ=organ,
        dice_global=dice_global,
        dice_per_case=dice_per_case,
        voe=agg("voe"),
        jaccard=agg("jaccard"),
        rvd=agg("rvd"),
        assd=agg("assd"),
        msd=agg("msd"),
        rmsd=agg("rmsd"),
    )


def evaluate_cases(
    cases: Sequence[tuple[str, np.ndarray, np.ndarray, tuple]]
) -> MetricsReport:
    """Full evaluation over (case_id, pred_labels, gt_labels, spacing_zyx).

    Labels use the 0/1/2 encoding; the liver organ is labels >= 1 and the
    lesion organ labels == 2. Detection counts pool across all cases.
    """
    if not cases:
        raise ShapeMismatchError("need at least one case")
    per_case: list[CaseResult] = []
    liver_masks, lesion_masks = [], []
    counts = {0.0: [0, 0, 0, 0], DETECTION_THRESHOLD: [0, 0, 0, 0]}
    for case_id, pred, gt, spacing in cases:
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        liver_pair = (pred >= LIVER, gt >= LIVER)
        lesion_pair = (pred == TUMOR, gt == TUMOR)
        liver_masks.append(liver_pair)
        lesion_masks.append(lesion_pair)
        per_case.append(_case_result(case_id, "liver", *liver_pair, spacing))
        per_case.append(_case_result(case_id, "lesion", *lesion_pair, spacing))
        for thr, acc in counts.items():
            for i, v in enumerate(lesion_detection_counts(*lesion_pair, thr)):
                acc[i] += v
    def rates(thr):
        detected, n_gt, true_pos, n_pred = counts[thr]
        recall = math.nan if n_gt == 0 else detected / n_gt
        precision = math.nan if n_pred == 0 else true_pos / n_pred
        return recall, precision
    recall, precision = rates(DETECTION_THRESHOLD)
    recall_gz, precision_gz = rates(0.0)
    rmse, max_err = tumor_burden([(p, g) for _, p, g, _ in cases])
    liver_results = [r for r in per_case if r.organ == "liver"]
    lesion_results = [r for r in per_case if r.organ == "lesion"]
    return MetricsReport(
        cases=tuple(per_case),
        liver=_summarize("liver", liver_results, liver_masks),
        lesion=_summarize("lesion", lesion_results, lesion_masks),
        recall=recall,
        precision=precision,
        recall_greater_zero=recall_gz,
        precision_greater_zero=precision_gz,
        burden_rmse=rmse,
        burden_max=max_err,
    )


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return repr(float(value))


def write_metrics_csv(report: MetricsReport, path) -> None:
    """One row per case per organ, then one summary row per organ.

    Summary rows carry the dataset aggregates ("dice global", dice_per_case,
    mean distances) plus, on the lesion row, detection rates and tumor-burden
    errors. Cells that do not apply to a row are left empty.
    """
    path = Path(path)
    rows = []
    for r in report.cases:
        rows.append(
            {
                "case": r.case,
                "organ": r.organ,
                "voe": _cell(r.voe),
                "dice": _cell(r.dice),
                "rmsd": _cell(r.rmsd),
                "rvd": _cell(r.rvd),
                "assd": _cell(r.assd),
                "jaccard": _cell(r.jaccard),
                "msd": _cell(r.msd),
            }
        )
    for summary in (report.liver, report.lesion):
        row = {
            "case": "summary",
            "organ": summary.organ,
            "voe": _cell(summary.voe),
            "dice global": _cell(summary.dice_global),
            "rmsd": _cell(summary.rmsd),
            "rvd": _cell(summary.rvd),
            "assd": _cell(summary.assd),
            "jaccard": _cell(summary.jaccard),
            "dice_per_case": _cell(summary.dice_per_case),
            "msd": _cell(summary.msd),
        }
        if summary.organ == "lesion":
            row.update(
                {
                    "recall": _cell(report.recall),
                    "precision_greater_zero": _cell(report.precision_greater_zero),
                    "precision": _cell(report.precision),
                    "recall_greater_zero": _cell(report.recall_greater_zero),
                    "rmse": _cell(report.burden_rmse),
                    "max": _cell(report.burden_max),
                }
            )
        rows.append(row)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS, restval="")
        writer.writeheader()
        writer.writerows(rows)

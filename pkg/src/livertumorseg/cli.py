"""Command-line entry point: phantom dataset generation, training,
cascaded prediction (with optional PNG overlays), and evaluation.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .cascade import predict_case
from .errors import (
    ConfigError,
    InvalidCountError,
    LiverTumorSegError,
    NonfiniteLossError,
    UnmatchedCasesError,
)
from .metrics import evaluate_cases, write_metrics_csv
from .network import load_checkpoint, model_from_checkpoint
from .preprocess import LIVER_WINDOW, HuWindow, window_and_normalize
from .training import TrainConfig, parse_config_file, train_model
from .volumes import (
    DatasetSplit,
    case_id_from_path,
    generate_phantom,
    load_labels,
    load_split,
    load_volume,
    save_labels,
    save_split,
    save_volume,
)

THREADS_ENV = "LIVERTUMORSEG_THREADS"

# Dataset split proportions scaled down from the 90:26:14 case counts.
SPLIT_RATIOS = (90, 26, 14)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def split_counts(count: int) -> tuple[int, int, int]:
    """(train, val, test) sizes: floors of the scaled ratios, any remainder
    going to test (13 -> 9/2/2)."""
    if count < 1:
        raise InvalidCountError(f"count must be >= 1, got {count}")
    total = sum(SPLIT_RATIOS)
    n_train = count * SPLIT_RATIOS[0] // total
    n_val = count * SPLIT_RATIOS[1] // total
    return n_train, n_val, count - n_train - n_val


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, started: float, *,
                   config=None, config_path=None, inputs=(), outputs=(), seed=None) -> Path:
    """Atomically write manifest.json describing the finished run."""
    artifacts = {}
    for p in outputs:
        p = Path(p)
        if p.is_file():
            artifacts[str(p)] = _sha256(p)
    manifest = {
        "command": command,
        "config_path": str(config_path) if config_path else None,
        "config": asdict(config) if config is not None else None,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "started": started,
        "finished": time.time(),
        "artifact_sha256": artifacts,
    }
    path = Path(out_dir) / "manifest.json"
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


def _parse_shape(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"shape must be Z,Y,X, got {text!r}")
    try:
        return tuple(int(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise argparse.ArgumentTypeError(f"shape must be integers, got {text!r}") from None


def cmd_phantom(args) -> int:
    started = time.time()
    out = Path(args.out)
    (out / "volumes").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    n_train, n_val, n_test = split_counts(args.count)
    ids, written = [], []
    for i in range(args.count):
        vol, labels = generate_phantom(args.seed + i, shape=args.shape, n_tumors=args.tumors)
        vol_path = out / "volumes" / f"{vol.id}.nii.gz"
        lab_path = out / "labels" / f"{labels.id}.nii.gz"
        save_volume(vol, vol_path)
        save_labels(labels, lab_path)
        ids.append(vol.id)
        written.extend([vol_path, lab_path])
    split = DatasetSplit(
        train=tuple(ids[:n_train]),
        validation=tuple(ids[n_train : n_train + n_val]),
        test=tuple(ids[n_train + n_val :]),
    )
    split_path = out / "split.json"
    save_split(split, split_path)
    written.append(split_path)
    write_manifest(out, "phantom", started, outputs=written, seed=args.seed)
    print(f"wrote {args.count} phantoms to {out} (train/val/test = {n_train}/{n_val}/{n_test})")
    return EXIT_OK


def _load_cases(data_dir: Path, ids) -> list:
    cases = []
    for case_id in ids:
        vol = load_volume(data_dir / "volumes" / f"{case_id}.nii.gz")
        labels = load_labels(data_dir / "labels" / f"{case_id}.nii.gz")
        cases.append((vol, labels))
    return cases


def cmd_train(args) -> int:
    started = time.time()
    data_dir = Path(args.data)
    out_dir = Path(args.out)
    overrides = {"target": args.target}
    if args.config:
        config = parse_config_file(args.config, overrides)
    else:
        config = TrainConfig(**overrides)
    split = load_split(data_dir / "split.json")
    train_cases = _load_cases(data_dir, split.train)
    val_cases = _load_cases(data_dir, split.validation)
    result = train_model(config, train_cases, val_cases, out_dir, resume=args.resume)
    write_manifest(
        out_dir, "train", started,
        config=config, config_path=args.config,
        inputs=[data_dir],
        outputs=[result.best_checkpoint, result.final_checkpoint, result.log_path],
        seed=config.seed,
    )
    last = result.reports[-1] if result.reports else None
    if last is not None:
        val = "n/a" if last.val_dice is None else f"{last.val_dice:.4f}"
        print(
            f"trained {config.target} for {len(result.reports)} epoch(s); "
            f"final train loss {last.train_loss:.4f}, val dice {val}"
        )
    print(f"best checkpoint: {result.best_checkpoint}")
    return EXIT_OK


def _overlay_slice(ct_slice: np.ndarray, label_slice: np.ndarray) -> np.ndarray:
    """RGB overlay: windowed CT in gray, liver blended red, tumor green."""
    gray = window_and_normalize(ct_slice, HuWindow(*LIVER_WINDOW))
    rgb = np.repeat((gray * 255.0).astype(np.uint8)[..., None], 3, axis=2).astype(np.float32)
    liver = label_slice >= 1
    tumor = label_slice == 2
    rgb[liver] = 0.5 * rgb[liver] + 0.5 * np.array([255.0, 0.0, 0.0], dtype=np.float32)
    rgb[tumor] = 0.5 * rgb[tumor] + 0.5 * np.array([0.0, 255.0, 0.0], dtype=np.float32)
    return rgb.astype(np.uint8)


def _write_overlays(vol, labels, out_dir: Path) -> list[Path]:
    from PIL import Image

    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for z in range(vol.shape[0]):
        img = Image.fromarray(_overlay_slice(vol.data[z], labels.data[z]))
        path = out_dir / f"slice_{z:04d}.png"
        img.save(path)
        paths.append(path)
    return paths


def cmd_predict(args) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    liver_model = model_from_checkpoint(load_checkpoint(args.liver_ckpt))
    tumor_model = model_from_checkpoint(load_checkpoint(args.tumor_ckpt))
    outputs = []
    for in_path in args.inputs:
        vol = load_volume(in_path)
        pred = predict_case(vol, liver_model, tumor_model)
        label_path = out_dir / f"{vol.id}.nii.gz"
        save_labels(pred.labels, label_path)
        sidecar = {
            "case": vol.id,
            "timing_seconds": {k: round(v, 4) for k, v in pred.timing.items()},
            "liver_voxels": int(pred.liver_mask_post.sum()),
            "tumor_voxels": int(pred.tumor_mask_final.sum()),
        }
        sidecar_path = out_dir / f"{vol.id}.json"
        sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
        outputs.extend([label_path, sidecar_path])
        if args.overlay:
            outputs.extend(_write_overlays(vol, pred.labels, out_dir / "overlays" / vol.id))
        print(f"{vol.id}: liver {sidecar['liver_voxels']} vox, tumor {sidecar['tumor_voxels']} vox")
    write_manifest(
        out_dir, "predict", started,
        inputs=list(args.inputs) + [args.liver_ckpt, args.tumor_ckpt],
        outputs=outputs,
    )
    return EXIT_OK


def _nifti_cases(directory: Path) -> dict[str, Path]:
    files = sorted(directory.glob("*.nii")) + sorted(directory.glob("*.nii.gz"))
    return {case_id_from_path(p): p for p in files}


def cmd_evaluate(args) -> int:
    started = time.time()
    pred_dir = Path(args.pred)
    gt_dir = Path(args.gt)
    preds = _nifti_cases(pred_dir)
    gts = _nifti_cases(gt_dir)
    if set(preds) != set(gts):
        raise UnmatchedCasesError(
            missing_pred=set(gts) - set(preds), missing_gt=set(preds) - set(gts)
        )
    cases = []
    for case_id in sorted(preds):
        pred = load_labels(preds[case_id])
        gt = load_labels(gts[case_id])
        cases.append((case_id, pred.data, gt.data, gt.spacing))
    report = evaluate_cases(cases)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(report, out_path)
    write_manifest(
        out_path.parent, "evaluate", started,
        inputs=[pred_dir, gt_dir], outputs=[out_path],
    )
    print(
        f"liver dice global {report.liver.dice_global:.4f}, "
        f"lesion dice global {report.lesion.dice_global:.4f}, "
        f"burden rmse {report.burden_rmse:.4f} -> {out_path}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="livertumorseg",
        description="Cascaded liver and liver-tumor segmentation of CT volumes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic phantom dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape", type=_parse_shape, default=(24, 64, 64))
    p.add_argument("--tumors", type=int, default=2)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("train", help="train one cascade stage")
    p.add_argument("--config", default=None)
    p.add_argument("--target", choices=("liver", "tumor"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="run the cascade on CT volumes")
    p.add_argument("--liver-ckpt", required=True)
    p.add_argument("--tumor-ckpt", required=True)
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--overlay", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="compare predictions against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    threads = os.environ.get(THREADS_ENV)
    if threads:
        try:
            import torch

            torch.set_num_threads(int(threads))
        except ValueError:
            print(f"error: {THREADS_ENV} must be an integer, got {threads!r}", file=sys.stderr)
            return EXIT_USAGE
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidCountError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonfiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LiverTumorSegError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

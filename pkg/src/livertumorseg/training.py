"""Training driver: uniform (case, slice) batch sampling, iteration-defined
epochs, ADAM optimization, validation tracking, and resumable checkpoints.

An epoch is a fixed number of iterations, not a sweep over the data:
iters_train_per_epoch optimization steps followed by iters_val_per_epoch
forward-only validation steps, each on a freshly sampled batch.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch

from .errors import (
    ConfigError,
    EmptyTargetError,
    NoEligibleSlicesError,
    NonfiniteInputError,
    NonfiniteLossError,
)
from .losses import LossWeights, dice_coefficient, liver_total_loss, tumor_total_loss
from .network import (
    NetworkSpec,
    build_model,
    default_liver_spec,
    default_tumor_spec,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
    tiny_spec,
)
from .preprocess import (
    SlicePlan,
    liver_model_input,
    plan_slices,
    stack_tumor_channels,
    target_slice,
)
from .volumes import CtVolume, LabelVolume
from .weightmap import (
    DEFAULT_BOUNDARY_BAND,
    DEFAULT_BOUNDARY_WEIGHT,
    DEFAULT_TUMOR_WEIGHT,
    liver_boundary_weights,
    tumor_class_weights,
)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

EPOCH_LOG_COLUMNS = ("epoch", "train_loss", "val_loss", "val_dice", "seconds")


@dataclass(frozen=True)
class TrainConfig:
    """Flat training configuration; every key is settable from a config file."""

    target: str = "liver"
    batch_size: int = 4
    epochs: int = 80
    lr: float = 1e-4
    l2: float = 1e-6
    iters_train_per_epoch: int = 1000
    iters_val_per_epoch: int = 250
    seed: int = 0
    desk_scale: bool = False
    # network size overrides; None picks the preset for target/desk_scale
    initial_filters: int | None = None
    growth_rate: int | None = None
    n_pool: int | None = None
    layers_per_block: int | None = None
    dropout_p: float | None = None
    # weight-map knobs
    boundary_band: int = DEFAULT_BOUNDARY_BAND
    boundary_weight: float = DEFAULT_BOUNDARY_WEIGHT
    tumor_weight: float = DEFAULT_TUMOR_WEIGHT

    def __post_init__(self):
        if self.target not in ("liver", "tumor"):
            raise ConfigError(f"target must be liver or tumor, got {self.target!r}")
        if min(self.batch_size, self.epochs, self.iters_train_per_epoch) < 1:
            raise ConfigError("batch_size, epochs, iters_train_per_epoch must be >= 1")
        if self.iters_val_per_epoch < 0:
            raise ConfigError("iters_val_per_epoch must be >= 0")
        if self.lr <= 0 or self.l2 < 0:
            raise ConfigError("lr must be > 0 and l2 >= 0")


# Small-footprint defaults applied when desk_scale=true and the key is not
# set explicitly; sized so a full run finishes in CPU minutes on phantoms.
DESK_DEFAULTS = {
    "epochs": 2,
    "iters_train_per_epoch": 300,
    "iters_val_per_epoch": 30,
    "lr": 1e-3,
}


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_KEY_PARSERS = {
    "target": str,
    "batch_size": int,
    "epochs": int,
    "lr": float,
    "l2": float,
    "iters_train_per_epoch": int,
    "iters_val_per_epoch": int,
    "seed": int,
    "desk_scale": _parse_bool,
    "initial_filters": int,
    "growth_rate": int,
    "n_pool": int,
    "layers_per_block": int,
    "dropout_p": float,
    "boundary_band": int,
    "boundary_weight": float,
    "tumor_weight": float,
}


def parse_config_file(path, overrides: dict | None = None) -> TrainConfig:
    """Read a flat key=value config ('#' starts a comment).

    Unknown or duplicate keys and bad values are hard errors naming the
    file and line. desk_scale=true swaps in the desk-scale defaults for any
    size/iteration key the file does not set itself; explicit keys always
    win, as do the caller's `overrides` (command-line flags).
    """
    path = Path(path)
    values: dict = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, text = line.partition("=")
        key = key.strip()
        text = text.strip()
        if key not in _KEY_PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate config key {key!r}")
        try:
            values[key] = _KEY_PARSERS[key](text)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    for key, value in (overrides or {}).items():
        if key not in _KEY_PARSERS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value
    if values.get("desk_scale"):
        for key, value in DESK_DEFAULTS.items():
            values.setdefault(key, value)
    return TrainConfig(**values)


def network_spec_for(config: TrainConfig) -> NetworkSpec:
    """Resolve the architecture: preset by target (tiny when desk_scale),
    then apply explicit size overrides."""
    if config.desk_scale:
        base = tiny_spec(
            in_channels=1 if config.target == "liver" else 3,
            final_sbu=config.target == "liver",
        )
    else:
        base = default_liver_spec() if config.target == "liver" else default_tumor_spec()
    names = ("initial_filters", "growth_rate", "n_pool", "layers_per_block", "dropout_p")
    overrides = {n: getattr(config, n) for n in names if getattr(config, n) is not None}
    return replace(base, **overrides) if overrides else base


@dataclass(frozen=True)
class CasePlan:
    volume: CtVolume
    labels: LabelVolume
    plan: SlicePlan


def build_case_plans(
    cases: Sequence[tuple[CtVolume, LabelVolume]], target: str
) -> list[CasePlan]:
    """Slice plans per case; cases without the target class are dropped."""
    plans = []
    for vol, labels in cases:
        try:
            plan = plan_slices(labels, target)
        except EmptyTargetError:
            continue
        plans.append(CasePlan(volume=vol, labels=labels, plan=plan))
    if not plans:
        raise NoEligibleSlicesError(f"no case contains any {target} voxels")
    return plans


class BatchSampler:
    """Uniform sampler over every eligible (case, slice) pair.

    Draws are counted in samples_drawn, which is how the epoch contract
    (iterations x batch size samples per epoch) is audited.
    """

    def __init__(self, case_plans: Sequence[CasePlan], rng: np.random.Generator):
        self.case_plans = list(case_plans)
        self.pairs = [
            (case_index, z)
            for case_index, cp in enumerate(self.case_plans)
            for z in cp.plan.indices
        ]
        if not self.pairs:
            raise NoEligibleSlicesError("sampler has no eligible (case, slice) pairs")
        self.rng = rng
        self.samples_drawn = 0

    def draw(self, batch_size: int) -> list[tuple[int, int]]:
        idx = self.rng.integers(0, len(self.pairs), size=int(batch_size))
        self.samples_drawn += int(batch_size)
        return [self.pairs[i] for i in idx]


def iter_epoch_batches(
    sampler: BatchSampler, iterations: int, batch_size: int
) -> Iterator[list[tuple[int, int]]]:
    """The exact batch stream one epoch consumes."""
    for _ in range(int(iterations)):
        yield sampler.draw(batch_size)


def assemble_batch(
    case_plans: Sequence[CasePlan],
    pairs: Sequence[tuple[int, int]],
    target: str,
    config: TrainConfig,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Materialize (inputs, labels, weights) tensors for drawn pairs."""
    xs, ys, ws = [], [], []
    for case_index, z in pairs:
        cp = case_plans[case_index]
        if target == "liver":
            xs.append(liver_model_input(cp.volume, z))
            y = target_slice(cp.labels, z, "liver")
            w = liver_boundary_weights(y, config.boundary_band, config.boundary_weight)
        else:
            xs.append(stack_tumor_channels(cp.volume, z))
            y = target_slice(cp.labels, z, "tumor")
            w = tumor_class_weights(y, config.tumor_weight)
        ys.append(y)
        ws.append(w.data)
    x = torch.from_numpy(np.stack(xs))
    y = torch.from_numpy(np.stack(ys).astype(np.int64))
    w = torch.from_numpy(np.stack(ws))
    return x, y, w


def sample_batch(
    sampler: BatchSampler,
    case_plans: Sequence[CasePlan],
    batch_size: int,
    target: str,
    config: TrainConfig,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    return assemble_batch(case_plans, sampler.draw(batch_size), target, config)


def total_loss(model, probs, y, w, config: TrainConfig) -> torch.Tensor:
    if config.target == "liver":
        return liver_total_loss(probs, y, w, model.conv_weights(), config.l2)
    return tumor_total_loss(
        probs, y, w, model.conv_weights(), LossWeights(l2=config.l2)
    )


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    train_loss: float
    val_loss: float | None
    val_dice: float | None
    seconds: float


def run_epoch(
    model,
    optimizer,
    config: TrainConfig,
    train_plans: Sequence[CasePlan],
    train_sampler: BatchSampler,
    val_plans: Sequence[CasePlan] | None,
    val_sampler: BatchSampler | None,
    epoch: int,
) -> EpochReport:
    """One iteration-defined epoch: optimization steps, then forward-only
    validation (batch-norm on running statistics, dropout off)."""
    started = time.perf_counter()
    model.train()
    train_losses = []
    for pairs in iter_epoch_batches(train_sampler, config.iters_train_per_epoch, config.batch_size):
        x, y, w = assemble_batch(train_plans, pairs, config.target, config)
        try:
            loss = total_loss(model, model(x), y, w, config)
        except NonfiniteInputError as exc:
            # diverged activations surface inside the loss's input checks
            raise NonfiniteLossError(f"diverged at epoch {epoch}: {exc}") from exc
        if not torch.isfinite(loss):
            raise NonfiniteLossError(
                f"non-finite training loss at epoch {epoch} "
                f"after {train_sampler.samples_drawn} samples"
            )
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        train_losses.append(float(loss.detach()))
    val_loss = val_dice = None
    if val_sampler is not None and config.iters_val_per_epoch > 0:
        model.eval()
        losses, dices = [], []
        with torch.no_grad():
            for pairs in iter_epoch_batches(
                val_sampler, config.iters_val_per_epoch, config.batch_size
            ):
                x, y, w = assemble_batch(val_plans, pairs, config.target, config)
                try:
                    probs = model(x)
                    loss = total_loss(model, probs, y, w, config)
                except NonfiniteInputError as exc:
                    raise NonfiniteLossError(
                        f"diverged at epoch {epoch} (validation): {exc}"
                    ) from exc
                if not torch.isfinite(loss):
                    raise NonfiniteLossError(f"non-finite validation loss at epoch {epoch}")
                losses.append(float(loss))
                dices.append(float(dice_coefficient(probs[:, 1], (y == 1).to(probs.dtype))))
        val_loss = float(np.mean(losses))
        val_dice = float(np.mean(dices))
    return EpochReport(
        epoch=epoch,
        train_loss=float(np.mean(train_losses)),
        val_loss=val_loss,
        val_dice=val_dice,
        seconds=time.perf_counter() - started,
    )


@dataclass(frozen=True)
class TrainResult:
    best_checkpoint: Path
    final_checkpoint: Path
    log_path: Path
    reports: tuple[EpochReport, ...]


def _append_log_row(log_path: Path, report: EpochReport) -> None:
    new_file = not log_path.exists()
    with open(log_path, "a", newline="") as f:
        writer = csv.writer(f)
        if new_file:
            writer.writerow(EPOCH_LOG_COLUMNS)
        writer.writerow(
            [
                report.epoch,
                repr(report.train_loss),
                "" if report.val_loss is None else repr(report.val_loss),
                "" if report.val_dice is None else repr(report.val_dice),
                f"{report.seconds:.3f}",
            ]
        )


def _selection_score(report: EpochReport) -> float:
    # Best checkpoint tracks validation soft dice; without validation
    # iterations it falls back to lowest training loss.
    if report.val_dice is not None:
        return report.val_dice
    return -report.train_loss


def train_model(
    config: TrainConfig,
    train_cases: Sequence[tuple[CtVolume, LabelVolume]],
    val_cases: Sequence[tuple[CtVolume, LabelVolume]],
    out_dir,
    resume: bool = False,
) -> TrainResult:
    """Train one cascade stage; writes {target}_best.pt, {target}_final.pt
    and {target}_epochs.csv under out_dir.

    The final checkpoint carries optimizer and RNG states, so a resumed run
    reproduces an unbroken run exactly; resume=True picks up from it.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    best_path = out_dir / f"{config.target}_best.pt"
    final_path = out_dir / f"{config.target}_final.pt"
    log_path = out_dir / f"{config.target}_epochs.csv"

    train_plans = build_case_plans(train_cases, config.target)
    val_plans = build_case_plans(val_cases, config.target) if val_cases else None

    spec = network_spec_for(config)
    if resume and final_path.exists():
        payload = load_checkpoint(final_path)
        model = model_from_checkpoint(payload)
        optimizer = torch.optim.Adam(
            model.parameters(), lr=config.lr, betas=ADAM_BETAS, eps=ADAM_EPS
        )
        optimizer.load_state_dict(payload["optimizer_state"])
        meta = payload["meta"]
        start_epoch = int(meta["epoch"]) + 1
        best_score = float(meta["best_score"])
        rng = np.random.default_rng()
        rng.bit_generator.state = meta["numpy_rng"]
        torch.set_rng_state(torch.as_tensor(meta["torch_rng"], dtype=torch.uint8))
    else:
        model = build_model(spec, seed=config.seed)
        optimizer = torch.optim.Adam(
            model.parameters(), lr=config.lr, betas=ADAM_BETAS, eps=ADAM_EPS
        )
        start_epoch = 0
        best_score = -math.inf
        rng = np.random.default_rng(config.seed)
        torch.manual_seed(config.seed)

    train_sampler = BatchSampler(train_plans, rng)
    val_sampler = BatchSampler(val_plans, rng) if val_plans else None

    reports = []
    for epoch in range(start_epoch, config.epochs):
        report = run_epoch(
            model, optimizer, config,
            train_plans, train_sampler, val_plans, val_sampler, epoch,
        )
        reports.append(report)
        _append_log_row(log_path, report)
        score = _selection_score(report)
        if score > best_score:
            best_score = score
            save_checkpoint(
                best_path, model,
                meta={"epoch": epoch, "score": score, "target": config.target},
            )
        save_checkpoint(
            final_path, model, optimizer,
            meta={
                "epoch": epoch,
                "best_score": best_score,
                "target": config.target,
                "numpy_rng": rng.bit_generator.state,
                "torch_rng": torch.get_rng_state(),
            },
        )
    return TrainResult(
        best_checkpoint=best_path,
        final_checkpoint=final_path,
        log_path=log_path,
        reports=tuple(reports),
    )

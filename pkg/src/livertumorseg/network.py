"""Dense fully-convolutional segmentation networks for the two cascade stages.

The architecture is planned declaratively (exact channel bookkeeping per
step) and then materialized as torch modules, so tests can hold the runtime
graph against the plan.

Layout per model: an initial 3x3 convolution, n_pool stages of
[dense block (input concatenated) -> transition down], a bottleneck dense
block, n_pool stages of [transition up -> dense block (no input concat)],
an optional bilinear x2 upscale before the head (liver model only), and a
3x3 convolution head with per-pixel softmax. There are no encoder-decoder
skip connections.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from .errors import InvalidSpecError, OddDimensionError, ShapeMismatchError

CHECKPOINT_FORMAT = "livertumorseg-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    """Declarative architecture description."""

    in_channels: int
    initial_filters: int = 48
    growth_rate: int = 12
    layers_per_block: int = 4
    n_pool: int = 4
    dropout_p: float = 0.2
    n_classes: int = 2
    final_sbu: bool = False

    def __post_init__(self):
        if min(self.in_channels, self.initial_filters, self.growth_rate) < 1:
            raise InvalidSpecError("channel counts must be >= 1")
        if self.layers_per_block < 1 or self.n_pool < 1:
            raise InvalidSpecError("layers_per_block and n_pool must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise InvalidSpecError(f"dropout_p must be in [0,1), got {self.dropout_p}")
        if self.n_classes < 2:
            raise InvalidSpecError("need at least 2 output classes")


def default_liver_spec() -> NetworkSpec:
    return NetworkSpec(in_channels=1, final_sbu=True)


def default_tumor_spec() -> NetworkSpec:
    return NetworkSpec(in_channels=3, final_sbu=False)


def tiny_spec(in_channels: int = 1, final_sbu: bool = False, **overrides) -> NetworkSpec:
    """Small preset for tests and desk-scale phantom runs."""
    params = dict(
        in_channels=in_channels,
        initial_filters=8,
        growth_rate=2,
        n_pool=2,
        final_sbu=final_sbu,
    )
    params.update(overrides)
    return NetworkSpec(**params)


@dataclass(frozen=True)
class PlanStep:
    name: str
    kind: str  # init_conv | dense_block | transition_down | bottleneck | transition_up | sbu | head
    in_channels: int
    out_channels: int
    scale: Fraction  # output resolution relative to the network input


@dataclass(frozen=True)
class LayerPlan:
    spec: NetworkSpec
    steps: tuple[PlanStep, ...]

    def output_scale(self) -> Fraction:
        return self.steps[-1].scale


def plan_network(spec: NetworkSpec) -> LayerPlan:
    """Predict every step's channel counts and relative resolution.

    Down-path dense blocks concatenate their input, so channels grow by
    layers_per_block * growth_rate per block; up-path blocks emit only the
    concatenation of their own layers.
    """
    block_growth = spec.layers_per_block * spec.growth_rate
    steps: list[PlanStep] = []
    scale = Fraction(1)
    c = spec.initial_filters
    steps.append(PlanStep("init", "init_conv", spec.in_channels, c, scale))
    for i in range(1, spec.n_pool + 1):
        steps.append(PlanStep(f"down{i}", "dense_block", c, c + block_growth, scale))
        c += block_growth
        scale /= 2
        steps.append(PlanStep(f"td{i}", "transition_down", c, c, scale))
    steps.append(PlanStep("bottleneck", "bottleneck", c, c + block_growth, scale))
    c += block_growth
    for i in range(1, spec.n_pool + 1):
        scale *= 2
        steps.append(PlanStep(f"tu{i}", "transition_up", c, block_growth, scale))
        c = block_growth
        steps.append(PlanStep(f"up{i}", "dense_block", c, block_growth, scale))
    if spec.final_sbu:
        scale *= 2
        steps.append(PlanStep("sbu", "sbu", c, c, scale))
    steps.append(PlanStep("head", "head", c, spec.n_classes, scale))
    return LayerPlan(spec=spec, steps=tuple(steps))


class DenseLayer(nn.Module):
    """BN -> ELU -> 3x3 conv (spatial size preserving) -> dropout."""

    def __init__(self, in_channels: int, growth_rate: int, dropout_p: float):
        super().__init__()
        self.norm = nn.BatchNorm2d(in_channels)
        self.act = nn.ELU()
        self.conv = nn.Conv2d(in_channels, growth_rate, kernel_size=3, padding=1)
        self.drop = nn.Dropout(dropout_p)

    def forward(self, x):
        return self.drop(self.conv(self.act(self.norm(x))))


class DenseBlock(nn.Module):
    """Stack of dense layers; layer l consumes the block input plus all
    previous layers' outputs. The block input is prepended to the output
    concatenation only when ``concat_input`` is set (down path)."""

    def __init__(
        self,
        in_channels: int,
        growth_rate: int,
        n_layers: int,
        dropout_p: float,
        concat_input: bool,
    ):
        super().__init__()
        self.concat_input = concat_input
        self.layers = nn.ModuleList(
            DenseLayer(in_channels + i * growth_rate, growth_rate, dropout_p)
            for i in range(n_layers)
        )

    def forward(self, x):
        features = [x]
        outputs = []
        for layer in self.layers:
            out = layer(torch.cat(features, dim=1) if len(features) > 1 else x)
            features.append(out)
            outputs.append(out)
        if self.concat_input:
            return torch.cat([x] + outputs, dim=1)
        return torch.cat(outputs, dim=1)


class TransitionDown(nn.Module):
    """BN -> ELU -> 1x1 conv (depth preserving) -> dropout -> 2x2 max-pool."""

    def __init__(self, channels: int, dropout_p: float):
        super().__init__()
        self.norm = nn.BatchNorm2d(channels)
        self.act = nn.ELU()
        self.conv = nn.Conv2d(channels, channels, kernel_size=1)
        self.drop = nn.Dropout(dropout_p)
        self.pool = nn.MaxPool2d(kernel_size=2, stride=2)

    def forward(self, x):
        h, w = x.shape[-2:]
        if h % 2 or w % 2:
            raise OddDimensionError(f"cannot 2x2-pool odd feature map {h}x{w}")
        return self.pool(self.drop(self.conv(self.act(self.norm(x)))))


class TransitionUp(nn.Module):
    """Bilinear x2 upsampling -> 3x3 conv -> BN (no transposed convolution)."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.upsample = nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False)
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1)
        self.norm = nn.BatchNorm2d(out_channels)

    def forward(self, x):
        return self.norm(self.conv(self.upsample(x)))


class DenseFcn(nn.Module):
    """Executable model for one cascade stage; forward emits per-pixel
    class probabilities (softmax over dim 1)."""

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec
        self.plan = plan_network(spec)
        growth = spec.growth_rate
        block_growth = spec.layers_per_block * growth

        c = spec.initial_filters
        self.init_conv = nn.Conv2d(spec.in_channels, c, kernel_size=3, padding=1)
        down_blocks, down_transitions = [], []
        for _ in range(spec.n_pool):
            down_blocks.append(
                DenseBlock(c, growth, spec.layers_per_block, spec.dropout_p, concat_input=True)
            )
            c += block_growth
            down_transitions.append(TransitionDown(c, spec.dropout_p))
        self.down_blocks = nn.ModuleList(down_blocks)
        self.down_transitions = nn.ModuleList(down_transitions)
        self.bottleneck = DenseBlock(
            c, growth, spec.layers_per_block, spec.dropout_p, concat_input=True
        )
        c += block_growth
        up_transitions, up_blocks = [], []
        for _ in range(spec.n_pool):
            up_transitions.append(TransitionUp(c, block_growth))
            c = block_growth
            up_blocks.append(
                DenseBlock(c, growth, spec.layers_per_block, spec.dropout_p, concat_input=False)
            )
        self.up_transitions = nn.ModuleList(up_transitions)
        self.up_blocks = nn.ModuleList(up_blocks)
        self.upscale = (
            nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False)
            if spec.final_sbu
            else None
        )
        self.head = nn.Conv2d(c, spec.n_classes, kernel_size=3, padding=1)

    def step_modules(self) -> list[tuple[PlanStep, nn.Module]]:
        """Plan steps paired with the torch modules that realize them."""
        modules: list[nn.Module] = [self.init_conv]
        for block, td in zip(self.down_blocks, self.down_transitions):
            modules.extend([block, td])
        modules.append(self.bottleneck)
        for tu, block in zip(self.up_transitions, self.up_blocks):
            modules.extend([tu, block])
        if self.upscale is not None:
            modules.append(self.upscale)
        modules.append(self.head)
        if len(modules) != len(self.plan.steps):  # pragma: no cover
            raise InvalidSpecError("plan and module graph disagree")
        return list(zip(self.plan.steps, modules))

    def conv_weights(self) -> list[torch.Tensor]:
        """Convolution kernels, the parameters covered by the L2 loss term."""
        return [m.weight for m in self.modules() if isinstance(m, nn.Conv2d)]

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.spec.in_channels:
            raise ShapeMismatchError(
                f"expected (B, {self.spec.in_channels}, H, W) input, got {tuple(x.shape)}"
            )
        divisor = 2**self.spec.n_pool
        if x.shape[-2] % divisor or x.shape[-1] % divisor:
            raise OddDimensionError(
                f"input {tuple(x.shape[-2:])} not divisible by 2^n_pool={divisor}"
            )
        out = self.init_conv(x)
        for block, td in zip(self.down_blocks, self.down_transitions):
            out = td(block(out))
        out = self.bottleneck(out)
        for tu, block in zip(self.up_transitions, self.up_blocks):
            out = block(tu(out))
        if self.upscale is not None:
            out = self.upscale(out)
        return F.softmax(self.head(out), dim=1)


def _reset_parameters(model: nn.Module) -> None:
    for m in model.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
            nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def build_model(spec: NetworkSpec, seed: int = 0) -> DenseFcn:
    """Construct a model with reproducible variance-scaled initialization."""
    torch.manual_seed(seed)
    model = DenseFcn(spec)
    _reset_parameters(model)
    return model


def build_liver_model(spec: NetworkSpec | None = None, seed: int = 0) -> DenseFcn:
    spec = spec or default_liver_spec()
    if spec.in_channels != 1 or not spec.final_sbu:
        raise InvalidSpecError("liver model needs in_channels=1 and a final upscale")
    return build_model(spec, seed)


def build_tumor_model(spec: NetworkSpec | None = None, seed: int = 0) -> DenseFcn:
    spec = spec or default_tumor_spec()
    if spec.in_channels != 3 or spec.final_sbu:
        raise InvalidSpecError("tumor model needs in_channels=3 and no final upscale")
    return build_model(spec, seed)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def save_checkpoint(path, model: DenseFcn, optimizer=None, meta: dict | None = None) -> None:
    """Write a self-describing, versioned checkpoint archive."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": asdict(model.spec),
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "meta": dict(meta or {}),
    }
    torch.save(payload, path)


def load_checkpoint(path) -> dict:
    """Read and validate a checkpoint archive; returns the raw payload."""
    path = Path(path)
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise InvalidSpecError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise InvalidSpecError(
            f"{path}: checkpoint version {payload.get('version')} unsupported"
        )
    return payload


def model_from_checkpoint(payload: dict) -> DenseFcn:
    spec = NetworkSpec(**payload["spec"])
    model = DenseFcn(spec)
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model

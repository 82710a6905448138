"""Training objectives: pixel-weighted cross-entropy, soft dice, and the
per-stage composite losses.

All functions operate on class probabilities as emitted by the models
(softmax already applied) and stay differentiable end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import NonfiniteInputError, ShapeMismatchError

DICE_EPS = 1e-5
_LOG_FLOOR = 1e-12

DEFAULT_L2 = 1e-6


@dataclass(frozen=True)
class LossWeights:
    """Coefficients of the composite tumor objective: cross-entropy term,
    dice term, and L2 weight decay."""

    wce: float = 0.5
    dice: float = 0.5
    l2: float = DEFAULT_L2

    def __post_init__(self):
        if min(self.wce, self.dice, self.l2) < 0:
            raise ValueError("loss weights must be >= 0")


def _check_finite(name: str, t: torch.Tensor) -> None:
    if not torch.isfinite(t).all():
        raise NonfiniteInputError(f"{name} contains non-finite values")


def weighted_cross_entropy(
    probs: torch.Tensor, target: torch.Tensor, weights: torch.Tensor
) -> torch.Tensor:
    """Weight-normalized cross-entropy over pixels.

    sum_i w_i * (-log p_i[target_i]) / sum_i w_i, so the value is a weighted
    mean and rescaling all weights by a constant leaves it unchanged.

    probs: (B, C, H, W) probabilities, target: (B, H, W) integer labels,
    weights: (B, H, W) strictly positive.
    """
    if probs.dim() != 4 or target.shape != weights.shape:
        raise ShapeMismatchError(
            f"probs {tuple(probs.shape)}, target {tuple(target.shape)}, "
            f"weights {tuple(weights.shape)}"
        )
    if target.shape != (probs.shape[0], probs.shape[2], probs.shape[3]):
        raise ShapeMismatchError(
            f"target {tuple(target.shape)} does not match probs {tuple(probs.shape)}"
        )
    _check_finite("probs", probs)
    _check_finite("weights", weights)
    if (weights <= 0).any():
        raise NonfiniteInputError("weights must be strictly positive")
    if target.min() < 0 or target.max() >= probs.shape[1]:
        raise ShapeMismatchError(
            f"target labels outside [0, {probs.shape[1] - 1}]"
        )
    p_target = probs.gather(1, target.long().unsqueeze(1)).squeeze(1)
    nll = -torch.log(p_target.clamp_min(_LOG_FLOOR))
    return (weights * nll).sum() / weights.sum()


def dice_coefficient(
    probs_fg: torch.Tensor, target_fg: torch.Tensor, eps: float = DICE_EPS
) -> torch.Tensor:
    """Soft dice with squared-magnitude denominator:
    (2 * sum(p*g) + eps) / (sum(p^2) + sum(g^2) + eps).

    Equals the usual set dice for hard {0,1} inputs; eps keeps the ratio
    defined (and equal to 1) when both inputs are empty.
    """
    if probs_fg.shape != target_fg.shape:
        raise ShapeMismatchError(
            f"probs {tuple(probs_fg.shape)} vs target {tuple(target_fg.shape)}"
        )
    _check_finite("probs", probs_fg)
    target_fg = target_fg.to(probs_fg.dtype)
    inter = (probs_fg * target_fg).sum()
    denom = probs_fg.pow(2).sum() + target_fg.pow(2).sum()
    return (2.0 * inter + eps) / (denom + eps)


def l2_penalty(conv_weights, coefficient: float) -> torch.Tensor:
    """coefficient * sum of squared convolution kernel entries."""
    total = None
    for w in conv_weights:
        term = w.pow(2).sum()
        total = term if total is None else total + term
    if total is None:
        raise ShapeMismatchError("no convolution weights supplied")
    return coefficient * total


def liver_total_loss(
    probs: torch.Tensor,
    target: torch.Tensor,
    weights: torch.Tensor,
    conv_weights,
    l2: float = DEFAULT_L2,
) -> torch.Tensor:
    """Weighted cross-entropy plus L2 on convolution kernels."""
    return weighted_cross_entropy(probs, target, weights) + l2_penalty(conv_weights, l2)


def tumor_total_loss(
    probs: torch.Tensor,
    target: torch.Tensor,
    weights: torch.Tensor,
    conv_weights,
    loss_weights: LossWeights = LossWeights(),
) -> torch.Tensor:
    """Cross-entropy and dice-loss blend plus L2:
    wce * WCE + dice * (1 - dice_coefficient(fg)) + l2 * sum sq kernels.
    """
    wce = weighted_cross_entropy(probs, target, weights)
    dice = dice_coefficient(probs[:, 1], (target == 1).to(probs.dtype))
    return (
        loss_weights.wce * wce
        + loss_weights.dice * (1.0 - dice)
        + l2_penalty(conv_weights, loss_weights.l2)
    )

"""Composite segmentation loss: active-contour terms plus pixel-wise BCE/Dice.

All functions operate on 2-D maps (H, W) with values in [0, 1] and are
differentiable in the prediction, so they can sit directly in a training
graph. Batch reduction (mean of per-image losses) lives in the training
loop, not here.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

__all__ = [
    "LossConfig",
    "length_term",
    "area_term",
    "ac_loss",
    "bce_loss",
    "dice_loss",
    "combined_loss",
]


@dataclass(frozen=True)
class LossConfig:
    """Hyperparameters of the composite loss.

    lam weights the area term inside the active-contour block, alpha mixes
    BCE against Dice, and beta/gamma weight the pixel-wise and
    active-contour blocks of the final loss. Defaults are the tuned values
    (lam=5, alpha=0.5, beta=0.75, gamma=0.25).
    """

    lam: float = 5.0
    alpha: float = 0.5
    beta: float = 0.75
    gamma: float = 0.25
    epsilon: float = 1e-6
    prob_clamp: float = 1e-7
    dice_smooth: float = 1.0

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0.0 < self.prob_clamp < 0.5:
            raise ValueError(f"prob_clamp must be in (0, 0.5), got {self.prob_clamp}")
        if self.dice_smooth < 0:
            raise ValueError(f"dice_smooth must be >= 0, got {self.dice_smooth}")


def _check_map(t: torch.Tensor, name: str) -> None:
    if t.dim() != 2:
        raise ValueError(f"{name} must be 2-D (H, W), got shape {tuple(t.shape)}")
    if not torch.isfinite(t).all():
        raise ValueError(f"{name} contains non-finite values")


def _check_pair(pred: torch.Tensor, gt: torch.Tensor) -> None:
    _check_map(pred, "pred")
    _check_map(gt, "gt")
    if pred.shape != gt.shape:
        raise ValueError(
            f"shape mismatch: pred {tuple(pred.shape)} vs gt {tuple(gt.shape)}"
        )


def length_term(pred: torch.Tensor, epsilon: float = 1e-6) -> torch.Tensor:
    """Contour-length regularizer of the prediction.

    Forward finite differences along both axes, combined on the
    (H-1) x (W-1) interior where both differences exist:

        sum sqrt(|dx^2 + dy^2| + epsilon)

    epsilon > 0 keeps the square root differentiable at flat regions.
    """
    _check_map(pred, "pred")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    h, w = pred.shape
    if h < 2 or w < 2:
        raise ValueError(f"pred must be at least 2x2 for finite differences, got {h}x{w}")
    dx = pred[1:, :] - pred[:-1, :]  # (H-1, W)
    dy = pred[:, 1:] - pred[:, :-1]  # (H, W-1)
    grad_sq = dx[:, :-1] ** 2 + dy[:-1, :] ** 2
    return torch.sqrt(grad_sq.abs() + epsilon).sum()


def area_term(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Region mismatch between prediction and reference labelling.

    |sum p * (1 - g)^2| + |sum (1 - p) * g^2|; zero exactly when the two
    maps agree and are binary.
    """
    _check_pair(pred, gt)
    inside = (pred * (1.0 - gt) ** 2).sum()
    outside = ((1.0 - pred) * gt**2).sum()
    return inside.abs() + outside.abs()


def ac_loss(pred: torch.Tensor, gt: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    """Active-contour loss: length term plus lam-weighted area term."""
    return length_term(pred, cfg.epsilon) + cfg.lam * area_term(pred, gt)


def bce_loss(
    pred: torch.Tensor, gt: torch.Tensor, clamp: float = 1e-7
) -> torch.Tensor:
    """Per-pixel mean binary cross-entropy with probability clamping.

    Probabilities are clamped to [clamp, 1 - clamp] before the logs, so
    perfect binary agreement yields -log(1 - clamp) per pixel rather
    than exactly zero.
    """
    if not 0.0 < clamp < 0.5:
        raise ValueError(f"clamp must be in (0, 0.5), got {clamp}")
    _check_pair(pred, gt)
    p = pred.clamp(clamp, 1.0 - clamp)
    return -(gt * p.log() + (1.0 - gt) * (1.0 - p).log()).mean()


def dice_loss(
    pred: torch.Tensor, gt: torch.Tensor, smooth: float = 1.0
) -> torch.Tensor:
    """Soft Dice loss: 1 - (2*sum(p*g) + smooth) / (sum(p) + sum(g) + smooth).

    Empty prediction against empty reference is a perfect match (loss 0),
    also when smooth is 0.
    """
    if smooth < 0:
        raise ValueError(f"smooth must be >= 0, got {smooth}")
    _check_pair(pred, gt)
    intersection = (pred * gt).sum()
    total = pred.sum() + gt.sum()
    if smooth == 0 and float(total) == 0.0:
        # 0/0 ratio defined as 1: return a zero still attached to the graph
        return pred.sum() * 0.0
    return 1.0 - (2.0 * intersection + smooth) / (total + smooth)


def combined_loss(
    pred: torch.Tensor, gt: torch.Tensor, cfg: LossConfig
) -> torch.Tensor:
    """Full training loss: gamma * AC + beta * (alpha * BCE + (1 - alpha) * Dice).

    With gamma=0 and beta=1 this reduces bit-identically to the classical
    pixel-wise mix alpha * BCE + (1 - alpha) * Dice (the AC block is
    skipped entirely, not multiplied by zero).
    """
    pixel = cfg.alpha * bce_loss(pred, gt, cfg.prob_clamp) + (
        1.0 - cfg.alpha
    ) * dice_loss(pred, gt, cfg.dice_smooth)
    if cfg.gamma == 0:
        return cfg.beta * pixel
    return cfg.gamma * ac_loss(pred, gt, cfg) + cfg.beta * pixel

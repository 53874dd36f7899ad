"""Deep-supervision loss stack.

Full resolution: soft Dice + pixel-wise cross-entropy against the binary
target. Lower resolutions: MSE + a Dice variant that accepts soft targets,
against average-pooled labels. Dice sums run over batch and spatial
dimensions together (batch Dice).
"""

from __future__ import annotations

from fractions import Fraction

import torch
from torch.nn import functional as F

EPS = 1e-8


def _check_same_shape(x, y):
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")


def _check_unit_range(name, t):
    if t.numel() and (t.min() < 0 or t.max() > 1):
        raise ValueError(f"{name} values must lie in [0, 1]")


def downsample_soft_gt(target: torch.Tensor, levels: int) -> list[torch.Tensor]:
    """Level ``i`` is the (b, 1, X, Y) target average-pooled 2x2 ``i`` times."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    div = 2 ** (levels - 1)
    if target.shape[-2] % div or target.shape[-1] % div:
        raise ValueError(f"spatial size {tuple(target.shape[-2:])} not divisible by {div}")
    stack = [target]
    for _ in range(levels - 1):
        stack.append(F.avg_pool2d(stack[-1], 2))
    return stack


def soft_dice_soft_gt(x: torch.Tensor, y: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    """Dice loss in [-1, 0] for probabilities ``x`` against soft targets ``y``.

    TP = max(0, y - |x - y|), FP = max(0, x - y), FN = max(0, y - x),
    loss = -2 tp / (2 tp + fp + fn).
    """
    _check_same_shape(x, y)
    _check_unit_range("prediction", x)
    _check_unit_range("target", y)
    tp = torch.clamp(y - torch.abs(x - y), min=0).sum()
    fp = torch.clamp(x - y, min=0).sum()
    fn = torch.clamp(y - x, min=0).sum()
    return -2 * tp / (2 * tp + fp + fn + eps)


def soft_dice_loss(x: torch.Tensor, y: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    _check_same_shape(x, y)
    return -2 * (x * y).sum() / (x.sum() + y.sum() + eps)


def cross_entropy_loss(logits: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Mean pixel-wise cross-entropy; ``y`` is (b, X, Y) or (b, 1, X, Y)."""
    if y.dim() == logits.dim():
        y = y[:, 0]
    if y.shape != logits.shape[:1] + logits.shape[2:]:
        raise ValueError(f"target {tuple(y.shape)} does not match logits {tuple(logits.shape)}")
    return F.cross_entropy(logits, y.long())


def mse_loss(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    _check_same_shape(x, y)
    return ((x - y) ** 2).mean()


def ds_weights_exact(num_heads: int) -> list[Fraction]:
    if num_heads < 1:
        raise ValueError("num_heads must be >= 1")
    raw = [Fraction(1, 2 ** i) for i in range(num_heads)]
    total = sum(raw)
    return [w / total for w in raw]


def ds_weights(num_heads: int) -> list[float]:
    """2^-i per head, normalized to sum to one."""
    return [float(w) for w in ds_weights_exact(num_heads)]


def total_loss(logits, targets) -> torch.Tensor:
    """Weighted deep-supervision loss.

    ``logits``: list of (b, C, X_i, Y_i); ``targets``: list of (b, 1, X_i, Y_i)
    as returned by :func:`downsample_soft_gt`. Channel 1 is foreground.
    """
    if len(logits) != len(targets):
        raise ValueError(f"{len(logits)} heads but {len(targets)} targets")
    weights = ds_weights(len(logits))
    total = 0.0
    for i, (w, lg, tg) in enumerate(zip(weights, logits, targets)):
        fg = torch.softmax(lg, dim=1)[:, 1:2]
        if i == 0:
            term = soft_dice_loss(fg, tg) + cross_entropy_loss(lg, tg)
        else:
            term = mse_loss(fg, tg) + soft_dice_soft_gt(fg, tg)
        total = total + w * term
    return total

"""Sliding-window prediction, fold ensembling, upsampling, argmax and
connected-component instance extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy import ndimage
from torch.nn import functional as F

from .model import forward


@dataclass
class SlidingWindowPlan:
    image_size: tuple
    window: tuple
    origins: list
    coverage: np.ndarray


@dataclass
class EnsemblePrediction:
    softmax: np.ndarray  # (C, H, W)
    member_count: int


def _axis_origins(size, win):
    starts = {min(s, size - win) for s in range(0, size, win)}
    return sorted(starts)


def plan_windows(image_size, window) -> SlidingWindowPlan:
    """Minimal grid of windows, the last one on each axis flush with the
    image edge."""
    (H, W), (h, w) = image_size, window
    if h > H or w > W:
        raise ValueError(f"window {h}x{w} is larger than image {H}x{W}")
    origins = [(y, x) for y in _axis_origins(H, h) for x in _axis_origins(W, w)]
    coverage = np.zeros((H, W), dtype=np.int32)
    for y, x in origins:
        coverage[y:y + h, x:x + w] += 1
    return SlidingWindowPlan((H, W), (h, w), origins, coverage)


def sliding_window_predict(model, image: np.ndarray, plan: SlidingWindowPlan) -> np.ndarray:
    """Average of eval-mode softmax maps over all windows covering each
    pixel; returns (C, H, W)."""
    c, H, W = image.shape
    if (H, W) != tuple(plan.image_size):
        raise ValueError(f"plan is for {plan.image_size}, image is {(H, W)}")
    h, w = plan.window
    acc = None
    x = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))
    for y0, x0 in plan.origins:
        probs = forward(model, x[None, :, y0:y0 + h, x0:x0 + w], "eval")[0].double().numpy()
        if acc is None:
            acc = np.zeros((probs.shape[0], H, W))
        acc[:, y0:y0 + h, x0:x0 + w] += probs
    return (acc / plan.coverage[None]).astype(np.float32)


def _same_config(models):
    ref = models[0].config
    for i, m in enumerate(models[1:], 1):
        if m.config != ref:
            raise ValueError(f"ensemble member {i} has a different model config than member 0")


def upsample(softmax: np.ndarray, factor: int = 2) -> np.ndarray:
    t = torch.from_numpy(np.ascontiguousarray(softmax, dtype=np.float32))[None]
    return F.interpolate(t, scale_factor=factor, mode="bilinear", align_corners=False)[0].numpy()


def ensemble_predict(models, image: np.ndarray, window=None, factor: int = 2) -> EnsemblePrediction:
    """Mean sliding-window softmax over ``models``, upsampled by ``factor``
    to the original frame resolution."""
    if not models:
        raise ValueError("ensemble needs at least one member")
    _same_config(models)
    _, H, W = image.shape
    plan = plan_windows((H, W), window or (H, W))
    total = None
    for m in models:
        p = sliding_window_predict(m, image, plan).astype(np.float64)
        total = p if total is None else total + p
    mean = (total / len(models)).astype(np.float32)
    return EnsemblePrediction(upsample(mean, factor) if factor != 1 else mean, len(models))


def binarize(pred) -> np.ndarray:
    """Per-pixel argmax; exact ties resolve to the lower class (background)."""
    softmax = pred.softmax if isinstance(pred, EnsemblePrediction) else pred
    return (np.argmax(softmax, axis=0) > 0).astype(np.uint8)


EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def connected_components(mask: np.ndarray) -> np.ndarray:
    """8-connected instance labels 1..K in raster order of each component's
    first pixel; background 0."""
    labels, _ = ndimage.label(np.asarray(mask) > 0, structure=EIGHT_CONNECTED)
    return labels.astype(np.int32)

"""On-the-fly augmentation of (image, mask) patch pairs.

Spatial transforms (rotation, elastic deformation, scaling, mirroring) are
composed into one sampling grid and resampled in a single pass: bilinear for
the image, nearest for the mask, zero fill outside the source. Intensity
transforms then run on the image only, in the order noise, brightness,
contrast, gamma.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy import ndimage

from .data import Patch


@dataclass
class AugmentConfig:
    rotation_p: float = 0.15
    rotation_degrees: float = 30.0
    elastic_p: float = 0.15
    elastic_alpha: tuple = (0.0, 200.0)
    elastic_sigma: tuple = (9.0, 13.0)
    scale_p: float = 0.15
    scale_range: tuple = (0.85, 1.25)
    mirror_p: float = 0.5
    mirror_axes: tuple = ("vertical", "horizontal")
    noise_p: float = 0.15
    noise_sigma_range: tuple = (0.0, 0.05)
    brightness_p: float = 0.15
    brightness_range: tuple = (-0.15, 0.15)
    contrast_p: float = 0.15
    contrast_range: tuple = (0.75, 1.25)
    gamma_p: float = 0.15
    gamma_range: tuple = (0.7, 1.5)

    def __post_init__(self):
        self.validate()

    def validate(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name.endswith("_p") and not 0.0 <= v <= 1.0:
                raise ValueError(f"{f.name}={v} is not a probability")
            if isinstance(v, tuple) and f.name != "mirror_axes":
                if len(v) != 2 or v[0] > v[1]:
                    raise ValueError(f"{f.name}={v} is not a nonempty range")
        if self.rotation_degrees < 0:
            raise ValueError("rotation_degrees must be >= 0")
        if self.scale_range[0] <= 0 or self.gamma_range[0] <= 0:
            raise ValueError("scale and gamma ranges must be strictly positive")
        bad = set(self.mirror_axes) - {"vertical", "horizontal"}
        if bad:
            raise ValueError(f"unknown mirror axes {sorted(bad)}")

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(**{f.name: 0.0 for f in fields(cls) if f.name.endswith("_p")})


# ---------------------------------------------------------------------------
# elementary transforms
# ---------------------------------------------------------------------------

def _grid(shape):
    h, w = shape
    return np.mgrid[0:h, 0:w].astype(np.float64)


def _center(shape):
    return np.array([(shape[0] - 1) / 2.0, (shape[1] - 1) / 2.0])[:, None, None]


def _rotation_coords(coords, shape, theta_deg):
    # inverse mapping: output pixel -> source location
    t = np.deg2rad(theta_deg)
    c = _center(shape)
    d = coords - c
    cos, sin = np.cos(t), np.sin(t)
    y = cos * d[0] + sin * d[1]
    x = -sin * d[0] + cos * d[1]
    return np.stack([y, x]) + c


def _scale_coords(coords, shape, s):
    c = _center(shape)
    return (coords - c) / s + c


def _elastic_offsets(rng, shape, alpha, sigma):
    if alpha == 0 or sigma == 0:
        return np.zeros((2,) + tuple(shape))
    return np.stack([
        ndimage.gaussian_filter(rng.uniform(-1, 1, size=shape), sigma, mode="constant") * alpha
        for _ in range(2)
    ])


def _mirror_coords(coords, shape, axes):
    coords = coords.copy()
    if "vertical" in axes:
        coords[0] = (shape[0] - 1) - coords[0]
    if "horizontal" in axes:
        coords[1] = (shape[1] - 1) - coords[1]
    return coords


def resample(img, mask, coords):
    """Sample ``img`` (C, h, w) bilinearly and ``mask`` (h, w) by nearest
    neighbour at ``coords`` (2, h, w); zero outside."""
    # round-off must not push exact edge samples outside the grid
    coords = np.round(coords, 9)
    out = np.stack([
        ndimage.map_coordinates(ch, coords, order=1, mode="constant", cval=0.0)
        for ch in img
    ]).astype(img.dtype)
    m = ndimage.map_coordinates(mask, coords, order=0, mode="constant", cval=0)
    return np.clip(out, 0.0, 1.0), m.astype(mask.dtype)


def rotate(img, mask, theta):
    if theta == 0:
        return img.copy(), mask.copy()
    shape = mask.shape
    return resample(img, mask, _rotation_coords(_grid(shape), shape, theta))


def elastic_deform(img, mask, alpha, sigma, rng=None):
    if alpha == 0 or sigma == 0:
        return img.copy(), mask.copy()
    rng = np.random.default_rng() if rng is None else rng
    shape = mask.shape
    return resample(img, mask, _grid(shape) + _elastic_offsets(rng, shape, alpha, sigma))


def scale(img, mask, s):
    if s == 1:
        return img.copy(), mask.copy()
    shape = mask.shape
    return resample(img, mask, _scale_coords(_grid(shape), shape, s))


def mirror(img, mask, axes):
    img, mask = img.copy(), mask.copy()
    if "vertical" in axes:
        img, mask = img[:, ::-1, :], mask[::-1, :]
    if "horizontal" in axes:
        img, mask = img[:, :, ::-1], mask[:, ::-1]
    return np.ascontiguousarray(img), np.ascontiguousarray(mask)


def add_gaussian_noise(img, sigma, rng=None):
    if sigma == 0:
        return img.copy()
    rng = np.random.default_rng() if rng is None else rng
    return np.clip(img + rng.normal(0.0, sigma, size=img.shape), 0.0, 1.0).astype(img.dtype)


def shift_brightness(img, b):
    return np.clip(img + b, 0.0, 1.0).astype(img.dtype)


def scale_contrast(img, c):
    mean = img.mean()
    return np.clip((img - mean) * c + mean, 0.0, 1.0).astype(img.dtype)


def apply_gamma(img, gamma):
    if gamma == 1:
        return img.copy()
    return np.clip(img, 0.0, 1.0) ** gamma


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def apply_augmentations(patch: Patch, config: AugmentConfig, rng: np.random.Generator) -> Patch:
    img, mask = patch.image, patch.mask
    shape = mask.shape

    do_rot = rng.random() < config.rotation_p
    theta = rng.uniform(-config.rotation_degrees, config.rotation_degrees)
    do_scale = rng.random() < config.scale_p
    s = rng.uniform(*config.scale_range)
    do_elastic = rng.random() < config.elastic_p
    alpha = rng.uniform(*config.elastic_alpha)
    sigma = rng.uniform(*config.elastic_sigma)
    axes = [a for a in config.mirror_axes if rng.random() < config.mirror_p]

    warped = (do_rot and theta != 0) or (do_scale and s != 1) or (do_elastic and alpha != 0 and sigma != 0)
    if warped:
        coords = _grid(shape)
        if do_elastic:
            coords = coords + _elastic_offsets(rng, shape, alpha, sigma)
        if do_scale:
            coords = _scale_coords(coords, shape, s)
        if do_rot:
            coords = _rotation_coords(coords, shape, theta)
        coords = _mirror_coords(coords, shape, axes)
        img, mask = resample(img, mask, coords)
    elif axes:
        img, mask = mirror(img, mask, axes)
    else:
        img, mask = img.copy(), mask.copy()

    if rng.random() < config.noise_p:
        img = add_gaussian_noise(img, rng.uniform(*config.noise_sigma_range), rng)
    if rng.random() < config.brightness_p:
        img = shift_brightness(img, rng.uniform(*config.brightness_range))
    if rng.random() < config.contrast_p:
        img = scale_contrast(img, rng.uniform(*config.contrast_range))
    if rng.random() < config.gamma_p:
        img = apply_gamma(img, rng.uniform(*config.gamma_range))

    img = np.clip(img, 0.0, 1.0).astype(patch.image.dtype)
    return Patch(img, mask.astype(patch.mask.dtype), patch.origin)

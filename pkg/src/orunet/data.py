"""Dataset indexing, preprocessing, fold splitting and patch sampling.

Layout on disk::

    <root>/<Prokto|Rectum>/<surgery_id>/<frame_id>/raw.png
    <root>/<Prokto|Rectum>/<surgery_id>/<frame_id>/instrument_instances.png

A frame without ``instrument_instances.png`` is unlabeled and only usable
for prediction.
"""

from __future__ import annotations

import configparser
import enum
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

RAW_NAME = "raw.png"
MASK_NAME = "instrument_instances.png"


class SurgeryType(str, enum.Enum):
    PROKTO = "Prokto"
    RECTUM = "Rectum"


@dataclass(frozen=True, order=True)
class DatasetRecord:
    surgery_type: SurgeryType
    surgery_id: int
    frame_id: int
    image_path: Path = field(compare=False)
    mask_path: Path | None = field(compare=False, default=None)

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.surgery_type.value, self.surgery_id, self.frame_id)

    @property
    def surgery(self) -> tuple[str, int]:
        return (self.surgery_type.value, self.surgery_id)

    @property
    def labeled(self) -> bool:
        return self.mask_path is not None

    def relpath(self) -> Path:
        return Path(self.surgery_type.value, str(self.surgery_id), str(self.frame_id))


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_surgeries: frozenset
    val_surgeries: frozenset


@dataclass
class Patch:
    image: np.ndarray  # (C, h, w) float
    mask: np.ndarray  # (h, w) uint8 in {0, 1}
    origin: tuple[int, int]


def _int_dirs(path: Path):
    out = []
    for p in path.iterdir():
        if p.is_dir() and p.name.isdigit():
            out.append((int(p.name), p))
    return sorted(out)


def load_dataset_index(root) -> list[DatasetRecord]:
    """Scan ``root`` and return one record per frame, sorted by
    (type, surgery_id, frame_id)."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root does not exist: {root}")
    records = []
    for stype in SurgeryType:
        tdir = root / stype.value
        if not tdir.is_dir():
            continue
        for sid, sdir in _int_dirs(tdir):
            for fid, fdir in _int_dirs(sdir):
                img = fdir / RAW_NAME
                if not img.is_file():
                    continue
                mask = fdir / MASK_NAME
                records.append(DatasetRecord(stype, sid, fid, img, mask if mask.is_file() else None))
    return sorted(records)


def read_raw(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)


def read_mask(path) -> np.ndarray:
    return np.asarray(Image.open(path), dtype=np.uint8)


def preprocess(raw: np.ndarray) -> np.ndarray:
    """Halve an (H, W, 3) uint8 frame with 2x2 box averaging, scale to [0, 1]
    and move channels first."""
    raw = np.asarray(raw)
    if raw.ndim != 3:
        raise ValueError(f"expected (H, W, C) frame, got shape {raw.shape}")
    h, w, c = raw.shape
    if h % 2 or w % 2:
        raise ValueError(f"frame size {h}x{w} must be even in both dimensions")
    x = raw.astype(np.float32).reshape(h // 2, 2, w // 2, 2, c).mean(axis=(1, 3))
    x = np.clip(x / 255.0, 0.0, 1.0)
    return np.ascontiguousarray(x.transpose(2, 0, 1))


def preprocess_mask(mask: np.ndarray) -> np.ndarray:
    """Binarize an instance mask and subsample it to half resolution,
    keeping the top-left pixel of each 2x2 block."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected (H, W) mask, got shape {mask.shape}")
    h, w = mask.shape
    if h % 2 or w % 2:
        raise ValueError(f"mask size {h}x{w} must be even in both dimensions")
    return (mask[::2, ::2] > 0).astype(np.uint8)


def make_folds(records) -> list[FoldSplit]:
    """Leave-one-surgery-out folds: fold ``i`` validates on the i-th surgery
    of every intervention type and trains on all others.

    With ``k`` surgeries per type this yields ``k`` folds (8 for the
    challenge data).
    """
    per_type = {}
    for r in records:
        per_type.setdefault(r.surgery_type, set()).add(r.surgery_id)
    if not per_type:
        raise ValueError("no records to split")
    counts = {t.value: len(ids) for t, ids in per_type.items()}
    if len(per_type) != len(SurgeryType) or len(set(counts.values())) != 1:
        raise ValueError(f"unequal surgery counts per type: {counts}")
    ordered = {t: sorted(ids) for t, ids in per_type.items()}
    everything = frozenset((t.value, s) for t, ids in ordered.items() for s in ids)
    k = next(iter(counts.values()))
    folds = []
    for i in range(k):
        val = frozenset((t.value, ids[i]) for t, ids in ordered.items())
        folds.append(FoldSplit(i, everything - val, val))
    return folds


def write_folds(folds, path) -> None:
    """One line per fold: ``<index>: <Type>/<id> <Type>/<id>``."""
    lines = []
    for f in folds:
        val = " ".join(f"{t}/{s}" for t, s in sorted(f.val_surgeries))
        lines.append(f"{f.fold_index}: {val}\n")
    Path(path).write_text("".join(lines))


def read_folds(path) -> list[FoldSplit]:
    vals = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        idx, rest = line.split(":", 1)
        vals[int(idx)] = frozenset(
            (t, int(s)) for t, s in (tok.split("/") for tok in rest.split())
        )
    everything = frozenset().union(*vals.values())
    return [FoldSplit(i, everything - v, v) for i, v in sorted(vals.items())]


def sample_patch(image: np.ndarray, mask: np.ndarray, rng: np.random.Generator,
                 size=(256, 448)) -> Patch:
    """Crop a patch of ``size`` at a uniformly random valid origin."""
    _, h, w = image.shape
    ph, pw = size
    if h < ph or w < pw:
        raise ValueError(f"image {h}x{w} is smaller than patch {ph}x{pw}")
    y = int(rng.integers(0, h - ph + 1))
    x = int(rng.integers(0, w - pw + 1))
    return Patch(image[:, y:y + ph, x:x + pw].copy(), mask[y:y + ph, x:x + pw].copy(), (y, x))


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

@dataclass
class SynthSpec:
    surgeries_per_type: int = 2
    frames_per_surgery: int = 4
    height: int = 128
    width: int = 224
    # probability of 0, 1, 2, 3 instruments in a frame
    instrument_probs: tuple = (0.2, 0.4, 0.3, 0.1)

    def __post_init__(self):
        self.instrument_probs = tuple(float(p) for p in self.instrument_probs)
        if self.height % 2 or self.width % 2:
            raise ValueError("synthetic frame size must be even")
        if len(self.instrument_probs) != 4 or abs(sum(self.instrument_probs) - 1) > 1e-9:
            raise ValueError("instrument_probs must be 4 probabilities summing to 1")

    @classmethod
    def from_file(cls, path) -> "SynthSpec":
        cp = configparser.ConfigParser()
        cp.read(path)
        s = cp["synth"] if cp.has_section("synth") else {}
        kw = {}
        for name in ("surgeries_per_type", "frames_per_surgery", "height", "width"):
            if name in s:
                kw[name] = int(s[name])
        if "instrument_probs" in s:
            kw["instrument_probs"] = tuple(float(v) for v in s["instrument_probs"].split(","))
        return cls(**kw)


def _background(rng, h, w):
    noise = rng.standard_normal((h, w))
    coarse = ndimage.gaussian_filter(noise, sigma=min(h, w) / 8)
    fine = ndimage.gaussian_filter(rng.standard_normal((h, w)), sigma=2)
    coarse = coarse / (np.abs(coarse).max() + 1e-12)
    fine = fine / (np.abs(fine).max() + 1e-12)
    base = np.array([150.0, 60.0, 55.0]) + rng.uniform(-20, 20, size=3)
    img = base[None, None, :] * (1 + 0.25 * coarse[..., None]) + 12 * fine[..., None]
    return img


def _instrument(rng, h, w):
    """Boolean mask of a thick shaft entering from the border, plus its
    shading."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    side = rng.integers(0, 4)
    t = rng.uniform(0.15, 0.85)
    start = {0: (0.0, t * w), 1: (h - 1.0, t * w), 2: (t * h, 0.0), 3: (t * h, w - 1.0)}[side]
    tip = (rng.uniform(0.25, 0.75) * h, rng.uniform(0.25, 0.75) * w)
    d = np.array(tip) - np.array(start)
    length = np.hypot(*d)
    u = d / length
    rel_y, rel_x = yy - start[0], xx - start[1]
    along = np.clip(rel_y * u[0] + rel_x * u[1], 0, length)
    dist = np.hypot(rel_y - along * u[0], rel_x - along * u[1])
    radius = rng.uniform(0.04, 0.08) * min(h, w)
    shape = dist <= radius
    shade = 1.0 - 0.35 * (dist / radius) ** 2
    return shape, shade


def synth_frame(rng: np.random.Generator, spec: SynthSpec):
    """Return (raw uint8 (H, W, 3), instance mask uint8 (H, W))."""
    h, w = spec.height, spec.width
    img = _background(rng, h, w)
    labels = np.zeros((h, w), dtype=np.uint8)
    n = rng.choice(4, p=spec.instrument_probs)
    for k in range(1, n + 1):
        shape, shade = _instrument(rng, h, w)
        grey = rng.uniform(190, 235)
        tint = np.array([1.0, 1.0, 1.02])
        img[shape] = (grey * shade[shape])[:, None] * tint
        labels[shape] = k
    img += rng.normal(0, 4, size=img.shape)
    # occlusion can hide an earlier instrument completely
    present = [v for v in np.unique(labels) if v]
    remap = np.zeros(256, dtype=np.uint8)
    remap[present] = np.arange(1, len(present) + 1)
    labels = remap[labels]
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), labels


def make_synthetic_dataset(root, spec: SynthSpec, rng: np.random.Generator) -> Path:
    """Write a challenge-layout dataset of synthetic frames under ``root``."""
    root = Path(root)
    for stype in SurgeryType:
        for sid in range(1, spec.surgeries_per_type + 1):
            for fid in range(spec.frames_per_surgery):
                raw, labels = synth_frame(rng, spec)
                fdir = root / stype.value / str(sid) / str(fid)
                os.makedirs(fdir, exist_ok=True)
                Image.fromarray(raw).save(fdir / RAW_NAME)
                Image.fromarray(labels).save(fdir / MASK_NAME)
    return root


def load_frame(record: DatasetRecord):
    """Preprocessed (image, binary mask) for a labeled record."""
    image = preprocess(read_raw(record.image_path))
    if record.mask_path is None:
        return image, None
    return image, preprocess_mask(read_mask(record.mask_path))

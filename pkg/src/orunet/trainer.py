"""Per-fold training: patch batches, augmentation, nesterov SGD with a
polynomial learning-rate decay, checkpoints and an epoch log."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .augment import AugmentConfig, apply_augmentations
from .data import FoldSplit, load_dataset_index, load_frame, sample_patch
from .io import dataclass_from_ini, dataclass_to_ini, read_archive, write_archive
from .losses import downsample_soft_gt, total_loss
from .model import ModelConfig, ORUNet, build_model
from .seeding import substream, substream_seed

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 2000
    batches_per_epoch: int = 100
    initial_lr: float = 1.0
    momentum: float = 0.9
    poly_exponent: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0
    checkpoint_every: int = 50
    mixed_precision: bool = False
    patch_size: tuple = (256, 448)

    def __post_init__(self):
        self.patch_size = tuple(int(v) for v in self.patch_size)
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batches_per_epoch < 1:
            raise ValueError("batches_per_epoch must be >= 1")
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if len(self.patch_size) != 2:
            raise ValueError("patch_size must be (height, width)")


def poly_lr(epoch: int, config: TrainConfig) -> float:
    if not 0 <= epoch <= config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs}]")
    return config.initial_lr * (1 - epoch / config.epochs) ** config.poly_exponent


@torch.no_grad()
def sgd_nesterov_step(params, grads, momentum_buffers, lr, momentum, weight_decay=0.0):
    """In-place nesterov update: v <- mu v + g; p <- p - lr (g + mu v)."""
    for p, g, v in zip(params, grads, momentum_buffers, strict=True):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch: {tuple(p.shape)}, {tuple(g.shape)}, {tuple(v.shape)}")
        if weight_decay:
            g = g + weight_decay * p
        v.mul_(momentum).add_(g)
        p.sub_(lr * (g + momentum * v))
    return params, momentum_buffers


@dataclass
class Checkpoint:
    model: ORUNet
    momentum: dict
    epoch: int
    rng_state: dict
    train_config: TrainConfig | None = None

    @property
    def model_config(self) -> ModelConfig:
        return self.model.config


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    tensors = {f"model/{k}": v.detach().cpu().numpy() for k, v in ckpt.model.state_dict().items()}
    tensors.update({f"momentum/{k}": v.detach().cpu().numpy() for k, v in ckpt.momentum.items()})
    texts = {
        "model.ini": dataclass_to_ini(ckpt.model.config, "model"),
        "state.json": json.dumps({"epoch": ckpt.epoch, "rng": ckpt.rng_state}, sort_keys=True),
    }
    if ckpt.train_config is not None:
        texts["train.ini"] = dataclass_to_ini(ckpt.train_config, "train")
    write_archive(path, texts, tensors)


def load_checkpoint(path) -> Checkpoint:
    texts, tensors = read_archive(path)
    config = dataclass_from_ini(ModelConfig, texts["model.ini"], "model")
    model = ORUNet(config)
    expected = model.state_dict()
    state = {k[len("model/"):]: v for k, v in tensors.items() if k.startswith("model/")}
    missing = set(expected) - set(state)
    extra = set(state) - set(expected)
    if missing or extra:
        raise ValueError(f"{path}: tensors do not match config (missing {sorted(missing)[:3]}, "
                         f"unexpected {sorted(extra)[:3]})")
    for k, ref in expected.items():
        if tuple(state[k].shape) != tuple(ref.shape):
            raise ValueError(f"{path}: {k} has shape {state[k].shape}, config implies {tuple(ref.shape)}")
    model.load_state_dict({k: torch.from_numpy(np.array(v)) for k, v in state.items()})
    momentum = {k[len("momentum/"):]: torch.from_numpy(np.array(v))
                for k, v in tensors.items() if k.startswith("momentum/")}
    meta = json.loads(texts["state.json"])
    train_config = None
    if "train.ini" in texts:
        train_config = dataclass_from_ini(TrainConfig, texts["train.ini"], "train")
    return Checkpoint(model, momentum, meta["epoch"], meta["rng"], train_config)


def _batch(frames, cfg: TrainConfig, aug_cfg: AugmentConfig, patch_rng, aug_rng):
    images, masks = [], []
    for _ in range(cfg.batch_size):
        image, mask = frames[int(patch_rng.integers(len(frames)))]
        patch = apply_augmentations(sample_patch(image, mask, patch_rng, cfg.patch_size), aug_cfg, aug_rng)
        images.append(patch.image)
        masks.append(patch.mask)
    x = torch.from_numpy(np.stack(images).astype(np.float32))
    y = torch.from_numpy(np.stack(masks)[:, None].astype(np.float32))
    return x, y


def train_model(frames, model_cfg: ModelConfig, train_cfg: TrainConfig, aug_cfg: AugmentConfig,
                out_dir, fold_index: int = 0, resume=None) -> Checkpoint:
    """Optimize a fresh (or resumed) model on ``frames``, a list of
    preprocessed (image, binary mask) pairs."""
    if not frames:
        raise ValueError("empty training set")
    div = model_cfg.divisor
    ph, pw = train_cfg.patch_size
    if ph % div or pw % div:
        raise ValueError(f"patch size {ph}x{pw} must be divisible by {div} for {model_cfg.num_stages} stages")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = train_cfg.seed

    if resume is not None:
        ckpt = load_checkpoint(resume) if not isinstance(resume, Checkpoint) else resume
        if ckpt.model.config != model_cfg:
            raise ValueError("resume checkpoint was trained with a different model config")
        model, momentum, start = ckpt.model, ckpt.momentum, ckpt.epoch
        patch_rng, aug_rng = np.random.default_rng(), np.random.default_rng()
        patch_rng.bit_generator.state = ckpt.rng_state["patch"]
        aug_rng.bit_generator.state = ckpt.rng_state["augment"]
    else:
        model = build_model(model_cfg, substream_seed(seed, "init", fold_index))
        momentum = {n: torch.zeros_like(p) for n, p in model.named_parameters()}
        start = 0
        patch_rng = substream(seed, "patch", fold_index)
        aug_rng = substream(seed, "augment", fold_index)

    def snapshot(epoch):
        rng = {"patch": patch_rng.bit_generator.state, "augment": aug_rng.bit_generator.state}
        return Checkpoint(model, momentum, epoch, rng, train_cfg)

    names = [n for n, _ in model.named_parameters()]
    params = [p for _, p in model.named_parameters()]
    bufs = [momentum[n] for n in names]
    log_path = out_dir / f"fold{fold_index}_train.log"

    for epoch in range(start, train_cfg.epochs):
        t0 = time.perf_counter()
        lr = poly_lr(epoch, train_cfg)
        losses = []
        model.train()
        for _ in range(train_cfg.batches_per_epoch):
            x, y = _batch(frames, train_cfg, aug_cfg, patch_rng, aug_rng)
            with torch.autocast("cpu", dtype=torch.bfloat16, enabled=train_cfg.mixed_precision):
                logits = model(x)
            logits = [lg.float() for lg in logits]
            loss = total_loss(logits, downsample_soft_gt(y, len(logits)))
            model.zero_grad(set_to_none=False)
            loss.backward()
            sgd_nesterov_step(params, [p.grad for p in params], bufs, lr,
                              train_cfg.momentum, train_cfg.weight_decay)
            losses.append(loss.item())
        line = (f"epoch {epoch} lr {lr:.8f} loss {float(np.mean(losses)):.8f} "
                f"seconds {time.perf_counter() - t0:.3f}\n")
        with open(log_path, "a") as fh:
            fh.write(line)
        log.info(line.strip())
        done = epoch + 1
        if train_cfg.checkpoint_every and done % train_cfg.checkpoint_every == 0:
            save_checkpoint(out_dir / f"fold{fold_index}_epoch{done}.ckpt", snapshot(done))

    final = snapshot(max(start, train_cfg.epochs))
    save_checkpoint(out_dir / f"fold{fold_index}_final.ckpt", final)
    return final


def fold_frames(data_root, fold: FoldSplit, which: str = "train"):
    surgeries = fold.train_surgeries if which == "train" else fold.val_surgeries
    records = [r for r in load_dataset_index(data_root) if r.surgery in surgeries and r.labeled]
    return records, [load_frame(r) for r in records]


def train_fold(data_root, fold: FoldSplit, model_cfg: ModelConfig, train_cfg: TrainConfig,
               aug_cfg: AugmentConfig, out_dir, resume=None) -> Checkpoint:
    records, frames = fold_frames(data_root, fold, "train")
    if not frames:
        raise ValueError(f"fold {fold.fold_index} has no labeled training frames")
    return train_model(frames, model_cfg, train_cfg, aug_cfg, out_dir, fold.fold_index, resume)


def read_log(path) -> list[dict]:
    rows = []
    for line in Path(path).read_text().splitlines():
        tok = line.split()
        rows.append({"epoch": int(tok[1]), "lr": float(tok[3]), "loss": float(tok[5]),
                     "seconds": float(tok[7])})
    return rows

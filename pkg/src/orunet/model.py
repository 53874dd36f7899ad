"""Residual-encoder U-Net with deep supervision heads."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn
from torch.nn import functional as F


@dataclass
class ModelConfig:
    base_features: int = 48
    max_features: int = 512
    num_stages: int = 6
    blocks_per_stage: list = field(default_factory=lambda: [1, 2, 3, 4, 5, 5])
    num_classes: int = 2
    deep_supervision_heads: int = 4
    input_channels: int = 3
    norm_epsilon: float = 1e-5

    def __post_init__(self):
        self.blocks_per_stage = [int(b) for b in self.blocks_per_stage]
        self.validate()

    def validate(self):
        if self.num_stages < 1:
            raise ValueError("num_stages must be >= 1")
        if len(self.blocks_per_stage) != self.num_stages:
            raise ValueError(
                f"blocks_per_stage has {len(self.blocks_per_stage)} entries, "
                f"expected num_stages={self.num_stages}")
        if any(b < 1 for b in self.blocks_per_stage):
            raise ValueError("every stage needs at least one residual block")
        if any(a > b for a, b in zip(self.blocks_per_stage, self.blocks_per_stage[1:])):
            raise ValueError("blocks_per_stage must be nondecreasing")
        if not 1 <= self.deep_supervision_heads <= max(1, self.num_stages - 1):
            raise ValueError(
                f"deep_supervision_heads must be in [1, {max(1, self.num_stages - 1)}]")
        if self.base_features < 1 or self.max_features < self.base_features:
            raise ValueError("need 1 <= base_features <= max_features")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2 (softmax + argmax)")

    @property
    def divisor(self) -> int:
        return 2 ** (self.num_stages - 1)


def feature_counts(config: ModelConfig) -> list[int]:
    return [min(config.base_features * 2 ** s, config.max_features)
            for s in range(config.num_stages)]


class PreActResidualBlock(nn.Module):
    """norm -> ReLU -> conv3x3 -> norm -> ReLU -> conv3x3, plus skip.

    With ``stride=2`` the first conv downsamples and the skip path is a
    strided 1x1 projection of the pre-activated input.
    """

    def __init__(self, in_ch, out_ch, stride=1, eps=1e-5):
        super().__init__()
        self.norm1 = nn.BatchNorm2d(in_ch, eps=eps)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.norm2 = nn.BatchNorm2d(out_ch, eps=eps)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        if stride != 1 or in_ch != out_ch:
            self.projection = nn.Conv2d(in_ch, out_ch, 1, stride=stride)
        else:
            self.projection = None

    def forward(self, x):
        pre = F.relu(self.norm1(x))
        skip = x if self.projection is None else self.projection(pre)
        out = self.conv1(pre)
        out = self.conv2(F.relu(self.norm2(out)))
        return out + skip


class DecoderLevel(nn.Module):
    def __init__(self, below_ch, ch, eps=1e-5):
        super().__init__()
        self.up = nn.ConvTranspose2d(below_ch, ch, 2, stride=2, bias=False)
        self.conv1 = nn.Conv2d(2 * ch, ch, 3, padding=1, bias=False)
        self.norm1 = nn.BatchNorm2d(ch, eps=eps)
        self.conv2 = nn.Conv2d(ch, ch, 3, padding=1, bias=False)
        self.norm2 = nn.BatchNorm2d(ch, eps=eps)

    def forward(self, below, skip):
        x = torch.cat([self.up(below), skip], dim=1)
        x = F.relu(self.norm1(self.conv1(x)))
        return F.relu(self.norm2(self.conv2(x)))


class ORUNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        widths = feature_counts(config)
        eps = config.norm_epsilon

        self.stem = nn.Conv2d(config.input_channels, widths[0], 3, padding=1, bias=False)
        self.encoder = nn.ModuleList()
        for s, n_blocks in enumerate(config.blocks_per_stage):
            blocks = []
            for b in range(n_blocks):
                if b == 0 and s > 0:
                    blocks.append(PreActResidualBlock(widths[s - 1], widths[s], stride=2, eps=eps))
                else:
                    blocks.append(PreActResidualBlock(widths[s], widths[s], eps=eps))
            self.encoder.append(nn.Sequential(*blocks))

        # decoder[s] produces the output at stage s resolution, s = 0..num_stages-2
        self.decoder = nn.ModuleList(
            DecoderLevel(widths[s + 1], widths[s], eps=eps) for s in range(config.num_stages - 1)
        )
        n_heads = config.deep_supervision_heads
        head_widths = widths[:n_heads] if config.num_stages > 1 else widths[:1]
        self.heads = nn.ModuleList(nn.Conv2d(w, config.num_classes, 1) for w in head_widths)

    def forward(self, x):
        """Logits per supervised resolution, full resolution first."""
        div = self.config.divisor
        if x.shape[-2] % div or x.shape[-1] % div:
            raise ValueError(
                f"spatial size {tuple(x.shape[-2:])} must be divisible by {div} "
                f"(2^(num_stages-1))")
        skips = []
        x = self.stem(x)
        for stage in self.encoder:
            x = stage(x)
            skips.append(x)
        outs = {}
        for s in range(self.config.num_stages - 2, -1, -1):
            x = self.decoder[s](x, skips[s])
            outs[s] = x
        if self.config.num_stages == 1:
            outs[0] = x
        return [head(outs[i]) for i, head in enumerate(self.heads)]


def init_weights(model: nn.Module, seed: int) -> nn.Module:
    """He (fan-in) init for conv kernels, zero biases, unit/zero norm affine."""
    g = torch.Generator().manual_seed(int(seed))
    for name, m in model.named_modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu", generator=g)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
    return model


def build_model(config: ModelConfig, seed: int = 0) -> ORUNet:
    return init_weights(ORUNet(config), seed)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def forward(model: ORUNet, batch: torch.Tensor, mode: str = "eval"):
    """``train``: list of logits per head. ``eval``: full-resolution softmax
    computed with running normalization statistics."""
    if mode == "train":
        model.train()
        return model(batch)
    if mode != "eval":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    model.eval()
    with torch.no_grad():
        return torch.softmax(model(batch)[0], dim=1)

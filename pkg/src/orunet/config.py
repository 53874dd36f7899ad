"""Experiment configuration as sectioned key-value text.

::

    [data]
    data_root = /path/to/data
    output_dir = runs/exp1
    folds = all
    eval_convention = train

    [model]
    base_features = 48
    ...

    [train]
    [augment]

Missing keys fall back to defaults. ``parse -> serialize -> parse`` is the
identity.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .augment import AugmentConfig
from .io import dataclass_from_section, section_to_dict
from .model import ModelConfig
from .trainer import TrainConfig

DATA_ROOT_ENV = "ORUNET_DATA_ROOT"


@dataclass
class ExperimentConfig:
    data_root: str = ""
    output_dir: str = "runs"
    folds: str = "all"
    eval_convention: str = "train"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.eval_convention not in ("train", "test"):
            raise ValueError(f"eval_convention must be 'train' or 'test', got {self.eval_convention!r}")
        self.fold_indices(None)

    def fold_indices(self, n_folds):
        """``None`` stands for all folds when ``n_folds`` is unknown."""
        if self.folds.strip() == "all":
            return None if n_folds is None else list(range(n_folds))
        return [int(t) for t in self.folds.split(",") if t.strip()]

    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        cp["data"] = {
            "data_root": self.data_root,
            "output_dir": self.output_dir,
            "folds": self.folds,
            "eval_convention": self.eval_convention,
        }
        cp["model"] = section_to_dict(self.model)
        cp["train"] = section_to_dict(self.train)
        cp["augment"] = section_to_dict(self.augment)
        buf = []
        for name in cp.sections():
            buf.append(f"[{name}]\n")
            for k, v in cp[name].items():
                buf.append(f"{k} = {v}\n")
            buf.append("\n")
        return "".join(buf)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        unknown = set(cp.sections()) - {"data", "model", "train", "augment"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        data = dict(cp["data"]) if cp.has_section("data") else {}
        if not data.get("data_root") and os.environ.get(DATA_ROOT_ENV):
            data["data_root"] = os.environ[DATA_ROOT_ENV]
        bad = set(data) - {"data_root", "output_dir", "folds", "eval_convention"}
        if bad:
            raise ValueError(f"unknown keys in [data]: {sorted(bad)}")
        get = lambda name: cp[name] if cp.has_section(name) else None  # noqa: E731
        return cls(
            model=dataclass_from_section(ModelConfig, get("model")),
            train=dataclass_from_section(TrainConfig, get("train")),
            augment=dataclass_from_section(AugmentConfig, get("augment")),
            **data,
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

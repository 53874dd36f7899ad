"""
The residual encoder-decoder
============================

Builds the default network and a desk-sized one, then prints widths,
parameter counts and the shapes of the supervised heads.
"""

import torch

from orunet.model import ModelConfig, build_model, feature_counts, forward, parameter_count

default = ModelConfig()
print("default widths:", feature_counts(default))
print("default parameters:", f"{parameter_count(build_model(default)):,}")
print("input sides must be multiples of", default.divisor)

small = ModelConfig(base_features=8, num_stages=3, blocks_per_stage=[1, 1, 1], deep_supervision_heads=2)
model = build_model(small, seed=0)
print("small widths:", feature_counts(small), "parameters:", parameter_count(model))

batch = torch.rand(2, 3, 64, 112)
for i, head in enumerate(forward(model, batch, mode="train")):
    print(f"head {i}: {tuple(head.shape)}")

probs = forward(model, batch, mode="eval")
print("eval output sums to one per pixel:", torch.allclose(probs.sum(1), torch.ones(2, 64, 112)))

try:
    forward(model, torch.rand(1, 3, 62, 112))
except ValueError as exc:
    print("rejected:", exc)

"""
Augmenting a training patch
===========================

Samples a patch from a synthetic frame and applies the default random
augmentations. Spatial transforms move image and mask together; intensity
transforms only touch the image. Writes a side-by-side figure.
"""

import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from orunet.augment import AugmentConfig, apply_augmentations, mirror, rotate
from orunet.data import SynthSpec, preprocess, preprocess_mask, sample_patch, synth_frame

out = sys.argv[1] if len(sys.argv) > 1 else "augmentation.png"
rng = np.random.default_rng(0)

raw, labels = synth_frame(rng, SynthSpec(height=256, width=448))
image, mask = preprocess(raw), preprocess_mask(labels)
patch = sample_patch(image, mask, rng, size=(96, 160))
print("patch origin:", patch.origin, "foreground fraction:", round(float(patch.mask.mean()), 3))

# mirroring twice is the identity, rotation by 90 degrees keeps the labels binary
img2, m2 = mirror(*mirror(patch.image, patch.mask, ["horizontal"]), ["horizontal"])
print("double mirror exact:", np.array_equal(img2, patch.image) and np.array_equal(m2, patch.mask))
_, rm = rotate(patch.image, patch.mask, 90)
print("rotated mask values:", np.unique(rm))

cfg = AugmentConfig()
augmented = [apply_augmentations(patch, cfg, rng) for _ in range(3)]

fig, axes = plt.subplots(2, 4, figsize=(12, 4))
for col, p in enumerate([patch] + augmented):
    axes[0, col].imshow(np.moveaxis(p.image, 0, -1))
    axes[1, col].imshow(p.mask, cmap="gray")
    axes[0, col].set_title("original" if col == 0 else f"draw {col}")
for ax in axes.flat:
    ax.axis("off")
fig.tight_layout()
fig.savefig(out)
print("wrote", out)

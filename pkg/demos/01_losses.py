"""
Losses against soft targets
===========================

Deep supervision compares coarse heads with average-pooled labels, so the
targets there are fractions rather than 0/1. This walks through the soft
Dice variant, the combined loss and the head weights.
"""

import torch

from orunet.losses import downsample_soft_gt, ds_weights_exact, soft_dice_loss, soft_dice_soft_gt, total_loss

# one pixel, prediction 0.7 against a half-covered target
x = torch.tensor([0.7]).reshape(1, 1, 1, 1)
y = torch.tensor([0.5]).reshape(1, 1, 1, 1)
print("soft-GT dice  (0.7 vs 0.5):", round(soft_dice_soft_gt(x, y).item(), 6))
print("plain dice    (0.7 vs 0.5):", round(soft_dice_loss(x, y).item(), 6))

# the soft variant reaches -1 for any exact match, the plain one does not
print("soft-GT dice  (0.5 vs 0.5):", round(soft_dice_soft_gt(y, y).item(), 6))
print("plain dice    (0.5 vs 0.5):", round(soft_dice_loss(y, y).item(), 6))

# pooled label stack for a small mask
mask = torch.zeros(1, 1, 8, 8)
mask[..., 2:7, 1:4] = 1
for level, t in enumerate(downsample_soft_gt(mask, 3)):
    print(f"level {level}: shape {tuple(t.shape[2:])}, mean {t.mean().item():.4f}")

print("head weights:", [str(w) for w in ds_weights_exact(4)])

logits = [torch.randn(1, 2, 8 >> i, 8 >> i, generator=torch.Generator().manual_seed(i)) for i in range(3)]
print("total loss on random logits:", round(total_loss(logits, downsample_soft_gt(mask, 3)).item(), 4))

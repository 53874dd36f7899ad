"""
Scoring a cohort
================

How empty frames are handled decides what the headline mean means. The same
predictions are scored under both conventions.
"""

import numpy as np

from orunet.evaluation import dice_score, histogram_table, percentile_cases, summarize

rng = np.random.default_rng(7)
preds, gts = [], []
for i in range(30):
    gt = np.zeros((24, 24), np.uint8)
    if i % 5:
        y, x = rng.integers(2, 14, size=2)
        gt[y:y + 8, x:x + 8] = 1
    pred = gt.copy()
    pred[rng.integers(24, size=4), rng.integers(24, size=4)] ^= 1  # a few flipped pixels
    if i % 10 == 0:
        pred[:] = 0  # an empty frame predicted empty
    preds.append(pred)
    gts.append(gt)

for convention in ("train", "test"):
    recs = [dice_score(p, g, convention, ("Prokto", 1, i)) for i, (p, g) in enumerate(zip(preds, gts))]
    s = summarize(recs)
    print(f"{convention}: mean {s.mean:.4f} median {s.median:.4f} "
          f"IQR {s.iqr[0]:.4f}-{s.iqr[1]:.4f} included {s.count_included} excluded {s.count_excluded}")

worst, middle, best = percentile_cases(recs, [0, 50, 100])
print("worst / median / best frames:", worst, middle, best)
print(histogram_table(s).splitlines()[-3:])

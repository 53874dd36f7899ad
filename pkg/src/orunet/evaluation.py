"""Per-image Dice scoring and cohort summaries.

Two exclusion conventions:

``train``
    an image is excluded only if prediction and ground truth are both
    empty; an empty ground truth with any predicted foreground scores 0.
``test``
    every image with an empty ground truth is excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io import atomic_path, atomic_write_text

CONVENTIONS = ("train", "test")
EXCLUDED = "EXCLUDED"


@dataclass(frozen=True)
class DiceRecord:
    record_id: tuple
    dice: float | None  # None marks an excluded image

    @property
    def excluded(self) -> bool:
        return self.dice is None


@dataclass
class CohortSummary:
    mean: float
    median: float
    iqr: tuple
    count_included: int
    count_excluded: int
    histogram: np.ndarray
    bin_edges: np.ndarray = field(repr=False)


def dice_score(pred: np.ndarray, gt: np.ndarray, convention: str = "train", record_id=()) -> DiceRecord:
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}, got {convention!r}")
    pred, gt = np.asarray(pred) > 0, np.asarray(gt) > 0
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape} vs ground truth {gt.shape}")
    n_pred, n_gt = int(pred.sum()), int(gt.sum())
    if n_gt == 0 and (convention == "test" or n_pred == 0):
        return DiceRecord(record_id, None)
    inter = int(np.logical_and(pred, gt).sum())
    return DiceRecord(record_id, 2.0 * inter / (n_pred + n_gt))


def _lower_median(values):
    s = np.sort(values)
    return float(s[(len(s) - 1) // 2])


def summarize(records, bins: int = 20) -> CohortSummary:
    included = np.array([r.dice for r in records if not r.excluded], dtype=np.float64)
    excluded = sum(1 for r in records if r.excluded)
    if included.size == 0:
        raise ValueError("no included records to summarize")
    q25, q75 = np.percentile(included, [25, 75], method="linear")
    hist, edges = np.histogram(included, bins=bins, range=(0.0, 1.0))
    return CohortSummary(
        mean=float(included.mean()),
        median=_lower_median(included),
        iqr=(float(q25), float(q75)),
        count_included=int(included.size),
        count_excluded=excluded,
        histogram=hist,
        bin_edges=edges,
    )


def percentile_cases(records, percentiles) -> list:
    """For each percentile, the id of the record whose Dice is nearest the
    percentile value (ties go to the lower record id)."""
    included = sorted((r for r in records if not r.excluded), key=lambda r: r.record_id)
    if not included:
        raise ValueError("no included records")
    scores = np.array([r.dice for r in included])
    out = []
    for q in percentiles:
        target = np.percentile(scores, q, method="linear")
        i = int(np.argmin(np.abs(scores - target)))  # first minimum = lowest id
        out.append(included[i].record_id)
    return out


# reporting -----------------------------------------------------------------

def histogram_table(summary: CohortSummary) -> str:
    lines = ["bin_low,bin_high,count\n"]
    for lo, hi, n in zip(summary.bin_edges[:-1], summary.bin_edges[1:], summary.histogram):
        lines.append(f"{lo:.2f},{hi:.2f},{int(n)}\n")
    return "".join(lines)


def histogram_report(summary: CohortSummary, out) -> tuple[Path, Path]:
    """Write ``<out>.txt`` (bin table) and ``<out>.png`` (bar chart)."""
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    out = Path(out)
    txt, png = out.with_suffix(".txt"), out.with_suffix(".png")
    atomic_write_text(txt, histogram_table(summary))
    fig, ax = plt.subplots(figsize=(6, 4))
    edges = summary.bin_edges
    ax.bar(edges[:-1], summary.histogram, width=np.diff(edges), align="edge", edgecolor="black")
    ax.set_xlabel("Dice")
    ax.set_ylabel("images")
    ax.set_xlim(0, 1)
    fig.tight_layout()
    with atomic_path(png) as tmp:
        fig.savefig(tmp, format="png")
    plt.close(fig)
    return txt, png


def scores_csv(records) -> str:
    lines = ["surgery_type,surgery_id,frame_id,dice\n"]
    for r in records:
        t, s, f = r.record_id
        lines.append(f"{t},{s},{f},{EXCLUDED if r.excluded else repr(r.dice)}\n")
    return "".join(lines)


def read_scores_csv(text: str) -> list[DiceRecord]:
    out = []
    for line in text.splitlines()[1:]:
        if not line.strip():
            continue
        t, s, f, d = line.split(",")
        out.append(DiceRecord((t, int(s), int(f)), None if d == EXCLUDED else float(d)))
    return out


def summary_text(summary: CohortSummary, convention: str) -> str:
    return (
        "[summary]\n"
        f"convention = {convention}\n"
        f"mean = {summary.mean!r}\n"
        f"median = {summary.median!r}\n"
        f"q25 = {summary.iqr[0]!r}\n"
        f"q75 = {summary.iqr[1]!r}\n"
        f"count_included = {summary.count_included}\n"
        f"count_excluded = {summary.count_excluded}\n"
    )

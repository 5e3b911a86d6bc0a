"""Overlap metrics: hard Dice for label maps, soft Dice for probability maps."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .volume import LabelMap, Volume

SMOOTH = 1e-6


def dice(a: LabelMap, b: LabelMap, label: int) -> float:
    """2|A∩B| / (|A|+|B|) for one label; 1.0 when absent from both maps."""
    if a.dims != b.dims:
        raise ValueError(f"dim mismatch: {a.dims} vs {b.dims}")
    am = a.labels == label
    bm = b.labels == label
    denom = int(am.sum()) + int(bm.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.logical_and(am, bm).sum()) / denom


def _pred_to_array(pred) -> np.ndarray:
    if isinstance(pred, np.ndarray):
        return pred
    return np.stack([p.data if isinstance(p, Volume) else np.asarray(p) for p in pred])


def soft_dice_loss(pred, target: LabelMap, labels: Sequence[int] | None = None) -> float:
    """1 minus the mean squared-denominator soft Dice against the one-hot target.

    ``pred`` is a (K, nx, ny, nz) array or a sequence of K probability
    volumes; channel k scores label ``labels[k]`` (sorted target labels by
    default).
    """
    p = _pred_to_array(pred).astype(np.float64)
    if labels is None:
        labels = sorted(target.label_set)
    if p.shape[0] != len(labels):
        raise ValueError(
            f"channel mismatch: {p.shape[0]} prediction channels vs {len(labels)} labels"
        )
    if p.shape[1:] != target.dims:
        raise ValueError(f"dim mismatch: {p.shape[1:]} vs {target.dims}")
    scores = []
    for k, lab in enumerate(labels):
        t = (target.labels == lab).astype(np.float64)
        pk = p[k]
        num = 2.0 * float((pk * t).sum()) + SMOOTH
        den = float((pk * pk).sum()) + float((t * t).sum()) + SMOOTH
        scores.append(num / den)
    return 1.0 - float(np.mean(scores))


@dataclass(frozen=True)
class DiceReport:
    """Per-label Dice, counts in each map, and the mean over a label subset."""

    per_label: Mapping[int, float]
    counts: Mapping[int, tuple[int, int]]
    mean: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fp:
            writer = csv.writer(fp)
            writer.writerow(["label", "dice", "count_a", "count_b"])
            for k in sorted(self.per_label):
                na, nb = self.counts[k]
                writer.writerow([k, f"{self.per_label[k]:.6f}", na, nb])
            writer.writerow(["mean", f"{self.mean:.6f}", "", ""])


def dice_report(
    a: LabelMap,
    b: LabelMap,
    labels: Sequence[int] | None = None,
    contralateral: Sequence[tuple[int, int]] | None = None,
) -> DiceReport:
    """Per-label Dice over a subset (union of non-background labels by default).

    ``contralateral`` pairs are averaged into a single entry keyed by the
    first label of the pair.
    """
    if a.dims != b.dims:
        raise ValueError(f"dim mismatch: {a.dims} vs {b.dims}")
    if labels is None:
        labels = sorted((set(a.label_set) | set(b.label_set)) - {0})
    labels = [int(k) for k in labels]

    per_label = {}
    counts = {}
    for k in labels:
        per_label[k] = dice(a, b, k)
        counts[k] = (int((a.labels == k).sum()), int((b.labels == k).sum()))

    if contralateral:
        merged = dict(per_label)
        for left, right in contralateral:
            if left in merged and right in merged:
                merged[left] = 0.5 * (merged[left] + merged.pop(right))
        per_label = merged

    mean = float(np.mean(list(per_label.values()))) if per_label else 1.0
    return DiceReport(per_label=per_label, counts=counts, mean=mean)

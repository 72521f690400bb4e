"""COCO-style average precision over boxes or masks."""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..core.geometry import BinaryMask, Box, box_iou_matrix, mask_iou_matrix, mask_to_box
from .panoptic import Segment

DEFAULT_IOU_THRESHOLDS = tuple(np.round(np.linspace(0.5, 0.95, 10), 2))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
INTERPOLATIONS = ("coco101", "continuous")
MODES = ("box", "mask")


@dataclass
class Detection:
    """A scored prediction or (score ignored) a ground-truth object."""

    label: str
    mask: Optional[BinaryMask] = None
    box: Optional[Box] = None
    score: float = 1.0

    def box_array(self) -> np.ndarray:
        box = self.box if self.box is not None else mask_to_box(self.mask)
        return box.to_array()

    @classmethod
    def from_segment(cls, segment: Segment) -> "Detection":
        return cls(segment.label, mask=segment.mask, score=segment.score)


def _ious(preds: List[Detection], gts: List[Detection], mode: str) -> np.ndarray:
    if not preds or not gts:
        return np.zeros((len(preds), len(gts)))
    if mode == "box":
        return box_iou_matrix(np.stack([p.box_array() for p in preds]), np.stack([g.box_array() for g in gts]))
    return mask_iou_matrix(np.stack([p.mask.data for p in preds]), np.stack([g.mask.data for g in gts]))


def _integrate(recall: np.ndarray, precision: np.ndarray, interpolation: str) -> float:
    if recall.size == 0:
        return 0.0
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    if interpolation == "continuous":
        steps = np.diff(np.concatenate([[0.0], recall]))
        return float(np.sum(steps * envelope))
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.array([envelope[i] if i < envelope.size else 0.0 for i in idx])
    return float(sampled.mean())


def _class_ap(preds: Sequence[List[Detection]], gts: Sequence[List[Detection]], label: str,
              thresholds: Sequence[float], mode: str, interpolation: str) -> List[float]:
    per_image = []
    n_gt = 0
    scored = []
    for image, (p_all, g_all) in enumerate(zip(preds, gts)):
        p = [d for d in p_all if d.label == label]
        g = [d for d in g_all if d.label == label]
        n_gt += len(g)
        per_image.append((_ious(p, g, mode), len(g)))
        scored.extend((-d.score, image, i) for i, d in enumerate(p))
    scored.sort()

    results = []
    for t in thresholds:
        taken = [np.zeros(n, dtype=bool) for _, n in per_image]
        hits = np.zeros(len(scored), dtype=bool)
        for rank, (_, image, i) in enumerate(scored):
            ious, _ = per_image[image]
            candidates = np.where(~taken[image] & (ious[i] >= t - 1e-12))[0]
            if candidates.size == 0:
                continue
            best = candidates[np.argmax(ious[i, candidates])]
            taken[image][best] = True
            hits[rank] = True
        tp = np.cumsum(hits)
        recall = tp / n_gt
        precision = tp / np.arange(1, len(scored) + 1)
        results.append(_integrate(recall, precision, interpolation))
    return results


def average_precision(preds: Sequence[Sequence[Detection]], gts: Sequence[Sequence[Detection]],
                      iou_thresholds: Sequence[float] = DEFAULT_IOU_THRESHOLDS, mode: str = "box",
                      interpolation: str = "coco101") -> Dict:
    """Mean AP over classes with ground truth and over IoU thresholds.

    Predictions are taken in descending score order per class and each
    matches the unmatched ground truth of highest IoU at or above the
    threshold. ``coco101`` samples the precision envelope at 101 recall
    points; ``continuous`` integrates the envelope exactly.
    """
    if mode not in MODES:
        raise ValueError(f"Unknown AP mode '{mode}'")
    if interpolation not in INTERPOLATIONS:
        raise ValueError(f"Unknown interpolation '{interpolation}'")
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} prediction lists for {len(gts)} ground-truth lists")
    thresholds = [float(t) for t in iou_thresholds]
    preds = [list(p) for p in preds]
    gts = [list(g) for g in gts]
    labels = sorted({d.label for image in gts for d in image})

    table = {label: _class_ap(preds, gts, label, thresholds, mode, interpolation) for label in labels}
    if not table:
        return {"ap": 0.0, "per_class": {}, "per_threshold": {t: 0.0 for t in thresholds}, "mode": mode}
    grid = np.array([table[label] for label in labels])
    report = {
        "ap": float(grid.mean()),
        "per_class": {label: float(np.mean(table[label])) for label in labels},
        "per_threshold": {t: float(grid[:, j].mean()) for j, t in enumerate(thresholds)},
        "mode": mode,
    }
    for t in (0.5, 0.75):
        if t in report["per_threshold"]:
            report[f"ap{int(round(t * 100))}"] = report["per_threshold"][t]
    return report

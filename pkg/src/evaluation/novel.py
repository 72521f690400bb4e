"""Held-out class evaluation against a random-label baseline."""
import logging
from typing import Dict, Sequence

import numpy as np

from ..openvocab.combine import ClassProbabilities
from .detection import DEFAULT_IOU_THRESHOLDS, Detection, average_precision

logger = logging.getLogger(__name__)


def novel_probability_mass(probs: Sequence[ClassProbabilities], novel_classes: Sequence[str]) -> float:
    """Mean p_final mass on the novel columns over every proposal."""
    masses = []
    for p in probs:
        cols = [i for i, label in enumerate(p.labels) if label in set(novel_classes)]
        if cols and len(p.p_final):
            masses.extend(p.p_final[:, cols].sum(axis=1).tolist())
    return float(np.mean(masses)) if masses else 0.0


def _restricted_ap(preds, gts, novel_classes, mode, thresholds) -> Dict:
    keep = set(novel_classes)
    gts = [[d for d in image if d.label in keep] for image in gts]
    preds = [[d for d in image if d.label in keep] for image in preds]
    return average_precision(preds, gts, thresholds, mode=mode)


def novel_class_ap(preds: Sequence[Sequence[Detection]], gts: Sequence[Sequence[Detection]],
                   novel_classes: Sequence[str], label_pool: Sequence[str], mode: str = "mask",
                   draws: int = 20, seed: int = 0,
                   iou_thresholds: Sequence[float] = DEFAULT_IOU_THRESHOLDS) -> Dict:
    """AP on held-out classes, and the same AP after relabeling every prediction uniformly at random.

    The baseline keeps masks and scores and averages ``draws`` seeded label draws from ``label_pool``.
    """
    report = _restricted_ap(preds, gts, novel_classes, mode, iou_thresholds)
    rng = np.random.default_rng(seed)
    pool = list(label_pool)
    baseline = []
    for _ in range(draws):
        shuffled = [[Detection(pool[int(rng.integers(len(pool)))], d.mask, d.box, d.score) for d in image]
                    for image in preds]
        baseline.append(_restricted_ap(shuffled, gts, novel_classes, mode, iou_thresholds)["ap"])
    result = {
        "novel_ap": report["ap"],
        "random_baseline_ap": float(np.mean(baseline)) if baseline else 0.0,
        "per_class": report["per_class"],
        "draws": draws,
    }
    result["beats_baseline"] = result["novel_ap"] > result["random_baseline_ap"]
    if not result["beats_baseline"]:
        logger.warning(f"⚠️ Novel-class AP {result['novel_ap']:.4f} does not beat "
                       f"the random baseline {result['random_baseline_ap']:.4f}")
    return result

"""Panoptic segments and Panoptic Quality."""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..core.errors import OverlappingSegmentsError, ShapeMismatchError
from ..core.geometry import BinaryMask
from ..synthdata.generator import SceneSample
from ..synthdata.vocabulary import OTHER_LABEL

logger = logging.getLogger(__name__)

THING = "thing"
STUFF = "stuff"
MATCH_IOU = 0.5


@dataclass
class Segment:
    mask: BinaryMask
    label: str
    kind: str = THING
    score: float = 1.0
    source_index: Optional[int] = None

    def __post_init__(self):
        if self.kind not in (THING, STUFF):
            raise ValueError(f"Segment kind must be '{THING}' or '{STUFF}', got '{self.kind}'")


@dataclass
class PanopticPrediction:
    """Pairwise disjoint segments over one image."""

    segments: List[Segment] = field(default_factory=list)

    def __post_init__(self):
        self.segments = list(self.segments)
        if not self.segments:
            return
        shapes = {s.mask.shape for s in self.segments}
        if len(shapes) > 1:
            raise ShapeMismatchError(f"Segments disagree in shape: {sorted(shapes)}")
        coverage = np.zeros(self.segments[0].mask.shape, dtype=np.int32)
        for s in self.segments:
            coverage += s.mask.data
        if coverage.max() > 1:
            raise OverlappingSegmentsError(f"{int((coverage > 1).sum())} pixels are claimed by several segments")

    def __len__(self) -> int:
        return len(self.segments)

    def without_other(self) -> "PanopticPrediction":
        return PanopticPrediction([s for s in self.segments if s.label != OTHER_LABEL])


def panoptic_from_sample(sample: SceneSample) -> PanopticPrediction:
    segments = [Segment(inst.mask, inst.class_name, THING) for inst in sample.instances]
    segments += [Segment(region.mask, region.class_name, STUFF) for region in sample.stuff_regions]
    return PanopticPrediction(segments)


def _iou(a: BinaryMask, b: BinaryMask) -> float:
    inter = np.logical_and(a.data, b.data).sum()
    union = np.logical_or(a.data, b.data).sum()
    return float(inter / union) if union else 0.0


def panoptic_quality(preds: Union[PanopticPrediction, Sequence[PanopticPrediction]],
                     gts: Union[PanopticPrediction, Sequence[PanopticPrediction]]) -> Dict:
    """PQ, SQ and RQ per class and averaged over classes seen on either side.

    Segments match when they share a class and their IoU exceeds 0.5.
    "other" segments are discarded first.
    """
    if isinstance(preds, PanopticPrediction):
        preds = [preds]
    if isinstance(gts, PanopticPrediction):
        gts = [gts]
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions for {len(gts)} ground truths")

    stats = defaultdict(lambda: {"iou": 0.0, "tp": 0, "fp": 0, "fn": 0})
    kinds: Dict[str, str] = {}
    for pred, gt in zip(preds, gts):
        pred = PanopticPrediction(pred.segments).without_other()
        gt = PanopticPrediction(gt.segments).without_other()
        for s in gt.segments:
            kinds[s.label] = s.kind
        for s in pred.segments:
            kinds.setdefault(s.label, s.kind)
        matched_pred, matched_gt = set(), set()
        for gi, g in enumerate(gt.segments):
            for pi, p in enumerate(pred.segments):
                if pi in matched_pred or p.label != g.label:
                    continue
                iou = _iou(p.mask, g.mask)
                if iou > MATCH_IOU:
                    stats[g.label]["iou"] += iou
                    stats[g.label]["tp"] += 1
                    matched_pred.add(pi)
                    matched_gt.add(gi)
                    break
        for gi, g in enumerate(gt.segments):
            if gi not in matched_gt:
                stats[g.label]["fn"] += 1
        for pi, p in enumerate(pred.segments):
            if pi not in matched_pred:
                stats[p.label]["fp"] += 1

    per_class = {}
    for label in sorted(stats):
        s = stats[label]
        denom = s["tp"] + 0.5 * s["fp"] + 0.5 * s["fn"]
        if denom == 0:
            continue
        sq = s["iou"] / s["tp"] if s["tp"] else 0.0
        rq = s["tp"] / denom
        per_class[label] = {"pq": s["iou"] / denom, "sq": sq, "rq": rq, "tp": s["tp"], "fp": s["fp"],
                            "fn": s["fn"], "kind": kinds[label]}

    def _mean(labels, key):
        values = [per_class[c][key] for c in labels]
        return float(np.mean(values)) if values else 0.0

    labels = list(per_class)
    things = [c for c in labels if per_class[c]["kind"] == THING]
    stuff = [c for c in labels if per_class[c]["kind"] == STUFF]
    return {
        "pq": _mean(labels, "pq"),
        "sq": _mean(labels, "sq"),
        "rq": _mean(labels, "rq"),
        "pq_thing": _mean(things, "pq"),
        "pq_stuff": _mean(stuff, "pq"),
        "num_classes": len(labels),
        "per_class": per_class,
    }

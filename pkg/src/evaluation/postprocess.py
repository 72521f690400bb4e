"""Turn scored proposals into a non-overlapping panoptic prediction."""
import logging
from dataclasses import asdict, dataclass
from typing import Collection, Dict, List

import numpy as np
import torch

from config.settings import POSTPROCESS_DEFAULTS

from ..assignment.nms import nms
from ..core.errors import ConfigError, ShapeMismatchError
from ..core.geometry import BinaryMask
from ..decoders.proposals import ProposalSet, ProposalSource
from ..openvocab.combine import ClassProbabilities
from .panoptic import STUFF, THING, PanopticPrediction, Segment

logger = logging.getLogger(__name__)


@dataclass
class PostprocessThresholds:
    score_threshold: float = POSTPROCESS_DEFAULTS["score_threshold"]
    mask_threshold: float = POSTPROCESS_DEFAULTS["mask_threshold"]
    overlap_keep: float = POSTPROCESS_DEFAULTS["overlap_keep"]
    nms_iou: float = POSTPROCESS_DEFAULTS["nms_iou"]

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not 0.0 <= float(value) <= 1.0:
                raise ConfigError(f"Postprocess threshold {name}={value} must lie in [0, 1]")

    def to_dict(self) -> Dict:
        return asdict(self)


def binarize(props: ProposalSet, mask_threshold: float) -> np.ndarray:
    """Sigmoid of the mask logits compared against the threshold, as an (N, H, W) bool array."""
    with torch.no_grad():
        return (torch.sigmoid(props.masks.detach().double()) > mask_threshold).cpu().numpy()


def panoptic_postprocess(props: ProposalSet, probs: ClassProbabilities, thing_labels: Collection[str],
                         thresholds: PostprocessThresholds = None, decoupled: bool = True) -> PanopticPrediction:
    """Score filter, per-class thing NMS, then highest-score-first painting.

    A proposal's score is max p_final times (1 - p_other). A painted segment
    survives only when it keeps at least ``overlap_keep`` of its own area.
    In decoupled mode a proposal whose predicted class kind disagrees with
    its decoder is dropped. Stuff segments of one class are merged.
    """
    thresholds = thresholds or PostprocessThresholds()
    if len(probs.p_final) != len(props):
        raise ShapeMismatchError(f"{len(probs.p_final)} probability rows for {len(props)} proposals")
    if not len(props):
        return PanopticPrediction([])

    masks = binarize(props, thresholds.mask_threshold)
    scores = probs.scores()
    classes = probs.predicted()
    thing_labels = set(thing_labels)
    labels = [probs.labels[c] for c in classes]
    kinds = [THING if label in thing_labels else STUFF for label in labels]

    candidates = []
    for i in range(len(props)):
        if scores[i] < thresholds.score_threshold or not masks[i].any():
            continue
        if decoupled and props.sources[i] != ProposalSource.UNIFIED and props.sources[i].value != kinds[i]:
            continue
        candidates.append(i)

    things = [i for i in candidates if kinds[i] == THING]
    if things:
        boxes = props.boxes.detach().double().cpu().numpy()[things]
        kept = nms(boxes, scores[things], thresholds.nms_iou, labels=[labels[i] for i in things])
        dropped = set(things) - {things[k] for k in kept}
        candidates = [i for i in candidates if i not in dropped]

    order = sorted(candidates, key=lambda i: (-scores[i], i))
    occupied = np.zeros(props.image_shape, dtype=bool)
    segments: List[Segment] = []
    stuff_at: Dict[str, int] = {}
    for i in order:
        area = int(masks[i].sum())
        visible = masks[i] & ~occupied
        if visible.sum() < thresholds.overlap_keep * area:
            continue
        occupied |= visible
        if kinds[i] == STUFF and labels[i] in stuff_at:
            j = stuff_at[labels[i]]
            merged = segments[j].mask.data | visible
            segments[j] = Segment(BinaryMask(merged), labels[i], STUFF, max(segments[j].score, float(scores[i])),
                                  segments[j].source_index)
            continue
        if kinds[i] == STUFF:
            stuff_at[labels[i]] = len(segments)
        segments.append(Segment(BinaryMask(visible), labels[i], kinds[i], float(scores[i]), i))
    logger.debug(f"Postprocess kept {len(segments)} of {len(props)} proposals")
    return PanopticPrediction(segments)

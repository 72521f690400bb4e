"""Semantic metrics: mIoU, overall IoU and grouped-part mIoU."""
from collections import defaultdict
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import ShapeMismatchError
from ..core.geometry import BinaryMask
from ..synthdata.vocabulary import OTHER_LABEL, Vocabulary
from .panoptic import PanopticPrediction

MaskLike = Union[BinaryMask, np.ndarray]


def _as_list(maps) -> List[np.ndarray]:
    if isinstance(maps, np.ndarray) and maps.ndim == 2:
        return [maps]
    return [np.asarray(m) for m in maps]


def _as_bool(mask: MaskLike) -> np.ndarray:
    return mask.data if isinstance(mask, BinaryMask) else np.asarray(mask, dtype=bool)


def semantic_map(prediction: PanopticPrediction, height: int, width: int,
                 background: str = OTHER_LABEL) -> np.ndarray:
    """Per-pixel class names; pixels covered by no segment get ``background``."""
    labels = np.full((height, width), background, dtype=object)
    for segment in prediction.segments:
        if segment.mask.shape != (height, width):
            raise ShapeMismatchError(f"Segment shape {segment.mask.shape} differs from ({height}, {width})")
        labels[segment.mask.data] = segment.label
    return labels


def class_ious(preds, gts, classes: Optional[Iterable] = None,
               ignore: Sequence = (OTHER_LABEL,)) -> Dict:
    """IoU per class with intersections and unions summed over all images.

    Classes whose union is zero are left out.
    """
    preds, gts = _as_list(preds), _as_list(gts)
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predicted maps for {len(gts)} ground-truth maps")
    for p, g in zip(preds, gts):
        if p.shape != g.shape:
            raise ShapeMismatchError(f"Semantic maps differ in shape: {p.shape} vs {g.shape}")
    if classes is None:
        found = set()
        for m in preds + gts:
            found.update(np.unique(m).tolist())
        classes = sorted(c for c in found if c not in set(ignore))
    inter, union = defaultdict(int), defaultdict(int)
    for p, g in zip(preds, gts):
        for c in classes:
            pm, gm = p == c, g == c
            inter[c] += int(np.logical_and(pm, gm).sum())
            union[c] += int(np.logical_or(pm, gm).sum())
    return {c: inter[c] / union[c] for c in classes if union[c] > 0}


def miou(preds, gts, classes: Optional[Iterable] = None) -> float:
    ious = class_ious(preds, gts, classes)
    return float(np.mean(list(ious.values()))) if ious else 0.0


def oiou(pred_masks: Sequence[MaskLike], gt_masks: Sequence[MaskLike]) -> float:
    """Total intersection over total union across the dataset."""
    if len(pred_masks) != len(gt_masks):
        raise ValueError(f"{len(pred_masks)} predicted masks for {len(gt_masks)} ground truths")
    inter = union = 0
    for p, g in zip(pred_masks, gt_masks):
        p, g = _as_bool(p), _as_bool(g)
        if p.shape != g.shape:
            raise ShapeMismatchError(f"Masks differ in shape: {p.shape} vs {g.shape}")
        inter += int(np.logical_and(p, g).sum())
        union += int(np.logical_or(p, g).sum())
    return inter / union if union else 0.0


PartMasks = Mapping[str, MaskLike]


def _group_masks(parts: PartMasks, grouping: Mapping[str, Iterable[str]], shape: Tuple[int, int]) -> Dict:
    owner = {}
    for group, members in grouping.items():
        for part in members:
            owner[part] = group
    grouped = {group: np.zeros(shape, dtype=bool) for group in grouping}
    for name, mask in parts.items():
        if name not in owner:
            raise ValueError(f"Part '{name}' belongs to no group")
        grouped[owner[name]] |= _as_bool(mask)
    return grouped


def miou_parts(pred_parts: Sequence[PartMasks], gt_parts: Sequence[PartMasks],
               grouping: Union[Vocabulary, Mapping[str, Iterable[str]]]) -> Dict:
    """Union part masks per group, then mIoU over groups accumulated across images.

    Each image is a mapping from part name to its mask.
    """
    if isinstance(grouping, Vocabulary):
        grouping = grouping.part_grouping
    if len(pred_parts) != len(gt_parts):
        raise ValueError(f"{len(pred_parts)} predicted part sets for {len(gt_parts)} ground truths")
    inter, union = defaultdict(int), defaultdict(int)
    for pred, gt in zip(pred_parts, gt_parts):
        shapes = {_as_bool(m).shape for m in list(pred.values()) + list(gt.values())}
        if len(shapes) > 1:
            raise ShapeMismatchError(f"Part masks disagree in shape: {sorted(shapes)}")
        if not shapes:
            continue
        shape = shapes.pop()
        pg, gg = _group_masks(pred, grouping, shape), _group_masks(gt, grouping, shape)
        for group in grouping:
            inter[group] += int(np.logical_and(pg[group], gg[group]).sum())
            union[group] += int(np.logical_or(pg[group], gg[group]).sum())
    per_group = {g: inter[g] / union[g] for g in sorted(grouping) if union[g] > 0}
    value = float(np.mean(list(per_group.values()))) if per_group else 0.0
    return {"miou_parts": value, "per_group": per_group}

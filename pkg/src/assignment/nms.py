"""Greedy box non-maximum suppression."""
from typing import List, Optional, Sequence

import numpy as np

from ..core.errors import ShapeMismatchError
from ..core.geometry import box_iou_matrix


def nms(boxes: np.ndarray, scores: Sequence[float], iou_threshold: float,
        labels: Optional[Sequence] = None) -> List[int]:
    """Indices kept by descending-score suppression; equal scores keep index order.

    A box is suppressed when its IoU with a kept box exceeds the threshold
    (and, when labels are given, the two share a label).
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[0] != boxes.shape[0] or (labels is not None and len(labels) != boxes.shape[0]):
        raise ShapeMismatchError("boxes, scores and labels must have equal lengths")
    order = np.argsort(-scores, kind="stable")
    ious = box_iou_matrix(boxes, boxes)
    suppressed = np.zeros(len(order), dtype=bool)
    keep = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(int(i))
        overlap = ious[i] > iou_threshold
        if labels is not None:
            overlap &= np.array([labels[j] == labels[i] for j in range(len(order))])
        suppressed |= overlap
    return keep

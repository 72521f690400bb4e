"""Ground-truth target sets and the proposal x ground-truth matching cost."""
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import torch

from ..core.errors import ShapeMismatchError
from ..decoders.proposals import ProposalSet
from ..losses.terms import pairwise_bce, pairwise_dice, pairwise_giou, pairwise_l1
from ..losses.weights import LossWeights


@dataclass
class TargetSet:
    """Ground truths for one image, aligned with a prompt's columns.

    ``labels`` are prompt column indices; ``parent_labels`` holds the instance
    column of each part target for hierarchical prompts (-1 when absent).
    """

    masks: torch.Tensor
    boxes: torch.Tensor
    labels: torch.Tensor
    is_thing: torch.Tensor
    names: Tuple[str, ...] = ()
    parent_labels: Optional[torch.Tensor] = None

    def __post_init__(self):
        g = self.masks.shape[0]
        if self.boxes.shape != (g, 4) or self.labels.shape != (g,) or self.is_thing.shape != (g,):
            raise ShapeMismatchError("Target masks, boxes, labels and kinds disagree in length")
        if self.parent_labels is not None and self.parent_labels.shape != (g,):
            raise ShapeMismatchError("parent_labels must have one entry per target")

    def __len__(self) -> int:
        return int(self.masks.shape[0])

    def subset(self, indices: Sequence[int]) -> "TargetSet":
        idx = torch.as_tensor(list(indices), dtype=torch.long)
        return TargetSet(
            masks=self.masks.index_select(0, idx),
            boxes=self.boxes.index_select(0, idx),
            labels=self.labels.index_select(0, idx),
            is_thing=self.is_thing.index_select(0, idx),
            names=tuple(self.names[i] for i in indices) if self.names else (),
            parent_labels=None if self.parent_labels is None else self.parent_labels.index_select(0, idx),
        )

    def thing_indices(self) -> list:
        return [i for i, t in enumerate(self.is_thing.tolist()) if t]

    def to(self, dtype: torch.dtype) -> "TargetSet":
        return TargetSet(self.masks.to(dtype), self.boxes.to(dtype), self.labels, self.is_thing,
                         self.names, self.parent_labels)


@dataclass
class CostMatrix:
    """Rows are proposals, columns ground truths; components keep the breakdown."""

    total: np.ndarray
    components: Dict[str, np.ndarray] = field(default_factory=dict)
    offset: float = 0.0

    def __post_init__(self):
        self.total = np.asarray(self.total, dtype=np.float64)
        if self.total.ndim != 2:
            raise ShapeMismatchError(f"Cost matrix must be 2-D, got shape {self.total.shape}")
        if not np.all(np.isfinite(self.total)):
            raise ValueError("Cost matrix has non-finite entries")
        if self.total.size and not self.offset:
            self.offset = float(max(0.0, -self.total.min()))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.total.shape

    @property
    def shifted(self) -> np.ndarray:
        """Non-negative costs: total + offset."""
        return self.total + self.offset


def build_cost(props: ProposalSet, targets: TargetSet, logits: torch.Tensor, weights: LossWeights) -> CostMatrix:
    """lambda_cls * (-p_gt) + lambda_box * (L1 + giou * (1 - GIoU)) + lambda_mask * (BCE + DICE).

    Box costs are zero for stuff ground truths.
    """
    n, g = len(props), len(targets)
    if logits.shape[0] != n:
        raise ShapeMismatchError(f"{logits.shape[0]} logit rows for {n} proposals")
    if g and props.image_shape != tuple(targets.masks.shape[-2:]):
        raise ShapeMismatchError(f"Proposal masks {props.image_shape} vs targets {tuple(targets.masks.shape[-2:])}")
    if n == 0 or g == 0:
        empty = np.zeros((n, g))
        return CostMatrix(empty, {"class": empty.copy(), "box": empty.copy(), "mask": empty.copy()})

    with torch.no_grad():
        probs = torch.sigmoid(logits)
        cls = -probs[:, targets.labels] * weights.cls

        mask_logits = props.masks
        gt_masks = targets.masks.to(mask_logits.dtype)
        mask = weights.mask * (weights.ce * pairwise_bce(mask_logits, gt_masks)
                               + weights.dice * pairwise_dice(torch.sigmoid(mask_logits), gt_masks))

        box = weights.box * (weights.l1 * pairwise_l1(props.boxes, targets.boxes)
                             + weights.giou * (1.0 - pairwise_giou(props.boxes, targets.boxes)))
        box = box * targets.is_thing.to(box.dtype)[None, :]

    components = {
        "class": cls.double().cpu().numpy(),
        "box": box.double().cpu().numpy(),
        "mask": mask.double().cpu().numpy(),
    }
    return CostMatrix(components["class"] + components["box"] + components["mask"], components)

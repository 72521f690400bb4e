"""Per-decoder loss composition: L = L_thing + L_stuff."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import torch

from ..assignment.cost import TargetSet
from ..assignment.matching import MatchResult
from ..core.errors import PromptError
from ..decoders.proposals import ProposalSet
from ..prompts.prompt import HIERARCHICAL, PromptSpec
from .terms import bce_mask_loss, dice_loss, giou_loss, l1_box_loss, sigmoid_focal_loss
from .weights import LossWeights

THING_TERMS = ("thing/cls", "thing/mask", "thing/box")
STUFF_TERMS = ("stuff/cls", "stuff/mask", "stuff/box_aux")

Label = Union[str, int, None]


@dataclass
class LossPart:
    terms: Dict[str, torch.Tensor] = field(default_factory=dict)

    @property
    def subtotal(self) -> torch.Tensor:
        values = list(self.terms.values())
        total = values[0]
        for value in values[1:]:
            total = total + value
        return total


@dataclass
class LossReport:
    """Total loss with the per-term ledger and per-decoder subtotals."""

    total: torch.Tensor
    terms: Dict[str, torch.Tensor]
    thing: torch.Tensor
    stuff: torch.Tensor

    def as_floats(self) -> Dict[str, float]:
        values = {name: float(value.detach()) for name, value in self.terms.items()}
        values.update({"total": float(self.total.detach()), "L_thing": float(self.thing.detach()),
                       "L_stuff": float(self.stuff.detach())})
        return values


def _zero(reference: torch.Tensor) -> torch.Tensor:
    return reference.sum() * 0.0


def _check_match(match: MatchResult, n_props: int, n_gts: int):
    for p, g in match.pairs:
        if not (0 <= p < n_props and 0 <= g < n_gts):
            raise IndexError(f"Match pair ({p}, {g}) out of range for {n_props} proposals / {n_gts} targets")


def _cls_targets(n_rows: int, n_cols: int, match: MatchResult, targets: TargetSet, other_index: int,
                 like: torch.Tensor) -> torch.Tensor:
    onehot = torch.zeros((n_rows, n_cols), dtype=like.dtype, device=like.device)
    onehot[:, other_index] = 1.0
    for p, g in match.pairs:
        onehot[p, other_index] = 0.0
        onehot[p, int(targets.labels[g])] = 1.0
    return onehot


def _resolve(prompt: PromptSpec, label: Label, parent: Label = None) -> int:
    if isinstance(label, int):
        return label
    if label in prompt.column_labels:
        return prompt.column_of(label)
    if parent is not None and not isinstance(parent, int):
        return prompt.column_of(f"{parent} {label}")
    raise PromptError(f"Label '{label}' is not part of the prompt")


def hierarchical_cls_loss(logits: torch.Tensor, part_targets: Sequence[Label], thing_targets: Sequence[Label],
                          prompt: PromptSpec, weights: LossWeights = None) -> torch.Tensor:
    """Focal loss over the part columns (plus "other") and over the instance columns.

    Each labelled row needs both a part label ("tail" or "dog tail") and an
    instance label ("dog"); unlabelled rows target "other" among the parts.
    """
    weights = weights or LossWeights()
    if prompt.kind != HIERARCHICAL:
        raise PromptError("Hierarchical classification needs a hierarchical prompt")
    if len(part_targets) != logits.shape[0] or len(thing_targets) != logits.shape[0]:
        raise ValueError("One part and one instance target per row is required")
    part_cols = list(prompt.part_columns) + [prompt.other_index]
    thing_cols = list(prompt.thing_columns)
    part_onehot = torch.zeros((logits.shape[0], len(part_cols)), dtype=logits.dtype, device=logits.device)
    thing_onehot = torch.zeros((logits.shape[0], len(thing_cols)), dtype=logits.dtype, device=logits.device)
    labelled = 0
    for row, (part, thing) in enumerate(zip(part_targets, thing_targets)):
        if part is None and thing is None:
            part_onehot[row, -1] = 1.0
            continue
        if part is None or thing is None:
            raise PromptError(f"Row {row} is missing its {'part' if part is None else 'instance'} label")
        labelled += 1
        part_onehot[row, part_cols.index(_resolve(prompt, part, thing))] = 1.0
        thing_onehot[row, thing_cols.index(_resolve(prompt, thing))] = 1.0
    norm = max(1, labelled)
    cls_part = sigmoid_focal_loss(logits[:, part_cols], part_onehot, weights.focal_alpha, weights.focal_gamma) / norm
    cls_thing = sigmoid_focal_loss(logits[:, thing_cols], thing_onehot, weights.focal_alpha,
                                   weights.focal_gamma) / norm
    return cls_part + cls_thing


def _cls_term(logits: torch.Tensor, match: MatchResult, targets: TargetSet, weights: LossWeights,
              prompt: Optional[PromptSpec]) -> torch.Tensor:
    n_rows, n_cols = logits.shape
    if prompt is not None and prompt.kind == HIERARCHICAL:
        parts: List[Label] = [None] * n_rows
        things: List[Label] = [None] * n_rows
        for p, g in match.pairs:
            parts[p] = int(targets.labels[g])
            if targets.parent_labels is None or int(targets.parent_labels[g]) < 0:
                raise PromptError(f"Target {g} has no instance label")
            things[p] = int(targets.parent_labels[g])
        return hierarchical_cls_loss(logits, parts, things, prompt, weights)
    other_index = n_cols - 1
    onehot = _cls_targets(n_rows, n_cols, match, targets, other_index, logits)
    focal = sigmoid_focal_loss(logits, onehot, weights.focal_alpha, weights.focal_gamma)
    return focal / max(1, match.num_pairs)


def _mask_term(props: ProposalSet, targets: TargetSet, pairs: Sequence[Tuple[int, int]],
               weights: LossWeights) -> torch.Tensor:
    if not pairs:
        return _zero(props.masks)
    p_idx = torch.tensor([p for p, _ in pairs], dtype=torch.long, device=props.masks.device)
    g_idx = torch.tensor([g for _, g in pairs], dtype=torch.long, device=props.masks.device)
    pred = props.masks.index_select(0, p_idx)
    gt = targets.masks.index_select(0, g_idx).to(pred.dtype)
    bce = bce_mask_loss(pred, gt)
    dice = dice_loss(torch.sigmoid(pred), gt)
    return weights.ce * bce + weights.dice * dice


def _box_term(props: ProposalSet, targets: TargetSet, pairs: Sequence[Tuple[int, int]],
              weights: LossWeights) -> torch.Tensor:
    if not pairs:
        return _zero(props.boxes)
    p_idx = torch.tensor([p for p, _ in pairs], dtype=torch.long, device=props.boxes.device)
    g_idx = torch.tensor([g for _, g in pairs], dtype=torch.long, device=props.boxes.device)
    pred = props.boxes.index_select(0, p_idx)
    gt = targets.boxes.index_select(0, g_idx).to(pred.dtype)
    return weights.l1 * l1_box_loss(pred, gt) + weights.giou * giou_loss(pred, gt)


def thing_loss(props: ProposalSet, logits: torch.Tensor, targets: TargetSet, match: MatchResult,
               weights: LossWeights, prompt: PromptSpec = None) -> LossPart:
    """Classification for every proposal, mask and box terms for matched pairs."""
    _check_match(match, len(props), len(targets))
    pairs = list(match.pairs)
    return LossPart({
        "thing/cls": weights.cls * _cls_term(logits, match, targets, weights, prompt),
        "thing/mask": weights.mask * _mask_term(props, targets, pairs, weights),
        "thing/box": weights.box * _box_term(props, targets, pairs, weights),
    })


def stuff_loss(props: ProposalSet, logits: torch.Tensor, targets: TargetSet, match: MatchResult,
               weights: LossWeights, prompt: PromptSpec = None, literal_box_reading: bool = False) -> LossPart:
    """Stuff decoder loss against all ground truths.

    By default stuff-matched pairs train masks and thing-matched pairs train
    boxes as an auxiliary task. With ``literal_box_reading`` every pair trains
    masks and only stuff-matched pairs train boxes.
    """
    _check_match(match, len(props), len(targets))
    kinds = targets.is_thing.tolist()
    stuff_pairs = [(p, g) for p, g in match.pairs if not kinds[g]]
    thing_pairs = [(p, g) for p, g in match.pairs if kinds[g]]
    if literal_box_reading:
        mask_pairs, box_pairs = list(match.pairs), stuff_pairs
    else:
        mask_pairs, box_pairs = stuff_pairs, thing_pairs
    return LossPart({
        "stuff/cls": weights.cls * _cls_term(logits, match, targets, weights, prompt),
        "stuff/mask": weights.mask * _mask_term(props, targets, mask_pairs, weights),
        "stuff/box_aux": weights.box * _box_term(props, targets, box_pairs, weights),
    })


def unified_loss(props: ProposalSet, logits: torch.Tensor, targets: TargetSet, match: MatchResult,
                 weights: LossWeights, prompt: PromptSpec = None) -> LossPart:
    """Single-decoder loss: masks for every pair, boxes for thing-matched pairs."""
    _check_match(match, len(props), len(targets))
    kinds = targets.is_thing.tolist()
    pairs = list(match.pairs)
    return LossPart({
        "thing/cls": weights.cls * _cls_term(logits, match, targets, weights, prompt),
        "thing/mask": weights.mask * _mask_term(props, targets, pairs, weights),
        "thing/box": weights.box * _box_term(props, targets, [(p, g) for p, g in pairs if kinds[g]], weights),
    })


def total_loss(thing: LossPart, stuff: Optional[LossPart] = None) -> LossReport:
    """Combine decoder parts; a missing stuff part contributes exact zeros."""
    l_thing = thing.subtotal
    if stuff is None:
        zero = l_thing * 0.0
        stuff = LossPart({name: zero for name in STUFF_TERMS})
    l_stuff = stuff.subtotal
    terms = dict(thing.terms)
    terms.update(stuff.terms)
    return LossReport(total=l_thing + l_stuff, terms=terms, thing=l_thing, stuff=l_stuff)

"""Dual-pass instance/part segmentation, hierarchical merging and external part relabeling."""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from ..core.errors import PromptError, ShapeMismatchError
from ..core.geometry import BinaryMask
from ..decoders.model import ModelOutput, SegmentationModel
from ..prompts.prompt import PromptSpec, build_category_prompt, build_hierarchical_prompt
from ..synthdata.vocabulary import Vocabulary, split_hierarchical_label
from .combine import softmax

logger = logging.getLogger(__name__)


@dataclass
class PassResult:
    prompt: PromptSpec
    output: ModelOutput
    probabilities: np.ndarray


@dataclass
class DualPassResult:
    instances: PassResult
    parts: Optional[PassResult] = None


def _run_pass(model: SegmentationModel, image: torch.Tensor, prompt: PromptSpec) -> PassResult:
    with torch.no_grad():
        output = model(image, prompt)
    return PassResult(prompt, output, softmax(output.logits.double().cpu().numpy()))


def dual_pass_segment(model: SegmentationModel, image: torch.Tensor, instance_vocab: Sequence[str],
                      part_vocab: Sequence[str]) -> DualPassResult:
    """Instance labels on the first pass, "<instance> <part>" labels on the second.

    An empty part vocabulary skips the second pass.
    """
    instances = _run_pass(model, image, build_category_prompt(instance_vocab, model.tokenizer))
    if not part_vocab:
        return DualPassResult(instances)
    prompt = build_hierarchical_prompt(instance_vocab, part_vocab, model.tokenizer)
    return DualPassResult(instances, _run_pass(model, image, prompt))


@dataclass
class LabeledMask:
    mask: BinaryMask
    label: str
    score: float = 1.0


@dataclass
class HierarchicalInstance:
    """One instance with its attached parts and grouped super-parts."""

    index: int
    label: str
    mask: BinaryMask
    parts: List[Tuple[str, BinaryMask]] = field(default_factory=list)
    groups: Dict[str, BinaryMask] = field(default_factory=dict)


def combine_instance_part(instances: Sequence[LabeledMask], parts: Sequence[LabeledMask],
                          vocabulary: Vocabulary) -> List[HierarchicalInstance]:
    """Attach each "<instance> <part>" mask to the same-class instance it overlaps most.

    Ties go to the lower instance index; parts with no overlapping
    same-class instance are dropped. Attached masks are clipped to the
    instance, and grouped parts are unioned per ``vocabulary.part_grouping``.
    """
    result = [HierarchicalInstance(i, inst.label, inst.mask) for i, inst in enumerate(instances)]
    names = sorted(set(vocabulary.thing_classes) | {inst.label for inst in instances})
    for part in parts:
        try:
            owner_label, part_name = split_hierarchical_label(part.label, names)
        except PromptError:
            logger.warning(f"⚠️ Dropping part '{part.label}': no registered instance prefix")
            continue
        best, best_overlap = None, 0
        for target in result:
            if target.label != owner_label:
                continue
            if target.mask.shape != part.mask.shape:
                raise ShapeMismatchError("Instance and part masks come from different images")
            overlap = int(np.logical_and(target.mask.data, part.mask.data).sum())
            if overlap > best_overlap:
                best, best_overlap = target, overlap
        if best is None:
            logger.debug(f"Part '{part.label}' has no compatible instance, dropped")
            continue
        best.parts.append((part_name, best.mask & part.mask))

    for target in result:
        for part_name, mask in target.parts:
            group = vocabulary.group_of(part_name)
            if group is None:
                continue
            target.groups[group] = target.groups[group] | mask if group in target.groups else mask
    return result


@dataclass
class PartRelabelInput:
    """Semantic masks with class probabilities and class-agnostic part masks."""

    semantic_masks: Sequence[BinaryMask]
    semantic_probs: np.ndarray
    part_masks: Sequence[BinaryMask]

    def __post_init__(self):
        self.semantic_probs = np.asarray(self.semantic_probs, dtype=np.float64)
        if self.semantic_probs.ndim != 2 or self.semantic_probs.shape[0] != len(self.semantic_masks):
            raise ShapeMismatchError(
                f"{self.semantic_probs.shape} probabilities for {len(self.semantic_masks)} semantic masks")
        if self.semantic_probs.shape[1] == 0:
            raise ShapeMismatchError("Semantic probabilities cover no classes")
        shapes = {m.shape for m in list(self.semantic_masks) + list(self.part_masks)}
        if len(shapes) > 1:
            raise ShapeMismatchError(f"Masks disagree in shape: {sorted(shapes)}")


@dataclass
class RelabelResult:
    probabilities: np.ndarray
    unmatched: np.ndarray


def relabel_external_parts(inp: PartRelabelInput) -> RelabelResult:
    """P_S(S_i, j) proportional to sum_k P_M(M_k, j) * |M_k & S_i|, row-normalized.

    A part mask that intersects no semantic mask gets a uniform row and is
    flagged in ``unmatched``.
    """
    num_classes = inp.semantic_probs.shape[1]
    if not inp.part_masks:
        return RelabelResult(np.zeros((0, num_classes)), np.zeros(0, dtype=bool))
    parts = np.stack([m.data.reshape(-1) for m in inp.part_masks]).astype(np.float64)
    if inp.semantic_masks:
        semantic = np.stack([m.data.reshape(-1) for m in inp.semantic_masks]).astype(np.float64)
        scores = (parts @ semantic.T) @ inp.semantic_probs
    else:
        scores = np.zeros((len(inp.part_masks), num_classes))
    totals = scores.sum(axis=1)
    unmatched = totals <= 0
    probs = np.empty_like(scores)
    probs[~unmatched] = scores[~unmatched] / totals[~unmatched, None]
    probs[unmatched] = 1.0 / num_classes
    if unmatched.any():
        logger.warning(f"⚠️ {int(unmatched.sum())} part mask(s) overlap no semantic region, using uniform labels")
    return RelabelResult(probs, unmatched)

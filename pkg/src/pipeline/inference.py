"""Inference for every task from a loaded checkpoint."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, List, Optional, Sequence, Union

import numpy as np
import torch

from ..core.errors import PromptError, UnknownTaskError
from ..core.geometry import BinaryMask
from ..decoders.model import image_to_tensor
from ..decoders.proposals import ProposalSet
from ..evaluation.panoptic import THING, PanopticPrediction
from ..evaluation.postprocess import binarize, panoptic_postprocess
from ..evaluation.semantic import semantic_map
from ..openvocab.combine import ClassProbabilities, open_vocab_classify
from ..openvocab.hierarchy import (
    HierarchicalInstance,
    LabeledMask,
    PartRelabelInput,
    RelabelResult,
    combine_instance_part,
    dual_pass_segment,
    relabel_external_parts,
)
from ..prompts.prompt import build_category_prompt, build_hierarchical_prompt, build_referring_prompt
from .checkpoint import LoadedCheckpoint, load_checkpoint
from .config import TASKS

logger = logging.getLogger(__name__)

ImageLike = Union[np.ndarray, torch.Tensor]


@dataclass
class InferenceResult:
    task: str
    proposals: ProposalSet
    probabilities: ClassProbabilities
    panoptic: Optional[PanopticPrediction] = None
    semantic: Optional[np.ndarray] = None
    mask: Optional[BinaryMask] = None
    hierarchy: Optional[List[HierarchicalInstance]] = None
    part_segments: Optional[PanopticPrediction] = None


def _as_checkpoint(checkpoint: Union[LoadedCheckpoint, str, Path]) -> LoadedCheckpoint:
    return checkpoint if isinstance(checkpoint, LoadedCheckpoint) else load_checkpoint(checkpoint)


def _image_tensor(image: ImageLike) -> torch.Tensor:
    if isinstance(image, torch.Tensor):
        return image
    return image_to_tensor(np.asarray(image))


def _classify(ckpt: LoadedCheckpoint, props: ProposalSet, image: torch.Tensor, labels: Sequence[str],
              logits: torch.Tensor) -> ClassProbabilities:
    ov = ckpt.config.open_vocab
    aux = ckpt.aux_model if ov.use_auxiliary else None
    return open_vocab_classify(props, image, labels, logits, aux, ov.lambda_seen, ov.lambda_novel,
                               seen_set=ckpt.vocabulary.all_labels)


def _part_prediction(ckpt: LoadedCheckpoint, image: torch.Tensor, prompt, output) -> tuple:
    cols = list(prompt.part_columns) + [prompt.other_index]
    labels = [prompt.column_labels[c] for c in prompt.part_columns]
    logits = output.logits[:, cols]
    probs = _classify(ckpt, output.proposals, image, labels, logits)
    prediction = panoptic_postprocess(output.proposals, probs, labels, ckpt.config.postprocess, decoupled=False)
    return probs, prediction


def infer(checkpoint: Union[LoadedCheckpoint, str, Path], image: ImageLike, task: str,
          labels: Optional[Sequence[str]] = None, expression: Optional[str] = None,
          part_labels: Optional[Sequence[str]] = None,
          thing_labels: Optional[Collection[str]] = None) -> InferenceResult:
    """Run one image through the model for ``task``.

    Category tasks default to the checkpoint vocabulary; the referring task
    needs ``expression`` and returns exactly one mask.
    """
    if task not in TASKS:
        raise UnknownTaskError(f"Unknown task '{task}', expected one of {list(TASKS)}")
    ckpt = _as_checkpoint(checkpoint)
    model, vocab = ckpt.model, ckpt.vocabulary
    model.eval()
    image_t = _image_tensor(image)
    height, width = image_t.shape[-2:]

    if task == "referring":
        if not expression:
            raise PromptError("The referring task needs an expression")
        prompt = build_referring_prompt(expression, model.tokenizer)
        with torch.no_grad():
            out = model(image_t, prompt)
        probs = _classify(ckpt, out.proposals, image_t, prompt.column_labels, out.logits)
        best = int(torch.argmax(out.logits[:, 0]).item())
        mask = BinaryMask(binarize(out.proposals.select([best]), ckpt.config.postprocess.mask_threshold)[0])
        return InferenceResult(task, out.proposals, probs, mask=mask)

    thing_labels = set(thing_labels if thing_labels is not None else vocab.thing_classes)
    if task == "part":
        instances = list(labels or vocab.thing_classes)
        parts = list(part_labels or vocab.part_classes)
        prompt = build_hierarchical_prompt(instances, parts, model.tokenizer)
        with torch.no_grad():
            out = model(image_t, prompt)
        probs, prediction = _part_prediction(ckpt, image_t, prompt, out)
        return InferenceResult(task, out.proposals, probs, part_segments=prediction)

    if task == "hierarchical":
        instances = list(labels or vocab.thing_classes)
        parts = list(part_labels or vocab.part_classes)
        passes = dual_pass_segment(model, image_t, instances, parts)
        first = passes.instances.output
        probs = _classify(ckpt, first.proposals, image_t, instances, first.logits)
        instance_pred = panoptic_postprocess(first.proposals, probs, set(instances), ckpt.config.postprocess,
                                             decoupled=model.config.decoupled)
        part_pred = None
        hierarchy = [LabeledMask(s.mask, s.label, s.score) for s in instance_pred.segments if s.kind == THING]
        if passes.parts is not None:
            _, part_pred = _part_prediction(ckpt, image_t, passes.parts.prompt, passes.parts.output)
            hierarchy = combine_instance_part(
                hierarchy, [LabeledMask(s.mask, s.label, s.score) for s in part_pred.segments], vocab)
        else:
            hierarchy = combine_instance_part(hierarchy, [], vocab)
        return InferenceResult(task, first.proposals, probs, panoptic=instance_pred, hierarchy=hierarchy,
                               part_segments=part_pred)

    if labels is None:
        labels = vocab.thing_classes if task == "instance" else vocab.all_labels
    prompt = build_category_prompt(labels, model.tokenizer)
    with torch.no_grad():
        out = model(image_t, prompt)
    probs = _classify(ckpt, out.proposals, image_t, list(labels), out.logits)
    prediction = panoptic_postprocess(out.proposals, probs, thing_labels, ckpt.config.postprocess,
                                      decoupled=model.config.decoupled)
    if task == "instance":
        prediction = PanopticPrediction([s for s in prediction.segments if s.kind == THING])
    result = InferenceResult(task, out.proposals, probs, panoptic=prediction)
    if task == "semantic":
        result.semantic = semantic_map(prediction, int(height), int(width))
    return result


def relabel_parts(checkpoint: Union[LoadedCheckpoint, str, Path], image: ImageLike,
                  part_masks: Sequence[BinaryMask], labels: Optional[Sequence[str]] = None) -> dict:
    """Class distributions for external part masks from the model's semantic prediction."""
    ckpt = _as_checkpoint(checkpoint)
    result = infer(ckpt, image, "panoptic", labels=labels)
    segments = result.panoptic.segments
    label_list = list(result.probabilities.labels)
    probs = np.zeros((len(segments), len(label_list)))
    for k, segment in enumerate(segments):
        if segment.source_index is not None:
            probs[k] = result.probabilities.p_final[segment.source_index]
        else:
            probs[k, label_list.index(segment.label)] = 1.0
    relabeled: RelabelResult = relabel_external_parts(
        PartRelabelInput([s.mask for s in segments], probs, part_masks))
    return {
        "labels": label_list,
        "probabilities": relabeled.probabilities,
        "unmatched": relabeled.unmatched,
        "predicted": [label_list[int(np.argmax(row))] for row in relabeled.probabilities],
    }

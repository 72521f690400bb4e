"""Per-task prompts and ground-truth target sets built from synthetic scenes."""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import torch

from ..assignment.cost import TargetSet
from ..core.errors import UnknownTaskError
from ..core.geometry import BinaryMask, mask_to_box
from ..decoders.model import image_to_tensor
from ..prompts.prompt import (
    PromptSpec,
    build_category_prompt,
    build_hierarchical_prompt,
    build_referring_prompt,
)
from ..prompts.tokenizer import HashTokenizer
from ..synthdata.generator import SceneSample
from ..synthdata.vocabulary import Vocabulary

logger = logging.getLogger(__name__)

TRAINABLE_TASKS = ("panoptic", "instance", "semantic", "referring", "part")


@dataclass
class TrainingExample:
    task: str
    sample_id: str
    image: torch.Tensor
    prompt: PromptSpec
    targets: TargetSet


def _target_set(masks: Sequence[BinaryMask], labels: Sequence[int], is_thing: Sequence[bool],
                names: Sequence[str], height: int, width: int,
                parents: Optional[Sequence[int]] = None) -> TargetSet:
    if masks:
        mask_tensor = torch.as_tensor(np.stack([m.data for m in masks]), dtype=torch.float32)
        boxes = torch.as_tensor(np.stack([mask_to_box(m).normalized(height, width).to_array() for m in masks]),
                                dtype=torch.float32)
    else:
        mask_tensor = torch.zeros((0, height, width))
        boxes = torch.zeros((0, 4))
    return TargetSet(
        masks=mask_tensor,
        boxes=boxes,
        labels=torch.as_tensor(list(labels), dtype=torch.long),
        is_thing=torch.as_tensor(list(is_thing), dtype=torch.bool),
        names=tuple(names),
        parent_labels=None if parents is None else torch.as_tensor(list(parents), dtype=torch.long),
    )


def task_prompt(task: str, vocabulary: Vocabulary, tokenizer: HashTokenizer = None) -> PromptSpec:
    """Category or hierarchical prompt for a non-referring task."""
    if task in ("panoptic", "semantic"):
        return build_category_prompt(vocabulary.all_labels, tokenizer)
    if task == "instance":
        return build_category_prompt(vocabulary.thing_classes, tokenizer)
    if task == "part":
        return build_hierarchical_prompt(vocabulary.thing_classes, vocabulary.part_classes, tokenizer)
    raise UnknownTaskError(f"Task '{task}' has no fixed prompt")


def _panoptic(sample: SceneSample, prompt: PromptSpec, things_only: bool):
    masks, labels, kinds, names = [], [], [], []
    for inst in sample.instances:
        if inst.class_name not in prompt.column_labels:
            logger.debug(f"Skipping instance of unprompted class '{inst.class_name}'")
            continue
        masks.append(inst.mask)
        labels.append(prompt.column_of(inst.class_name))
        kinds.append(True)
        names.append(inst.class_name)
    if not things_only:
        for region in sample.stuff_regions:
            if region.class_name not in prompt.column_labels:
                continue
            masks.append(region.mask)
            labels.append(prompt.column_of(region.class_name))
            kinds.append(False)
            names.append(region.class_name)
    return _target_set(masks, labels, kinds, names, sample.height, sample.width)


def _semantic(sample: SceneSample, prompt: PromptSpec, vocabulary: Vocabulary):
    merged = {}
    for name, mask in [(i.class_name, i.mask) for i in sample.instances] + \
                      [(r.class_name, r.mask) for r in sample.stuff_regions]:
        if name in prompt.column_labels:
            merged[name] = merged[name] | mask if name in merged else mask
    names = list(merged)
    return _target_set([merged[n] for n in names], [prompt.column_of(n) for n in names],
                       [vocabulary.is_thing(n) for n in names], names, sample.height, sample.width)


def _parts(sample: SceneSample, prompt: PromptSpec):
    masks, labels, parents, names = [], [], [], []
    for inst in sample.instances:
        if inst.class_name not in prompt.column_labels:
            continue
        for part in inst.parts:
            label = f"{inst.class_name} {part.name}"
            if label not in prompt.column_labels or part.mask.is_empty():
                continue
            masks.append(part.mask)
            labels.append(prompt.column_of(label))
            parents.append(prompt.column_of(inst.class_name))
            names.append(label)
    return _target_set(masks, labels, [True] * len(masks), names, sample.height, sample.width, parents)


def build_example(sample: SceneSample, task: str, vocabulary: Vocabulary, tokenizer: HashTokenizer = None,
                  referring_index: int = 0) -> Optional[TrainingExample]:
    """Prompt and targets for one scene; None when the scene has nothing for the task."""
    if task not in TRAINABLE_TASKS:
        raise UnknownTaskError(f"Unknown training task '{task}'")
    image = image_to_tensor(sample.image)
    if task == "referring":
        if not sample.referring:
            return None
        expression = sample.referring[referring_index % len(sample.referring)]
        prompt = build_referring_prompt(expression.text, tokenizer)
        inst = sample.instances[expression.target]
        targets = _target_set([inst.mask], [0], [True], [expression.text], sample.height, sample.width)
        return TrainingExample(task, sample.sample_id, image, prompt, targets)

    prompt = task_prompt(task, vocabulary, tokenizer)
    if task == "part":
        targets = _parts(sample, prompt)
    elif task == "semantic":
        targets = _semantic(sample, prompt, vocabulary)
    else:
        targets = _panoptic(sample, prompt, things_only=task == "instance")
    if not len(targets):
        return None
    return TrainingExample(task, sample.sample_id, image, prompt, targets)


def build_examples(samples: Sequence[SceneSample], task: str, vocabulary: Vocabulary,
                   tokenizer: HashTokenizer = None) -> List[TrainingExample]:
    examples = [build_example(s, task, vocabulary, tokenizer) for s in samples]
    return [e for e in examples if e is not None]

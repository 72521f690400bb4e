"""Dataset evaluation: per-image inference in a thread pool, then metric reduction."""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

from config.settings import NUM_THREADS

from ..core.errors import UnknownTaskError
from ..core.geometry import BinaryMask
from ..evaluation.detection import Detection, average_precision
from ..evaluation.novel import novel_class_ap, novel_probability_mass
from ..evaluation.panoptic import THING, PanopticPrediction, Segment, panoptic_from_sample, panoptic_quality
from ..evaluation.semantic import class_ious, miou_parts, oiou, semantic_map
from ..synthdata.generator import SceneSample
from ..synthdata.manifest import load_manifest, load_manifest_vocabulary
from ..synthdata.vocabulary import Vocabulary, split_hierarchical_label
from .checkpoint import LoadedCheckpoint, load_checkpoint
from .config import TASKS
from .inference import infer

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TASK_METRICS = {
    "panoptic": ("pq", "miou", "ap_box", "ap_mask", "novel"),
    "instance": ("pq", "ap_box", "ap_mask", "novel"),
    "semantic": ("miou", "pq"),
    "referring": ("oiou",),
    "part": ("miou_parts",),
    "hierarchical": ("pq", "ap_mask", "miou_parts"),
}


def _gt_panoptic(sample: SceneSample, task: str) -> PanopticPrediction:
    gt = panoptic_from_sample(sample)
    if task in ("instance", "hierarchical"):
        return PanopticPrediction([s for s in gt.segments if s.kind == THING])
    if task == "semantic":
        merged: Dict[str, Segment] = {}
        for s in gt.segments:
            if s.label in merged:
                merged[s.label] = Segment(merged[s.label].mask | s.mask, s.label, s.kind)
            else:
                merged[s.label] = s
        return PanopticPrediction(list(merged.values()))
    return gt


def _semantic_prediction(prediction: PanopticPrediction) -> PanopticPrediction:
    merged: Dict[str, Segment] = {}
    for s in prediction.segments:
        if s.label in merged:
            merged[s.label] = Segment(merged[s.label].mask | s.mask, s.label, s.kind, max(merged[s.label].score, s.score))
        else:
            merged[s.label] = s
    return PanopticPrediction(list(merged.values()))


def _part_masks_by_name(segments: Sequence[Segment], instance_names: Sequence[str]) -> Dict[str, BinaryMask]:
    parts: Dict[str, BinaryMask] = {}
    for s in segments:
        _, part = split_hierarchical_label(s.label, instance_names)
        parts[part] = parts[part] | s.mask if part in parts else s.mask
    return parts


def _gt_parts(sample: SceneSample) -> Dict[str, BinaryMask]:
    parts: Dict[str, BinaryMask] = {}
    for inst in sample.instances:
        for part in inst.parts:
            parts[part.name] = parts[part.name] | part.mask if part.name in parts else part.mask
    return parts


def _evaluate_image(ckpt: LoadedCheckpoint, sample: SceneSample, task: str, vocabulary: Vocabulary) -> Dict:
    record: Dict = {}
    height, width = sample.height, sample.width
    if task == "referring":
        record["referring"] = []
        for expression in sample.referring:
            result = infer(ckpt, sample.image, "referring", expression=expression.text)
            record["referring"].append((result.mask, sample.instances[expression.target].mask))
        return record

    if task == "part":
        result = infer(ckpt, sample.image, "part", labels=vocabulary.thing_classes,
                       part_labels=vocabulary.part_classes)
        record["parts"] = (_part_masks_by_name(result.part_segments.segments, vocabulary.thing_classes),
                           _gt_parts(sample))
        return record

    labels = vocabulary.thing_classes if task in ("instance", "hierarchical") else vocabulary.all_labels
    result = infer(ckpt, sample.image, task, labels=labels, thing_labels=vocabulary.thing_classes,
                   part_labels=vocabulary.part_classes if task == "hierarchical" else None)
    prediction = result.panoptic
    gt = _gt_panoptic(sample, task)
    if task == "semantic":
        prediction = _semantic_prediction(prediction)
    record["panoptic"] = (prediction, gt)
    record["semantic"] = (semantic_map(prediction, height, width), semantic_map(gt, height, width))
    record["detections"] = ([Detection.from_segment(s) for s in prediction.segments if s.kind == THING],
                            [Detection.from_segment(s) for s in gt.segments if s.kind == THING])
    record["probabilities"] = result.probabilities
    if task == "hierarchical" and result.part_segments is not None:
        record["parts"] = (_part_masks_by_name(result.part_segments.segments, vocabulary.thing_classes),
                           _gt_parts(sample))
    return record


def evaluate(checkpoint: Union[LoadedCheckpoint, PathLike], manifest: Union[PathLike, Sequence[SceneSample]],
             task: str, metrics: Optional[Sequence[str]] = None, vocabulary: Vocabulary = None,
             workers: int = NUM_THREADS) -> Dict:
    """Evaluate a checkpoint on a manifest (or a list of scenes) for one task.

    Metrics that do not apply to the task are skipped.
    """
    if task not in TASKS:
        raise UnknownTaskError(f"Unknown task '{task}', expected one of {list(TASKS)}")
    ckpt = checkpoint if isinstance(checkpoint, LoadedCheckpoint) else load_checkpoint(checkpoint)
    if isinstance(manifest, (str, Path)):
        samples = load_manifest(manifest)
        vocabulary = vocabulary or load_manifest_vocabulary(manifest)
        manifest_name = str(manifest)
    else:
        samples = list(manifest)
        manifest_name = "<in-memory>"
    vocabulary = vocabulary or ckpt.vocabulary
    requested = list(metrics) if metrics else list(ckpt.config.metrics)
    applicable = [m for m in requested if m in TASK_METRICS[task]]
    skipped = sorted(set(requested) - set(applicable))
    if skipped:
        logger.info(f"Skipping metrics not defined for task '{task}': {skipped}")

    logger.info(f"🚀 Evaluating {task} on {len(samples)} scenes with {max(1, workers)} worker(s)")
    ckpt.model.eval()
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        records = list(pool.map(lambda s: _evaluate_image(ckpt, s, task, vocabulary), samples))

    scalars: Dict[str, float] = {}
    breakdown: Dict[str, Dict] = {}
    if "pq" in applicable:
        pq = panoptic_quality([r["panoptic"][0] for r in records], [r["panoptic"][1] for r in records])
        scalars.update({"pq": pq["pq"], "sq": pq["sq"], "rq": pq["rq"], "pq_thing": pq["pq_thing"],
                        "pq_stuff": pq["pq_stuff"]})
        breakdown["pq"] = pq
    if "miou" in applicable:
        ious = class_ious([r["semantic"][0] for r in records], [r["semantic"][1] for r in records])
        scalars["miou"] = float(sum(ious.values()) / len(ious)) if ious else 0.0
        breakdown["miou"] = {"per_class": ious}
    for mode in ("box", "mask"):
        if f"ap_{mode}" in applicable:
            ap = average_precision([r["detections"][0] for r in records], [r["detections"][1] for r in records],
                                   mode=mode)
            scalars[f"ap_{mode}"] = ap["ap"]
            breakdown[f"ap_{mode}"] = ap
    if "oiou" in applicable:
        pairs = [pair for r in records for pair in r["referring"]]
        scalars["oiou"] = oiou([p for p, _ in pairs], [g for _, g in pairs])
        breakdown["oiou"] = {"num_expressions": len(pairs)}
    if "miou_parts" in applicable:
        with_parts = [r["parts"] for r in records if "parts" in r]
        parts = miou_parts([p for p, _ in with_parts], [g for _, g in with_parts], vocabulary)
        scalars["miou_parts"] = parts["miou_parts"]
        breakdown["miou_parts"] = {"per_class": parts["per_group"]}
    if "novel" in applicable:
        novel = [c for c in vocabulary.thing_classes if c not in ckpt.vocabulary.all_labels]
        if novel:
            result = novel_class_ap([r["detections"][0] for r in records], [r["detections"][1] for r in records],
                                    novel, vocabulary.thing_classes, seed=ckpt.config.seed)
            result["novel_mass"] = novel_probability_mass([r["probabilities"] for r in records], novel)
            scalars["novel_ap"] = result["novel_ap"]
            scalars["novel_random_baseline_ap"] = result["random_baseline_ap"]
            scalars["novel_mass"] = result["novel_mass"]
            breakdown["novel"] = result
        else:
            logger.info("No held-out thing classes in the evaluation vocabulary, skipping novel-class AP")

    report = {
        "task": task,
        "checkpoint": str(ckpt.path) if ckpt.path else "<in-memory>",
        "manifest": manifest_name,
        "num_images": len(samples),
        "metrics": scalars,
        "breakdown": breakdown,
    }
    logger.info(f"✅ Evaluation finished: {', '.join(f'{k}={v:.4f}' for k, v in scalars.items())}")
    return report

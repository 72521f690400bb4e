"""Training loop: matching, composite loss, sharded gradients and checkpoints."""
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch

from ..assignment.cost import TargetSet, build_cost
from ..assignment.matching import MatchResult, hungarian, simota
from ..core.errors import HierSegError, TrainingDivergedError
from ..core.geometry import box_iou_matrix
from ..decoders.model import SegmentationModel
from ..decoders.proposals import ProposalSet, ProposalSource
from ..losses.composite import LossReport, stuff_loss, thing_loss, total_loss, unified_loss
from ..losses.weights import LossWeights
from ..openvocab.auxiliary import AuxiliaryEmbedder, train_auxiliary
from ..synthdata.generator import SceneSample
from ..synthdata.manifest import load_manifest, load_manifest_vocabulary
from ..synthdata.vocabulary import Vocabulary
from .checkpoint import save_checkpoint
from .config import RunConfig, TrainingConfig
from .targets import TrainingExample, build_example

PathLike = Union[str, Path]


def match_things(props: ProposalSet, logits: torch.Tensor, targets: TargetSet, weights: LossWeights,
                 matcher: str = "simota", q: int = 10) -> MatchResult:
    cost = build_cost(props, targets, logits, weights)
    if matcher == "hungarian":
        return hungarian(cost)
    ious = box_iou_matrix(props.boxes.detach().double().cpu().numpy(), targets.boxes.double().cpu().numpy())
    return simota(cost, ious, q)


def compute_loss(model: SegmentationModel, example: TrainingExample, weights: LossWeights,
                 training: TrainingConfig = None) -> LossReport:
    """Forward one example and return L = L_thing + L_stuff.

    Thing proposals are matched to thing targets (simOTA by default), stuff
    proposals one-to-one against every target; unified models match all
    proposals one-to-one against every target.
    """
    training = training or TrainingConfig()
    out = model(example.image, example.prompt)
    props, logits = out.proposals, out.logits
    targets = example.targets.to(props.masks.dtype)
    if not model.config.decoupled:
        match = hungarian(build_cost(props, targets, logits, weights))
        return total_loss(unified_loss(props, logits, targets, match, weights, example.prompt))

    thing_idx = props.indices_of(ProposalSource.THING)
    stuff_idx = props.indices_of(ProposalSource.STUFF)
    t_props, t_logits = props.select(thing_idx), logits[thing_idx]
    t_targets = targets.subset(targets.thing_indices())
    t_match = match_things(t_props, t_logits, t_targets, weights, training.thing_matcher, training.simota_q)
    thing = thing_loss(t_props, t_logits, t_targets, t_match, weights, example.prompt)

    s_props, s_logits = props.select(stuff_idx), logits[stuff_idx]
    s_match = hungarian(build_cost(s_props, targets, s_logits, weights))
    stuff = stuff_loss(s_props, s_logits, targets, s_match, weights, example.prompt,
                       literal_box_reading=training.literal_box_reading)
    return total_loss(thing, stuff)


def _shards(items: Sequence, n: int) -> List[List]:
    n = max(1, min(n, len(items)))
    bounds = np.linspace(0, len(items), n + 1).round().astype(int)
    return [list(items[bounds[i]:bounds[i + 1]]) for i in range(n)]


def batch_gradients(model: SegmentationModel, examples: Sequence[TrainingExample], weights: LossWeights,
                    training: TrainingConfig = None, workers: int = 1) -> Tuple[List[torch.Tensor],
                                                                                List[LossReport]]:
    """Mean-loss gradients over a batch, computed per shard and summed in shard order."""
    params = [p for p in model.parameters() if p.requires_grad]

    def run(shard):
        reports = [compute_loss(model, ex, weights, training) for ex in shard]
        loss = reports[0].total
        for report in reports[1:]:
            loss = loss + report.total
        loss = loss / len(examples)
        grads = torch.autograd.grad(loss, params, allow_unused=True)
        return [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)], reports

    shards = _shards(examples, workers)
    if len(shards) == 1:
        results = [run(shards[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(shards)) as pool:
            results = list(pool.map(run, shards))
    total = [g.clone() for g in results[0][0]]
    for grads, _ in results[1:]:
        for acc, g in zip(total, grads):
            acc.add_(g)
    return total, [r for _, reports in results for r in reports]


class Trainer:
    """Seeded single-stage training over synthetic scenes."""

    def __init__(self, cfg: RunConfig, out_dir: PathLike):
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.logger = logging.getLogger(__name__)

    def build_model(self) -> SegmentationModel:
        torch.manual_seed(self.cfg.seed)
        return SegmentationModel(self.cfg.decoder)

    def build_optimizer(self, model: SegmentationModel):
        opt = self.cfg.optimizer
        groups = model.param_groups()
        optimizer = torch.optim.AdamW([
            {"params": groups["backbone"], "lr": opt.lr * opt.backbone_multiplier},
            {"params": groups["head"], "lr": opt.lr},
        ], lr=opt.lr, weight_decay=opt.weight_decay)
        milestone = max(1, int(math.floor(opt.lr_drop_at * self.cfg.training.iterations)))
        scheduler = torch.optim.lr_scheduler.MultiStepLR(optimizer, milestones=[milestone], gamma=opt.lr_drop_factor)
        return optimizer, scheduler

    def _draw_batch(self, iteration: int, rng: np.random.Generator, samples: Sequence[SceneSample],
                    vocabulary: Vocabulary, tokenizer) -> Tuple[str, List[TrainingExample]]:
        tasks = self.cfg.train_tasks()
        task = tasks[iteration % len(tasks)]
        batch = []
        attempts = 0
        while len(batch) < self.cfg.training.batch_size and attempts < 10 * self.cfg.training.batch_size:
            attempts += 1
            sample = samples[int(rng.integers(len(samples)))]
            example = build_example(sample, task, vocabulary, tokenizer, referring_index=int(rng.integers(1 << 16)))
            if example is not None:
                batch.append(example)
        return task, batch

    def train_auxiliary(self, aux_samples: Sequence[SceneSample], vocabulary: Vocabulary) -> Optional[AuxiliaryEmbedder]:
        if not self.cfg.open_vocab.use_auxiliary or not aux_samples:
            return None
        torch.manual_seed(self.cfg.seed + 1)
        aux = AuxiliaryEmbedder(channels=self.cfg.decoder.channels)
        self.logger.info(f"🚀 Training auxiliary embedder on {len(aux_samples)} scenes")
        history = train_auxiliary(aux, aux_samples, vocabulary, self.cfg.training.aux_iterations,
                                  self.cfg.training.aux_lr, self.cfg.training.log_every)
        if history:
            self.logger.info(f"✅ Auxiliary embedder final loss {history[-1]:.4f}")
        return aux

    def train(self, samples: Sequence[SceneSample], vocabulary: Vocabulary,
              aux_samples: Sequence[SceneSample] = (), aux_vocabulary: Vocabulary = None) -> Dict:
        cfg, training = self.cfg, self.cfg.training
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.logger.info(f"🚀 Training '{cfg.run_name}' for {training.iterations} iterations "
                         f"on {len(samples)} scenes, tasks {cfg.train_tasks()}")
        model = self.build_model()
        optimizer, scheduler = self.build_optimizer(model)
        rng = np.random.default_rng(cfg.seed)
        params = [p for p in model.parameters() if p.requires_grad]
        curve = []

        model.train()
        for it in range(training.iterations):
            task, batch = self._draw_batch(it, rng, samples, vocabulary, model.tokenizer)
            if not batch:
                self.logger.warning(f"⚠️ No usable scenes for task '{task}' at iteration {it}, skipping")
                continue
            grads, reports = batch_gradients(model, batch, cfg.losses, training, training.workers)
            values = [r.as_floats() for r in reports]
            mean = {k: float(np.mean([v[k] for v in values])) for k in values[0]}
            if not all(math.isfinite(v) for v in mean.values()):
                self.logger.error(f"❌ Non-finite loss at iteration {it}: {mean}")
                raise TrainingDivergedError(f"Loss became non-finite at iteration {it}", it, mean)
            optimizer.zero_grad(set_to_none=True)
            for p, g in zip(params, grads):
                p.grad = g
            if cfg.optimizer.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(params, cfg.optimizer.grad_clip)
            optimizer.step()
            scheduler.step()
            curve.append({"iteration": it, "task": task, "lr": optimizer.param_groups[1]["lr"], **mean})
            if training.log_every and (it + 1) % training.log_every == 0:
                self.logger.info(f"📊 Iteration {it + 1}/{training.iterations} [{task}]: loss {mean['total']:.4f}")
        model.eval()

        aux = self.train_auxiliary(aux_samples, aux_vocabulary or vocabulary)
        checkpoint = save_checkpoint(self.out_dir / "checkpoint.pt", cfg, model, vocabulary, aux,
                                     training.iterations)
        curve_path = self.out_dir / "loss_curve.csv"
        pd.DataFrame(curve, columns=None if curve else ["iteration", "task", "lr", "total"]).to_csv(
            curve_path, index=False)
        (self.out_dir / "run_config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        self.logger.info(f"✅ Training finished, checkpoint at {checkpoint}")
        return {
            "status": "success",
            "checkpoint": str(checkpoint),
            "loss_curve": str(curve_path),
            "iterations": training.iterations,
            "final_loss": curve[-1]["total"] if curve else None,
            "model": model,
            "aux_model": aux,
        }


def train(cfg: RunConfig, out_dir: PathLike, samples: Sequence[SceneSample] = None,
          vocabulary: Vocabulary = None, aux_samples: Sequence[SceneSample] = None,
          aux_vocabulary: Vocabulary = None) -> Dict:
    """Train from the config's manifests unless scenes are passed in directly."""
    logger = logging.getLogger(__name__)
    try:
        if samples is None:
            if not cfg.data.train_manifest:
                raise HierSegError("No training manifest configured (data.train_manifest)")
            samples = load_manifest(cfg.data.train_manifest)
            vocabulary = load_manifest_vocabulary(cfg.data.train_manifest)
        if aux_samples is None and cfg.data.aux_manifest and cfg.open_vocab.use_auxiliary:
            aux_samples = load_manifest(cfg.data.aux_manifest)
            aux_vocabulary = load_manifest_vocabulary(cfg.data.aux_manifest)
        if vocabulary is None:
            raise HierSegError("A vocabulary is required when scenes are passed in directly")
        return Trainer(cfg, out_dir).train(samples, vocabulary, aux_samples or (), aux_vocabulary)
    except HierSegError as e:
        logger.error(f"❌ Training failed: {e}")
        raise

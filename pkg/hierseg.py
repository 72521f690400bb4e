#!/usr/bin/env python3
"""
Hierarchical Open-Vocabulary Segmentation
Synthesizes scenes, trains the decoupled thing/stuff model, runs inference,
evaluation, the decoder design ablation and external part relabeling.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

# Add project root to path for imports
project_root = Path(__file__).parent
sys.path.append(str(project_root))

from config.settings import DATA_DIR, NUM_THREADS, REPORTS_DIR, RESULTS_DB_PATH, RUNS_DIR, configure_logging
from src.core.errors import HierSegError
from src.decoders.config import DECODER_VARIANTS, DEFAULT_VARIANT, variant_name
from src.evaluation.panoptic import PanopticPrediction, Segment
from src.pipeline.ablation import ablate
from src.pipeline.checkpoint import load_checkpoint
from src.pipeline.config import (
    TASKS,
    RunConfig,
    apply_variant,
    config_hash,
    dump_default_config,
    load_run_config,
)
from src.pipeline.evaluate import evaluate
from src.pipeline.inference import infer, relabel_parts
from src.pipeline.render import render_overlay
from src.pipeline.trainer import train
from src.reporting.html_report import ReportWriter
from src.reporting.results_store import ResultsStore
from src.synthdata.generator import GeneratorConfig
from src.synthdata.manifest import (
    generate_dataset,
    load_external_masks,
    load_manifest,
    load_manifest_vocabulary,
    read_image,
)
from src.synthdata.vocabulary import default_vocabulary


def _split_list(value: Optional[str]) -> Optional[List[str]]:
    if not value:
        return None
    return [item.strip() for item in value.split(",") if item.strip()]


class HierSegCLI:
    """Command-line orchestration of the segmentation pipeline."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.logger = logging.getLogger(__name__)
        self.cfg = self._load_config()

    def _load_config(self) -> RunConfig:
        cfg = load_run_config(self.args.config) if self.args.config else RunConfig()
        if self.args.seed is not None:
            cfg = replace(cfg, seed=self.args.seed)
        if getattr(self.args, "task", None):
            cfg = replace(cfg, task=self.args.task)
        if self.args.variant:
            cfg = apply_variant(cfg, self.args.variant)
        return cfg

    def _out_dir(self, default: Path) -> Path:
        out = Path(self.args.out) if self.args.out else default
        out.mkdir(parents=True, exist_ok=True)
        return out

    def synth(self) -> Dict:
        out = self._out_dir(DATA_DIR / "synthetic")
        seen, full = default_vocabulary().split(self.cfg.data.novel_things, self.cfg.data.novel_stuff)
        seed, data = self.cfg.seed, self.cfg.data
        paths = {
            "train": generate_dataset(GeneratorConfig(vocabulary=seen), seed, data.num_train, out / "train", "train"),
            "eval": generate_dataset(GeneratorConfig(vocabulary=full), seed + 1, data.num_eval, out / "eval", "eval"),
            "aux": generate_dataset(GeneratorConfig(vocabulary=full), seed + 2, data.num_aux, out / "aux", "aux"),
        }
        return {"status": "success", "manifests": {k: str(v) for k, v in paths.items()}}

    def train(self) -> Dict:
        out = self._out_dir(RUNS_DIR / self.cfg.run_name)
        result = train(self.cfg, out)
        return {k: v for k, v in result.items() if k not in ("model", "aux_model")}

    def _checkpoint(self):
        if not self.args.checkpoint:
            raise HierSegError("--checkpoint is required for this command")
        return load_checkpoint(self.args.checkpoint)

    def _image(self) -> np.ndarray:
        if not self.args.image:
            raise HierSegError("--image is required for this command")
        return read_image(self.args.image)

    def infer(self) -> Dict:
        ckpt, image = self._checkpoint(), self._image()
        task = self.args.task or ckpt.config.task
        result = infer(ckpt, image, task, labels=_split_list(self.args.labels), expression=self.args.expression,
                       part_labels=_split_list(self.args.part_labels))
        out = self._out_dir(RUNS_DIR / "inference")
        segments = self._segments(result)
        overlay = render_overlay(image, segments, out / f"{task}_overlay.png")
        record = {
            "status": "success",
            "task": task,
            "num_proposals": len(result.proposals),
            "labels": list(result.probabilities.labels),
            "segments": [{"label": s.label, "kind": s.kind, "score": s.score, "area": s.mask.area}
                         for s in segments],
            "overlay": str(overlay),
        }
        if result.hierarchy is not None:
            record["hierarchy"] = [{"label": h.label, "parts": [name for name, _ in h.parts],
                                    "groups": sorted(h.groups)} for h in result.hierarchy]
        (out / f"{task}_result.json").write_text(json.dumps(record, indent=2) + "\n")
        return record

    @staticmethod
    def _segments(result) -> List[Segment]:
        if result.mask is not None:
            return [Segment(result.mask, "target")]
        if result.part_segments is not None and result.panoptic is None:
            return result.part_segments.segments
        return result.panoptic.segments if result.panoptic is not None else []

    def eval(self) -> Dict:
        checkpoint = self.args.checkpoint
        if not checkpoint:
            raise HierSegError("--checkpoint is required for this command")
        ckpt = load_checkpoint(checkpoint)
        manifest = self.args.manifest or self.cfg.data.eval_manifest or ckpt.config.data.eval_manifest
        if not manifest:
            raise HierSegError("No evaluation manifest given (--manifest or data.eval_manifest)")
        task = self.args.task or ckpt.config.task
        report = evaluate(ckpt, manifest, task, _split_list(self.args.metrics), workers=NUM_THREADS)
        out = self._out_dir(REPORTS_DIR / "evaluation")
        paths = ReportWriter(out).write_evaluation(report, stem=f"evaluation_{task}")
        run_id = datetime.now().strftime("%Y%m%d_%H%M%S")
        with ResultsStore(RESULTS_DB_PATH, backup_dir=out) as store:
            store.record_evaluation(run_id, report, checkpoint, manifest, variant_name(ckpt.config.decoder) or "",
                                    ckpt.config.seed, config_hash(ckpt.config))
        return {"status": "success", "metrics": report["metrics"], "reports": paths}

    def ablate(self) -> Dict:
        data = self.cfg.data
        if not data.train_manifest:
            raise HierSegError("Ablation needs data.train_manifest in the config")
        variants = _split_list(self.args.variants) or list(DECODER_VARIANTS)
        seeds = [int(s) for s in _split_list(self.args.seeds)] if self.args.seeds else [self.cfg.seed]
        samples = load_manifest(data.train_manifest)
        vocabulary = load_manifest_vocabulary(data.train_manifest)
        eval_samples = load_manifest(data.eval_manifest) if data.eval_manifest else None
        eval_vocabulary = load_manifest_vocabulary(data.eval_manifest) if data.eval_manifest else None
        aux_samples, aux_vocabulary = (), None
        if data.aux_manifest and self.cfg.open_vocab.use_auxiliary:
            aux_samples = load_manifest(data.aux_manifest)
            aux_vocabulary = load_manifest_vocabulary(data.aux_manifest)
        out = self._out_dir(RUNS_DIR / "ablation")
        result = ablate(self.cfg, variants, out, samples, vocabulary, eval_samples, eval_vocabulary, seeds,
                        aux_samples, aux_vocabulary, workers=NUM_THREADS)
        paths = ReportWriter(out).write_ablation(result)
        with ResultsStore(RESULTS_DB_PATH, backup_dir=out) as store:
            store.record_ablation(datetime.now().strftime("%Y%m%d_%H%M%S"), result["runs"])
        return {"status": "success", "summary": result["summary"], "ordering": result["ordering"],
                "reports": paths}

    def relabel_parts(self) -> Dict:
        ckpt, image = self._checkpoint(), self._image()
        if not self.args.masks:
            raise HierSegError("--masks (an RLE mask manifest) is required for relabel-parts")
        masks = load_external_masks(self.args.masks)
        result = relabel_parts(ckpt, image, masks, labels=_split_list(self.args.labels))
        out = self._out_dir(RUNS_DIR / "relabel")
        record = {
            "status": "success",
            "labels": result["labels"],
            "predicted": result["predicted"],
            "unmatched": [bool(u) for u in result["unmatched"]],
            "probabilities": np.asarray(result["probabilities"]).tolist(),
        }
        (out / "relabel_parts.json").write_text(json.dumps(record, indent=2) + "\n")
        return record

    def render(self) -> Dict:
        image = self._image()
        out = self._out_dir(RUNS_DIR / "render")
        if self.args.masks:
            masks = load_external_masks(self.args.masks)
            segments = PanopticPrediction([Segment(m, f"mask {i}") for i, m in enumerate(masks)]).segments
        else:
            ckpt = self._checkpoint()
            result = infer(ckpt, image, self.args.task or ckpt.config.task, labels=_split_list(self.args.labels),
                           expression=self.args.expression, part_labels=_split_list(self.args.part_labels))
            segments = self._segments(result)
        path = render_overlay(image, segments, out / f"{Path(self.args.image).stem}_overlay.png")
        return {"status": "success", "overlay": str(path)}

    def run(self, command: str) -> Dict:
        handlers = {
            "synth": self.synth,
            "train": self.train,
            "infer": self.infer,
            "eval": self.eval,
            "ablate": self.ablate,
            "relabel-parts": self.relabel_parts,
            "render": self.render,
        }
        self.logger.info(f"🚀 Running '{command}'")
        result = handlers[command]()
        self.logger.info(f"✅ '{command}' finished")
        return result


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Hierarchical open-vocabulary segmentation")
    parser.add_argument("--dump-default-config", nargs="?", const="-", metavar="PATH",
                        help="Write the full default config (to stdout when no path is given) and exit")
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL")
    sub = parser.add_subparsers(dest="command")
    for name in ("synth", "train", "infer", "eval", "ablate", "relabel-parts", "render"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="Run config JSON")
        cmd.add_argument("--seed", type=int, default=None, help="Override the config seed")
        cmd.add_argument("--out", help="Output directory")
        cmd.add_argument("--task", choices=TASKS, default=None)
        cmd.add_argument("--variant", choices=sorted(DECODER_VARIANTS), default=None,
                         help=f"Decoder design preset (default config uses {DEFAULT_VARIANT})")
        if name in ("infer", "eval", "relabel-parts", "render"):
            cmd.add_argument("--checkpoint", help="Checkpoint file")
        if name in ("infer", "relabel-parts", "render"):
            cmd.add_argument("--image", help="PNG or .npy image")
            cmd.add_argument("--labels", help="Comma-separated class names")
        if name in ("infer", "render"):
            cmd.add_argument("--expression", help="Referring expression")
            cmd.add_argument("--part-labels", help="Comma-separated part names")
        if name in ("relabel-parts", "render"):
            cmd.add_argument("--masks", help="RLE mask manifest")
        if name == "eval":
            cmd.add_argument("--manifest", help="Evaluation manifest")
            cmd.add_argument("--metrics", help="Comma-separated metric names")
        if name == "ablate":
            cmd.add_argument("--variants", help="Comma-separated variant names (default: all)")
            cmd.add_argument("--seeds", help="Comma-separated seeds (default: the config seed)")
    return parser


def _error_record(command: Optional[str], error: Exception) -> str:
    return json.dumps({"status": "error", "error": type(error).__name__, "message": str(error),
                       "command": command})


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(**({"level": args.log_level} if args.log_level else {}))
    logger = logging.getLogger(__name__)

    if args.dump_default_config:
        if args.dump_default_config == "-":
            print(dump_default_config())
        else:
            dump_default_config(args.dump_default_config)
            print(f"✅ Default config written to {args.dump_default_config}")
        return 0
    if not args.command:
        parser.print_help()
        return 2

    try:
        result = HierSegCLI(args).run(args.command)
        print(json.dumps(result, indent=2, default=str))
        return 0
    except HierSegError as e:
        logger.error(f"❌ {args.command} failed: {e}")
        print(_error_record(args.command, e), file=sys.stderr)
        return 2
    except Exception as e:
        logger.exception(f"❌ Unexpected failure in {args.command}: {e}")
        print(_error_record(args.command, e), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

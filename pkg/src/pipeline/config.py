"""Run configuration: dataclasses, the cerberus schema, loading and hashing."""
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Union

from cerberus import Validator

from config.settings import DEFAULT_SEED, OPEN_VOCAB_DEFAULTS

from ..core.errors import ConfigError
from ..decoders.config import DECODER_VARIANTS, DecoderConfig, with_variant
from ..evaluation.postprocess import PostprocessThresholds
from ..losses.weights import LossWeights

logger = logging.getLogger(__name__)

TASKS = ("panoptic", "instance", "semantic", "referring", "part", "hierarchical")
HIERARCHICAL_TRAIN_TASKS = ("panoptic", "referring", "part")
METRICS = ("pq", "miou", "ap_box", "ap_mask", "oiou", "miou_parts", "novel")
MATCHERS = ("simota", "hungarian")


@dataclass
class OptimizerConfig:
    lr: float = 1e-4
    weight_decay: float = 0.01
    backbone_multiplier: float = 0.1
    lr_drop_at: float = 0.9
    lr_drop_factor: float = 0.1
    grad_clip: float = 1.0


@dataclass
class TrainingConfig:
    iterations: int = 2000
    batch_size: int = 4
    workers: int = 1
    log_every: int = 50
    train_tasks: Optional[List[str]] = None
    thing_matcher: str = "simota"
    simota_q: int = 10
    literal_box_reading: bool = False
    aux_iterations: int = 300
    aux_lr: float = 1e-3


@dataclass
class DataConfig:
    train_manifest: Optional[str] = None
    eval_manifest: Optional[str] = None
    aux_manifest: Optional[str] = None
    num_train: int = 20
    num_eval: int = 20
    num_aux: int = 40
    novel_things: List[str] = field(default_factory=lambda: ["giraffe"])
    novel_stuff: List[str] = field(default_factory=lambda: ["wall"])


@dataclass
class OpenVocabConfig:
    use_auxiliary: bool = True
    lambda_seen: float = OPEN_VOCAB_DEFAULTS["lambda_seen"]
    lambda_novel: float = OPEN_VOCAB_DEFAULTS["lambda_novel"]


@dataclass
class RunConfig:
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    losses: LossWeights = field(default_factory=LossWeights)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    data: DataConfig = field(default_factory=DataConfig)
    open_vocab: OpenVocabConfig = field(default_factory=OpenVocabConfig)
    postprocess: PostprocessThresholds = field(default_factory=PostprocessThresholds)
    seed: int = DEFAULT_SEED
    task: str = "panoptic"
    metrics: List[str] = field(default_factory=lambda: ["pq", "miou", "ap_mask", "oiou", "miou_parts"])
    run_name: str = "run"

    def train_tasks(self) -> List[str]:
        if self.training.train_tasks:
            return list(self.training.train_tasks)
        if self.task == "hierarchical":
            return list(HIERARCHICAL_TRAIN_TASKS)
        return [self.task]

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, record: Dict) -> "RunConfig":
        record = dict(record)
        return cls(
            decoder=DecoderConfig(**record.pop("decoder", {})),
            losses=LossWeights(**record.pop("losses", {})),
            optimizer=OptimizerConfig(**record.pop("optimizer", {})),
            training=TrainingConfig(**record.pop("training", {})),
            data=DataConfig(**record.pop("data", {})),
            open_vocab=OpenVocabConfig(**record.pop("open_vocab", {})),
            postprocess=PostprocessThresholds(**record.pop("postprocess", {})),
            **record,
        )


def _num(min_value=None, max_value=None) -> Dict:
    rule = {"type": "number"}
    if min_value is not None:
        rule["min"] = min_value
    if max_value is not None:
        rule["max"] = max_value
    return rule


def _int(min_value=None) -> Dict:
    rule = {"type": "integer"}
    if min_value is not None:
        rule["min"] = min_value
    return rule


def _section(fields: Dict) -> Dict:
    return {"type": "dict", "schema": fields}


_BOOL = {"type": "boolean"}
_PATH = {"type": "string", "nullable": True}
_UNIT = _num(0.0, 1.0)

RUN_CONFIG_SCHEMA = {
    "decoder": _section({
        "num_thing_queries": _int(1),
        "num_stuff_queries": _int(1),
        "num_unified_queries": {**_int(1), "nullable": True},
        "layers": _int(1),
        "d": _int(1),
        "heads": _int(1),
        "ffn_dim": _int(1),
        "decoupled": _BOOL,
        "early_fusion_things": _BOOL,
        "early_fusion_stuff": _BOOL,
        "fusion_per_layer": _BOOL,
        "fusion_heads": _int(1),
        "temperature": _num(1e-6),
        "num_levels": _int(1),
        "channels": _int(1),
        "text_layers": _int(1),
        "text_heads": _int(1),
        "vocab_size": _int(2),
        "attention_scope": {"type": "string", "allowed": ["full", "span"]},
    }),
    "losses": _section({name: _num(0.0) for name in LossWeights().to_dict()}),
    "optimizer": _section({
        "lr": _num(0.0),
        "weight_decay": _num(0.0),
        "backbone_multiplier": _num(0.0),
        "lr_drop_at": _UNIT,
        "lr_drop_factor": _num(0.0),
        "grad_clip": _num(0.0),
    }),
    "training": _section({
        "iterations": _int(0),
        "batch_size": _int(1),
        "workers": _int(1),
        "log_every": _int(0),
        "train_tasks": {"type": "list", "nullable": True,
                        "schema": {"type": "string", "allowed": [t for t in TASKS if t != "hierarchical"]}},
        "thing_matcher": {"type": "string", "allowed": list(MATCHERS)},
        "simota_q": _int(1),
        "literal_box_reading": _BOOL,
        "aux_iterations": _int(0),
        "aux_lr": _num(0.0),
    }),
    "data": _section({
        "train_manifest": _PATH,
        "eval_manifest": _PATH,
        "aux_manifest": _PATH,
        "num_train": _int(1),
        "num_eval": _int(1),
        "num_aux": _int(0),
        "novel_things": {"type": "list", "schema": {"type": "string"}},
        "novel_stuff": {"type": "list", "schema": {"type": "string"}},
    }),
    "open_vocab": _section({
        "use_auxiliary": _BOOL,
        "lambda_seen": _UNIT,
        "lambda_novel": _UNIT,
    }),
    "postprocess": _section({name: _UNIT for name in PostprocessThresholds().to_dict()}),
    "seed": _int(0),
    "task": {"type": "string", "allowed": list(TASKS)},
    "metrics": {"type": "list", "schema": {"type": "string", "allowed": list(METRICS)}},
    "run_name": {"type": "string", "empty": False},
}


def validate_run_config(record: Dict) -> RunConfig:
    """Validate a (possibly partial) config document and fill the defaults."""
    validator = Validator(RUN_CONFIG_SCHEMA)
    if not validator.validate(record):
        raise ConfigError(f"Invalid run config: {validator.errors}", validator.errors)
    try:
        return RunConfig.from_dict(record)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid run config: {e}", {"config": [str(e)]}) from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """Load a JSON run config; every referenced data file must exist."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}", {"config": ["file not found"]})
    try:
        record = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}", {"config": [str(e)]}) from e
    cfg = validate_run_config(record)
    missing = {}
    for name in ("train_manifest", "eval_manifest", "aux_manifest"):
        value = getattr(cfg.data, name)
        if value is not None and not Path(value).exists():
            missing[f"data.{name}"] = [f"file not found: {value}"]
    if missing:
        raise ConfigError(f"Config references missing files: {missing}", missing)
    logger.info(f"✅ Loaded run config from {path}")
    return cfg


def dump_default_config(path: Union[str, Path] = None) -> str:
    text = json.dumps(RunConfig().to_dict(), indent=2, sort_keys=True)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def config_hash(cfg: RunConfig) -> str:
    """sha256 of the canonical JSON form."""
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def apply_variant(cfg: RunConfig, variant: str) -> RunConfig:
    if variant not in DECODER_VARIANTS:
        raise ConfigError(f"Unknown decoder variant '{variant}'", {"variant": sorted(DECODER_VARIANTS)})
    return replace(cfg, decoder=with_variant(cfg.decoder, variant))

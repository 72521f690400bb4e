"""Checkpoint save/load with format version and config hash."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import torch

from config.settings import CHECKPOINT_FORMAT_VERSION

from ..core.errors import CheckpointError, ConfigError
from ..decoders.model import SegmentationModel
from ..openvocab.auxiliary import AuxiliaryEmbedder
from ..synthdata.vocabulary import Vocabulary
from .config import RunConfig, config_hash

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class LoadedCheckpoint:
    config: RunConfig
    model: SegmentationModel
    vocabulary: Vocabulary
    aux_model: Optional[AuxiliaryEmbedder] = None
    iteration: int = 0
    path: Optional[Path] = None


def save_checkpoint(path: PathLike, cfg: RunConfig, model: SegmentationModel, vocabulary: Vocabulary,
                    aux_model: Optional[AuxiliaryEmbedder] = None, iteration: int = 0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "model_state": model.state_dict(),
        "aux_state": None if aux_model is None else aux_model.state_dict(),
        "aux_dims": None if aux_model is None else {
            "channels": aux_model.image_tower[0].in_channels,
            "d": aux_model.class_proj.out_features,
            "vocab_size": aux_model.word_embed.num_embeddings,
            "temperature": aux_model.temperature,
        },
        "vocabulary": vocabulary.to_dict(),
        "iteration": int(iteration),
    }
    try:
        torch.save(payload, path)
    except OSError as e:
        logger.error(f"❌ Could not write checkpoint {path}: {e}")
        raise CheckpointError(f"Could not write checkpoint {path}: {e}") from e
    logger.info(f"💾 Checkpoint written to {path}")
    return path


def load_checkpoint(path: PathLike) -> LoadedCheckpoint:
    """Rebuild model, auxiliary embedder and vocabulary; rejects stale or tampered files."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as e:
        raise CheckpointError(f"Could not read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"Checkpoint {path} has unsupported format "
                              f"{payload.get('format_version') if isinstance(payload, dict) else None}")
    try:
        cfg = RunConfig.from_dict(payload["config"])
    except (ConfigError, TypeError, KeyError) as e:
        raise CheckpointError(f"Checkpoint {path} carries an invalid config: {e}") from e
    if config_hash(cfg) != payload.get("config_hash"):
        raise CheckpointError(f"Checkpoint {path} config hash does not match its config")

    model = SegmentationModel(cfg.decoder)
    try:
        model.load_state_dict(payload["model_state"])
    except RuntimeError as e:
        raise CheckpointError(f"Checkpoint {path} weights do not fit the configured model: {e}") from e
    model.eval()

    aux_model = None
    if payload.get("aux_state") is not None:
        aux_model = AuxiliaryEmbedder(**payload["aux_dims"])
        aux_model.load_state_dict(payload["aux_state"])
        aux_model.eval()
    return LoadedCheckpoint(cfg, model, Vocabulary.from_dict(payload["vocabulary"]), aux_model,
                            int(payload.get("iteration", 0)), path)

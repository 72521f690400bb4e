"""Full segmentation model: encoders, early fusion and thing/stuff decoders."""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from ..fusion.fusion import BiCrossAttention, FusedFeatures, fuse
from ..fusion.image_encoder import ImageEncoder, MultiscaleFeatures
from ..prompts.prompt import REFERRING, PromptSpec
from ..prompts.text_encoder import (
    TextEncoder,
    TextEncoderConfig,
    TextFeatures,
    encode_text,
    pool_class_embeddings,
)
from ..prompts.tokenizer import HashTokenizer
from .config import DecoderConfig
from .decoder import QueryDecoder
from .proposals import ProposalSet, ProposalSource, class_logits, concat_proposals

logger = logging.getLogger(__name__)


@dataclass
class ModelOutput:
    """Proposals with one logit row per proposal over the prompt columns plus "other"."""

    proposals: ProposalSet
    logits: torch.Tensor
    visual: MultiscaleFeatures
    text: TextFeatures
    fused: Optional[FusedFeatures] = None


def image_to_tensor(image: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """(H, W, C) array in [0, 1] to a (C, H, W) tensor."""
    return torch.as_tensor(np.ascontiguousarray(np.transpose(image, (2, 0, 1))), dtype=dtype)


class SegmentationModel(nn.Module):
    """Wires encoders, fusion and decoders according to a DecoderConfig.

    Decoupled mode runs a thing decoder and a stuff decoder; each reads fused
    features only when its early-fusion flag is set. Unified mode routes every
    query through one decoder.
    """

    def __init__(self, config: DecoderConfig = None):
        super().__init__()
        self.config = config or DecoderConfig()
        cfg = self.config
        self.tokenizer = HashTokenizer(cfg.vocab_size)
        self.image_encoder = ImageEncoder(cfg.channels, cfg.d, cfg.num_levels)
        self.text_encoder = TextEncoder(TextEncoderConfig(
            d=cfg.d, layers=cfg.text_layers, heads=cfg.text_heads, ffn_dim=cfg.ffn_dim,
            vocab_size=cfg.vocab_size, attention_scope=cfg.attention_scope))
        fuse_once = cfg.uses_fusion and not cfg.fusion_per_layer
        self.fusion = BiCrossAttention(cfg.d, cfg.fusion_heads, cfg.num_levels) if fuse_once else None

        if cfg.decoupled:
            self.thing_decoder = QueryDecoder(cfg.num_thing_queries, cfg, ProposalSource.THING,
                                              fuse_per_layer=cfg.fusion_per_layer and cfg.early_fusion_things)
            self.stuff_decoder = QueryDecoder(cfg.num_stuff_queries, cfg, ProposalSource.STUFF,
                                              fuse_per_layer=cfg.fusion_per_layer and cfg.early_fusion_stuff)
            self.unified_decoder = None
        else:
            self.thing_decoder = None
            self.stuff_decoder = None
            self.unified_decoder = QueryDecoder(cfg.unified_queries, cfg, ProposalSource.UNIFIED,
                                                fuse_per_layer=cfg.fusion_per_layer and cfg.early_fusion_things)
        self.other_embedding = nn.Parameter(torch.randn(cfg.d) * 0.02)

    def param_groups(self) -> Dict[str, List[nn.Parameter]]:
        backbone = list(self.image_encoder.parameters()) + list(self.text_encoder.parameters())
        backbone_ids = {id(p) for p in backbone}
        head = [p for p in self.parameters() if id(p) not in backbone_ids]
        return {"backbone": backbone, "head": head}

    def run_branch(self, decoder: QueryDecoder, early_fusion: bool, visual: MultiscaleFeatures,
                   text: TextFeatures, fused: Optional[FusedFeatures], image_size, prompt: PromptSpec):
        if early_fusion and fused is not None:
            visual, text = fused.visual, fused.textual
        out = decoder(visual, image_size, text if (early_fusion and decoder.fuses_per_layer) else None)
        consumed = out.text if out.text is not None else text
        return out.proposals, self.classify(out.proposals.embeddings, consumed, prompt)

    def classify(self, embeddings: torch.Tensor, text: TextFeatures, prompt: PromptSpec) -> torch.Tensor:
        """Cosine logits against pooled label embeddings, or the sentence embedding for referring."""
        if prompt.kind == REFERRING:
            vectors = text.sequence_embedding.unsqueeze(0)
        else:
            vectors = pool_class_embeddings(text, prompt).vectors
        return class_logits(embeddings, vectors, self.other_embedding, self.config.temperature)

    def encode(self, image: torch.Tensor, prompt: PromptSpec) -> Tuple[MultiscaleFeatures, TextFeatures,
                                                                       Optional[FusedFeatures]]:
        image = image.to(self.other_embedding.dtype)
        visual = self.image_encoder(image)
        text = encode_text(prompt, self.text_encoder)
        fused = fuse(visual, text, self.fusion) if self.fusion is not None else None
        return visual, text, fused

    def forward(self, image: torch.Tensor, prompt: PromptSpec) -> ModelOutput:
        image_size = tuple(image.shape[-2:])
        visual, text, fused = self.encode(image, prompt)
        cfg = self.config
        if cfg.decoupled:
            things, thing_logits = self.run_branch(self.thing_decoder, cfg.early_fusion_things,
                                                   visual, text, fused, image_size, prompt)
            stuff, stuff_logits = self.run_branch(self.stuff_decoder, cfg.early_fusion_stuff,
                                                   visual, text, fused, image_size, prompt)
            proposals = concat_proposals(things, stuff)
            logits = torch.cat([thing_logits, stuff_logits], dim=0)
        else:
            proposals, logits = self.run_branch(self.unified_decoder, cfg.early_fusion_things,
                                                visual, text, fused, image_size, prompt)
        return ModelOutput(proposals=proposals, logits=logits, visual=visual, text=text, fused=fused)


def thing_decode(model: SegmentationModel, image: torch.Tensor, prompt: PromptSpec) -> ProposalSet:
    """Thing decoder proposals (the unified decoder's in unified mode)."""
    visual, text, fused = model.encode(image, prompt)
    decoder = model.thing_decoder if model.thing_decoder is not None else model.unified_decoder
    proposals, _ = model.run_branch(decoder, model.config.early_fusion_things, visual, text, fused,
                                    tuple(image.shape[-2:]), prompt)
    return proposals


def stuff_decode(model: SegmentationModel, image: torch.Tensor, prompt: PromptSpec) -> ProposalSet:
    """Stuff decoder proposals; reads unfused features unless early_fusion_stuff is set."""
    if model.stuff_decoder is None:
        raise ValueError("Unified models have no separate stuff decoder")
    visual, text, fused = model.encode(image, prompt)
    proposals, _ = model.run_branch(model.stuff_decoder, model.config.early_fusion_stuff, visual, text, fused,
                                    tuple(image.shape[-2:]), prompt)
    return proposals

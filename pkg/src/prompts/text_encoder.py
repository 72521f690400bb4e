"""Toy self-attention text encoder with windowed encoding and label pooling."""
import logging
from dataclasses import dataclass
from typing import List, Tuple

import torch
import torch.nn as nn

from config.settings import TEXT_WINDOW
from ..core.errors import PromptError, ShapeMismatchError
from .prompt import REFERRING, PromptSpec

logger = logging.getLogger(__name__)

ATTENTION_SCOPES = ("full", "span")


@dataclass
class TextEncoderConfig:
    d: int = 64
    layers: int = 2
    heads: int = 4
    ffn_dim: int = 128
    vocab_size: int = 4096
    window: int = TEXT_WINDOW
    attention_scope: str = "full"

    def __post_init__(self):
        if self.attention_scope not in ATTENTION_SCOPES:
            raise ValueError(f"attention_scope must be one of {ATTENTION_SCOPES}")
        if self.d % self.heads:
            raise ValueError("d must be divisible by heads")


@dataclass
class TextFeatures:
    """Per-token features F_t of shape (L, d)."""

    tokens: torch.Tensor

    def __len__(self) -> int:
        return int(self.tokens.shape[0])

    @property
    def width(self) -> int:
        return int(self.tokens.shape[1])

    @property
    def sequence_embedding(self) -> torch.Tensor:
        """Leading-token pooling, used as the referring sentence embedding."""
        return self.tokens[0]


@dataclass
class ClassEmbeddings:
    labels: Tuple[str, ...]
    vectors: torch.Tensor

    def __len__(self) -> int:
        return len(self.labels)


class TextEncoderLayer(nn.Module):
    def __init__(self, d: int, heads: int, ffn_dim: int):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(d, heads, dropout=0.0, batch_first=True)
        self.norm1 = nn.LayerNorm(d)
        self.ffn = nn.Sequential(nn.Linear(d, ffn_dim), nn.GELU(), nn.Linear(ffn_dim, d))
        self.norm2 = nn.LayerNorm(d)

    def forward(self, x: torch.Tensor, attn_mask: torch.Tensor = None) -> torch.Tensor:
        x2, _ = self.self_attn(x, x, x, attn_mask=attn_mask, need_weights=False)
        x = self.norm1(x + x2)
        return self.norm2(x + self.ffn(x))


class TextEncoder(nn.Module):
    def __init__(self, config: TextEncoderConfig = None):
        super().__init__()
        self.config = config or TextEncoderConfig()
        cfg = self.config
        self.token_embed = nn.Embedding(cfg.vocab_size, cfg.d)
        self.pos_embed = nn.Embedding(cfg.window, cfg.d)
        self.layers = nn.ModuleList(TextEncoderLayer(cfg.d, cfg.heads, cfg.ffn_dim) for _ in range(cfg.layers))

    def forward(self, token_ids: torch.Tensor, positions: torch.Tensor,
                attn_mask: torch.Tensor = None) -> torch.Tensor:
        """Encode one window: ids and positions of shape (L,), mask (L, L) with True = blocked."""
        x = self.token_embed(token_ids) + self.pos_embed(positions)
        x = x.unsqueeze(0)
        for layer in self.layers:
            x = layer(x, attn_mask)
        return x.squeeze(0)


def _segments(prompt: PromptSpec) -> List[int]:
    """Segment id per token: one per label span, singletons for delimiters."""
    seg = [-1] * len(prompt)
    next_id = 0
    for spans in prompt.label_spans.values():
        for start, end in spans:
            for i in range(start, end):
                seg[i] = next_id
            next_id += 1
    for i, s in enumerate(seg):
        if s < 0:
            seg[i] = next_id
            next_id += 1
    return seg


def encode_text(prompt: PromptSpec, encoder: TextEncoder) -> TextFeatures:
    """Encode a prompt in independent windows and concatenate back to full length."""
    if len(prompt) == 0:
        raise PromptError("Cannot encode an empty prompt")
    cfg = encoder.config
    device = encoder.token_embed.weight.device
    ids = torch.tensor(prompt.token_ids, dtype=torch.long, device=device)
    if int(ids.max()) >= cfg.vocab_size:
        raise PromptError("Prompt was tokenized with a larger vocabulary than the encoder")

    span_scope = cfg.attention_scope == "span"
    if span_scope:
        seg = torch.tensor(_segments(prompt), dtype=torch.long, device=device)
        starts = torch.ones_like(seg, dtype=torch.bool)
        starts[1:] = seg[1:] != seg[:-1]
        run_start = torch.cummax(torch.where(starts, torch.arange(len(seg), device=device),
                                             torch.zeros_like(seg)), dim=0).values
        span_pos = torch.arange(len(seg), device=device) - run_start

    chunks = []
    for start in range(0, len(ids), cfg.window):
        end = min(start + cfg.window, len(ids))
        if span_scope:
            positions = span_pos[start:end].clamp(max=cfg.window - 1)
            local = seg[start:end]
            mask = local[:, None] != local[None, :]
        else:
            positions = torch.arange(end - start, device=device)
            mask = None
        chunks.append(encoder(ids[start:end], positions, mask))
    if len(chunks) > 1:
        logger.debug(f"Encoded {len(ids)} tokens in {len(chunks)} windows")
    return TextFeatures(torch.cat(chunks, dim=0))


def pool_class_embeddings(features: TextFeatures, prompt: PromptSpec) -> ClassEmbeddings:
    """Mean of the token vectors inside each label's spans, in prompt label order."""
    if prompt.kind == REFERRING or not prompt.label_spans:
        raise PromptError("Referring prompts have no label spans to pool")
    if len(features) != len(prompt):
        raise ShapeMismatchError(f"{len(features)} token features for a {len(prompt)}-token prompt")
    vectors = []
    for label in prompt.labels:
        idx = [i for start, end in prompt.label_spans[label] for i in range(start, end)]
        vectors.append(features.tokens[idx].mean(dim=0))
    return ClassEmbeddings(tuple(prompt.labels), torch.stack(vectors))

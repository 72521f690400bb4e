"""Bi-directional text/image cross-attention and residual early fusion."""
import math
from dataclasses import dataclass
from typing import List, Tuple

import torch
import torch.nn as nn

from ..core.errors import ShapeMismatchError
from ..prompts.text_encoder import TextFeatures
from .image_encoder import MultiscaleFeatures


@dataclass
class FusedFeatures:
    """F_v' = F_v + F_t2v and F_t' = F_t + F_v2t, with the cross terms kept."""

    visual: MultiscaleFeatures
    textual: TextFeatures
    cross_terms: Tuple[List[torch.Tensor], torch.Tensor]


class BiCrossAttention(nn.Module):
    """Visual tokens attend to text tokens and text tokens attend to visual tokens.

    There is no output projection, so with zero attention logits each visual
    position receives the plain mean of the value-projected text tokens.
    Level embeddings are added to the visual query/key inputs only.
    """

    def __init__(self, d: int = 64, heads: int = 1, num_levels: int = 3):
        super().__init__()
        if d % heads:
            raise ValueError("d must be divisible by heads")
        self.d = d
        self.heads = heads
        self.t2v_query = nn.Linear(d, d)
        self.t2v_key = nn.Linear(d, d)
        self.t2v_value = nn.Linear(d, d)
        self.v2t_query = nn.Linear(d, d)
        self.v2t_key = nn.Linear(d, d)
        self.v2t_value = nn.Linear(d, d)
        self.level_embed = nn.Parameter(torch.randn(num_levels, d) * 0.02)

    def _attend(self, q: torch.Tensor, k: torch.Tensor, v: torch.Tensor):
        n_q, n_k = q.shape[0], k.shape[0]
        dh = self.d // self.heads
        q = q.reshape(n_q, self.heads, dh).transpose(0, 1)
        k = k.reshape(n_k, self.heads, dh).transpose(0, 1)
        v = v.reshape(n_k, self.heads, dh).transpose(0, 1)
        weights = torch.softmax(q @ k.transpose(1, 2) / math.sqrt(dh), dim=-1)
        out = (weights @ v).transpose(0, 1).reshape(n_q, self.d)
        return out, weights

    def forward(self, visual: torch.Tensor, level_ids: torch.Tensor, text: torch.Tensor,
                return_attention: bool = False):
        """visual (Nv, d) tokens with level ids (Nv,); text (Nt, d) tokens."""
        if visual.shape[-1] != self.d or text.shape[-1] != self.d:
            raise ShapeMismatchError(
                f"Fusion width {self.d} does not match visual {visual.shape[-1]} / text {text.shape[-1]}")
        located = visual + self.level_embed[level_ids]
        t2v, t2v_weights = self._attend(self.t2v_query(located), self.t2v_key(text), self.t2v_value(text))
        v2t, v2t_weights = self._attend(self.v2t_query(text), self.v2t_key(located), self.v2t_value(visual))
        if return_attention:
            return t2v, v2t, (t2v_weights, v2t_weights)
        return t2v, v2t


def level_ids_of(features: MultiscaleFeatures) -> torch.Tensor:
    sizes = [h * w for h, w in features.shapes]
    device = features.levels[0].device
    return torch.repeat_interleave(torch.arange(len(sizes), device=device),
                                   torch.tensor(sizes, device=device))


def bi_xattn(visual: MultiscaleFeatures, text: TextFeatures,
             block: BiCrossAttention) -> Tuple[List[torch.Tensor], torch.Tensor]:
    """Return (F_t2v per level, F_v2t) shaped like F_v and F_t."""
    if visual.width != text.width:
        raise ShapeMismatchError(f"Visual width {visual.width} != text width {text.width}")
    t2v, v2t = block(visual.flatten(), level_ids_of(visual), text.tokens)
    return visual.unflatten(t2v), v2t


def fuse(visual: MultiscaleFeatures, text: TextFeatures, block: BiCrossAttention) -> FusedFeatures:
    """Residual early fusion; the inputs are left untouched."""
    t2v_levels, v2t = bi_xattn(visual, text, block)
    fused_visual = MultiscaleFeatures(
        levels=[level + t2v for level, t2v in zip(visual.levels, t2v_levels)],
        pixel_features=visual.pixel_features,
        strides=list(visual.strides),
    )
    return FusedFeatures(
        visual=fused_visual,
        textual=TextFeatures(text.tokens + v2t),
        cross_terms=(t2v_levels, v2t),
    )

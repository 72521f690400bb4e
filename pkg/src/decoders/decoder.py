"""Query decoder: self-attention, cross-attention to visual tokens, feed-forward."""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..fusion.fusion import BiCrossAttention, level_ids_of
from ..fusion.image_encoder import MultiscaleFeatures
from ..prompts.text_encoder import TextFeatures
from .config import DecoderConfig
from .proposals import ProposalSet, ProposalSource


class MLP(nn.Module):
    def __init__(self, input_dim, hidden_dim, output_dim, num_layers):
        super().__init__()
        self.num_layers = num_layers
        h = [hidden_dim] * (num_layers - 1)
        self.layers = nn.ModuleList(nn.Linear(n, k) for n, k in zip([input_dim] + h, h + [output_dim]))

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = F.relu(layer(x)) if i < self.num_layers - 1 else layer(x)
        return x


def sine_position_embedding(h: int, w: int, d: int, device=None, dtype=torch.float32) -> torch.Tensor:
    """2-D sine/cosine embedding of shape (h*w, d) over normalized grid coordinates."""
    quarter = d // 4
    dim_t = 10000 ** (torch.arange(quarter, device=device, dtype=dtype) / max(quarter, 1))
    ys = (torch.arange(h, device=device, dtype=dtype) + 0.5) / h * 2 * math.pi
    xs = (torch.arange(w, device=device, dtype=dtype) + 0.5) / w * 2 * math.pi
    yy, xx = torch.meshgrid(ys, xs, indexing="ij")
    py = yy.reshape(-1, 1) / dim_t
    px = xx.reshape(-1, 1) / dim_t
    emb = torch.cat([py.sin(), py.cos(), px.sin(), px.cos()], dim=1)
    if emb.shape[1] < d:
        emb = F.pad(emb, (0, d - emb.shape[1]))
    return emb


class QueryDecoderLayer(nn.Module):
    def __init__(self, d: int, heads: int, ffn_dim: int):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(d, heads, dropout=0.0, batch_first=True)
        self.norm1 = nn.LayerNorm(d)
        self.cross_attn = nn.MultiheadAttention(d, heads, dropout=0.0, batch_first=True)
        self.norm2 = nn.LayerNorm(d)
        self.ffn = nn.Sequential(nn.Linear(d, ffn_dim), nn.ReLU(), nn.Linear(ffn_dim, d))
        self.norm3 = nn.LayerNorm(d)

    def forward(self, target, query_pos, memory, memory_pos):
        q = k = (target + query_pos).unsqueeze(0)
        target2, _ = self.self_attn(q, k, target.unsqueeze(0), need_weights=False)
        target = self.norm1(target + target2.squeeze(0))
        target2, _ = self.cross_attn((target + query_pos).unsqueeze(0), (memory + memory_pos).unsqueeze(0),
                                     memory.unsqueeze(0), need_weights=False)
        target = self.norm2(target + target2.squeeze(0))
        return self.norm3(target + self.ffn(target))


@dataclass
class DecoderOutput:
    proposals: ProposalSet
    # text features after per-layer fusion, None when the decoder did not read text
    text: Optional[TextFeatures] = None


class QueryDecoder(nn.Module):
    """Decodes ``num_queries`` proposals from multiscale visual features.

    Mask logits are query mask embeddings dotted with the stride-4 pixel
    features, upsampled to the image size. Boxes come from a sigmoid
    (cx, cy, w, h) head converted to clamped corners.
    """

    def __init__(self, num_queries: int, config: DecoderConfig, source: ProposalSource,
                 fuse_per_layer: bool = False):
        super().__init__()
        d = config.d
        self.source = ProposalSource(source)
        self.num_queries = num_queries
        self.query_embed = nn.Embedding(num_queries, d)
        self.query_pos = nn.Embedding(num_queries, d)
        self.level_embed = nn.Parameter(torch.randn(config.num_levels, d) * 0.02)
        self.layers = nn.ModuleList(QueryDecoderLayer(d, config.heads, config.ffn_dim) for _ in range(config.layers))
        self.fusion_blocks = nn.ModuleList(
            BiCrossAttention(d, config.fusion_heads, config.num_levels) for _ in range(config.layers)
        ) if fuse_per_layer else None
        self.norm = nn.LayerNorm(d)
        self.class_embed = nn.Linear(d, d)
        self.mask_embed = MLP(d, d, d, 3)
        self.box_head = MLP(d, d, 4, 3)

    @property
    def fuses_per_layer(self) -> bool:
        return self.fusion_blocks is not None

    def _memory_pos(self, features: MultiscaleFeatures) -> torch.Tensor:
        ref = features.levels[0]
        pos = [sine_position_embedding(h, w, ref.shape[0], ref.device, ref.dtype) + self.level_embed[i]
               for i, (h, w) in enumerate(features.shapes)]
        return torch.cat(pos, dim=0)

    def forward(self, features: MultiscaleFeatures, image_size: Tuple[int, int],
                text: Optional[TextFeatures] = None) -> DecoderOutput:
        memory = features.flatten()
        memory_pos = self._memory_pos(features)
        target = self.query_embed.weight
        query_pos = self.query_pos.weight
        text_tokens = text.tokens if (text is not None and self.fuses_per_layer) else None
        level_ids = level_ids_of(features) if text_tokens is not None else None

        for i, layer in enumerate(self.layers):
            if text_tokens is not None:
                t2v, v2t = self.fusion_blocks[i](memory, level_ids, text_tokens)
                memory = memory + t2v
                text_tokens = text_tokens + v2t
            target = layer(target, query_pos, memory, memory_pos)

        out = self.norm(target)
        embeddings = self.class_embed(out)
        mask_low = torch.einsum("qd,dhw->qhw", self.mask_embed(out), features.pixel_features)
        masks = F.interpolate(mask_low.unsqueeze(0), size=tuple(image_size), mode="bilinear",
                              align_corners=False).squeeze(0)
        cxcywh = torch.sigmoid(self.box_head(out))
        cx, cy, w, h = cxcywh.unbind(-1)
        boxes = torch.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], dim=-1).clamp(0.0, 1.0)

        proposals = ProposalSet(masks, boxes, embeddings, (self.source,) * self.num_queries)
        return DecoderOutput(proposals, TextFeatures(text_tokens) if text_tokens is not None else None)

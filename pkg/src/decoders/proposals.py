"""Proposal sets (M, B, E), their concatenation and cosine classification logits."""
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple

import torch
import torch.nn.functional as F

from ..core.errors import ShapeMismatchError


class ProposalSource(str, Enum):
    THING = "thing"
    STUFF = "stuff"
    UNIFIED = "unified"


@dataclass
class ProposalSet:
    """Mask logits (N, H, W), normalized corner boxes (N, 4) and embeddings (N, d)."""

    masks: torch.Tensor
    boxes: torch.Tensor
    embeddings: torch.Tensor
    sources: Tuple[ProposalSource, ...]

    def __post_init__(self):
        self.sources = tuple(ProposalSource(s) for s in self.sources)
        n = self.masks.shape[0]
        if self.boxes.shape != (n, 4) or self.embeddings.shape[0] != n or len(self.sources) != n:
            raise ShapeMismatchError(
                f"Inconsistent proposal set: masks {tuple(self.masks.shape)}, boxes {tuple(self.boxes.shape)}, "
                f"embeddings {tuple(self.embeddings.shape)}, {len(self.sources)} sources")

    def __len__(self) -> int:
        return int(self.masks.shape[0])

    @property
    def image_shape(self) -> Tuple[int, int]:
        return (int(self.masks.shape[1]), int(self.masks.shape[2]))

    def indices_of(self, source: ProposalSource) -> list:
        return [i for i, s in enumerate(self.sources) if s == source]

    def select(self, indices: Sequence[int]) -> "ProposalSet":
        idx = torch.as_tensor(list(indices), dtype=torch.long, device=self.masks.device)
        return ProposalSet(
            masks=self.masks.index_select(0, idx),
            boxes=self.boxes.index_select(0, idx),
            embeddings=self.embeddings.index_select(0, idx),
            sources=tuple(self.sources[i] for i in indices),
        )

    def detach(self) -> "ProposalSet":
        return ProposalSet(self.masks.detach(), self.boxes.detach(), self.embeddings.detach(), self.sources)


def concat_proposals(thing: ProposalSet, stuff: ProposalSet) -> ProposalSet:
    """Thing proposals first, then stuff proposals."""
    if len(stuff) and len(thing) and thing.image_shape != stuff.image_shape:
        raise ShapeMismatchError(f"Proposal image shapes differ: {thing.image_shape} vs {stuff.image_shape}")
    if not len(stuff):
        return thing
    if not len(thing):
        return stuff
    return ProposalSet(
        masks=torch.cat([thing.masks, stuff.masks]),
        boxes=torch.cat([thing.boxes, stuff.boxes]),
        embeddings=torch.cat([thing.embeddings, stuff.embeddings]),
        sources=thing.sources + stuff.sources,
    )


def class_logits(embeddings: torch.Tensor, class_vectors: torch.Tensor,
                 other_vector: torch.Tensor, temperature: float) -> torch.Tensor:
    """cosine(E_i, E'_c) / temperature, with the "other" column appended last.

    Zero vectors normalize to zero and give a logit of 0.
    """
    if embeddings.shape[-1] != class_vectors.shape[-1] or other_vector.shape[-1] != embeddings.shape[-1]:
        raise ShapeMismatchError("Proposal and class embedding widths differ")
    columns = torch.cat([class_vectors, other_vector.reshape(1, -1)], dim=0)
    e = F.normalize(embeddings, dim=-1)
    c = F.normalize(columns, dim=-1)
    return e @ c.transpose(0, 1) / temperature

"""Two-tower region/class embedder standing in for a pretrained image-text model."""
import logging
from typing import List, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..core.geometry import BinaryMask
from ..prompts.tokenizer import HashTokenizer
from ..synthdata.generator import SceneSample
from ..synthdata.vocabulary import Vocabulary

logger = logging.getLogger(__name__)

MaskLike = Union[BinaryMask, np.ndarray, torch.Tensor]


def mask_pool(features: torch.Tensor, mask: MaskLike) -> Tuple[torch.Tensor, bool]:
    """Mean of a (d, h, w) feature grid under a mask resampled to the grid by nearest neighbour.

    Returns (vector, empty); an empty mask pools to the zero vector.
    """
    if isinstance(mask, BinaryMask):
        mask = mask.data
    m = torch.as_tensor(np.asarray(mask) if not isinstance(mask, torch.Tensor) else mask)
    m = m.to(features.dtype)
    if tuple(m.shape) != tuple(features.shape[-2:]):
        m = F.interpolate(m[None, None], size=tuple(features.shape[-2:]), mode="nearest")[0, 0]
    area = m.sum()
    if float(area) == 0.0:
        logger.warning("⚠️ Mask pooling over an empty mask, returning a zero vector")
        return features.new_zeros(features.shape[0]), True
    return (features * m).flatten(1).sum(1) / area, False


class AuxiliaryEmbedder(nn.Module):
    """Image tower producing a per-pixel grid and a hashed bag-of-words class tower."""

    def __init__(self, channels: int = 3, d: int = 32, vocab_size: int = 4096, temperature: float = 0.1):
        super().__init__()
        self.temperature = temperature
        self.tokenizer = HashTokenizer(vocab_size)
        self.image_tower = nn.Sequential(
            nn.Conv2d(channels, d, kernel_size=3, padding=1), nn.ReLU(),
            nn.Conv2d(d, d, kernel_size=3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(d, d, kernel_size=3, padding=1),
        )
        self.word_embed = nn.EmbeddingBag(vocab_size, d, mode="mean")
        self.class_proj = nn.Linear(d, d)

    def pixel_features(self, image: torch.Tensor) -> torch.Tensor:
        return self.image_tower(image.to(self.class_proj.weight.dtype).unsqueeze(0)).squeeze(0)

    def embed_region(self, image: torch.Tensor, mask: MaskLike) -> torch.Tensor:
        vector, _ = mask_pool(self.pixel_features(image), mask)
        return F.normalize(vector, dim=-1)

    def embed_class(self, names: Sequence[str]) -> torch.Tensor:
        ids, offsets = [], []
        for name in names:
            offsets.append(len(ids))
            ids.extend(self.tokenizer.encode(name) or [0])
        device = self.class_proj.weight.device
        bag = self.word_embed(torch.tensor(ids, dtype=torch.long, device=device),
                              torch.tensor(offsets, dtype=torch.long, device=device))
        return F.normalize(self.class_proj(bag), dim=-1)

    def region_logits(self, image: torch.Tensor, masks: Sequence[MaskLike], names: Sequence[str]) -> torch.Tensor:
        grid = self.pixel_features(image)
        regions = torch.stack([mask_pool(grid, m)[0] for m in masks])
        return F.normalize(regions, dim=-1) @ self.embed_class(names).transpose(0, 1) / self.temperature


def train_auxiliary(embedder: AuxiliaryEmbedder, samples: Sequence[SceneSample], vocabulary: Vocabulary,
                    iterations: int = 200, lr: float = 1e-3, log_every: int = 50) -> List[float]:
    """Contrastive region/class training over every thing and stuff region."""
    from ..decoders.model import image_to_tensor

    if not samples or iterations <= 0:
        return []
    labels = vocabulary.all_labels
    optimizer = torch.optim.Adam(embedder.parameters(), lr=lr)
    history = []
    embedder.train()
    for it in range(iterations):
        sample = samples[it % len(samples)]
        regions = [(inst.class_name, inst.mask) for inst in sample.instances]
        regions += [(region.class_name, region.mask) for region in sample.stuff_regions]
        regions = [(name, mask) for name, mask in regions if name in labels]
        if not regions:
            continue
        image = image_to_tensor(sample.image)
        logits = embedder.region_logits(image, [m for _, m in regions], labels)
        target = torch.tensor([labels.index(name) for name, _ in regions], dtype=torch.long)
        loss = F.cross_entropy(logits, target)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        history.append(float(loss.detach()))
        if log_every and (it + 1) % log_every == 0:
            logger.info(f"📊 Auxiliary embedder iteration {it + 1}/{iterations}: loss {history[-1]:.4f}")
    embedder.eval()
    return history

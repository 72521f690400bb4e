"""Open-vocabulary class probabilities: decoder logits combined with the auxiliary model."""
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import torch

from ..core.errors import PromptError, ShapeMismatchError
from ..decoders.proposals import ProposalSet
from .auxiliary import AuxiliaryEmbedder

PROB_FLOOR = 1e-12


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def combine_logits(p1: np.ndarray, p2: np.ndarray, lam: Union[float, Sequence[float]]) -> np.ndarray:
    """p_final proportional to p1^(1 - lambda) * p2^lambda, renormalized per row.

    ``lam`` may be a scalar or one value per class column.
    """
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    if p1.shape != p2.shape:
        raise ShapeMismatchError(f"p1 {p1.shape} and p2 {p2.shape} differ")
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0.0) or np.any(lam > 1.0) or not np.all(np.isfinite(lam)):
        raise ValueError(f"Balancing factor must lie in [0, 1], got {lam}")
    log_p = (1.0 - lam) * np.log(np.maximum(p1, PROB_FLOOR)) + lam * np.log(np.maximum(p2, PROB_FLOOR))
    return softmax(log_p, axis=-1)


@dataclass
class ClassProbabilities:
    """Per-proposal distributions over the test classes.

    ``p_other`` is the decoder's probability of the "other" column; it is
    kept outside ``p_final`` so that each row of p1, p2 and p_final sums to 1.
    """

    labels: tuple
    p1: np.ndarray
    p2: np.ndarray
    p_final: np.ndarray
    p_other: np.ndarray
    lam: np.ndarray

    def with_other(self) -> np.ndarray:
        """(N, k + 1) rows: p_final scaled by (1 - p_other), then p_other."""
        keep = (1.0 - self.p_other)[:, None]
        return np.concatenate([self.p_final * keep, self.p_other[:, None]], axis=1)

    def scores(self) -> np.ndarray:
        return self.p_final.max(axis=1) * (1.0 - self.p_other)

    def predicted(self) -> np.ndarray:
        return self.p_final.argmax(axis=1)


def open_vocab_classify(props: ProposalSet, image: torch.Tensor, labels: Sequence[str], logits: torch.Tensor,
                        aux_model: Optional[AuxiliaryEmbedder] = None, lambda_seen: float = 0.2,
                        lambda_novel: float = 0.45, seen_set: Optional[Iterable[str]] = None,
                        mask_threshold: float = 0.5) -> ClassProbabilities:
    """Combine decoder cosine logits (p1) with mask-pooled auxiliary similarities (p2).

    Classes in ``seen_set`` use ``lambda_seen``, the rest ``lambda_novel``;
    without an auxiliary model p2 = p1 and lambda = 0.
    """
    labels = tuple(labels)
    k = len(labels)
    if k == 0:
        raise PromptError("Open-vocabulary classification needs at least one test class")
    scores = logits.detach().double().cpu().numpy()
    if scores.shape != (len(props), k + 1):
        raise ShapeMismatchError(f"Logits {scores.shape} do not cover {k} classes plus other")
    p1 = softmax(scores[:, :k])
    p_other = softmax(scores)[:, k]

    if aux_model is None:
        return ClassProbabilities(labels, p1, p1.copy(), p1.copy(), p_other, np.zeros(k))

    seen = set(labels if seen_set is None else seen_set)
    lam = np.array([lambda_seen if label in seen else lambda_novel for label in labels], dtype=np.float64)
    with torch.no_grad():
        masks = torch.sigmoid(props.masks.detach()) > mask_threshold
        aux_logits = aux_model.region_logits(image, list(masks), labels) if len(props) else \
            torch.zeros((0, k))
    p2 = softmax(aux_logits.double().cpu().numpy())
    return ClassProbabilities(labels, p1, p2, combine_logits(p1, p2, lam), p_other, lam)

"""Loss term weights shared by the matching cost and the training loss."""
import math
from dataclasses import asdict, dataclass
from typing import Dict

from ..core.errors import ConfigError


@dataclass
class LossWeights:
    cls: float = 2.0
    mask: float = 5.0
    box: float = 5.0
    ce: float = 1.0
    dice: float = 1.0
    l1: float = 1.0
    giou: float = 0.2
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0

    def __post_init__(self):
        bad = {k: v for k, v in asdict(self).items() if not math.isfinite(v) or v < 0}
        if bad:
            raise ConfigError(f"Loss weights must be finite and >= 0: {bad}", bad)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

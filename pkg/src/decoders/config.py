"""Decoder configuration and the named decoder/fusion design variants."""
from dataclasses import asdict, dataclass, replace
from typing import Dict, Optional

from ..core.errors import ConfigError


@dataclass
class DecoderConfig:
    """Model shape and the decoupling / early-fusion switches.

    ``early_fusion_things`` also governs the single decoder in unified mode.
    """

    num_thing_queries: int = 20
    num_stuff_queries: int = 8
    num_unified_queries: Optional[int] = None
    layers: int = 3
    d: int = 64
    heads: int = 4
    ffn_dim: int = 128
    decoupled: bool = True
    early_fusion_things: bool = True
    early_fusion_stuff: bool = False
    fusion_per_layer: bool = False
    fusion_heads: int = 1
    temperature: float = 0.05
    num_levels: int = 3
    channels: int = 3
    text_layers: int = 2
    text_heads: int = 4
    vocab_size: int = 4096
    attention_scope: str = "full"

    def __post_init__(self):
        self.validate()

    def validate(self):
        errors = {}
        for name in ("num_thing_queries", "num_stuff_queries", "layers", "d", "heads", "num_levels", "channels"):
            if getattr(self, name) < 1:
                errors[name] = "must be >= 1"
        if self.num_unified_queries is not None and self.num_unified_queries < 1:
            errors["num_unified_queries"] = "must be >= 1"
        if self.temperature <= 0:
            errors["temperature"] = "must be > 0"
        if self.d % self.heads or self.d % self.fusion_heads or self.d % self.text_heads:
            errors["d"] = "must be divisible by every head count"
        if not self.decoupled and self.early_fusion_stuff != self.early_fusion_things:
            errors["early_fusion_stuff"] = "unified mode has a single fusion switch"
        if errors:
            raise ConfigError(f"Invalid decoder config: {errors}", errors)

    @property
    def unified_queries(self) -> int:
        if self.num_unified_queries is not None:
            return self.num_unified_queries
        return self.num_thing_queries + self.num_stuff_queries

    @property
    def uses_fusion(self) -> bool:
        return self.early_fusion_things or (self.decoupled and self.early_fusion_stuff)

    def to_dict(self) -> Dict:
        return asdict(self)


# Flag sets for the decoder / text-image fusion design comparison.
DECODER_VARIANTS: Dict[str, Dict[str, bool]] = {
    "unified": {"decoupled": False, "early_fusion_things": False, "early_fusion_stuff": False},
    "decoupled": {"decoupled": True, "early_fusion_things": False, "early_fusion_stuff": False},
    "unified_fusion": {"decoupled": False, "early_fusion_things": True, "early_fusion_stuff": True},
    "decoupled_fusion_both": {"decoupled": True, "early_fusion_things": True, "early_fusion_stuff": True},
    "decoupled_fusion_things": {"decoupled": True, "early_fusion_things": True, "early_fusion_stuff": False},
}
DEFAULT_VARIANT = "decoupled_fusion_things"


def with_variant(config: DecoderConfig, variant: str) -> DecoderConfig:
    if variant not in DECODER_VARIANTS:
        raise ConfigError(f"Unknown decoder variant '{variant}'", {"variant": sorted(DECODER_VARIANTS)})
    return replace(config, **DECODER_VARIANTS[variant])


def variant_name(config: DecoderConfig) -> Optional[str]:
    flags = {k: getattr(config, k) for k in ("decoupled", "early_fusion_things", "early_fusion_stuff")}
    for name, preset in DECODER_VARIANTS.items():
        if preset == flags:
            return name
    return None

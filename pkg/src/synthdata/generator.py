"""Deterministic synthetic scenes: convex things with parts over irregular stuff."""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import SceneGenerationError
from ..core.geometry import BinaryMask, Box, mask_to_box
from .vocabulary import Vocabulary, default_vocabulary

logger = logging.getLogger(__name__)

SHAPES = ("ellipse", "rectangle", "triangle", "diamond", "hexagon", "trapezoid")

COLOR_PALETTE: Dict[str, Tuple[float, float, float]] = {
    "red": (0.86, 0.12, 0.12),
    "green": (0.10, 0.70, 0.20),
    "blue": (0.15, 0.25, 0.90),
    "yellow": (0.95, 0.85, 0.10),
    "purple": (0.60, 0.20, 0.75),
    "orange": (0.98, 0.55, 0.05),
}

STUFF_BASE_COLORS = (
    (0.55, 0.75, 0.95),
    (0.30, 0.55, 0.25),
    (0.10, 0.25, 0.45),
    (0.55, 0.52, 0.50),
    (0.75, 0.65, 0.45),
    (0.35, 0.35, 0.35),
)


@dataclass
class GeneratorConfig:
    vocabulary: Vocabulary = field(default_factory=default_vocabulary)
    height: int = 64
    width: int = 64
    channels: int = 3
    min_instances: int = 1
    max_instances: int = 3
    distinct_classes: bool = False
    min_size: int = 14
    max_size: int = 24
    min_stuff: int = 2
    max_stuff: int = 3
    max_attempts: int = 200
    noise: float = 0.04

    def validate(self):
        if not self.vocabulary.thing_classes:
            raise SceneGenerationError("Generator needs at least one thing class")
        if not self.vocabulary.stuff_classes:
            raise SceneGenerationError("Generator needs at least one stuff class")
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise SceneGenerationError("Image dimensions must be positive")
        if not 0 <= self.min_instances <= self.max_instances:
            raise SceneGenerationError("Instance count range is empty")
        if not 1 <= self.min_stuff <= self.max_stuff:
            raise SceneGenerationError("Stuff count range is empty")
        if not 1 <= self.min_size <= self.max_size:
            raise SceneGenerationError("Instance size range is empty")

    def to_dict(self) -> Dict:
        return {
            "vocabulary": self.vocabulary.to_dict(),
            "height": self.height,
            "width": self.width,
            "channels": self.channels,
            "min_instances": self.min_instances,
            "max_instances": self.max_instances,
            "distinct_classes": self.distinct_classes,
            "min_size": self.min_size,
            "max_size": self.max_size,
            "min_stuff": self.min_stuff,
            "max_stuff": self.max_stuff,
            "max_attempts": self.max_attempts,
            "noise": self.noise,
        }

    @classmethod
    def from_dict(cls, record: Dict) -> "GeneratorConfig":
        values = dict(record)
        if "vocabulary" in values:
            values["vocabulary"] = Vocabulary.from_dict(values["vocabulary"])
        return cls(**values)


@dataclass(frozen=True)
class PartAnnotation:
    name: str
    mask: BinaryMask


@dataclass(frozen=True)
class InstanceAnnotation:
    class_name: str
    mask: BinaryMask
    box: Box
    parts: Tuple[PartAnnotation, ...] = ()
    color: str = ""


@dataclass(frozen=True)
class StuffAnnotation:
    class_name: str
    mask: BinaryMask


@dataclass(frozen=True)
class ReferringExpression:
    text: str
    target: int


@dataclass
class SceneSample:
    """Image raster in [0, 1] with thing, stuff, part and referring annotations."""

    image: np.ndarray
    instances: List[InstanceAnnotation]
    stuff_regions: List[StuffAnnotation]
    referring: List[ReferringExpression] = field(default_factory=list)
    sample_id: str = ""

    @property
    def height(self) -> int:
        return int(self.image.shape[0])

    @property
    def width(self) -> int:
        return int(self.image.shape[1])

    def validate(self):
        """Raise SceneGenerationError when an annotation invariant is broken."""
        shape = (self.height, self.width)
        if self.image.ndim != 3 or np.any(self.image < 0) or np.any(self.image > 1):
            raise SceneGenerationError("Image must be H x W x C with values in [0, 1]")
        occupied = np.zeros(shape, dtype=bool)
        for idx, inst in enumerate(self.instances):
            if inst.mask.shape != shape:
                raise SceneGenerationError(f"Instance {idx} mask has wrong shape")
            if np.any(occupied & inst.mask.data):
                raise SceneGenerationError(f"Instance {idx} overlaps an earlier instance")
            occupied |= inst.mask.data
            covered = np.zeros(shape, dtype=bool)
            for part in inst.parts:
                if np.any(part.mask.data & ~inst.mask.data):
                    raise SceneGenerationError(f"Part '{part.name}' leaks outside instance {idx}")
                covered |= part.mask.data
            if inst.parts and not np.array_equal(covered, inst.mask.data):
                raise SceneGenerationError(f"Parts of instance {idx} do not cover it")
        stuff_union = np.zeros(shape, dtype=bool)
        for region in self.stuff_regions:
            if np.any(stuff_union & region.mask.data):
                raise SceneGenerationError(f"Stuff region '{region.class_name}' overlaps another")
            stuff_union |= region.mask.data
        if not np.array_equal(stuff_union, ~occupied):
            raise SceneGenerationError("Stuff regions do not tile the non-instance area")
        for expr in self.referring:
            if not 0 <= expr.target < len(self.instances):
                raise SceneGenerationError(f"Referring target {expr.target} out of range")


def _shape_mask(kind: str, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ny = (yy - cy) / max(h / 2.0, 1e-9)
    nx = (xx - cx) / max(w / 2.0, 1e-9)
    if kind == "ellipse":
        return nx ** 2 + ny ** 2 <= 1.0
    if kind == "rectangle":
        return np.ones((h, w), dtype=bool)
    if kind == "triangle":
        half = (yy + 1) / h * (w / 2.0)
        return np.abs(xx - cx) <= half
    if kind == "diamond":
        return np.abs(nx) + np.abs(ny) <= 1.0
    if kind == "hexagon":
        return (np.abs(ny) <= 0.95) & (np.abs(nx) + 0.5 * np.abs(ny) <= 1.0)
    if kind == "trapezoid":
        half = (0.55 + 0.45 * (yy + 1) / h) * (w / 2.0)
        return np.abs(xx - cx) <= half
    raise SceneGenerationError(f"Unknown shape '{kind}'")


def _color_vector(rgb: Sequence[float], channels: int) -> np.ndarray:
    return np.resize(np.asarray(rgb, dtype=np.float64), channels)


def _stuff_layout(cfg: GeneratorConfig, rng: np.random.Generator) -> Tuple[np.ndarray, List[str]]:
    """Wavy horizontal bands; the first class repeats at the bottom when k >= 2."""
    stuff = list(cfg.vocabulary.stuff_classes)
    k = int(rng.integers(cfg.min_stuff, cfg.max_stuff + 1))
    k = min(k, len(stuff))
    chosen = [stuff[i] for i in rng.choice(len(stuff), size=k, replace=False)]
    sequence = chosen + [chosen[0]] if k >= 2 else chosen
    bands = len(sequence)
    band_height = cfg.height / bands
    amplitude = min(3.0, 0.3 * band_height)
    xs = np.arange(cfg.width)
    band_index = np.zeros((cfg.height, cfg.width), dtype=np.int64)
    rows = np.arange(cfg.height)[:, None]
    for j in range(1, bands):
        freq = int(rng.integers(1, 4))
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        boundary = j * band_height + amplitude * np.sin(2.0 * np.pi * freq * xs / cfg.width + phase)
        band_index += (rows >= boundary[None, :]).astype(np.int64)
    return band_index, sequence


def _stuff_texture(class_idx: int, cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    base = _color_vector(STUFF_BASE_COLORS[class_idx % len(STUFF_BASE_COLORS)], cfg.channels)
    yy, xx = np.mgrid[0:cfg.height, 0:cfg.width]
    pattern = class_idx % 4
    if pattern == 0:
        mod = 0.08 * (yy / cfg.height)
    elif pattern == 1:
        mod = 0.06 * ((xx % 4) < 2)
    elif pattern == 2:
        mod = 0.05 * np.sin(yy * 0.8)
    else:
        mod = 0.06 * (((yy // 4) + (xx // 8)) % 2)
    tex = base[None, None, :] + mod[..., None]
    return tex + cfg.noise * rng.standard_normal((cfg.height, cfg.width, cfg.channels))


def _place_instances(cfg: GeneratorConfig, rng: np.random.Generator):
    vocab = cfg.vocabulary
    things = list(vocab.thing_classes)
    n = int(rng.integers(cfg.min_instances, cfg.max_instances + 1))
    if cfg.distinct_classes and n > len(things):
        raise SceneGenerationError(f"Cannot draw {n} distinct classes from {len(things)}")
    class_ids = rng.choice(len(things), size=n, replace=not cfg.distinct_classes) if n else []
    occupied = np.zeros((cfg.height, cfg.width), dtype=bool)
    placed = []
    for class_id in class_ids:
        name = things[int(class_id)]
        kind = SHAPES[int(class_id) % len(SHAPES)]
        for _ in range(cfg.max_attempts):
            h = int(rng.integers(cfg.min_size, cfg.max_size + 1))
            w = int(rng.integers(cfg.min_size, cfg.max_size + 1))
            if h > cfg.height or w > cfg.width:
                continue
            y0 = int(rng.integers(0, cfg.height - h + 1))
            x0 = int(rng.integers(0, cfg.width - w + 1))
            local = _shape_mask(kind, h, w)
            full = np.zeros_like(occupied)
            full[y0:y0 + h, x0:x0 + w] = local
            # one-pixel gap keeps neighbouring instances separate
            grown = full.copy()
            grown[1:, :] |= full[:-1, :]
            grown[:-1, :] |= full[1:, :]
            grown[:, 1:] |= full[:, :-1]
            grown[:, :-1] |= full[:, 1:]
            if full.any() and not np.any(grown & occupied):
                occupied |= full
                placed.append((name, full))
                break
        else:
            raise SceneGenerationError(
                f"Image {cfg.height}x{cfg.width} too small to place {n} instances "
                f"after {cfg.max_attempts} attempts")
    return placed


def _split_parts(mask: np.ndarray, part_names: Sequence[str]) -> List[PartAnnotation]:
    rows = np.flatnonzero(mask.any(axis=1))
    if not part_names:
        return []
    if rows.size < len(part_names):
        raise SceneGenerationError("Instance too small to hold its parts")
    parts = []
    for name, chunk in zip(part_names, np.array_split(rows, len(part_names))):
        band = np.zeros_like(mask)
        band[chunk, :] = True
        parts.append(PartAnnotation(name, BinaryMask(mask & band)))
    return parts


def _referring_expressions(instances: List[InstanceAnnotation], width: int) -> List[ReferringExpression]:
    centers = []
    for inst in instances:
        _, xs = np.nonzero(inst.mask.data)
        centers.append(float(xs.mean()) if xs.size else 0.0)
    areas = [inst.mask.area for inst in instances]

    def same(i, j, *, color=True):
        a, b = instances[i], instances[j]
        return a.class_name == b.class_name and (not color or a.color == b.color)

    def size_word(i):
        peers = [j for j in range(len(instances)) if same(i, j)]
        if len(peers) < 2:
            return None
        if areas[i] == max(areas[j] for j in peers):
            return "large"
        if areas[i] == min(areas[j] for j in peers):
            return "small"
        return None

    def side(i):
        return "left" if centers[i] < width / 2.0 else "right"

    def extreme(i):
        peers = [j for j in range(len(instances)) if same(i, j, color=False)]
        xs = [centers[j] for j in peers]
        if centers[i] == min(xs) and xs.count(min(xs)) == 1:
            return "leftmost"
        if centers[i] == max(xs) and xs.count(max(xs)) == 1:
            return "rightmost"
        return None

    expressions = []
    n = len(instances)
    for i, inst in enumerate(instances):
        candidates = []
        candidates.append((f"the {inst.color} {inst.class_name}",
                           [j for j in range(n) if same(i, j)]))
        word = size_word(i)
        if word:
            candidates.append((f"the {word} {inst.color} {inst.class_name}",
                               [j for j in range(n) if same(i, j) and size_word(j) == word]))
        candidates.append((f"the {inst.color} {inst.class_name} on the {side(i)}",
                           [j for j in range(n) if same(i, j) and side(j) == side(i)]))
        word = extreme(i)
        if word:
            candidates.append((f"the {word} {inst.class_name}",
                               [j for j in range(n) if same(i, j, color=False) and extreme(j) == word]))
        for text, selected in candidates:
            if selected == [i]:
                expressions.append(ReferringExpression(text, i))
                break
        else:
            logger.debug(f"No unique referring template for instance {i}")
    return expressions


def generate_scene(gen_config: GeneratorConfig, seed: int) -> SceneSample:
    """Generate one scene; identical (config, seed) yields identical samples."""
    cfg = gen_config
    cfg.validate()
    rng = np.random.default_rng(seed)
    vocab = cfg.vocabulary

    band_index, sequence = _stuff_layout(cfg, rng)
    placed = _place_instances(cfg, rng)

    image = np.zeros((cfg.height, cfg.width, cfg.channels), dtype=np.float64)
    instance_union = np.zeros((cfg.height, cfg.width), dtype=bool)
    for band, name in enumerate(sequence):
        region = band_index == band
        texture = _stuff_texture(vocab.stuff_classes.index(name), cfg, rng)
        image[region] = texture[region]

    instances: List[InstanceAnnotation] = []
    color_names = list(COLOR_PALETTE)
    for name, mask in placed:
        color = color_names[int(rng.integers(0, len(color_names)))]
        parts = _split_parts(mask, vocab.parts_of(name))
        rgb = _color_vector(COLOR_PALETTE[color], cfg.channels)
        shading = rng.standard_normal((cfg.height, cfg.width, cfg.channels)) * cfg.noise
        if parts:
            for j, part in enumerate(parts):
                tone = rgb * (1.0 - 0.18 * j)
                image[part.mask.data] = tone + shading[part.mask.data]
        else:
            image[mask] = rgb + shading[mask]
        instance_union |= mask
        bmask = BinaryMask(mask)
        instances.append(InstanceAnnotation(name, bmask, mask_to_box(bmask), tuple(parts), color))

    stuff_regions: List[StuffAnnotation] = []
    for name in dict.fromkeys(sequence):
        region = np.isin(band_index, [b for b, s in enumerate(sequence) if s == name]) & ~instance_union
        if region.any():
            stuff_regions.append(StuffAnnotation(name, BinaryMask(region)))

    image = np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0
    sample = SceneSample(
        image=image,
        instances=instances,
        stuff_regions=stuff_regions,
        referring=_referring_expressions(instances, cfg.width),
    )
    sample.validate()
    return sample

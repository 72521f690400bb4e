"""Binary masks, corner-form boxes, IoU algebra and column-major RLE."""
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from .errors import RleDecodeError, ShapeMismatchError


@dataclass(frozen=True)
class BinaryMask:
    """Immutable boolean pixel grid of shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=bool, copy=True)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ShapeMismatchError(f"BinaryMask needs a non-empty 2-D grid, got shape {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def area(self) -> int:
        return int(self.data.sum())

    def is_empty(self) -> bool:
        return not self.data.any()

    @classmethod
    def zeros(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        _check_same_shape(self, other)
        return BinaryMask(self.data & other.data)

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        _check_same_shape(self, other)
        return BinaryMask(self.data | other.data)

    def __invert__(self) -> "BinaryMask":
        return BinaryMask(~self.data)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self) -> int:
        return hash((self.shape, self.data.tobytes()))


@dataclass(frozen=True)
class Box:
    """Corner-form box (x0, y0, x1, y1) in pixels or normalized units."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError(f"Box corners out of order: {self}")

    @classmethod
    def empty(cls) -> "Box":
        """Sentinel returned for empty masks."""
        return EMPTY_BOX

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def is_empty(self) -> bool:
        return self.area <= 0.0

    def to_array(self) -> np.ndarray:
        return np.array([self.x0, self.y0, self.x1, self.y1], dtype=np.float64)

    def clip(self, height: int, width: int) -> "Box":
        x0 = min(max(self.x0, 0.0), width)
        x1 = min(max(self.x1, 0.0), width)
        y0 = min(max(self.y0, 0.0), height)
        y1 = min(max(self.y1, 0.0), height)
        return Box(x0, y0, x1, y1)

    def normalized(self, height: int, width: int) -> "Box":
        return Box(self.x0 / width, self.y0 / height, self.x1 / width, self.y1 / height)

    def denormalized(self, height: int, width: int) -> "Box":
        return Box(self.x0 * width, self.y0 * height, self.x1 * width, self.y1 * height)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Box":
        x0, y0, x1, y1 = (float(v) for v in values)
        return cls(x0, y0, x1, y1)


EMPTY_BOX = Box(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class RleMask:
    """Column-major run lengths, alternating zeros and ones, zeros first."""

    height: int
    width: int
    runs: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(int(r) for r in self.runs))

    def to_dict(self) -> Dict[str, Any]:
        return {"size": [self.height, self.width], "counts": list(self.runs)}

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> "RleMask":
        height, width = record["size"]
        return cls(int(height), int(width), tuple(record["counts"]))


def _check_same_shape(a: BinaryMask, b: BinaryMask):
    if a.shape != b.shape:
        raise ShapeMismatchError(f"Mask shapes differ: {a.shape} vs {b.shape}")


def box_iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 for disjoint or zero-area inputs."""
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return float(inter / union)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """|a ∩ b| / |a ∪ b|, defined as 0 when both masks are empty."""
    _check_same_shape(a, b)
    union = np.logical_or(a.data, b.data).sum()
    if union == 0:
        return 0.0
    inter = np.logical_and(a.data, b.data).sum()
    return float(inter / union)


def mask_to_box(m: BinaryMask) -> Box:
    """Tightest pixel box around the set pixels, EMPTY_BOX for an empty mask."""
    rows = np.flatnonzero(m.data.any(axis=1))
    if rows.size == 0:
        return EMPTY_BOX
    cols = np.flatnonzero(m.data.any(axis=0))
    return Box(float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))


def rasterize_box(box: Box, height: int, width: int) -> BinaryMask:
    """Pixels whose cells lie inside the (clipped, rounded-outward) box."""
    grid = np.zeros((height, width), dtype=bool)
    if box.is_empty:
        return BinaryMask(grid)
    clipped = box.clip(height, width)
    x0, y0 = int(np.floor(clipped.x0)), int(np.floor(clipped.y0))
    x1, y1 = int(np.ceil(clipped.x1)), int(np.ceil(clipped.y1))
    grid[y0:y1, x0:x1] = True
    return BinaryMask(grid)


def rle_encode(m: BinaryMask) -> RleMask:
    flat = m.data.ravel(order="F").astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs: List[int] = np.diff(bounds).tolist()
    if flat[0] == 1:
        runs = [0] + runs
    return RleMask(m.height, m.width, tuple(runs))


def rle_decode(r: RleMask) -> BinaryMask:
    runs = np.asarray(r.runs, dtype=np.int64)
    if r.height < 1 or r.width < 1:
        raise RleDecodeError(f"Invalid RLE size {r.height}x{r.width}")
    if np.any(runs < 0):
        raise RleDecodeError("Run lengths must be non-negative")
    if int(runs.sum()) != r.height * r.width:
        raise RleDecodeError(
            f"Run lengths sum to {int(runs.sum())}, expected {r.height * r.width}")
    values = (np.arange(runs.size) % 2).astype(bool)
    flat = np.repeat(values, runs)
    return BinaryMask(flat.reshape((r.height, r.width), order="F"))


def box_iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (N, 4) and (M, 4) corner-form box arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    iw = np.clip(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = iw * ih
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return iou


def mask_iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between stacks of boolean masks (N, H, W) and (M, H, W)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape[1:] != b.shape[1:]:
        raise ShapeMismatchError(f"Mask stack shapes differ: {a.shape[1:]} vs {b.shape[1:]}")
    fa = a.reshape(a.shape[0], -1).astype(np.float64)
    fb = b.reshape(b.shape[0], -1).astype(np.float64)
    inter = fa @ fb.T
    union = fa.sum(1)[:, None] + fb.sum(1)[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)

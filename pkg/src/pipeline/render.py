"""Overlay rendering of segments on an image."""
import colorsys
import logging
from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..core.errors import ShapeMismatchError  # noqa: E402
from ..evaluation.panoptic import PanopticPrediction, Segment  # noqa: E402

logger = logging.getLogger(__name__)


def segment_colors(n: int) -> list:
    """Evenly spaced hues, deterministic in ``n``."""
    return [colorsys.hsv_to_rgb(i / max(n, 1), 0.9, 1.0) for i in range(n)]


def _display_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[..., None]
    if image.shape[-1] == 1:
        image = np.repeat(image, 3, axis=-1)
    image = image[..., :3]
    if image.max() > 1.0:
        image = image / 255.0
    return np.clip(image, 0.0, 1.0)


def apply_mask(image: np.ndarray, mask: np.ndarray, color, alpha: float) -> np.ndarray:
    out = image.copy()
    for c in range(3):
        out[..., c] = np.where(mask, out[..., c] * (1 - alpha) + alpha * color[c], out[..., c])
    return out


def render_overlay(image: np.ndarray, segments: Union[PanopticPrediction, Sequence[Segment]],
                   out_path: Union[str, Path], alpha: float = 0.5, show_labels: bool = True) -> Path:
    """Blend each segment's color over the image and save a PNG."""
    if isinstance(segments, PanopticPrediction):
        segments = segments.segments
    canvas = _display_image(image)
    height, width = canvas.shape[:2]
    for s in segments:
        if s.mask.shape != (height, width):
            raise ShapeMismatchError(f"Segment '{s.label}' has shape {s.mask.shape}, image is ({height}, {width})")

    colors = segment_colors(len(segments))
    for s, color in zip(segments, colors):
        canvas = apply_mask(canvas, s.mask.data, color, alpha)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(1, figsize=(6, 6 * height / max(width, 1)))
    try:
        ax.axis("off")
        ax.imshow(canvas, interpolation="nearest")
        if show_labels:
            for s in segments:
                rows, cols = np.nonzero(s.mask.data)
                if rows.size:
                    ax.text(float(np.median(cols)), float(np.median(rows)), s.label, color="w", size=8,
                            ha="center", va="center")
        fig.savefig(out_path, bbox_inches="tight", pad_inches=0)
    finally:
        plt.close(fig)
    logger.info(f"💾 Overlay saved: {out_path}")
    return out_path

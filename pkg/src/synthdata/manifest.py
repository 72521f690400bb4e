"""Dataset manifests: PNG rasters plus a JSON index with RLE masks."""
import json
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
from PIL import Image

from config.settings import MANIFEST_FORMAT_VERSION
from ..core.errors import HierSegError, SceneGenerationError
from ..core.geometry import BinaryMask, Box, RleMask, rle_decode, rle_encode
from .generator import (
    GeneratorConfig,
    InstanceAnnotation,
    PartAnnotation,
    ReferringExpression,
    SceneSample,
    StuffAnnotation,
    generate_scene,
)
from .vocabulary import Vocabulary

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
_PNG_CHANNELS = (1, 3, 4)


def _write_image(image: np.ndarray, stem: Path) -> Path:
    channels = image.shape[2]
    raster = np.round(image * 255.0).astype(np.uint8)
    if channels in _PNG_CHANNELS:
        path = stem.with_suffix(".png")
        pixels = raster[..., 0] if channels == 1 else raster
        Image.fromarray(pixels).save(path, format="PNG")
    else:
        path = stem.with_suffix(".npy")
        np.save(path, raster)
    return path


def read_image(path: PathLike) -> np.ndarray:
    """HWC float image in [0, 1] from a PNG raster or an .npy array."""
    path = Path(path)
    if path.suffix == ".npy":
        raster = np.load(path)
    else:
        with Image.open(path) as img:
            raster = np.asarray(img)
        if raster.ndim == 2:
            raster = raster[..., None]
    return raster.astype(np.float64) / 255.0


def _sample_record(sample: SceneSample, image_path: str, seed: int) -> Dict:
    return {
        "id": sample.sample_id,
        "seed": int(seed),
        "image": image_path,
        "height": sample.height,
        "width": sample.width,
        "channels": int(sample.image.shape[2]),
        "instances": [
            {
                "class": inst.class_name,
                "color": inst.color,
                "box": [float(v) for v in inst.box.to_array()],
                "rle": rle_encode(inst.mask).to_dict(),
                "parts": [{"name": p.name, "rle": rle_encode(p.mask).to_dict()} for p in inst.parts],
            }
            for inst in sample.instances
        ],
        "stuff": [
            {"class": region.class_name, "rle": rle_encode(region.mask).to_dict()}
            for region in sample.stuff_regions
        ],
        "referring": [{"text": expr.text, "target": expr.target} for expr in sample.referring],
    }


def generate_dataset(gen_config: GeneratorConfig, seed: int, n: int, out_dir: PathLike,
                     name: str = "manifest") -> Path:
    """Generate ``n`` scenes into ``out_dir`` and write ``<name>.json``.

    Per-sample seeds are drawn from a SeedSequence rooted at ``seed``, so the
    manifest is byte-identical for identical arguments.
    """
    out_dir = Path(out_dir)
    try:
        logger.info(f"🚀 Generating {n} scenes into {out_dir} (seed={seed})")
        image_dir = out_dir / "images"
        image_dir.mkdir(parents=True, exist_ok=True)
        seeds = np.random.SeedSequence(seed).generate_state(n, dtype=np.uint32) if n else []

        records = []
        for idx, sample_seed in enumerate(seeds):
            sample = generate_scene(gen_config, int(sample_seed))
            sample.sample_id = f"{name}_{idx:05d}"
            image_path = _write_image(sample.image, image_dir / sample.sample_id)
            records.append(_sample_record(sample, image_path.relative_to(out_dir).as_posix(), int(sample_seed)))

        manifest = {
            "format_version": MANIFEST_FORMAT_VERSION,
            "generator": gen_config.to_dict(),
            "seed": int(seed),
            "samples": records,
        }
        manifest_path = out_dir / f"{name}.json"
        manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        logger.info(f"💾 Wrote manifest with {len(records)} samples: {manifest_path}")
        return manifest_path
    except OSError as e:
        logger.error(f"❌ Dataset generation failed: {e}")
        raise


def _read_manifest(path: PathLike) -> Dict:
    path = Path(path)
    manifest = json.loads(path.read_text(encoding="utf-8"))
    version = manifest.get("format_version")
    if version != MANIFEST_FORMAT_VERSION:
        raise HierSegError(f"Unsupported manifest format version {version} in {path}")
    return manifest


def _mask(record: Dict) -> BinaryMask:
    return rle_decode(RleMask.from_dict(record))


def load_manifest(path: PathLike) -> List[SceneSample]:
    """Load every sample of a manifest, validating each on the way in."""
    path = Path(path)
    manifest = _read_manifest(path)
    samples = []
    for record in manifest["samples"]:
        instances = [
            InstanceAnnotation(
                class_name=inst["class"],
                mask=_mask(inst["rle"]),
                box=Box.from_array(inst["box"]),
                parts=tuple(PartAnnotation(p["name"], _mask(p["rle"])) for p in inst["parts"]),
                color=inst.get("color", ""),
            )
            for inst in record["instances"]
        ]
        stuff = [StuffAnnotation(s["class"], _mask(s["rle"])) for s in record["stuff"]]
        referring = [ReferringExpression(r["text"], int(r["target"])) for r in record["referring"]]
        sample = SceneSample(
            image=read_image(path.parent / record["image"]),
            instances=instances,
            stuff_regions=stuff,
            referring=referring,
            sample_id=record["id"],
        )
        try:
            sample.validate()
        except SceneGenerationError as e:
            logger.error(f"❌ Invalid sample {record['id']} in {path}: {e}")
            raise
        samples.append(sample)
    logger.info(f"📊 Loaded {len(samples)} samples from {path}")
    return samples


def load_manifest_vocabulary(path: PathLike) -> Vocabulary:
    return Vocabulary.from_dict(_read_manifest(path)["generator"]["vocabulary"])


def write_external_masks(masks: Sequence[BinaryMask], path: PathLike) -> Path:
    """Write class-agnostic masks (e.g. from an external segmenter) as an RLE list."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "masks": [{"rle": rle_encode(m).to_dict()} for m in masks],
    }
    path.write_text(json.dumps(record, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def load_external_masks(path: PathLike) -> List[BinaryMask]:
    manifest = _read_manifest(path)
    masks = [_mask(entry["rle"]) for entry in manifest["masks"]]
    shapes = {m.shape for m in masks}
    if len(shapes) > 1:
        raise SceneGenerationError(f"External masks disagree on image shape: {sorted(shapes)}")
    return masks


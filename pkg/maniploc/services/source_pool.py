"""
Source images for corpus synthesis.

Three formats are supported: a plain image directory, a COCO-style
annotation file (polygon segmentations become donor regions) and a built-in
procedural scene generator that needs no files at all.
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import cv2
import numpy as np

from maniploc.exceptions import ConfigurationError, ImageDecodeError, IngestionError
from maniploc.models.structures import SourceImage, SourcePool
from maniploc.utils.image_io import load_image, quantize
from maniploc.utils.logger import get_logger
from maniploc.utils.seeding import derive_rng

logger = get_logger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp"}
SOURCE_FORMATS = ("directory", "coco", "procedural")


def _fit(image: np.ndarray, out_size: Tuple[int, int]) -> np.ndarray:
    h, w = out_size
    if image.shape[:2] != (h, w):
        image = cv2.resize(image, (w, h), interpolation=cv2.INTER_AREA)
    return quantize(np.clip(image, 0.0, 1.0))


def _fit_mask(mask: np.ndarray, out_size: Tuple[int, int]) -> np.ndarray:
    h, w = out_size
    if mask.shape != (h, w):
        mask = cv2.resize(mask, (w, h), interpolation=cv2.INTER_NEAREST)
    return (mask > 0).astype(np.uint8)


def procedural_image(h: int, w: int, rng: np.random.Generator) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    A synthetic scene: textured gradient background plus 2-5 flat objects.

    Returns:
        (image, regions): H×W×3 float32 on the 8-bit grid and the visible
        mask of every object
    """
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    angle = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(angle) * xx / w + np.sin(angle) * yy / h + 1.0) / 2.0
    c0, c1 = rng.uniform(0.1, 0.9, 3), rng.uniform(0.1, 0.9, 3)
    image = c0 * (1 - ramp[..., None]) + c1 * ramp[..., None]

    texture = cv2.GaussianBlur(rng.normal(0.0, 1.0, (h, w)).astype(np.float32), (0, 0), rng.uniform(1.5, 6.0))
    texture /= max(float(np.abs(texture).max()), 1e-6)
    image = image + 0.08 * texture[..., None]

    regions: List[np.ndarray] = []
    for _ in range(int(rng.integers(2, 6))):
        shape = np.zeros((h, w), dtype=np.uint8)
        center = (int(rng.integers(w // 8, w - w // 8)), int(rng.integers(h // 8, h - h // 8)))
        size = (int(rng.integers(w // 16, w // 4)), int(rng.integers(h // 16, h // 4)))
        kind = int(rng.integers(3))
        if kind == 0:
            cv2.ellipse(shape, center, size, float(rng.uniform(0, 180)), 0, 360, 1, -1)
        elif kind == 1:
            cv2.rectangle(shape, (center[0] - size[0], center[1] - size[1]), (center[0] + size[0], center[1] + size[1]), 1, -1)
        else:
            n = int(rng.integers(3, 7))
            angles = np.sort(rng.uniform(0, 2 * np.pi, n))
            pts = np.stack([center[0] + size[0] * np.cos(angles), center[1] + size[1] * np.sin(angles)], axis=1)
            cv2.fillPoly(shape, [np.round(pts).astype(np.int32)], 1)
        inside = shape.astype(bool)
        shade = rng.uniform(0.0, 1.0, 3)
        image[inside] = shade + 0.04 * texture[inside][:, None]
        regions = [(r & ~shape.astype(bool)).astype(np.uint8) for r in regions]
        regions.append(shape)

    image = image + rng.normal(0.0, 0.01, image.shape)
    return quantize(np.clip(image, 0.0, 1.0).astype(np.float32)), [r for r in regions if r.any()]


def _ingest_procedural(out_size: Tuple[int, int], seed: int, pool_size: int) -> SourcePool:
    images = []
    for i in range(pool_size):
        image, regions = procedural_image(out_size[0], out_size[1], derive_rng(seed, "procedural", i))
        images.append(SourceImage(image=image, source_id=f"procedural_{i:05d}", regions=regions))
    return SourcePool(images=images)


def _ingest_directory(path: Path, out_size: Tuple[int, int]) -> SourcePool:
    images, skipped = [], []
    for file in sorted(p for p in path.iterdir() if p.is_file() and not p.name.startswith(".")):
        if file.suffix.lower() not in IMAGE_SUFFIXES:
            logger.debug(f"[SourcePool] Ignoring non-image file {file.name}")
            continue
        try:
            images.append(SourceImage(image=_fit(load_image(file), out_size), source_id=file.name))
        except ImageDecodeError as e:
            skipped.append({"entry": file.name, "reason": e.message})
    return SourcePool(images=images, skipped=skipped)


def _polygon_mask(segmentation, height: int, width: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=np.uint8)
    for polygon in segmentation:
        coords = np.asarray(polygon, dtype=np.float64).reshape(-1, 2)
        if len(coords) < 3:
            raise ValueError("polygon with fewer than 3 vertices")
        cv2.fillPoly(mask, [np.round(coords).astype(np.int32)], 1)
    return mask


def _ingest_coco(path: Path, annotations: Path, out_size: Tuple[int, int]) -> SourcePool:
    try:
        document = json.loads(annotations.read_text(encoding="utf-8"))
        entries = document["images"]
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise IngestionError(str(annotations)) from e

    by_image: Dict[int, list] = {}
    for ann in document.get("annotations", []):
        if isinstance(ann, dict) and "image_id" in ann:
            by_image.setdefault(ann["image_id"], []).append(ann)

    images, skipped = [], []
    for entry in entries:
        name = str(entry.get("file_name", entry.get("id", "?"))) if isinstance(entry, dict) else "?"
        try:
            image = load_image(path / entry["file_name"])
        except (ImageDecodeError, KeyError, TypeError) as e:
            skipped.append({"entry": name, "reason": getattr(e, "message", f"malformed entry: {e}")})
            continue

        height, width = image.shape[:2]
        regions = []
        for ann in by_image.get(entry.get("id"), []):
            segmentation = ann.get("segmentation")
            if ann.get("iscrowd") or not isinstance(segmentation, list):
                continue
            try:
                region = _fit_mask(_polygon_mask(segmentation, height, width), out_size)
            except (ValueError, TypeError) as e:
                skipped.append({"entry": f"{name}#ann{ann.get('id', '?')}", "reason": str(e)})
                continue
            if region.any():
                regions.append(region)
        images.append(SourceImage(image=_fit(image, out_size), source_id=name, regions=regions))
    return SourcePool(images=images, skipped=skipped)


def ingest_source_images(
    path: Optional[Union[str, Path]],
    format: str = "directory",
    out_size: Tuple[int, int] = (256, 256),
    annotations: Optional[Union[str, Path]] = None,
    seed: int = 0,
    pool_size: int = 64,
) -> SourcePool:
    """
    Build the donor/target pool.

    Args:
        path: Image directory (unused for the procedural format)
        format: directory, coco or procedural
        out_size: (height, width) every image is resized to
        annotations: COCO annotation file (coco format only)
        seed: Seed of the procedural generator
        pool_size: Number of procedural images

    Returns:
        SourcePool: Decodable images and a report of skipped entries

    Raises:
        ConfigurationError: If the format is unknown or its inputs are missing
        IngestionError: If no usable image remains
    """
    if format not in SOURCE_FORMATS:
        raise ConfigurationError(f"Unknown source format '{format}', expected one of {SOURCE_FORMATS}")

    if format == "procedural":
        pool = _ingest_procedural(tuple(out_size), seed, pool_size)
    else:
        if path is None or not Path(path).is_dir():
            raise IngestionError(str(path))
        if format == "coco":
            if annotations is None:
                raise ConfigurationError("The coco format needs an annotation file")
            pool = _ingest_coco(Path(path), Path(annotations), tuple(out_size))
        else:
            pool = _ingest_directory(Path(path), tuple(out_size))

    for entry in pool.skipped:
        logger.warning(f"[SourcePool] Skipped {entry['entry']}: {entry['reason']}")
    if len(pool) == 0:
        raise IngestionError(str(path if path is not None else format), skipped=len(pool.skipped))
    logger.info(f"[SourcePool] {len(pool)} source images ({format}), {len(pool.skipped)} skipped")
    return pool

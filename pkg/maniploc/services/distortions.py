"""
Robustness degradations applied to evaluation images.

Images are float32 H×W×3 in [0, 1]; masks are H×W 0/1. Only ``resize``
touches the mask (nearest-neighbor, so it stays binary). Noise std is given
on the 0-255 intensity scale.
"""

import io
from typing import List, Optional, Tuple

import cv2
import numpy as np
import PIL
from PIL import Image

from maniploc.exceptions import ConfigurationError
from maniploc.models.configs import DistortionSpec
from maniploc.utils.image_io import to_uint8

JPEG_CODEC = f"Pillow {PIL.__version__} JPEG (libjpeg), 4:4:4 chroma subsampling, baseline"


def resize(image: np.ndarray, mask: Optional[np.ndarray], scale: float) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    height, width = image.shape[:2]
    size = (max(1, int(round(width * scale))), max(1, int(round(height * scale))))
    image = cv2.resize(image, size, interpolation=cv2.INTER_LINEAR)
    if mask is not None:
        mask = cv2.resize(np.asarray(mask, dtype=np.uint8), size, interpolation=cv2.INTER_NEAREST)
    return image, mask


def gaussian_blur(image: np.ndarray, kernel_size: int) -> np.ndarray:
    return cv2.GaussianBlur(image, (kernel_size, kernel_size), 0)


def gaussian_noise(image: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma == 0:
        return image.copy()
    return image + rng.normal(0.0, sigma / 255.0, size=image.shape).astype(np.float32)


def jpeg_compress(image: np.ndarray, quality: int) -> np.ndarray:
    buffer = io.BytesIO()
    Image.fromarray(to_uint8(image)).save(buffer, format="JPEG", quality=int(quality), subsampling=0)
    buffer.seek(0)
    with Image.open(buffer) as decoded:
        return np.asarray(decoded.convert("RGB"), dtype=np.float32) / 255.0


def sample_mixed(rng: np.random.Generator) -> List[DistortionSpec]:
    """One value per interval, in application order resize, blur, noise, JPEG."""
    lo_k, hi_k = DistortionSpec.MIXED_KERNEL
    odd_kernels = np.arange(lo_k | 1, hi_k + 1, 2)
    return [
        DistortionSpec(kind="resize", param=float(rng.uniform(*DistortionSpec.MIXED_SCALE))),
        DistortionSpec(kind="gsblur", param=int(rng.choice(odd_kernels))),
        DistortionSpec(kind="gsnoise", param=float(rng.uniform(*DistortionSpec.MIXED_SIGMA))),
        DistortionSpec(
            kind="jpegcomp",
            param=int(rng.integers(DistortionSpec.MIXED_QUALITY[0], DistortionSpec.MIXED_QUALITY[1] + 1)),
        ),
    ]


def apply_distortion(
    image: np.ndarray,
    gt_mask: Optional[np.ndarray],
    spec: DistortionSpec,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Degrade one image (and resize its mask when the spec rescales).

    Args:
        image: H×W×3 float image in [0, 1]
        gt_mask: H×W binary mask or None
        spec: Degradation to apply
        rng: Generator for noisy and mixed specs

    Returns:
        (image', mask'): image clipped to [0, 1]; mask binary

    Raises:
        ConfigurationError: If the spec is not a DistortionSpec
    """
    if not isinstance(spec, DistortionSpec):
        raise ConfigurationError(f"Expected a DistortionSpec, got {type(spec).__name__}")
    if spec.kind == "none":
        return image, gt_mask

    rng = rng if rng is not None else np.random.default_rng(0)
    image = np.asarray(image, dtype=np.float32)
    mask = gt_mask
    steps = sample_mixed(rng) if spec.kind == "mixed" else [spec]
    for step in steps:
        if step.kind == "resize":
            image, mask = resize(image, mask, step.param)
        elif step.kind == "gsblur":
            image = gaussian_blur(image, int(step.param))
        elif step.kind == "gsnoise":
            image = gaussian_noise(image, step.param, rng)
        elif step.kind == "jpegcomp":
            image = jpeg_compress(np.clip(image, 0.0, 1.0), int(step.param))
    return np.clip(image, 0.0, 1.0).astype(np.float32), mask


def distortion_grid() -> List[DistortionSpec]:
    """The ten robustness columns, in report order."""
    return [
        DistortionSpec(kind="resize", param=0.78),
        DistortionSpec(kind="resize", param=0.25),
        DistortionSpec(kind="gsblur", param=3),
        DistortionSpec(kind="gsblur", param=15),
        DistortionSpec(kind="gsnoise", param=3),
        DistortionSpec(kind="gsnoise", param=15),
        DistortionSpec(kind="jpegcomp", param=100),
        DistortionSpec(kind="jpegcomp", param=50),
        DistortionSpec(kind="mixed"),
        DistortionSpec(kind="none"),
    ]

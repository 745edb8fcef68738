"""
Image and mask file I/O.

Images are exchanged as float32 arrays of shape H×W×3 in [0, 1]; masks as
uint8 arrays of shape H×W holding 0/1 (stored on disk as 0/255 PNG).
"""

import io
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from maniploc.exceptions import FileWriteError, ImageDecodeError

ImageSource = Union[str, Path, bytes]


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Quantize a [0, 1] float image to uint8 with rounding."""
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def quantize(image: np.ndarray) -> np.ndarray:
    """Snap a [0, 1] float image onto the 8-bit grid, keeping float32."""
    return to_uint8(image).astype(np.float32) / 255.0


def load_image(source: ImageSource) -> np.ndarray:
    """
    Decode an image file or byte string to RGB float32 in [0, 1].

    Args:
        source: File path or encoded bytes

    Returns:
        np.ndarray: H×W×3 float32 array

    Raises:
        ImageDecodeError: If the content is not a decodable image
    """
    label = "<bytes>" if isinstance(source, (bytes, bytearray)) else str(source)
    try:
        handle = io.BytesIO(source) if isinstance(source, (bytes, bytearray)) else open(source, "rb")
        with handle, Image.open(handle) as img:
            img.load()
            rgb = img.convert("RGB")
            return np.asarray(rgb, dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as e:
        raise ImageDecodeError(label, cause=e) from e


def load_mask(path: Union[str, Path]) -> np.ndarray:
    """
    Read a single-channel mask PNG and binarize it at 128.

    Args:
        path: Mask file

    Returns:
        np.ndarray: H×W uint8 array of 0/1
    """
    try:
        with Image.open(path) as img:
            gray = np.asarray(img.convert("L"))
    except (UnidentifiedImageError, OSError) as e:
        raise ImageDecodeError(str(path), cause=e) from e
    return (gray >= 128).astype(np.uint8)


def save_image(image: np.ndarray, path: Union[str, Path]) -> Path:
    """Write a [0, 1] RGB float image as PNG."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(to_uint8(image)).save(path, format="PNG")
    except OSError as e:
        raise FileWriteError(str(path), cause=e) from e
    return path


def save_mask(mask: np.ndarray, path: Union[str, Path]) -> Path:
    """Write a 0/1 mask as a 0/255 single-channel PNG."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255).save(path, format="PNG")
    except OSError as e:
        raise FileWriteError(str(path), cause=e) from e
    return path

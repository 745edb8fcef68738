"""
Spatial attention response maps.

For a query pixel the response map is the query's row of the spatial
correlation matrix at one scale, laid back onto the folded grid. Maps are
saved raw (``.npy``) and as JET overlays on the input image.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import cv2
import numpy as np
import torch

from maniploc.exceptions import ConfigurationError, CoordinateError, ValidationError
from maniploc.network.model import ManipulationNet
from maniploc.network.progressive_path import validate_stop_at
from maniploc.services.evaluator import evaluation_mode
from maniploc.utils.image_io import load_image, save_image, to_uint8
from maniploc.utils.input_validators import InputValidator
from maniploc.utils.logger import get_logger
from maniploc.utils.path_utils import artifact_path

logger = get_logger(__name__)

OVERLAY_WEIGHT = 0.5


@dataclass
class AttentionMaps:
    """
    Attributes:
        responses: One (H_n/r)×(W_n/r) map per query pixel, rows of A_s
        grid_rows: Row index of A_s used for each query
        files: Every file written
    """

    responses: List[np.ndarray] = field(default_factory=list)
    grid_rows: List[int] = field(default_factory=list)
    files: List[Path] = field(default_factory=list)


def folded_row(coord: Tuple[int, int], padded_size: Tuple[int, int], working: Tuple[int, int], r: int) -> int:
    """
    Row of the spatial correlation matrix that holds input pixel ``coord``.

    The pixel is mapped into the working grid of the scale, then to its r×r
    block, whose row-major index in the folded layout is the row.
    """
    row, col = coord
    y_w = min(int(row * working[0] / padded_size[0]), working[0] - 1)
    x_w = min(int(col * working[1] / padded_size[1]), working[1] - 1)
    return (y_w // r) * (working[1] // r) + (x_w // r)


def colorize(values: np.ndarray) -> np.ndarray:
    """JET colormap of a [0, 1] map as float RGB."""
    heat = cv2.applyColorMap(to_uint8(np.clip(values, 0.0, 1.0)), cv2.COLORMAP_JET)
    return cv2.cvtColor(heat, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0


def _normalize(values: np.ndarray) -> np.ndarray:
    low, high = float(values.min()), float(values.max())
    return (values - low) / (high - low) if high > low else np.zeros_like(values)


def _to_input_size(grid: np.ndarray, padded_size: Tuple[int, int], size: Tuple[int, int]) -> np.ndarray:
    full = cv2.resize(grid.astype(np.float32), (padded_size[1], padded_size[0]), interpolation=cv2.INTER_LINEAR)
    return full[: size[0], : size[1]]


def visualize_attention(
    model: ManipulationNet,
    image: Union[str, Path, bytes, np.ndarray],
    scale: int,
    coords: Sequence[Tuple[int, int]],
    out_dir: Optional[Union[str, Path]] = None,
    channel: int = 0,
    stem: str = "attention",
) -> AttentionMaps:
    """
    Response maps of the spatial attention at ``scale`` for query pixels.

    Args:
        model: Network whose module at ``scale`` has spatial attention
        image: File path, encoded bytes or H×W×3 array in [0, 1]
        scale: 1 (finest) .. 4
        coords: Query pixels as (row, column) in input coordinates
        out_dir: Directory for overlays, raw maps and the channel panel
            (None = return the maps only)
        channel: Channel of X and Y_c shown side by side
        stem: File name prefix

    Returns:
        AttentionMaps

    Raises:
        CoordinateError: If a coordinate is outside the image
        ConfigurationError: If the module at ``scale`` has no spatial attention
    """
    scale = validate_stop_at(scale)
    array = image if isinstance(image, np.ndarray) else load_image(image)
    valid, error = InputValidator.validate_image_array(array)
    if not valid:
        raise ValidationError(error)
    height, width = array.shape[:2]
    valid, error = InputValidator.validate_coords(coords, (height, width))
    if not valid:
        bad = next(
            (tuple(c) for c in coords if len(c) != 2 or not (0 <= c[0] < height and 0 <= c[1] < width)),
            None,
        )
        if bad is None:
            raise ValidationError(error)
        raise CoordinateError(bad, (height, width))

    parameter = next(model.parameters())
    tensor = torch.from_numpy(np.ascontiguousarray(array, dtype=np.float32)).permute(2, 0, 1)[None]
    with evaluation_mode(model):
        out = model(tensor.to(device=parameter.device, dtype=parameter.dtype), stop_at=scale, return_states=True)
    state = out.masks.states[scale]
    if state.a_s is None:
        raise ConfigurationError(f"The correlation module at scale {scale} has spatial attention disabled")

    r = state.ratio
    working = tuple(state.x.shape[-2:])
    pad = model.backbone.pad_info(height, width)
    padded = (height + pad.bottom, width + pad.right)
    grid_shape = (working[0] // r, working[1] // r)

    maps = AttentionMaps()
    base = Path(out_dir) if out_dir is not None else None
    for row, col in coords:
        index = folded_row((row, col), padded, working, r)
        response = state.a_s[0, index].float().cpu().numpy().reshape(grid_shape)
        maps.responses.append(response)
        maps.grid_rows.append(index)
        if base is None:
            continue

        name = f"{stem}_scale{scale}_r{row}_c{col}"
        raw_path = artifact_path(base, name, ".npy")
        np.save(raw_path, response)
        heat = colorize(_normalize(_to_input_size(response, padded, (height, width))))
        overlay = (1.0 - OVERLAY_WEIGHT) * array + OVERLAY_WEIGHT * heat
        overlay = to_uint8(overlay)
        cv2.circle(overlay, (int(col), int(row)), max(2, min(height, width) // 64), (255, 255, 255), -1)
        overlay_path = save_image(overlay.astype(np.float32) / 255.0, artifact_path(base, name, ".png"))
        maps.files.extend([raw_path, overlay_path])

    if base is not None and state.yc is not None:
        if not 0 <= channel < min(state.x.shape[1], state.yc.shape[1]):
            raise ValidationError(f"Channel {channel} outside the feature's {state.yc.shape[1]} channels")
        x_map = _normalize(state.x[0, channel].float().cpu().numpy())
        y_map = _normalize(state.yc[0, channel].float().cpu().numpy())
        panel = np.concatenate([colorize(x_map), colorize(y_map)], axis=1)
        maps.files.append(save_image(panel, artifact_path(base, f"{stem}_scale{scale}_channel{channel}", ".png")))

    logger.info(f"[Visualizer] {len(coords)} response maps at scale {scale}, {len(maps.files)} files written")
    return maps

"""
Single-image inference and early-exit timing.
"""

import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Union

import numpy as np
import torch

from maniploc.exceptions import ConfigurationError
from maniploc.network.model import ManipulationNet
from maniploc.network.progressive_path import SCALES, validate_stop_at
from maniploc.services.evaluator import evaluation_mode
from maniploc.utils.image_io import load_image
from maniploc.utils.input_validators import InputValidator
from maniploc.utils.logger import get_logger

logger = get_logger(__name__)

ImageInput = Union[str, Path, bytes, np.ndarray]


@dataclass
class InferenceResult:
    """
    Attributes:
        score: Detection score in [0, 1]
        mask: Final mask at the input size (H×W float32)
        masks: Computed intermediate masks at their working sizes, keyed by scale
        stop_at: Finest scale computed
    """

    score: float
    mask: np.ndarray
    masks: Dict[int, np.ndarray] = field(default_factory=dict)
    stop_at: int = 1


def _as_tensor(model: ManipulationNet, image: ImageInput) -> torch.Tensor:
    array = image if isinstance(image, np.ndarray) else load_image(image)
    parameter = next(model.parameters())
    tensor = torch.from_numpy(np.ascontiguousarray(array, dtype=np.float32)).permute(2, 0, 1)[None]
    return tensor.to(device=parameter.device, dtype=parameter.dtype)


def infer(model: ManipulationNet, image: ImageInput, stop_at: int = 1) -> InferenceResult:
    """
    Run the network on one image of any size.

    Args:
        model: Trained network
        image: File path, encoded bytes or an H×W×3 array in [0, 1]
        stop_at: Finest scale to compute (early exit at 4, 3 or 2)

    Returns:
        InferenceResult

    Raises:
        ImageDecodeError: If the input cannot be decoded
        InvalidStopScaleError: If ``stop_at`` is not 1..4
    """
    stop_at = validate_stop_at(stop_at)
    tensor = _as_tensor(model, image)
    with evaluation_mode(model):
        out = model(tensor, stop_at=stop_at)
    masks = {scale: m[0, 0].float().cpu().numpy() for scale, m in out.masks.computed().items()}
    return InferenceResult(
        score=float(out.detection.score.reshape(-1)[0]),
        mask=out.masks.final[0, 0].float().cpu().numpy(),
        masks=masks,
        stop_at=stop_at,
    )


def time_early_exit(model: ManipulationNet, image: ImageInput, repeats: int = 10) -> Dict[int, Dict[str, float]]:
    """
    Median wall time of a forward pass for every stop scale.

    Returns:
        {stop_at: {"median_s": seconds, "ratio": time / full-path time}}

    Raises:
        ConfigurationError: If ``repeats`` is not an integer in 1..1000
    """
    valid, error = InputValidator.validate_repeats(repeats)
    if not valid:
        raise ConfigurationError(error)
    tensor = _as_tensor(model, image)
    timings: Dict[int, float] = {}
    with evaluation_mode(model):
        for stop_at in SCALES:
            model(tensor, stop_at=stop_at)
            runs = []
            for _ in range(repeats):
                if tensor.is_cuda:
                    torch.cuda.synchronize()
                start = time.perf_counter()
                model(tensor, stop_at=stop_at)
                if tensor.is_cuda:
                    torch.cuda.synchronize()
                runs.append(time.perf_counter() - start)
            timings[stop_at] = statistics.median(runs)

    full = timings[1]
    table = {s: {"median_s": t, "ratio": t / full if full > 0 else float("nan")} for s, t in timings.items()}
    for stop_at, row in table.items():
        logger.info(f"[Inference] stop_at={stop_at}: {row['median_s'] * 1000:.1f} ms ({row['ratio']:.2f}x full)")
    return table

"""
Bottom-up path.

The pyramid is resampled to fixed working sizes, then masks are produced
coarse to fine: M4 = f4(F4) and M_n = f_n(up(M_{n+1}) * F_n), the mask
broadcast over every channel of F_n. Early exit stops after a chosen scale.
"""

from typing import Iterable, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from maniploc.exceptions import InvalidStopScaleError, NumericError, ShapeError
from maniploc.models.structures import FeaturePyramid, MaskPyramid, PadInfo
from maniploc.network.sccm import SpatioChannelCorrelation

SCALES = (4, 3, 2, 1)


def _resize(x: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


def resample_pyramid(p: FeaturePyramid, working_sizes: Sequence[int]) -> FeaturePyramid:
    """
    Bilinearly resample F1..F4 to square working sizes (half-pixel centers).

    Args:
        p: Backbone pyramid
        working_sizes: Sides for scales 1..4, e.g. (256, 128, 64, 32)

    Returns:
        FeaturePyramid: Same channels, fixed spatial sizes, same pad record
    """
    if len(working_sizes) != 4:
        raise ShapeError(f"need 4 working sizes, got {list(working_sizes)}", "resample_pyramid")
    resized = [_resize(f, (size, size)) for f, size in zip(p.as_list(), working_sizes)]
    return FeaturePyramid(*resized, pad=p.pad)


def upsample_mask(m: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    """Bilinear (half-pixel centers) upsampling of an N×1×h×w mask."""
    return _resize(m, tuple(size))


def final_mask(m: torch.Tensor, padded_size: Tuple[int, int], pad: PadInfo) -> torch.Tensor:
    """Resize a mask to the padded input size, then crop the pad away."""
    full = _resize(m, tuple(padded_size))
    height = padded_size[0] - pad.bottom
    width = padded_size[1] - pad.right
    return full[..., :height, :width]


def validate_stop_at(stop_at) -> int:
    if isinstance(stop_at, bool) or stop_at not in SCALES:
        raise InvalidStopScaleError(stop_at)
    return int(stop_at)


class ProgressivePath(nn.Module):
    """Holds one independent correlation module per scale, index 0 = scale 1."""

    def __init__(self, sccms: Iterable[SpatioChannelCorrelation]):
        super().__init__()
        self.sccms = nn.ModuleList(sccms)
        if len(self.sccms) != 4:
            raise ShapeError(f"need 4 correlation modules, got {len(self.sccms)}", "progressive_path")

    def module(self, scale: int) -> SpatioChannelCorrelation:
        return self.sccms[scale - 1]

    def forward(
        self,
        p_fixed: FeaturePyramid,
        stop_at: int = 1,
        return_states: bool = False,
        padded_size: Optional[Tuple[int, int]] = None,
        forced_masks: Optional[dict] = None,
    ) -> MaskPyramid:
        """
        Compute masks from scale 4 down to ``stop_at``.

        Args:
            p_fixed: Pyramid at the fixed working sizes
            stop_at: Finest scale to compute (4 = coarsest only, 1 = full path)
            return_states: Keep each scale's attention intermediates
            padded_size: (H, W) of the padded input; ``final`` is resized to
                it and cropped by ``p_fixed.pad``. None keeps the finest
                computed mask as ``final``.
            forced_masks: Optional {scale: tensor} overriding the mask that
                gates the next finer scale

        Returns:
            MaskPyramid
        """
        stop_at = validate_stop_at(stop_at)
        forced_masks = forced_masks or {}
        masks = MaskPyramid()
        previous = None

        for scale in SCALES:
            if scale < stop_at:
                break
            feature = p_fixed.scale(scale)
            if previous is not None:
                gate = upsample_mask(previous, feature.shape[-2:])
                feature = gate * feature
            try:
                _, mask, state = self.module(scale)(feature, return_state=return_states)
            except NumericError as e:
                raise NumericError(f"scale{scale}.{e.stage}") from e
            except ShapeError as e:
                raise ShapeError(e.message, f"scale{scale}.{e.stage}") from e
            setattr(masks, f"m{scale}", mask)
            if state is not None:
                masks.states[scale] = state
            previous = forced_masks.get(scale, mask)

        finest = masks.scale(stop_at)
        if padded_size is not None:
            masks.final = final_mask(finest, padded_size, p_fixed.pad)
        else:
            masks.final = finest
        return masks


def progressive_masks(
    p_fixed: FeaturePyramid,
    path: ProgressivePath,
    padded_size: Optional[Tuple[int, int]] = None,
    return_states: bool = False,
) -> MaskPyramid:
    """All four masks plus the final full-resolution mask."""
    return path(p_fixed, stop_at=1, return_states=return_states, padded_size=padded_size)


def early_exit_masks(
    p_fixed: FeaturePyramid,
    path: ProgressivePath,
    stop_at: int,
    padded_size: Optional[Tuple[int, int]] = None,
) -> MaskPyramid:
    """
    Masks from scale 4 down to ``stop_at`` only.

    Raises:
        InvalidStopScaleError: If ``stop_at`` is not one of 4, 3, 2, 1
    """
    return path(p_fixed, stop_at=stop_at, padded_size=padded_size)

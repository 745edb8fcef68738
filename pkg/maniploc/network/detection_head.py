"""
Image-level detection head.

Each scale is first widened by a 3×3 conv; the finest result is then
strided down and summed into the next scale, repeatedly, until the coarsest
scale, which passes through a 1×1 bottleneck, global average pooling and a
single-logit linear layer.
"""

from typing import List

import torch
import torch.nn as nn

from maniploc.exceptions import ShapeError
from maniploc.models.structures import DetectionOutput, FeaturePyramid
from maniploc.network.backbone import conv_bn


class DetectionHead(nn.Module):
    """
    Downsample-and-fuse classifier over a fixed-size pyramid.

    Args:
        in_widths: Channels of F1..F4
        head_width: Width after the first scale's widening conv; doubles per scale
        final_width: Channels of the bottleneck before pooling
    """

    def __init__(self, in_widths: List[int], head_width: int = 32, final_width: int = 512):
        super().__init__()
        widths = [head_width * 2 ** n for n in range(len(in_widths))]
        self.widths = widths
        self.incre = nn.ModuleList(conv_bn(c_in, c_out, 3) for c_in, c_out in zip(in_widths, widths))
        self.downsample = nn.ModuleList(
            conv_bn(widths[n], widths[n + 1], 3, stride=2) for n in range(len(widths) - 1)
        )
        self.final = conv_bn(widths[-1], final_width, 1)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.classifier = nn.Linear(final_width, 1)

    def forward(self, p: FeaturePyramid) -> DetectionOutput:
        features = p.as_list()
        y = self.incre[0](features[0])
        for n in range(1, len(features)):
            widened = self.incre[n](features[n])
            down = self.downsample[n - 1](y)
            if down.shape != widened.shape:
                raise ShapeError(
                    f"scale {n + 1}: downsampled {tuple(down.shape)} vs feature {tuple(widened.shape)}",
                    "detection_head",
                )
            y = widened + down
        logit = self.classifier(self.pool(self.final(y)).flatten(1)).squeeze(1)
        return DetectionOutput(score=torch.sigmoid(logit), logit=logit)


def detect(head: DetectionHead, p_fixed: FeaturePyramid) -> DetectionOutput:
    """Forged probability per image from the resampled pyramid."""
    return head(p_fixed)


def mask_average_score(mask: torch.Tensor) -> torch.Tensor:
    """
    Mean of all mask values per image (the mask-average detection baseline).

    Args:
        mask: N×1×h×w, N×h×w or h×w mask

    Returns:
        torch.Tensor: Shape N (or a 0-d tensor for an unbatched mask)

    Raises:
        ShapeError: If the mask has no elements
    """
    if mask.numel() == 0:
        raise ShapeError("cannot average an empty mask", "mask_average_score")
    if mask.dim() <= 2:
        return mask.mean()
    return mask.flatten(1).mean(dim=1)

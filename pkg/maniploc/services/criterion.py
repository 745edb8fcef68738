"""
Training objective.

The loss is the detection binary cross-entropy plus the unweighted mean of
the four per-scale mask cross-entropies, each against a ground-truth mask
downsampled by nearest-neighbor halving.
"""

from typing import Dict, Optional, Union

import numpy as np
import torch
import torch.nn.functional as F

from maniploc.config import config
from maniploc.exceptions import BinaryMaskError, ShapeError, ValidationError
from maniploc.models.structures import DetectionOutput, GroundTruthPyramid, MaskPyramid

MaskInput = Union[np.ndarray, torch.Tensor]


def _as_batched_tensor(g1: MaskInput) -> torch.Tensor:
    tensor = torch.as_tensor(np.asarray(g1) if not isinstance(g1, torch.Tensor) else g1)
    if tensor.dim() == 2:
        tensor = tensor[None, None]
    elif tensor.dim() == 3:
        tensor = tensor[:, None]
    if tensor.dim() != 4 or tensor.shape[1] != 1:
        raise ShapeError(f"GT mask must be h×w, N×h×w or N×1×h×w, got {tuple(tensor.shape)}", "gt_pyramid")
    return tensor


def resize_gt(g1: MaskInput, size: int) -> torch.Tensor:
    """
    Nearest-neighbor resize of binary GT mask(s) to ``size``×``size``.

    Returns an N×1×size×size float tensor; masks already at that size are
    returned unchanged.
    """
    g = _as_batched_tensor(g1).to(torch.float32)
    if tuple(g.shape[-2:]) == (size, size):
        return g
    return F.interpolate(g, size=(size, size), mode="nearest")


def build_gt_pyramid(
    g1: MaskInput,
    label: Optional[Union[int, np.ndarray, torch.Tensor]] = None,
    strict: bool = True,
) -> GroundTruthPyramid:
    """
    Build G1..G4 from a binary full-size mask.

    g_{n+1}[i, j] = g_n[2i, 2j]; the targets stay in {0, 1} at every scale.

    Args:
        g1: Binary mask(s)
        label: Image label(s); derived from the mask when None
        strict: Require label == (mask has any forged pixel)

    Raises:
        BinaryMaskError: If g1 holds values other than 0 and 1
        ShapeError: If a side is not divisible by 8
        ValidationError: If a given label disagrees with its mask under ``strict``
    """
    g = _as_batched_tensor(g1)
    values = torch.unique(g)
    if not bool(((values == 0) | (values == 1)).all()):
        raise BinaryMaskError("g1", values.tolist())
    height, width = g.shape[-2:]
    if height % 8 or width % 8:
        raise ShapeError(f"GT mask {height}x{width} must be divisible by 8", "gt_pyramid")

    g = g.to(torch.float32)
    pyramid = [g]
    for _ in range(3):
        pyramid.append(pyramid[-1][..., ::2, ::2])

    derived = g.flatten(1).amax(dim=1)
    if label is None:
        labels = derived
    else:
        labels = torch.as_tensor(np.asarray(label) if not isinstance(label, torch.Tensor) else label)
        labels = labels.to(torch.float32).reshape(-1)
        if strict and not torch.equal(labels, derived):
            raise ValidationError(
                "Image label disagrees with its GT mask",
                f"  → labels {labels.tolist()} vs mask-derived {derived.tolist()}",
            )
    return GroundTruthPyramid(*pyramid, label=labels)


def _bce(prediction: torch.Tensor, target: torch.Tensor, eps: float) -> torch.Tensor:
    return F.binary_cross_entropy(prediction.clamp(eps, 1.0 - eps), target.to(prediction.dtype))


def loss_terms(
    det: DetectionOutput,
    masks: MaskPyramid,
    gt: GroundTruthPyramid,
    eps: float = config.LOSS_CLAMP_EPS,
) -> Dict[str, torch.Tensor]:
    """
    Individual loss terms: "detection", "m1".."m4" and "total".

    Raises:
        ShapeError: If a mask and its target differ in shape (names the scale)
    """
    terms = {"detection": _bce(det.score, gt.label.to(det.score.device), eps)}
    for scale in (1, 2, 3, 4):
        prediction = masks.scale(scale)
        if prediction is None:
            raise ShapeError(f"mask m{scale} was not computed", f"loss.m{scale}")
        target = gt.scale(scale).to(prediction.device)
        if prediction.shape != target.shape:
            raise ShapeError(
                f"prediction {tuple(prediction.shape)} vs target {tuple(target.shape)}", f"loss.m{scale}"
            )
        terms[f"m{scale}"] = _bce(prediction, target, eps)
    terms["total"] = terms["detection"] + 0.25 * sum(terms[f"m{n}"] for n in (1, 2, 3, 4))
    return terms


def total_loss(
    det: DetectionOutput,
    masks: MaskPyramid,
    gt: GroundTruthPyramid,
    eps: float = config.LOSS_CLAMP_EPS,
) -> torch.Tensor:
    """BCE(s_d, l_d) + 1/4 * sum over scales of mean-pixel BCE(M_n, G_n)."""
    return loss_terms(det, masks, gt, eps)["total"]

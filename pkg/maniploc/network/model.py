"""
The assembled manipulation detection and localization network.
"""

from typing import Dict, Optional

import torch
import torch.nn as nn

from maniploc.models.configs import ModelConfig
from maniploc.models.structures import NetOutput
from maniploc.network.backbone import MultiResolutionBackbone, init_weights, load_pretrained
from maniploc.network.detection_head import DetectionHead, detect
from maniploc.network.progressive_path import ProgressivePath, resample_pyramid, validate_stop_at
from maniploc.network.sccm import SpatioChannelCorrelation
from maniploc.utils.logger import get_logger

logger = get_logger(__name__)


class ManipulationNet(nn.Module):
    """
    Backbone -> fixed-size resampling -> detection head + progressive masks.

    ``forward`` takes N×3×H×W images in [0, 1] of any size; the final mask
    comes back at H×W.
    """

    def __init__(self, cfg: ModelConfig, check_finite: bool = True):
        super().__init__()
        self.cfg = cfg
        self.backbone = MultiResolutionBackbone(cfg.backbone, mean=cfg.mean, std=cfg.std)
        self.head = DetectionHead(cfg.backbone.widths, cfg.head_width, cfg.head_final_width)
        self.path = ProgressivePath(
            SpatioChannelCorrelation(cfg.sccm_config(scale), check_finite=check_finite)
            for scale in range(1, 5)
        )

    def forward(
        self,
        images: torch.Tensor,
        stop_at: int = 1,
        return_states: bool = False,
        return_features: bool = False,
    ) -> NetOutput:
        stop_at = validate_stop_at(stop_at)
        features = self.backbone(images)
        pad = features.pad
        padded_size = (images.shape[-2] + pad.bottom, images.shape[-1] + pad.right)
        fixed = resample_pyramid(features, self.cfg.working_sizes)
        detection = detect(self.head, fixed)
        masks = self.path(fixed, stop_at=stop_at, return_states=return_states, padded_size=padded_size)
        return NetOutput(detection=detection, masks=masks, features=fixed if return_features else None)


def build_model(cfg: ModelConfig, seed: Optional[int] = None, check_finite: bool = True) -> ManipulationNet:
    """
    Construct and initialize the network.

    Args:
        cfg: Network settings
        seed: Init seed; falls back to ``cfg.backbone.init_seed``
        check_finite: Raise NumericError on non-finite attention intermediates

    Returns:
        ManipulationNet
    """
    seed = cfg.backbone.init_seed if seed is None else seed

    def _build() -> ManipulationNet:
        model = ManipulationNet(cfg, check_finite=check_finite)
        init_weights(model)
        return model

    if seed is not None:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            model = _build()
    else:
        model = _build()

    if cfg.backbone.pretrained_path:
        load_pretrained(model.backbone, cfg.backbone.pretrained_path, prefix="backbone.")

    budget = parameter_budget(model)
    logger.info(
        f"[Model] Built model ({cfg.sccm_variant}): top-down {budget['top_down'] / 1e6:.2f} M, "
        f"bottom-up {budget['bottom_up'] / 1e6:.2f} M (head {budget['head'] / 1e6:.2f} M)"
    )
    return model


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def parameter_budget(model: ManipulationNet) -> Dict[str, int]:
    """Parameter counts split into top-down, bottom-up and head."""
    head = count_parameters(model.head)
    return {
        "top_down": count_parameters(model.backbone),
        "bottom_up": head + count_parameters(model.path),
        "head": head,
        "total": count_parameters(model),
    }

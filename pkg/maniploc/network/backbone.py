"""
Top-down path: a four-stage multi-resolution feature extractor.

The finest branch runs at input resolution with C channels; every stage
adds one branch at 1/s the resolution and s times the channels of the
previous coarsest one, and every stage ends with a fusion layer that sums
resized and projected features from all branches into each branch.
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from maniploc.config import config
from maniploc.exceptions import ShapeError, WeightLoadError
from maniploc.models.configs import BackboneConfig
from maniploc.models.structures import FeaturePyramid, ImageBatch, PadInfo
from maniploc.utils.logger import get_logger

logger = get_logger(__name__)

BN_MOMENTUM = 0.01


def conv3x3(in_planes: int, out_planes: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_planes, out_planes, kernel_size=3, stride=stride, padding=1, bias=False)


def conv_bn(in_planes: int, out_planes: int, kernel_size: int, stride: int = 1, relu: bool = True) -> nn.Sequential:
    layers = [
        nn.Conv2d(in_planes, out_planes, kernel_size, stride=stride, padding=kernel_size // 2, bias=False),
        nn.BatchNorm2d(out_planes, momentum=BN_MOMENTUM),
    ]
    if relu:
        layers.append(nn.ReLU(inplace=True))
    return nn.Sequential(*layers)


def init_weights(module: nn.Module) -> None:
    """
    Random initialization policy.

    Convolutions and linear maps get He-normal (fan-out, ReLU gain) weights,
    biases start at zero, normalization layers at weight 1 / bias 0.
    Fusion weights of the attention modules are left at their own init.
    """
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


class BasicBlock(nn.Module):
    """Two 3×3 conv-BN layers with an identity shortcut."""

    def __init__(self, planes: int):
        super().__init__()
        self.conv1 = conv3x3(planes, planes)
        self.bn1 = nn.BatchNorm2d(planes, momentum=BN_MOMENTUM)
        self.conv2 = conv3x3(planes, planes)
        self.bn2 = nn.BatchNorm2d(planes, momentum=BN_MOMENTUM)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + x)


class HighResolutionModule(nn.Module):
    """
    Parallel branches followed by full cross-resolution fusion.

    Coarser inputs reach a finer branch through a 1×1 projection and
    bilinear upsampling; finer inputs reach a coarser branch through a
    chain of stride-s 3×3 convolutions.
    """

    def __init__(self, widths: List[int], num_blocks: int, stage_ratio: int):
        super().__init__()
        self.widths = widths
        self.stage_ratio = stage_ratio
        self.branches = nn.ModuleList(
            nn.Sequential(*[BasicBlock(w) for _ in range(num_blocks)]) for w in widths
        )
        self.fuse_layers = self._make_fuse_layers()
        self.relu = nn.ReLU(inplace=False)

    def _make_fuse_layers(self) -> Optional[nn.ModuleList]:
        if len(self.widths) == 1:
            return None
        fuse_layers = []
        for i, w_out in enumerate(self.widths):
            fuse_layer = []
            for j, w_in in enumerate(self.widths):
                if j > i:
                    fuse_layer.append(conv_bn(w_in, w_out, 1, relu=False))
                elif j == i:
                    fuse_layer.append(nn.Identity())
                else:
                    steps = []
                    for k in range(i - j):
                        last = k == i - j - 1
                        steps.append(
                            conv_bn(w_in, w_out if last else w_in, 3, stride=self.stage_ratio, relu=not last)
                        )
                    fuse_layer.append(nn.Sequential(*steps))
            fuse_layers.append(nn.ModuleList(fuse_layer))
        return nn.ModuleList(fuse_layers)

    def forward(self, xs: List[torch.Tensor]) -> List[torch.Tensor]:
        xs = [branch(x) for branch, x in zip(self.branches, xs)]
        if self.fuse_layers is None:
            return xs

        fused = []
        for i, layers in enumerate(self.fuse_layers):
            height, width = xs[i].shape[-2:]
            y = xs[i]
            for j, x in enumerate(xs):
                if j == i:
                    continue
                projected = layers[j](x)
                if j > i:
                    projected = F.interpolate(projected, size=(height, width), mode="bilinear", align_corners=False)
                y = y + projected
            fused.append(self.relu(y))
        return fused


class MultiResolutionBackbone(nn.Module):
    """
    Stem, four stages and three transitions.

    Input standardization and right/bottom zero padding happen inside
    ``forward`` so callers pass raw [0, 1] images.
    """

    def __init__(
        self,
        cfg: BackboneConfig,
        mean=config.IMAGENET_MEAN,
        std=config.IMAGENET_STD,
    ):
        super().__init__()
        self.cfg = cfg
        widths = cfg.widths
        s = cfg.stage_ratio

        self.register_buffer("mean", torch.tensor(mean, dtype=torch.float32).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(std, dtype=torch.float32).view(1, 3, 1, 1))

        self.stem = nn.Sequential(
            conv_bn(cfg.input_channels, widths[0], 3),
            conv_bn(widths[0], widths[0], 3),
        )
        self.stages = nn.ModuleList()
        self.transitions = nn.ModuleList()
        for stage in range(cfg.num_stages):
            if stage > 0:
                self.transitions.append(conv_bn(widths[stage - 1], widths[stage], 3, stride=s))
            self.stages.append(
                HighResolutionModule(widths[: stage + 1], cfg.blocks_per_stage[stage], s)
            )

    def pad_info(self, height: int, width: int) -> PadInfo:
        m = self.cfg.pad_multiple
        return PadInfo(right=(-width) % m, bottom=(-height) % m)

    def forward(self, images: torch.Tensor) -> FeaturePyramid:
        if images.dim() != 4 or images.shape[1] != self.cfg.input_channels:
            raise ShapeError(
                f"expected N×3×H×W images, got shape {tuple(images.shape)}", "backbone"
            )
        pad = self.pad_info(*images.shape[-2:])
        x = (images - self.mean.to(images.dtype)) / self.std.to(images.dtype)
        if pad.right or pad.bottom:
            x = F.pad(x, (0, pad.right, 0, pad.bottom))

        xs = [self.stem(x)]
        for stage, module in enumerate(self.stages):
            if stage > 0:
                xs = xs + [self.transitions[stage - 1](xs[-1])]
            xs = module(xs)
        return FeaturePyramid(*xs, pad=pad)


def load_pretrained(
    model: nn.Module,
    path: Union[str, Path],
    prefix: str = "",
    report_path: Optional[Union[str, Path]] = None,
) -> Dict[str, List[str]]:
    """
    Load weights by parameter name.

    Unmatched names on either side are reported, not fatal; a name that
    matches with a different shape is fatal.

    Args:
        model: Module to load into
        path: State-dict file readable by ``torch.load``
        prefix: Prefix stripped from file names (e.g. "backbone.")
        report_path: Optional JSON file receiving the name-mapping report

    Returns:
        dict: {"loaded": [...], "missing": [...], "unexpected": [...]}

    Raises:
        WeightLoadError: If the file is missing/unreadable or shapes mismatch
    """
    path = Path(path)
    if not path.is_file():
        raise WeightLoadError(f"Pretrained weight file not found: {path}")
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise WeightLoadError(f"Cannot read pretrained weights {path}: {e}") from e
    if isinstance(state, dict) and "state_dict" in state:
        state = state["state_dict"]
    if not isinstance(state, dict):
        raise WeightLoadError(f"{path} does not hold a state dict")

    if prefix:
        state = {k[len(prefix):] if k.startswith(prefix) else k: v for k, v in state.items()}

    own = model.state_dict()
    mismatched = [
        f"{k}: file {tuple(v.shape)} vs model {tuple(own[k].shape)}"
        for k, v in state.items()
        if k in own and tuple(v.shape) != tuple(own[k].shape)
    ]
    if mismatched:
        raise WeightLoadError(f"Shape mismatch loading {path}", offending=mismatched)

    matched = {k: v for k, v in state.items() if k in own}
    model.load_state_dict(matched, strict=False)
    report = {
        "loaded": sorted(matched),
        "missing": sorted(k for k in own if k not in state),
        "unexpected": sorted(k for k in state if k not in own),
    }
    logger.info(
        f"[Backbone] Loaded {len(report['loaded'])} tensors from {path.name} "
        f"({len(report['missing'])} missing, {len(report['unexpected'])} unexpected)"
    )
    if report_path is not None:
        Path(report_path).parent.mkdir(parents=True, exist_ok=True)
        Path(report_path).write_text(json.dumps(report, indent=2), encoding="utf-8")
    return report


def build_backbone(
    cfg: BackboneConfig,
    mean=config.IMAGENET_MEAN,
    std=config.IMAGENET_STD,
) -> MultiResolutionBackbone:
    """
    Construct the backbone and initialize it.

    With ``cfg.init_seed`` set, construction and initialization run under a
    forked torch RNG seeded with it, so two builds are bitwise identical.
    ``cfg.pretrained_path`` is loaded afterwards by name matching.
    """
    def _build() -> MultiResolutionBackbone:
        model = MultiResolutionBackbone(cfg, mean=mean, std=std)
        init_weights(model)
        return model

    if cfg.init_seed is not None:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.init_seed)
            model = _build()
    else:
        model = _build()

    if cfg.pretrained_path:
        load_pretrained(model, cfg.pretrained_path, prefix="backbone.")
    logger.debug(f"[Backbone] Widths {cfg.widths}, blocks {cfg.blocks_per_stage}")
    return model


def extract_features(model: MultiResolutionBackbone, images: Union[ImageBatch, torch.Tensor]) -> FeaturePyramid:
    """
    Run the backbone on [0, 1] images.

    Returns:
        FeaturePyramid: F1..F4 for the padded input, with the pad recorded
    """
    tensor = images.images if isinstance(images, ImageBatch) else images
    return model(tensor)

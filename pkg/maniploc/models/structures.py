"""
Dataclass containers passed between the network and the services.

Tensors inside the network are channel-first (N×C×H×W); samples handled by
the data services are numpy arrays in H×W×3 / H×W layout.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
import torch

ManipulationKind = Literal["splice", "copy_move", "removal", "pristine"]
KINDS: Tuple[str, ...] = ("splice", "copy_move", "removal", "pristine")


@dataclass(frozen=True)
class PadInfo:
    """Zero padding added on the right/bottom so sides divide by s^3."""

    right: int = 0
    bottom: int = 0

    def as_dict(self) -> Dict[str, int]:
        return {"right": self.right, "bottom": self.bottom}


@dataclass
class ImageBatch:
    """
    Images in [0, 1] with their original (pre-padding) sizes.

    Attributes:
        images: N×3×H×W tensor
        sizes: Original (height, width) per sample
    """

    images: torch.Tensor
    sizes: List[Tuple[int, int]]

    @classmethod
    def from_arrays(cls, arrays: List[np.ndarray]) -> "ImageBatch":
        """Stack H×W×3 arrays of identical size into a batch."""
        tensors = [torch.from_numpy(np.ascontiguousarray(a, dtype=np.float32)).permute(2, 0, 1) for a in arrays]
        return cls(images=torch.stack(tensors), sizes=[tuple(a.shape[:2]) for a in arrays])


@dataclass
class FeaturePyramid:
    """
    Backbone features F1..F4, finest first.

    f_n has shape N × (s^(n-1) C) × (H/s^(n-1)) × (W/s^(n-1)).
    """

    f1: torch.Tensor
    f2: torch.Tensor
    f3: torch.Tensor
    f4: torch.Tensor
    pad: PadInfo = field(default_factory=PadInfo)

    def scale(self, n: int) -> torch.Tensor:
        return (self.f1, self.f2, self.f3, self.f4)[n - 1]

    def as_list(self) -> List[torch.Tensor]:
        return [self.f1, self.f2, self.f3, self.f4]

    @property
    def shapes(self) -> List[Tuple[int, ...]]:
        return [tuple(f.shape) for f in self.as_list()]


@dataclass
class SccmState:
    """
    Intermediates of one spatio-channel correlation pass.

    Matrices are batched: x_fold, xg, xt, xp are N×M×K with M = HW/r² and
    K = C r²; a_s is N×M×M and a_c is N×K×K. Disabled branches hold None.
    """

    x: torch.Tensor
    x_fold: torch.Tensor
    xg: torch.Tensor
    xt: torch.Tensor
    xp: torch.Tensor
    a_s: Optional[torch.Tensor]
    a_c: Optional[torch.Tensor]
    ys: Optional[torch.Tensor]
    yc: Optional[torch.Tensor]
    alpha_s: torch.Tensor
    alpha_c: torch.Tensor
    z: torch.Tensor
    ratio: int = 1


@dataclass
class MaskPyramid:
    """
    Predicted masks M4..M1 in (0, 1) plus the final mask at input size.

    Early-exit runs leave the finer masks as None; ``final`` then comes from
    the finest computed mask.
    """

    m4: Optional[torch.Tensor] = None
    m3: Optional[torch.Tensor] = None
    m2: Optional[torch.Tensor] = None
    m1: Optional[torch.Tensor] = None
    final: Optional[torch.Tensor] = None
    states: Dict[int, SccmState] = field(default_factory=dict)

    def scale(self, n: int) -> Optional[torch.Tensor]:
        return {1: self.m1, 2: self.m2, 3: self.m3, 4: self.m4}[n]

    def computed(self) -> Dict[int, torch.Tensor]:
        """Masks that were produced, keyed by scale."""
        return {n: m for n in (4, 3, 2, 1) if (m := self.scale(n)) is not None}


@dataclass
class DetectionOutput:
    """Image-level forged probability ``score`` = sigmoid(``logit``), shape N."""

    score: torch.Tensor
    logit: torch.Tensor


@dataclass
class NetOutput:
    """Everything one forward pass of the assembled network produces."""

    detection: DetectionOutput
    masks: MaskPyramid
    features: Optional[FeaturePyramid] = None


@dataclass
class GroundTruthPyramid:
    """
    Binary targets G1..G4 (N×1×h×w) and image labels l_d (N).
    """

    g1: torch.Tensor
    g2: torch.Tensor
    g3: torch.Tensor
    g4: torch.Tensor
    label: torch.Tensor

    def scale(self, n: int) -> torch.Tensor:
        return (self.g1, self.g2, self.g3, self.g4)[n - 1]


@dataclass
class ForgerySample:
    """
    One synthetic (or ingested) training/evaluation sample.

    Attributes:
        image: H×W×3 float32 in [0, 1]
        gt_mask: H×W uint8 of 0/1
        label: 1 for manipulated, 0 for pristine
        kind: Manipulation class
        provenance: Source ids, transform parameters, seed and attempt count
    """

    image: np.ndarray
    gt_mask: np.ndarray
    label: int
    kind: str
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        """Validate the label/mask/kind agreement."""
        if self.kind not in KINDS:
            raise ValueError(f"Unknown manipulation kind: {self.kind}")
        has_forgery = bool(np.any(self.gt_mask))
        if (self.kind == "pristine") != (self.label == 0) or bool(self.label) != has_forgery:
            raise ValueError(
                f"Inconsistent sample: kind={self.kind}, label={self.label}, "
                f"mask has forged pixels={has_forgery}"
            )


@dataclass
class SourceImage:
    """
    A donor/target image of the source pool.

    Attributes:
        image: H×W×3 float32 on the 8-bit grid, already at the corpus size
        source_id: Stable identifier (file name, COCO id or procedural index)
        regions: Optional binary object masks (H×W uint8) from annotations
    """

    image: np.ndarray
    source_id: str
    regions: List[np.ndarray] = field(default_factory=list)


@dataclass
class SourcePool:
    """Decoded source images plus a report of the entries that were skipped."""

    images: List[SourceImage]
    skipped: List[Dict[str, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, index: int) -> SourceImage:
        return self.images[index]

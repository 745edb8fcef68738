"""
Pydantic models for run-level configuration.

These models validate the JSON run config consumed by the CLI and the
keyword arguments passed to the network builders, the synthetic data
generator, the distortion suite and the trainer.
"""

from typing import ClassVar, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from maniploc.config import config


class BackboneConfig(BaseModel):
    """
    Multi-resolution backbone settings.

    Attributes:
        base_width: Channel count C of the finest branch
        stage_ratio: Down-scaling ratio s between adjacent branches
        num_stages: Number of stages (fixed at 4)
        blocks_per_stage: Residual blocks per branch in each stage
        input_channels: Image channels (fixed at 3)
        pretrained_path: Optional weight file loaded by parameter name
        init_seed: Seed for the random initialization policy
    """

    model_config = ConfigDict(extra="forbid")

    base_width: int = Field(default=18, gt=0)
    stage_ratio: int = Field(default=2, ge=2)
    num_stages: Literal[4] = 4
    blocks_per_stage: List[int] = Field(default_factory=lambda: [2, 2, 3, 2])
    input_channels: Literal[3] = 3
    pretrained_path: Optional[str] = None
    init_seed: Optional[int] = Field(default=None, ge=0)

    @field_validator("blocks_per_stage")
    @classmethod
    def validate_blocks(cls, v: List[int]) -> List[int]:
        """Require one positive block count per stage."""
        if len(v) != 4 or any(b <= 0 for b in v):
            raise ValueError(f"blocks_per_stage must be 4 positive integers, got {v}")
        return v

    def channels(self, scale: int) -> int:
        """Channel count at scale n (1 = finest): C * s^(n-1)."""
        return self.base_width * self.stage_ratio ** (scale - 1)

    @property
    def widths(self) -> List[int]:
        return [self.channels(n) for n in range(1, self.num_stages + 1)]

    @property
    def pad_multiple(self) -> int:
        """Input sides are padded to a multiple of s^3."""
        return self.stage_ratio ** (self.num_stages - 1)


class SccmConfig(BaseModel):
    """
    Spatio-channel correlation module settings for one scale.

    Attributes:
        channels: Channels C of the incoming feature
        ratio: Fold block size r
        embed_channels: Unfolded channels of the g/theta/phi embeddings
        spatial: Enable the spatial attention branch
        channel: Enable the channel attention branch
        feature_sharing: Share theta/phi between both attentions
        mask_hidden: Hidden channels of the Conv-ReLU-Conv-Sigmoid mask head
    """

    model_config = ConfigDict(extra="forbid")

    channels: int = Field(gt=0)
    ratio: int = Field(default=1, gt=0)
    embed_channels: Optional[int] = Field(default=None, gt=0)
    spatial: bool = True
    channel: bool = True
    feature_sharing: bool = True
    mask_hidden: int = Field(default=16, gt=0)

    @property
    def embed(self) -> int:
        return self.embed_channels or self.channels


SCCM_VARIANTS = ("full", "wo_sa", "wo_ca", "wo_sa_ca", "wo_fs")


class ModelConfig(BaseModel):
    """
    Whole-network settings.

    Attributes:
        backbone: Backbone settings
        working_size: Side of the finest fixed working size; scale n works at
            working_size / s^(n-1)
        sccm_ratios: Fold ratios r for scales 1..4
        embed_channels: Optional embedding width override per scale (1..4)
        sccm_variant: Ablation variant of the attention module
        mask_hidden: Hidden channels of each mask head
        head_width: Detection head width at scale 1 (doubles per scale)
        head_final_width: Channels of the head's final bottleneck convolution
        mean: Per-channel standardization mean
        std: Per-channel standardization std
    """

    model_config = ConfigDict(extra="forbid")

    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    working_size: int = Field(default=256, gt=0)
    sccm_ratios: Tuple[int, int, int, int] = (4, 2, 2, 1)
    embed_channels: Optional[Tuple[int, int, int, int]] = None
    sccm_variant: Literal["full", "wo_sa", "wo_ca", "wo_sa_ca", "wo_fs"] = "full"
    mask_hidden: int = Field(default=16, gt=0)
    head_width: int = Field(default=32, gt=0)
    head_final_width: int = Field(default=512, gt=0)
    mean: Tuple[float, float, float] = config.IMAGENET_MEAN
    std: Tuple[float, float, float] = config.IMAGENET_STD

    @model_validator(mode="after")
    def validate_sizes(self) -> "ModelConfig":
        """Each working size must be integral and divisible by its fold ratio."""
        s = self.backbone.stage_ratio
        if self.working_size % s ** 3 != 0:
            raise ValueError(
                f"working_size={self.working_size} must be divisible by s^3={s ** 3}"
            )
        for scale, ratio in enumerate(self.sccm_ratios, start=1):
            size = self.working_sizes[scale - 1]
            if ratio <= 0 or size % ratio != 0:
                raise ValueError(
                    f"scale {scale}: working size {size} not divisible by ratio {ratio}"
                )
        if any(v <= 0 for v in self.std):
            raise ValueError("std entries must be positive")
        return self

    @property
    def working_sizes(self) -> List[int]:
        """Fixed sides for scales 1..4."""
        s = self.backbone.stage_ratio
        return [self.working_size // s ** (n - 1) for n in range(1, 5)]

    def sccm_config(self, scale: int) -> SccmConfig:
        """Attention module settings for scale n (1..4)."""
        return SccmConfig(
            channels=self.backbone.channels(scale),
            ratio=self.sccm_ratios[scale - 1],
            embed_channels=self.embed_channels[scale - 1] if self.embed_channels else None,
            spatial=self.sccm_variant not in ("wo_sa", "wo_sa_ca"),
            channel=self.sccm_variant not in ("wo_ca", "wo_sa_ca"),
            feature_sharing=self.sccm_variant != "wo_fs",
            mask_hidden=self.mask_hidden,
        )

    @classmethod
    def w18(cls, **overrides) -> "ModelConfig":
        """Default preset (C=18, s=2) sized near 2.0 M + 1.6 M parameters."""
        return cls(**overrides)

    @classmethod
    def micro(cls, **overrides) -> "ModelConfig":
        """Tiny preset for unit tests and overfit checks."""
        params = dict(
            backbone=BackboneConfig(base_width=4, blocks_per_stage=[1, 1, 1, 1]),
            working_size=32,
            mask_hidden=4,
            head_width=8,
            head_final_width=32,
        )
        params.update(overrides)
        return cls(**params)

    def variant(self, name: str) -> "ModelConfig":
        """Copy of this config with another attention ablation variant."""
        if name not in SCCM_VARIANTS:
            raise ValueError(f"Unknown variant '{name}', expected one of {SCCM_VARIANTS}")
        return self.model_copy(update={"sccm_variant": name})


class GenConfig(BaseModel):
    """
    Synthetic forgery generator settings.

    Attributes:
        out_size: (height, width) of every generated sample
        mask_area_bounds: Allowed region area as a fraction of the image
        scale_range: Donor region scale factor interval
        rotation_range: Rotation interval in degrees
        max_shift: None for free placement, else the largest offset as a
            fraction of the image side
        luminance_range: Multiplicative gain applied to pasted pixels
        per_epoch_per_class: Samples drawn per class per epoch
        rng_seed: Corpus seed
        bezier_points: Inclusive range of control points per contour
        max_mask_retries: Contour regenerations before morphological clamping
        max_placement_tries: Copy-move placement attempts
        max_sample_attempts: Full regenerations per sample before giving up
        feather: Blend a 1-pixel feathered edge into pasted regions
        use_annotations: Prefer annotated donor regions when present
    """

    model_config = ConfigDict(extra="forbid")

    out_size: Tuple[int, int] = (256, 256)
    mask_area_bounds: Tuple[float, float] = (0.01, 0.30)
    scale_range: Tuple[float, float] = (0.5, 2.0)
    rotation_range: Tuple[float, float] = (-30.0, 30.0)
    max_shift: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    luminance_range: Tuple[float, float] = (0.8, 1.2)
    per_epoch_per_class: int = Field(default=1000, gt=0)
    rng_seed: int = Field(default=0, ge=0)
    bezier_points: Tuple[int, int] = (4, 8)
    max_mask_retries: int = Field(default=20, ge=1)
    max_placement_tries: int = Field(default=20, ge=1)
    max_sample_attempts: int = Field(default=50, ge=1)
    feather: bool = False
    use_annotations: bool = True

    @model_validator(mode="after")
    def validate_ranges(self) -> "GenConfig":
        """All intervals must be well ordered and physically meaningful."""
        lo, hi = self.mask_area_bounds
        if not 0.0 < lo <= hi < 1.0:
            raise ValueError(f"mask_area_bounds must satisfy 0 < lo <= hi < 1, got {self.mask_area_bounds}")
        for name in ("scale_range", "rotation_range", "luminance_range"):
            a, b = getattr(self, name)
            if a > b:
                raise ValueError(f"{name} must be ordered, got {(a, b)}")
        if self.scale_range[0] <= 0 or self.luminance_range[0] <= 0:
            raise ValueError("scale and luminance ranges must be positive")
        if min(self.out_size) < 32:
            raise ValueError(f"out_size sides must be >= 32, got {self.out_size}")
        p_lo, p_hi = self.bezier_points
        if not 3 <= p_lo <= p_hi:
            raise ValueError(f"bezier_points must satisfy 3 <= lo <= hi, got {self.bezier_points}")
        return self


DistortionKind = Literal["resize", "gsblur", "gsnoise", "jpegcomp", "mixed", "none"]


class DistortionSpec(BaseModel):
    """
    One robustness degradation.

    ``param`` is the resize scale, the blur kernel size k, the noise std on
    the 0-255 scale, or the JPEG quality q depending on ``kind``.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: DistortionKind
    param: Optional[float] = None

    MIXED_SCALE: ClassVar[Tuple[float, float]] = (0.25, 0.78)
    MIXED_KERNEL: ClassVar[Tuple[int, int]] = (3, 15)
    MIXED_SIGMA: ClassVar[Tuple[float, float]] = (3.0, 15.0)
    MIXED_QUALITY: ClassVar[Tuple[int, int]] = (50, 100)

    @model_validator(mode="after")
    def validate_param(self) -> "DistortionSpec":
        """Check the parameter against the kind's valid domain."""
        p = self.param
        if self.kind in ("mixed", "none"):
            return self
        if p is None:
            raise ValueError(f"{self.kind} requires a param")
        if self.kind == "resize" and not 0.0 < p <= 1.0:
            raise ValueError(f"resize scale must be in (0, 1], got {p}")
        if self.kind == "gsblur" and (p != int(p) or p < 3 or int(p) % 2 == 0):
            raise ValueError(f"blur kernel size must be odd and >= 3, got {p}")
        if self.kind == "gsnoise" and p < 0:
            raise ValueError(f"noise std must be >= 0, got {p}")
        if self.kind == "jpegcomp" and (p != int(p) or not 1 <= p <= 100):
            raise ValueError(f"JPEG quality must be an integer in [1, 100], got {p}")
        return self

    @property
    def label(self) -> str:
        """Human-readable column label, e.g. 'GSBlur k=3'."""
        names = {
            "resize": lambda p: f"Resize {p:g}x",
            "gsblur": lambda p: f"GSBlur k={int(p)}",
            "gsnoise": lambda p: f"GSNoise sigma={p:g}",
            "jpegcomp": lambda p: f"JPEGComp q={int(p)}",
            "mixed": lambda p: "Mixed",
            "none": lambda p: "w/o distortion",
        }
        return names[self.kind](self.param)


class TrainConfig(BaseModel):
    """
    Training loop settings.

    Attributes:
        batch_size: Samples per optimizer step
        optimizer: Adaptive-moment optimizer name
        lr: Initial learning rate
        lr_step_epochs: Epochs between learning rate decays
        lr_gamma: Decay factor
        epochs: Number of epochs
        per_epoch_per_class: Samples drawn per class per epoch
        seed: Seed for weights, data order and dropout-free kernels
        precision: single or double
        device: cpu, cuda or auto
        max_steps: Optional hard cap on optimizer steps
        log_every: Steps between console loss lines
        validate_every: Epochs between validation passes
    """

    model_config = ConfigDict(extra="forbid")

    batch_size: int = Field(default=10, gt=0)
    optimizer: Literal["adam"] = "adam"
    lr: float = Field(default=2e-4, gt=0)
    lr_step_epochs: int = Field(default=5, gt=0)
    lr_gamma: float = Field(default=0.5, gt=0, le=1)
    epochs: int = Field(default=25, ge=1)
    per_epoch_per_class: int = Field(default=1000, gt=0)
    seed: int = Field(default=config.DEFAULT_SEED, ge=0)
    precision: Literal["single", "double"] = config.PRECISION
    device: Literal["cpu", "cuda", "auto"] = config.DEVICE
    max_steps: Optional[int] = Field(default=None, gt=0)
    log_every: int = Field(default=10, gt=0)
    validate_every: int = Field(default=1, gt=0)

    def lr_at_epoch(self, epoch: int) -> float:
        """Scheduled learning rate for a 1-based epoch index."""
        if epoch < 1:
            raise ValueError("epochs are 1-based")
        return self.lr * self.lr_gamma ** ((epoch - 1) // self.lr_step_epochs)

    @classmethod
    def finetune(cls, **overrides) -> "TrainConfig":
        """Fine-tuning preset: same recipe with a 1e-4 initial rate."""
        params = dict(lr=1e-4)
        params.update(overrides)
        return cls(**params)


class RunConfig(BaseModel):
    """
    The structured-text (JSON) run config read by the CLI.

    Attributes:
        model: Network settings
        gen: Synthetic corpus settings
        train: Training settings
        corpus_dir: Directory holding index.jsonl, images/ and masks/
        run_dir: Directory for checkpoints, logs and reports
        source_dir: Source images for synthesis (None = procedural pool)
        source_format: directory, coco or procedural
        source_annotations: COCO annotation file for the coco format
        procedural_pool_size: Images in the procedural pool
        synth_per_class: Samples per class written by `synthesize`
        val_per_class: Validation samples per class split off the corpus
        workers: Worker processes for synthesis
    """

    model_config = ConfigDict(extra="forbid")

    model: ModelConfig = Field(default_factory=ModelConfig)
    gen: GenConfig = Field(default_factory=GenConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    corpus_dir: str = str(config.OUTPUT_DIR / "corpus")
    run_dir: str = str(config.RUNS_DIR / "default")
    source_dir: Optional[str] = None
    source_format: Literal["directory", "coco", "procedural"] = "procedural"
    source_annotations: Optional[str] = None
    procedural_pool_size: int = Field(default=64, gt=1)
    synth_per_class: int = Field(default=1100, gt=0)
    val_per_class: int = Field(default=100, ge=0)
    workers: int = Field(default=config.NUM_WORKERS, ge=0)

    @model_validator(mode="after")
    def validate_corpus_size(self) -> "RunConfig":
        """Synthesized samples must downsample onto the working grid by an integer factor."""
        size = self.model.working_size
        if any(side < size or side % size for side in self.gen.out_size):
            raise ValueError(
                f"gen.out_size={tuple(self.gen.out_size)} must be a multiple of model.working_size={size} on both sides"
            )
        return self

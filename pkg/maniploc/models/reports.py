"""
Pydantic models for evaluation reports and corpus index records.

Reports serialize as JSON (one record per dataset/variant) and flatten to
table rows for the delimited-table writers in ``maniploc.services.evaluator``.
"""

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field


class MetricReport(BaseModel):
    """
    Localization and detection metrics for one dataset/variant.

    Attributes:
        name: Dataset or variant label
        pixel_auc: Mean per-image pixel AUC
        pixel_f1: Mean per-image pixel F1 at the per-image EER threshold
        image_auc: Image-level AUC
        image_f1: Image-level F1 at the EER threshold
        eer: Image-level equal error rate
        tpr_at_1pct_fpr: Image-level TPR at 1% FPR
        threshold_used: EER threshold used to binarize scores
        n_images: Images evaluated
        n_undefined_pixel: Images whose GT is single-class (excluded from pixel means)
        per_scale_pixel_auc: Mean pixel AUC of each computed scale, keyed "m4".."m1"
        extras: Free-form annotations (distortion label, scoring mode, codec)
    """

    name: str = "dataset"
    pixel_auc: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    pixel_f1: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    image_auc: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    image_f1: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    eer: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    tpr_at_1pct_fpr: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    threshold_used: Optional[float] = None
    n_images: int = 0
    n_undefined_pixel: int = 0
    per_scale_pixel_auc: Dict[str, float] = Field(default_factory=dict)
    extras: Dict[str, str] = Field(default_factory=dict)

    def to_row(self, columns: List[str]) -> List[str]:
        """Values for ``columns`` formatted for a delimited table."""
        row = []
        for column in columns:
            value = getattr(self, column, None)
            if value is None:
                value = self.per_scale_pixel_auc.get(column, self.extras.get(column))
            row.append("" if value is None else (f"{value:.4f}" if isinstance(value, float) else str(value)))
        return row


class EpochRecord(BaseModel):
    """Summary of one training epoch."""

    epoch: int
    lr: float
    mean_loss: float
    steps: int
    validation: Optional[MetricReport] = None


class CorpusRecord(BaseModel):
    """
    One line of a corpus ``index.jsonl``.

    Paths are relative to the corpus directory.
    """

    image_path: str
    mask_path: str
    label: Literal[0, 1]
    kind: Literal["splice", "copy_move", "removal", "pristine"]
    provenance: Dict[str, Any] = Field(default_factory=dict)

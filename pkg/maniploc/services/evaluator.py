"""
Evaluation protocols: localization, detection and the robustness grid.

Every protocol runs under ``torch.no_grad`` with the model in eval mode and
puts the model back into the mode it was in, so evaluation never changes
its state. Reports can be written as a delimited table or as JSON.
"""

import csv
import json
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Optional, Sequence, Union

import numpy as np
import torch

from maniploc.exceptions import ConfigurationError, FileWriteError, ValidationError
from maniploc.models.configs import DistortionSpec
from maniploc.models.reports import MetricReport
from maniploc.network.detection_head import mask_average_score
from maniploc.network.model import ManipulationNet
from maniploc.network.progressive_path import SCALES, final_mask
from maniploc.services.corpus import ForgeryDataset
from maniploc.services.distortions import JPEG_CODEC, distortion_grid
from maniploc.services.metrics import eer_threshold, f1_at, image_auc, pixel_metrics, tpr_at_fpr
from maniploc.utils.logger import get_logger
from maniploc.utils.progress import track

logger = get_logger(__name__)

LOCALIZATION_COLUMNS = ["name", "pixel_auc", "pixel_f1", "m4", "m3", "m2", "m1", "n_images", "n_undefined_pixel"]
DETECTION_COLUMNS = ["name", "image_auc", "image_f1", "eer", "tpr_at_1pct_fpr", "threshold_used", "n_images"]

ScoringMode = Literal["head", "mask_average"]


@contextmanager
def evaluation_mode(model: torch.nn.Module) -> Iterator[torch.nn.Module]:
    """Eval mode and no_grad for the duration; the previous mode is restored."""
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            yield model
    finally:
        model.train(was_training)


def _model_device_dtype(model: torch.nn.Module):
    parameter = next(model.parameters())
    return parameter.device, parameter.dtype


def _view(dataset: ForgeryDataset, distortion: Optional[DistortionSpec]) -> ForgeryDataset:
    if len(dataset) == 0:
        raise ValidationError("Cannot evaluate on an empty dataset")
    return dataset if distortion is None else dataset.with_distortion(distortion)


def _run(model: ManipulationNet, image: np.ndarray):
    device, dtype = _model_device_dtype(model)
    tensor = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).permute(2, 0, 1)[None]
    return model(tensor.to(device=device, dtype=dtype))


def evaluate_localization(
    model: ManipulationNet,
    dataset: ForgeryDataset,
    distortion: Optional[DistortionSpec] = None,
    name: str = "dataset",
) -> MetricReport:
    """
    Pixel-level AUC and F1, averaged over images.

    Each image goes through the model at its own size; the final mask and
    every intermediate mask are resampled to the GT size. Images whose GT
    holds a single class are counted in ``n_undefined_pixel`` and left out
    of the means.

    Args:
        model: Network to evaluate
        dataset: Images with GT masks
        distortion: Optional degradation applied to every image
        name: Report label

    Returns:
        MetricReport

    Raises:
        ValidationError: If the dataset is empty
    """
    view = _view(dataset, distortion)
    aucs: List[float] = []
    f1s: List[float] = []
    per_scale: Dict[int, List[float]] = {scale: [] for scale in SCALES}
    undefined = 0

    with evaluation_mode(model):
        for index in track(range(len(view)), f"Localization {name}", total=len(view)):
            image, gt, _ = view.load(index)
            out = _run(model, image)
            result = pixel_metrics(out.masks.final[0, 0].cpu().numpy(), gt)
            if result is None:
                undefined += 1
                continue
            aucs.append(result[0])
            f1s.append(result[1])

            height, width = image.shape[:2]
            pad = model.backbone.pad_info(height, width)
            padded = (height + pad.bottom, width + pad.right)
            for scale in SCALES:
                cropped = final_mask(out.masks.scale(scale), padded, pad)
                per_scale[scale].append(pixel_metrics(cropped[0, 0].cpu().numpy(), gt)[0])

    report = MetricReport(
        name=name,
        pixel_auc=float(np.mean(aucs)) if aucs else None,
        pixel_f1=float(np.mean(f1s)) if f1s else None,
        n_images=len(view),
        n_undefined_pixel=undefined,
        per_scale_pixel_auc={f"m{s}": float(np.mean(v)) for s, v in per_scale.items() if v},
        extras={"distortion": distortion.label if distortion else "none"},
    )
    if undefined:
        logger.warning(f"[Evaluator] {undefined}/{len(view)} images have single-class GT, excluded from pixel metrics")
    logger.info(
        f"[Evaluator] {name}: pixel AUC {report.pixel_auc if report.pixel_auc is not None else 'n/a'} "
        f"over {len(aucs)} images"
    )
    return report


def detection_scores(
    model: ManipulationNet,
    dataset: ForgeryDataset,
    mode: ScoringMode = "head",
    distortion: Optional[DistortionSpec] = None,
) -> np.ndarray:
    """Image-level forgery scores, one per dataset item."""
    if mode not in ("head", "mask_average"):
        raise ConfigurationError(f"Unknown scoring mode '{mode}', expected head or mask_average")
    view = _view(dataset, distortion)
    scores = []
    with evaluation_mode(model):
        for index in track(range(len(view)), f"Detection ({mode})", total=len(view)):
            image, _, _ = view.load(index)
            out = _run(model, image)
            score = out.detection.score if mode == "head" else mask_average_score(out.masks.final)
            scores.append(float(score.reshape(-1)[0]))
    return np.asarray(scores, dtype=np.float64)


def evaluate_detection(
    model: ManipulationNet,
    dataset: ForgeryDataset,
    mode: ScoringMode = "head",
    distortion: Optional[DistortionSpec] = None,
    name: str = "dataset",
) -> MetricReport:
    """
    Image-level AUC, F1 at the EER threshold, EER and TPR at 1% FPR.

    Args:
        mode: "head" scores with the detection head, "mask_average" with
            the mean of the final mask

    Raises:
        UndefinedMetricError: If the dataset holds a single class
    """
    scores = detection_scores(model, dataset, mode, distortion)
    labels = np.asarray(dataset.labels)
    auc = image_auc(scores, labels)
    eer, threshold = eer_threshold(scores, labels)
    report = MetricReport(
        name=name,
        image_auc=auc,
        image_f1=f1_at(scores, labels, threshold),
        eer=eer,
        tpr_at_1pct_fpr=tpr_at_fpr(scores, labels, 0.01),
        threshold_used=threshold,
        n_images=len(labels),
        extras={"mode": mode, "distortion": distortion.label if distortion else "none"},
    )
    logger.info(f"[Evaluator] {name} ({mode}): AUC {auc:.4f}, EER {eer:.4f}")
    return report


def robustness_grid(
    model: ManipulationNet,
    dataset: ForgeryDataset,
    task: Literal["localization", "detection"] = "localization",
    specs: Optional[Sequence[DistortionSpec]] = None,
    mode: ScoringMode = "head",
) -> List[MetricReport]:
    """One report per distortion, in grid order (default: the ten-row grid)."""
    specs = list(specs) if specs is not None else distortion_grid()
    reports = []
    for spec in specs:
        if task == "localization":
            report = evaluate_localization(model, dataset, spec, name=spec.label)
        elif task == "detection":
            report = evaluate_detection(model, dataset, mode, spec, name=spec.label)
        else:
            raise ConfigurationError(f"Unknown robustness task '{task}'")
        report.extras["jpeg_codec"] = JPEG_CODEC
        reports.append(report)
    return reports


def write_report_table(
    reports: Sequence[MetricReport],
    path: Union[str, Path],
    columns: Optional[List[str]] = None,
    delimiter: str = ",",
) -> Path:
    """
    Write reports as a delimited table.

    The first line is a ``#`` comment naming the JPEG codec so that
    robustness numbers can be traced to the encoder that produced them.
    """
    path = Path(path)
    if columns is None:
        columns = DETECTION_COLUMNS if all(r.pixel_auc is None for r in reports) else LOCALIZATION_COLUMNS
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(f"# jpeg_codec: {JPEG_CODEC}\n")
            writer = csv.writer(f, delimiter=delimiter)
            writer.writerow(columns)
            for report in reports:
                writer.writerow(report.to_row(columns))
    except OSError as e:
        raise FileWriteError(str(path), cause=e) from e
    logger.info(f"[Evaluator] Wrote {len(reports)} rows to {path}")
    return path


def write_report_json(reports: Sequence[MetricReport], path: Union[str, Path]) -> Path:
    path = Path(path)
    document = {"jpeg_codec": JPEG_CODEC, "reports": [r.model_dump() for r in reports]}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(document, indent=2), encoding="utf-8")
    except OSError as e:
        raise FileWriteError(str(path), cause=e) from e
    return path

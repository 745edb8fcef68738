"""
Evaluation metrics.

All ROC-based metrics are read off ``sklearn.metrics.roc_curve`` with every
operating point kept. Scores are binarized with ``>=``: a sample is
predicted forged when its score is at least the threshold.
"""

from typing import Optional, Sequence, Tuple, Union

import cv2
import numpy as np
from sklearn.metrics import f1_score, roc_auc_score, roc_curve

from maniploc.exceptions import UndefinedMetricError, ValidationError

ArrayLike = Union[Sequence[float], np.ndarray]


def _prepare(scores: ArrayLike, labels: ArrayLike, metric: str) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    if scores.shape != labels.shape:
        raise ValidationError(f"{metric}: {scores.size} scores vs {labels.size} labels")
    if not np.isin(labels, (0, 1)).all():
        raise ValidationError(f"{metric}: labels must be 0/1")
    if labels.min(initial=1) == labels.max(initial=0):
        raise UndefinedMetricError(metric)
    return scores, labels


def _roc(scores: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return roc_curve(labels, scores, drop_intermediate=False)


def image_auc(scores: ArrayLike, labels: ArrayLike) -> float:
    """
    Area under the ROC curve; ties between a positive and a negative count 1/2.

    Raises:
        UndefinedMetricError: If only one class is present
    """
    scores, labels = _prepare(scores, labels, "AUC")
    return float(roc_auc_score(labels, scores))


def eer_threshold(scores: ArrayLike, labels: ArrayLike) -> Tuple[float, float]:
    """
    Equal error rate and its threshold.

    Walks the ROC from the strictest threshold; at the first operating point
    where FNR - FPR <= 0 the crossing is taken exactly if it is zero, else
    linearly interpolated with the previous point. Interpolating against the
    (infinite) strictest threshold keeps that point's finite neighbour.

    Returns:
        (eer, threshold)

    Raises:
        UndefinedMetricError: If only one class is present
    """
    scores, labels = _prepare(scores, labels, "EER")
    fpr, tpr, thresholds = _roc(scores, labels)
    gap = (1.0 - tpr) - fpr
    i = int(np.flatnonzero(gap <= 0)[0])
    if gap[i] == 0 or i == 0:
        return float(fpr[i]), float(thresholds[i])

    t = gap[i - 1] / (gap[i - 1] - gap[i])
    eer = fpr[i - 1] + t * (fpr[i] - fpr[i - 1])
    upper = thresholds[i - 1] if np.isfinite(thresholds[i - 1]) else thresholds[i]
    threshold = upper + t * (thresholds[i] - upper)
    return float(eer), float(threshold)


def f1_at(scores: ArrayLike, labels: ArrayLike, threshold: float) -> float:
    """
    F1 of ``scores >= threshold`` against ``labels``.

    Returns 1.0 when there are neither predicted nor actual positives.

    Raises:
        ValidationError: If the threshold is not finite
    """
    if not np.isfinite(threshold):
        raise ValidationError(f"F1 threshold must be finite, got {threshold}")
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    predictions = (scores >= threshold).astype(np.int64)
    return float(f1_score(labels, predictions, zero_division=1))


def tpr_at_fpr(scores: ArrayLike, labels: ArrayLike, fpr_target: float = 0.01) -> float:
    """
    True positive rate at a false positive rate, interpolated on the ROC.

    An operating point exactly at the target returns its best TPR.

    Raises:
        UndefinedMetricError: If only one class is present
    """
    if not 0.0 <= fpr_target <= 1.0:
        raise ValidationError(f"fpr_target must be in [0, 1], got {fpr_target}")
    scores, labels = _prepare(scores, labels, "TPR@FPR")
    fpr, tpr, _ = _roc(scores, labels)
    i = int(np.flatnonzero(fpr <= fpr_target)[-1])
    if fpr[i] == fpr_target or i == len(fpr) - 1:
        return float(tpr[i])
    t = (fpr_target - fpr[i]) / (fpr[i + 1] - fpr[i])
    return float(tpr[i] + t * (tpr[i + 1] - tpr[i]))


def pixel_metrics(pred_mask: np.ndarray, gt_mask: np.ndarray) -> Optional[Tuple[float, float]]:
    """
    Pixel AUC and F1 at the image's own EER threshold.

    The prediction is bilinearly resized to the GT size first.

    Returns:
        (auc, f1), or None when the GT holds a single class
    """
    pred = np.asarray(pred_mask, dtype=np.float32).squeeze()
    gt = (np.asarray(gt_mask).squeeze() > 0).astype(np.int64)
    if pred.shape != gt.shape:
        pred = cv2.resize(pred, (gt.shape[1], gt.shape[0]), interpolation=cv2.INTER_LINEAR)
    if gt.min() == gt.max():
        return None
    auc = image_auc(pred, gt)
    _, threshold = eer_threshold(pred, gt)
    return auc, f1_at(pred, gt, threshold)

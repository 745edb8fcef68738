"""
Tests for the evaluation metrics.
"""

import numpy as np
import pytest

from maniploc.exceptions import UndefinedMetricError, ValidationError
from maniploc.services.metrics import eer_threshold, f1_at, image_auc, pixel_metrics, tpr_at_fpr


def pair_count_auc(scores, labels) -> float:
    """Mann-Whitney AUC by enumerating every positive-negative pair."""
    scores, labels = np.asarray(scores, dtype=float), np.asarray(labels)
    positives, negatives = scores[labels == 1], scores[labels == 0]
    wins = 0.0
    for p in positives:
        for n in negatives:
            wins += 1.0 if p > n else 0.5 if p == n else 0.0
    return wins / (len(positives) * len(negatives))


def sweep(scores, labels):
    """(threshold, fpr, fnr) for every distinct score, strictest first, after the reject-all point."""
    scores, labels = np.asarray(scores, dtype=float), np.asarray(labels)
    points = [(np.inf, 0.0, 1.0)]
    for t in np.unique(scores)[::-1]:
        predicted = scores >= t
        fpr = float(np.mean(predicted[labels == 0]))
        fnr = float(np.mean(~predicted[labels == 1]))
        points.append((float(t), fpr, fnr))
    return points


@pytest.fixture
def random_scores():
    """100 tie-free scores with labels that overlap partially."""
    rng = np.random.default_rng(0)
    labels = np.array([1] * 50 + [0] * 50)
    scores = rng.normal(loc=labels * 1.0, scale=1.0)
    return scores, labels


class TestImageAuc:
    """Tests for image-level AUC."""

    def test_perfect_separation(self):
        """Test that perfectly separated scores give AUC 1."""
        assert image_auc([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0

    def test_three_of_four_pairs(self):
        """Test the hand-counted case with three of four pairs ordered correctly."""
        assert image_auc([0.9, 0.3, 0.6, 0.4], [1, 0, 0, 1]) == pytest.approx(0.75)

    def test_matches_pair_count(self, random_scores):
        """Test agreement with the O(n²) pair-count oracle."""
        scores, labels = random_scores
        assert image_auc(scores, labels) == pytest.approx(pair_count_auc(scores, labels), abs=1e-12)

    def test_ties_count_half(self):
        """Test that tied positive-negative pairs contribute one half."""
        assert image_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == pytest.approx(0.5)
        assert image_auc([0.7, 0.5, 0.5], [1, 1, 0]) == pytest.approx(pair_count_auc([0.7, 0.5, 0.5], [1, 1, 0]))

    def test_monotone_invariance(self, random_scores):
        """Test that a strictly increasing transform leaves AUC unchanged."""
        scores, labels = random_scores
        assert image_auc(np.exp(scores), labels) == pytest.approx(image_auc(scores, labels), abs=1e-12)

    def test_negation_complements(self, random_scores):
        """Test that AUC(s) + AUC(-s) = 1 without ties."""
        scores, labels = random_scores
        assert image_auc(scores, labels) + image_auc(-scores, labels) == pytest.approx(1.0)

    def test_single_class_undefined(self):
        """Test that single-class labels raise UndefinedMetricError."""
        with pytest.raises(UndefinedMetricError):
            image_auc([0.1, 0.2], [1, 1])

    def test_length_mismatch(self):
        """Test that differently sized inputs raise ValidationError."""
        with pytest.raises(ValidationError):
            image_auc([0.1, 0.2, 0.3], [1, 0])


class TestEerThreshold:
    """Tests for the equal error rate."""

    def test_perfect_separation(self):
        """Test that separated scores give EER 0 at the lowest positive score."""
        eer, threshold = eer_threshold([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0])
        assert eer == 0.0
        assert threshold == pytest.approx(0.8)

    def test_hand_enumerated_case(self):
        """Test that FPR and FNR cross at 0.5 for the four-sample case."""
        eer, threshold = eer_threshold([0.9, 0.4, 0.6, 0.3], [1, 1, 0, 0])
        assert eer == pytest.approx(0.5)
        assert 0.4 <= threshold <= 0.6

    def test_matches_threshold_sweep(self, random_scores):
        """Test that the EER lies on the segment where FNR - FPR changes sign."""
        scores, labels = random_scores
        eer, threshold = eer_threshold(scores, labels)
        points = sweep(scores, labels)
        k = next(i for i, (_, fpr, fnr) in enumerate(points) if fnr - fpr <= 0)
        (t_prev, fpr_prev, fnr_prev), (t_k, fpr_k, fnr_k) = points[k - 1], points[k]
        assert fpr_prev - 1e-12 <= eer <= fpr_k + 1e-12
        assert fnr_k - 1e-12 <= eer <= fnr_prev + 1e-12
        if np.isfinite(t_prev):
            assert t_k - 1e-12 <= threshold <= t_prev + 1e-12

    def test_brackets_on_many_score_sets(self):
        """Test the sweep bracketing on 50 random score sets of size 100."""
        for seed in range(50):
            rng = np.random.default_rng(seed)
            labels = rng.permutation(np.array([1] * 50 + [0] * 50))
            scores = rng.normal(loc=labels * rng.uniform(0, 2), scale=1.0)
            eer, _ = eer_threshold(scores, labels)
            points = sweep(scores, labels)
            k = next(i for i, (_, fpr, fnr) in enumerate(points) if fnr - fpr <= 0)
            assert points[k - 1][1] - 1e-12 <= eer <= points[k][1] + 1e-12
            assert image_auc(scores, labels) == pytest.approx(pair_count_auc(scores, labels), abs=1e-12)

    def test_monotone_invariance(self, random_scores):
        """Test that the EER is unchanged by a strictly increasing transform."""
        scores, labels = random_scores
        assert eer_threshold(np.exp(scores), labels)[0] == pytest.approx(eer_threshold(scores, labels)[0])

    def test_single_class_undefined(self):
        """Test that single-class labels raise UndefinedMetricError."""
        with pytest.raises(UndefinedMetricError):
            eer_threshold([0.1, 0.2], [0, 0])


class TestF1At:
    """Tests for F1 at a threshold."""

    def test_perfect(self):
        """Test that a perfect binarization scores 1."""
        assert f1_at([0.9, 0.8, 0.1], [1, 1, 0], 0.5) == 1.0

    def test_hand_counted(self):
        """Test TP=2, FP=1, FN=1 gives 2/3."""
        assert f1_at([0.9, 0.8, 0.7, 0.1], [1, 1, 0, 1], 0.5) == pytest.approx(2 / 3)

    def test_all_negative_predictions(self):
        """Test that predicting nothing while positives exist scores 0."""
        assert f1_at([0.1, 0.2, 0.3], [1, 0, 1], 0.9) == 0.0

    def test_both_sets_empty(self):
        """Test that no predicted and no actual positives score 1."""
        assert f1_at([0.1, 0.2], [0, 0], 0.9) == 1.0

    def test_threshold_inclusive(self):
        """Test that a score equal to the threshold counts as positive."""
        assert f1_at([0.5, 0.1], [1, 0], 0.5) == 1.0

    def test_non_finite_threshold(self):
        """Test that an infinite threshold raises ValidationError."""
        with pytest.raises(ValidationError):
            f1_at([0.5], [1], float("inf"))


class TestTprAtFpr:
    """Tests for TPR at a fixed FPR."""

    def test_perfect_separation(self):
        """Test that separated scores reach TPR 1 at 1% FPR."""
        assert tpr_at_fpr([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0

    def test_identical_scores_follow_diagonal(self):
        """Test that constant scores give TPR equal to the target FPR."""
        assert tpr_at_fpr([0.5] * 10, [1, 0] * 5, 0.01) == pytest.approx(0.01)

    def test_bracketed_by_sweep(self, random_scores):
        """Test that the interpolated TPR lies between the neighbouring operating points."""
        scores, labels = random_scores
        points = [(fpr, 1.0 - fnr) for _, fpr, fnr in sweep(scores, labels)]
        below = max(tpr for fpr, tpr in points if fpr <= 0.01)
        above = min(tpr for fpr, tpr in points if fpr > 0.01)
        assert below - 1e-12 <= tpr_at_fpr(scores, labels, 0.01) <= above + 1e-12

    def test_invalid_target(self):
        """Test that targets outside [0, 1] raise ValidationError."""
        with pytest.raises(ValidationError):
            tpr_at_fpr([0.1, 0.9], [0, 1], 1.5)

    def test_single_class_undefined(self):
        """Test that single-class labels raise UndefinedMetricError."""
        with pytest.raises(UndefinedMetricError):
            tpr_at_fpr([0.1, 0.2], [1, 1])


class TestPixelMetrics:
    """Tests for per-image pixel metrics."""

    @pytest.fixture
    def gt(self):
        """A 16×16 mask with a square region."""
        mask = np.zeros((16, 16), dtype=np.uint8)
        mask[4:10, 3:12] = 1
        return mask

    def test_exact_prediction(self, gt):
        """Test that predicting the GT gives AUC 1 and F1 1."""
        assert pixel_metrics(gt.astype(np.float32), gt) == (1.0, 1.0)

    def test_inverted_prediction(self, gt):
        """Test that the inverted mask gives AUC 0."""
        auc, _ = pixel_metrics(1.0 - gt.astype(np.float32), gt)
        assert auc == 0.0

    def test_matches_pair_count(self, gt):
        """Test pixel AUC against the pair-count oracle on a random map."""
        pred = np.random.default_rng(1).random((16, 16)).astype(np.float32)
        auc, f1 = pixel_metrics(pred, gt)
        assert auc == pytest.approx(pair_count_auc(pred.ravel(), gt.ravel()), abs=1e-9)
        assert 0.0 <= f1 <= 1.0

    def test_prediction_resized_to_gt(self, gt):
        """Test that a smaller prediction is resampled to the GT size."""
        pred = np.zeros((8, 8), dtype=np.float32)
        pred[2:5, 2:6] = 1.0
        auc, _ = pixel_metrics(pred, gt)
        assert 0.5 < auc <= 1.0

    def test_single_class_gt(self):
        """Test that an all-zero GT yields None."""
        assert pixel_metrics(np.random.default_rng(0).random((8, 8)), np.zeros((8, 8))) is None

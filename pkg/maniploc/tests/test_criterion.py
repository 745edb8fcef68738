"""
Tests for the ground-truth pyramid and the training loss.
"""

import math

import numpy as np
import pytest
import torch

from maniploc.exceptions import BinaryMaskError, ShapeError, ValidationError
from maniploc.models.configs import ModelConfig
from maniploc.models.structures import DetectionOutput, MaskPyramid
from maniploc.network.model import build_model
from maniploc.services.criterion import build_gt_pyramid, loss_terms, resize_gt, total_loss


def constant_prediction(value: float, size: int = 8, dtype=torch.float64):
    """Detection output and mask pyramid filled with one value."""
    masks = MaskPyramid(
        m1=torch.full((1, 1, size, size), value, dtype=dtype),
        m2=torch.full((1, 1, size // 2, size // 2), value, dtype=dtype),
        m3=torch.full((1, 1, size // 4, size // 4), value, dtype=dtype),
        m4=torch.full((1, 1, size // 8, size // 8), value, dtype=dtype),
    )
    score = torch.full((1,), value, dtype=dtype)
    return DetectionOutput(score=score, logit=torch.logit(score)), masks


class TestBuildGtPyramid:
    """Tests for GT mask downsampling."""

    def test_all_zero_mask(self):
        """Test that an empty mask gives empty targets and label 0."""
        gt = build_gt_pyramid(np.zeros((256, 256), dtype=np.uint8))
        for scale in (1, 2, 3, 4):
            assert not gt.scale(scale).any()
        assert gt.label.tolist() == [0.0]

    def test_resize_to_working_size(self):
        """Test that a 64×64 mask is resampled to 32×32 by nearest neighbor and stays binary."""
        g1 = np.zeros((64, 64), dtype=np.uint8)
        g1[:, :32] = 1
        resized = resize_gt(g1, 32)
        assert resized.shape == (1, 1, 32, 32)
        assert torch.equal(resized[0, 0, :, :16], torch.ones(32, 16))
        assert not resized[0, 0, :, 16:].any()
        same = resize_gt(np.ones((32, 32)), 32)
        assert same.shape == (1, 1, 32, 32)

    def test_shapes(self):
        """Test that G1..G4 halve the side at every scale."""
        gt = build_gt_pyramid(np.zeros((256, 256), dtype=np.uint8))
        assert [tuple(gt.scale(n).shape) for n in (1, 2, 3, 4)] == [
            (1, 1, 256, 256), (1, 1, 128, 128), (1, 1, 64, 64), (1, 1, 32, 32)
        ]

    def test_left_half_survives(self):
        """Test that a left-half region stays the left half at every scale."""
        g1 = np.zeros((256, 256), dtype=np.uint8)
        g1[:, :128] = 1
        gt = build_gt_pyramid(g1, label=1)
        for scale in (1, 2, 3, 4):
            g = gt.scale(scale)[0, 0]
            half = g.shape[1] // 2
            assert g[:, :half].all() and not g[:, half:].any()

    def test_odd_index_pixel_vanishes(self):
        """Test that a pixel at (17, 243) is dropped by even-index sampling."""
        g1 = np.zeros((256, 256), dtype=np.uint8)
        g1[17, 243] = 1
        gt = build_gt_pyramid(g1)
        assert gt.g1[0, 0, 17, 243] == 1
        assert not gt.g2.any() and not gt.g3.any() and not gt.g4.any()
        assert gt.label.tolist() == [1.0]

    def test_even_index_pixel_propagates(self):
        """Test that (16, 240) maps to (8, 120), (4, 60) and (2, 30)."""
        g1 = np.zeros((256, 256), dtype=np.uint8)
        g1[16, 240] = 1
        gt = build_gt_pyramid(g1)
        assert gt.g2[0, 0, 8, 120] == 1 and gt.g2.sum() == 1
        assert gt.g3[0, 0, 4, 60] == 1 and gt.g3.sum() == 1
        assert gt.g4[0, 0, 2, 30] == 1 and gt.g4.sum() == 1

    def test_pixel_lost_at_third_scale(self):
        """Test that (16, 242) survives at G2 as (8, 121) and vanishes at G3."""
        g1 = np.zeros((256, 256), dtype=np.uint8)
        g1[16, 242] = 1
        gt = build_gt_pyramid(g1)
        assert gt.g2[0, 0, 8, 121] == 1
        assert not gt.g3.any()

    def test_stays_binary(self):
        """Test that every scale of a random mask holds only 0 and 1."""
        rng = np.random.default_rng(0)
        gt = build_gt_pyramid(rng.integers(0, 2, size=(3, 64, 64)))
        for scale in (1, 2, 3, 4):
            assert set(torch.unique(gt.scale(scale)).tolist()) <= {0.0, 1.0}

    def test_non_binary_rejected(self):
        """Test that soft masks raise BinaryMaskError."""
        g1 = np.zeros((16, 16), dtype=np.float32)
        g1[0, 0] = 0.5
        with pytest.raises(BinaryMaskError):
            build_gt_pyramid(g1)

    def test_indivisible_size_rejected(self):
        """Test that sides not divisible by 8 raise ShapeError."""
        with pytest.raises(ShapeError):
            build_gt_pyramid(np.zeros((20, 16), dtype=np.uint8))

    def test_label_mask_disagreement_rejected(self):
        """Test that a label of 1 on an empty mask raises ValidationError."""
        with pytest.raises(ValidationError):
            build_gt_pyramid(np.zeros((16, 16), dtype=np.uint8), label=1)

    def test_label_mismatch_allowed_when_not_strict(self):
        """Test that strict=False keeps the given label."""
        gt = build_gt_pyramid(np.zeros((16, 16), dtype=np.uint8), label=1, strict=False)
        assert gt.label.tolist() == [1.0]

    def test_batched_tensor_input(self):
        """Test that N×1×h×w tensors and per-sample labels are accepted."""
        g1 = torch.zeros(2, 1, 16, 16)
        g1[1, 0, 4:8, 4:8] = 1
        gt = build_gt_pyramid(g1, torch.tensor([0.0, 1.0]))
        assert gt.label.tolist() == [0.0, 1.0]
        assert gt.g4.shape == (2, 1, 2, 2)


class TestTotalLoss:
    """Tests for the multi-scale objective."""

    def test_half_predictions(self):
        """Test that predicting 0.5 everywhere against ones costs 2 ln 2."""
        det, masks = constant_prediction(0.5)
        gt = build_gt_pyramid(np.ones((8, 8), dtype=np.uint8), label=1)
        assert float(total_loss(det, masks, gt)) == pytest.approx(2 * math.log(2), abs=1e-12)

    def test_perfect_prediction_limit(self):
        """Test that exact 0/1 predictions cost at most 5e-7 after clamping."""
        det, masks = constant_prediction(1.0)
        gt = build_gt_pyramid(np.ones((8, 8), dtype=np.uint8), label=1)
        loss = float(total_loss(det, masks, gt))
        assert 0.0 <= loss <= 5e-7

    def test_terms_combine(self):
        """Test that total = detection + mean of the four mask terms."""
        det, masks = constant_prediction(0.3)
        g1 = np.zeros((8, 8), dtype=np.uint8)
        g1[:4, :4] = 1
        terms = loss_terms(det, masks, build_gt_pyramid(g1))
        expected = terms["detection"] + sum(terms[f"m{n}"] for n in (1, 2, 3, 4)) / 4
        torch.testing.assert_close(terms["total"], expected)
        assert float(terms["detection"]) == pytest.approx(-math.log(0.3))

    def test_shape_mismatch_names_scale(self):
        """Test that a wrong-size mask raises ShapeError naming the scale."""
        det, masks = constant_prediction(0.5)
        masks.m2 = torch.full((1, 1, 3, 3), 0.5, dtype=torch.float64)
        gt = build_gt_pyramid(np.ones((8, 8), dtype=np.uint8))
        with pytest.raises(ShapeError) as exc:
            total_loss(det, masks, gt)
        assert exc.value.stage == "loss.m2"

    def test_missing_mask_rejected(self):
        """Test that an early-exit pyramid cannot be trained on."""
        det, masks = constant_prediction(0.5)
        masks.m1 = None
        with pytest.raises(ShapeError):
            total_loss(det, masks, build_gt_pyramid(np.ones((8, 8), dtype=np.uint8)))

    def test_gradient_matches_finite_differences(self):
        """Test d(loss)/d(parameters) of the micro model against central differences."""
        model = build_model(ModelConfig.micro(), seed=0).double().train()
        generator = torch.Generator().manual_seed(0)
        images = torch.rand(2, 3, 32, 32, generator=generator, dtype=torch.float64)
        g1 = torch.zeros(2, 1, 32, 32)
        g1[0, 0, 8:20, 6:22] = 1
        gt = build_gt_pyramid(g1, torch.tensor([1.0, 0.0]))

        def loss() -> torch.Tensor:
            out = model(images)
            return total_loss(out.detection, out.masks, gt)

        model.zero_grad()
        loss().backward()
        rng = np.random.default_rng(0)
        eps = 1e-5
        checked = 0
        with torch.no_grad():
            for name, parameter in model.named_parameters():
                flat = parameter.view(-1)
                i = int(rng.integers(flat.numel()))
                analytic = float(parameter.grad.view(-1)[i])
                original = float(flat[i])
                flat[i] = original + eps
                up = float(loss())
                flat[i] = original - eps
                down = float(loss())
                flat[i] = original
                numeric = (up - down) / (2 * eps)
                tolerance = 1e-5 * max(abs(analytic), abs(numeric)) + 1e-7
                assert abs(numeric - analytic) <= tolerance, f"{name}[{i}]: {numeric} vs {analytic}"
                checked += 1
        assert checked == len(list(model.parameters()))

"""
Tests for the progressive mask path, the detection head and the assembled network.
"""

import pytest
import torch
import torch.nn.functional as F

from maniploc.exceptions import InvalidStopScaleError, ShapeError
from maniploc.models.configs import SCCM_VARIANTS, ModelConfig
from maniploc.models.structures import FeaturePyramid, PadInfo
from maniploc.network.detection_head import DetectionHead, detect, mask_average_score
from maniploc.network.model import build_model, count_parameters
from maniploc.network.progressive_path import (
    early_exit_masks,
    final_mask,
    progressive_masks,
    resample_pyramid,
    upsample_mask,
    validate_stop_at,
)


@pytest.fixture
def micro_model():
    """A seeded micro network in eval mode."""
    return build_model(ModelConfig.micro(), seed=0).eval()


@pytest.fixture
def images():
    """Two random 40×48 images."""
    generator = torch.Generator().manual_seed(0)
    return torch.rand(2, 3, 40, 48, generator=generator)


class TestProgressivePath:
    """Tests for the coarse-to-fine mask path."""

    def test_full_path_shapes(self, micro_model, images):
        """Test that every scale's mask has its working size and the final mask the input size."""
        with torch.no_grad():
            out = micro_model(images)
        sizes = micro_model.cfg.working_sizes
        for scale in (1, 2, 3, 4):
            assert out.masks.scale(scale).shape == (2, 1, sizes[scale - 1], sizes[scale - 1])
        assert out.masks.final.shape == (2, 1, 40, 48)

    def test_masks_in_unit_interval(self, micro_model, images):
        """Test that all masks lie in [0, 1]."""
        with torch.no_grad():
            out = micro_model(images)
        for mask in out.masks.computed().values():
            assert ((mask >= 0) & (mask <= 1)).all()

    @pytest.mark.parametrize("stop_at", [4, 3, 2])
    def test_early_exit_is_prefix_of_full_path(self, micro_model, images, stop_at):
        """Test that an early exit reproduces the full run's coarser masks exactly."""
        with torch.no_grad():
            full = micro_model(images)
            partial = micro_model(images, stop_at=stop_at)
        for scale in (4, 3, 2, 1):
            if scale >= stop_at:
                assert torch.equal(partial.masks.scale(scale), full.masks.scale(scale))
            else:
                assert partial.masks.scale(scale) is None
        assert partial.masks.final.shape == (2, 1, 40, 48)

    def test_stop_at_four_final_from_m4(self, micro_model, images):
        """Test that with stop_at=4 the final mask is M4 resized to the input."""
        with torch.no_grad():
            out = micro_model(images, stop_at=4)
        pad = micro_model.backbone.pad_info(40, 48)
        expected = final_mask(out.masks.m4, (40 + pad.bottom, 48 + pad.right), pad)
        assert torch.equal(out.masks.final, expected)

    @pytest.mark.parametrize("stop_at", [0, 5, -1, True, "1"])
    def test_invalid_stop_at(self, micro_model, images, stop_at):
        """Test that scales outside 1..4 raise InvalidStopScaleError."""
        with pytest.raises(InvalidStopScaleError):
            micro_model(images, stop_at=stop_at)

    def test_validate_stop_at(self):
        """Test that valid scales come back as ints."""
        assert validate_stop_at(3) == 3

    def test_forced_gate_of_ones_skips_gating(self, micro_model, images):
        """Test that forcing M4 to ones feeds F3 to the scale-3 module unchanged."""
        with torch.no_grad():
            fixed = resample_pyramid(micro_model.backbone(images), micro_model.cfg.working_sizes)
            ones = torch.ones(2, 1, 4, 4)
            masks = micro_model.path(fixed, stop_at=3, forced_masks={4: ones})
            _, expected, _ = micro_model.path.module(3)(fixed.f3)
        assert torch.equal(masks.m3, expected)

    def test_helpers_agree_with_path(self, micro_model, images):
        """Test that progressive_masks and early_exit_masks wrap the path."""
        with torch.no_grad():
            fixed = resample_pyramid(micro_model.backbone(images), micro_model.cfg.working_sizes)
            full = progressive_masks(fixed, micro_model.path)
            partial = early_exit_masks(fixed, micro_model.path, stop_at=2)
        assert torch.equal(full.m2, partial.m2)
        assert partial.m1 is None

    def test_states_recorded(self, micro_model, images):
        """Test that return_states keeps one state per computed scale."""
        with torch.no_grad():
            out = micro_model(images, stop_at=2, return_states=True)
        assert sorted(out.masks.states) == [2, 3, 4]
        assert out.masks.states[2].ratio == micro_model.cfg.sccm_ratios[1]

    def test_attention_rows_stochastic_at_every_scale(self, micro_model, images):
        """Test that A_s and A_c rows sum to one at all four scales."""
        with torch.no_grad():
            out = micro_model(images, return_states=True)
        for scale, state in out.masks.states.items():
            for a in (state.a_s, state.a_c):
                assert (a >= 0).all(), scale
                torch.testing.assert_close(a.sum(-1), torch.ones(a.shape[:-1]), atol=1e-5, rtol=0)

    def test_resample_needs_four_sizes(self, micro_model, images):
        """Test that resample_pyramid rejects a short size list."""
        with torch.no_grad():
            p = micro_model.backbone(images)
        with pytest.raises(ShapeError):
            resample_pyramid(p, [32, 16, 8])

    def test_resample_at_working_sizes_is_identity(self):
        """Test that a pyramid already at the working sizes comes back unchanged."""
        p = FeaturePyramid(*(torch.randn(1, 2 * 2 ** n, s, s) for n, s in enumerate((32, 16, 8, 4))))
        out = resample_pyramid(p, [32, 16, 8, 4])
        for before, after in zip(p.as_list(), out.as_list()):
            assert torch.equal(before, after)

    def test_resample_keeps_constant_features(self):
        """Test that a constant feature map stays constant at any target size."""
        p = FeaturePyramid(*(torch.full((1, 3, s, s + 2), 0.25) for s in (40, 20, 10, 5)))
        out = resample_pyramid(p, [32, 16, 8, 4])
        for f, size in zip(out.as_list(), (32, 16, 8, 4)):
            assert f.shape == (1, 3, size, size)
            torch.testing.assert_close(f, torch.full_like(f, 0.25))

    @pytest.mark.parametrize("value", [1.0, 0.5])
    def test_upsample_constant_mask(self, value):
        """Test that a constant mask stays constant after upsampling."""
        out = upsample_mask(torch.full((2, 1, 4, 4), value), (8, 12))
        assert out.shape == (2, 1, 8, 12)
        torch.testing.assert_close(out, torch.full_like(out, value))

    def test_upsample_single_pixel_mask(self):
        """Test that a 1×1 mask fills the whole target with its value."""
        out = upsample_mask(torch.tensor([[[[0.3]]]]), (5, 7))
        torch.testing.assert_close(out, torch.full((1, 1, 5, 7), 0.3))

    def test_upsample_stays_within_input_range(self):
        """Test that upsampled values remain between the input minimum and maximum."""
        m = torch.rand(1, 1, 4, 4, generator=torch.Generator().manual_seed(1))
        out = upsample_mask(m, (16, 16))
        assert out.min() >= m.min() - 1e-7 and out.max() <= m.max() + 1e-7

    def test_final_mask_crops_padding(self):
        """Test that final_mask resizes to the padded size and crops the pad."""
        m = torch.zeros(1, 1, 4, 4)
        out = final_mask(m, (48, 56), PadInfo(right=6, bottom=8))
        assert out.shape == (1, 1, 40, 50)


class TestDetectionHead:
    """Tests for image-level scoring."""

    def test_score_shape_and_range(self, micro_model, images):
        """Test that the head returns one probability per image."""
        with torch.no_grad():
            out = micro_model(images)
        assert out.detection.score.shape == (2,)
        assert ((out.detection.score >= 0) & (out.detection.score <= 1)).all()
        torch.testing.assert_close(out.detection.score, torch.sigmoid(out.detection.logit))

    def test_score_independent_of_stop_at(self, micro_model, images):
        """Test that early exit does not change the detection score."""
        with torch.no_grad():
            full = micro_model(images)
            partial = micro_model(images, stop_at=4)
        assert torch.equal(full.detection.score, partial.detection.score)

    def test_scores_follow_batch_order(self, micro_model, images):
        """Test that reordering the batch reorders the scores and nothing else."""
        with torch.no_grad():
            fixed = resample_pyramid(micro_model.backbone(images), micro_model.cfg.working_sizes)
            swapped = FeaturePyramid(*(f.flip(0) for f in fixed.as_list()))
            scores = detect(micro_model.head, fixed).score
            again = detect(micro_model.head, fixed).score
            reordered = detect(micro_model.head, swapped).score
        assert torch.equal(scores, again)
        torch.testing.assert_close(reordered, scores.flip(0))

    def test_head_gradients_match_finite_differences(self):
        """Test BCE gradients w.r.t. head parameters against finite differences in double precision."""
        torch.manual_seed(0)
        head = DetectionHead([2, 4, 8, 16], head_width=2, final_width=4).double().eval()
        p = FeaturePyramid(*(torch.randn(2, c, s, s, dtype=torch.float64) for c, s in zip((2, 4, 8, 16), (8, 4, 2, 1))))
        labels = torch.tensor([1.0, 0.0], dtype=torch.float64)
        names = ["incre.0.0.weight", "downsample.2.0.weight", "final.0.weight", "classifier.weight", "classifier.bias"]
        params = dict(head.named_parameters())
        inputs = tuple(params[name].detach().clone().requires_grad_(True) for name in names)

        def loss(*values):
            out = torch.func.functional_call(head, dict(zip(names, values)), (p,))
            return F.binary_cross_entropy(out.score, labels)

        assert torch.autograd.gradcheck(loss, inputs, eps=1e-6, atol=1e-6, rtol=1e-5)

    def test_mask_average_score(self):
        """Test that the baseline score is the mean of each mask."""
        mask = torch.zeros(2, 1, 4, 4)
        mask[0, 0, :2] = 1.0
        torch.testing.assert_close(mask_average_score(mask), torch.tensor([0.5, 0.0]))
        assert float(mask_average_score(torch.ones(3, 3))) == 1.0

    def test_mask_average_score_empty(self):
        """Test that an empty mask raises ShapeError."""
        with pytest.raises(ShapeError):
            mask_average_score(torch.zeros(0, 1, 4, 4))


class TestManipulationNet:
    """Tests for the assembled network."""

    @pytest.mark.parametrize("variant", SCCM_VARIANTS)
    def test_variants_run(self, variant, images):
        """Test that every attention ablation builds and produces full-size masks."""
        model = build_model(ModelConfig.micro().variant(variant), seed=0).eval()
        with torch.no_grad():
            out = model(images)
        assert out.masks.final.shape == (2, 1, 40, 48)

    def test_variant_parameter_order(self):
        """Test that removing attention branches removes parameters."""
        counts = {v: count_parameters(build_model(ModelConfig.micro().variant(v), seed=0)) for v in SCCM_VARIANTS}
        assert counts["wo_sa_ca"] < counts["wo_sa"] < counts["full"] < counts["wo_fs"]
        assert counts["wo_sa"] == counts["wo_ca"]

    def test_unknown_variant_rejected(self):
        """Test that an unknown variant name raises ValueError."""
        with pytest.raises(ValueError):
            ModelConfig.micro().variant("wo_everything")

    def test_seeded_builds_identical(self, images):
        """Test that two builds with one seed give identical outputs."""
        a = build_model(ModelConfig.micro(), seed=3).eval()
        b = build_model(ModelConfig.micro(), seed=3).eval()
        with torch.no_grad():
            assert torch.equal(a(images).masks.final, b(images).masks.final)

    def test_return_features(self, micro_model, images):
        """Test that return_features exposes the resampled pyramid."""
        with torch.no_grad():
            out = micro_model(images, return_features=True)
        assert [tuple(f.shape[-2:]) for f in out.features.as_list()] == [(32, 32), (16, 16), (8, 8), (4, 4)]

    def test_double_precision(self, images):
        """Test that the network runs in float64."""
        model = build_model(ModelConfig.micro(), seed=0).double().eval()
        with torch.no_grad():
            out = model(images.double())
        assert out.masks.final.dtype == torch.float64

"""
Tests for synthetic forgery generation.
"""

import numpy as np
import pytest
from scipy import ndimage

from maniploc.exceptions import ConfigurationError, GenerationError, ValidationError
from maniploc.models.configs import GenConfig
from maniploc.models.structures import KINDS, SourceImage, SourcePool
from maniploc.services.source_pool import ingest_source_images
from maniploc.services.synth_datagen import (
    epoch_sampler,
    generate_sample,
    harmonic_inpaint,
    make_pristine,
    make_removal,
    place_region,
    random_bezier_mask,
    synthesize_corpus,
)


@pytest.fixture(scope="module")
def pool():
    """Four procedural 64×64 source images."""
    return ingest_source_images(None, format="procedural", out_size=(64, 64), seed=0, pool_size=4)


@pytest.fixture
def cfg():
    """Generator settings for 64×64 samples."""
    return GenConfig(out_size=(64, 64), mask_area_bounds=(0.02, 0.15), per_epoch_per_class=4)


def source_of(pool: SourcePool, sample):
    """The pool image a sample was built on."""
    source_id = sample.provenance.get("target", sample.provenance.get("image"))
    return next(s for s in pool.images if s.source_id == source_id)


class TestRandomBezierMask:
    """Tests for the random region contour."""

    @pytest.mark.parametrize("seed", range(8))
    def test_binary_connected_and_in_bounds(self, seed):
        """Test that the mask is one 4-connected 0/1 region within the area bounds."""
        mask = random_bezier_mask(64, 80, np.random.default_rng(seed), area_bounds=(0.02, 0.2))
        assert mask.shape == (64, 80)
        assert set(np.unique(mask).tolist()) == {0, 1}
        assert 0.02 <= mask.mean() <= 0.2
        _, count = ndimage.label(mask)
        assert count == 1

    def test_deterministic_for_a_seed(self):
        """Test that one seed gives one mask."""
        a = random_bezier_mask(48, 48, np.random.default_rng(5))
        b = random_bezier_mask(48, 48, np.random.default_rng(5))
        assert np.array_equal(a, b)

    def test_small_image_rejected(self):
        """Test that sides below 32 raise ValidationError."""
        with pytest.raises(ValidationError):
            random_bezier_mask(31, 64, np.random.default_rng(0))


class TestPlaceRegion:
    """Tests for affine region placement."""

    def test_placement_avoids_forbidden_pixels(self, cfg):
        """Test that a forbidden footprint is never overlapped."""
        rng = np.random.default_rng(0)
        region = np.zeros((64, 64), dtype=np.uint8)
        region[4:12, 4:12] = 1
        _, warped, params = place_region(region, rng, cfg, forbidden=region)
        assert warped.any()
        assert not np.logical_and(warped, region).any()
        assert cfg.scale_range[0] <= params["scale"] <= cfg.scale_range[1]
        assert cfg.rotation_range[0] <= params["rotation"] <= cfg.rotation_range[1]

    def test_bounded_shift(self, cfg):
        """Test that max_shift caps the translation."""
        bounded = cfg.model_copy(update={"max_shift": 0.1})
        region = np.zeros((64, 64), dtype=np.uint8)
        region[24:40, 24:40] = 1
        _, _, params = place_region(region, np.random.default_rng(1), bounded)
        dx, dy = params["shift"]
        assert abs(dx) <= 0.1 * 64 + 1e-9 and abs(dy) <= 0.1 * 64 + 1e-9


class TestHarmonicInpaint:
    """Tests for the Laplace fill used by removal."""

    def test_reproduces_linear_ramp(self):
        """Test that a linear image is filled back exactly."""
        yy, xx = np.mgrid[0:32, 0:40].astype(np.float64)
        image = np.stack([xx / 40, yy / 32, (xx + yy) / 72], axis=2)
        mask = np.zeros((32, 40), dtype=np.uint8)
        mask[8:20, 10:30] = 1
        corrupted = image.copy()
        corrupted[mask.astype(bool)] = 0.0
        np.testing.assert_allclose(harmonic_inpaint(corrupted, mask), image, atol=1e-9)

    def test_empty_mask_is_identity(self):
        """Test that an empty mask returns an equal copy."""
        image = np.random.default_rng(0).random((8, 8, 3)).astype(np.float32)
        out = harmonic_inpaint(image, np.zeros((8, 8)))
        assert np.array_equal(out, image)
        assert out is not image

    def test_full_mask_rejected(self):
        """Test that a mask covering every pixel raises ValidationError."""
        with pytest.raises(ValidationError):
            harmonic_inpaint(np.zeros((4, 4, 3)), np.ones((4, 4)))


class TestSampleMakers:
    """Tests for the four sample classes."""

    @pytest.mark.parametrize("kind", ["splice", "copy_move", "removal"])
    def test_mask_is_exactly_the_changed_pixels(self, pool, cfg, kind):
        """Test that the GT mask marks precisely the pixels that differ from the target."""
        sample = generate_sample(pool, cfg, kind, index=0, seed=0)
        changed = np.any(sample.image != source_of(pool, sample).image, axis=2)
        assert np.array_equal(changed, sample.gt_mask.astype(bool))
        assert sample.label == 1 and sample.kind == kind

    def test_feathered_paste_keeps_mask_exact(self, pool, cfg):
        """Test that blending the paste border still marks exactly the changed pixels."""
        feathered = cfg.model_copy(update={"feather": True})
        sample = generate_sample(pool, feathered, "splice", index=0, seed=0)
        changed = np.any(sample.image != source_of(pool, sample).image, axis=2)
        assert np.array_equal(changed, sample.gt_mask.astype(bool))

    def test_pristine_sample(self, pool, cfg):
        """Test that a pristine sample is the untouched image with an empty mask."""
        sample = make_pristine(pool[0], np.random.default_rng(0), cfg)
        assert sample.label == 0
        assert not sample.gt_mask.any()
        assert np.array_equal(sample.image, pool[0].image)

    def test_images_on_eight_bit_grid(self, pool, cfg):
        """Test that generated pixel values are multiples of 1/255."""
        sample = generate_sample(pool, cfg, "splice", index=1, seed=0)
        scaled = sample.image.astype(np.float64) * 255
        assert np.allclose(scaled, np.round(scaled), atol=1e-3)
        assert sample.image.shape == (64, 64, 3)


class TestGenerateSample:
    """Tests for per-sample determinism and provenance."""

    def test_deterministic(self, pool, cfg):
        """Test that (seed, kind, index) fixes the sample."""
        a = generate_sample(pool, cfg, "copy_move", index=3, seed=9)
        b = generate_sample(pool, cfg, "copy_move", index=3, seed=9)
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.gt_mask, b.gt_mask)

    def test_provenance_records_seed(self, pool, cfg):
        """Test that provenance carries the seed, index and attempt."""
        sample = generate_sample(pool, cfg, "removal", index=2, seed=4)
        assert sample.provenance["seed"] == 4
        assert sample.provenance["index"] == 2
        assert sample.provenance["attempt"] >= 0

    def test_unknown_kind(self, pool, cfg):
        """Test that an unknown class raises ConfigurationError."""
        with pytest.raises(ConfigurationError):
            generate_sample(pool, cfg, "inpainting", index=0, seed=0)

    def test_empty_pool(self, cfg):
        """Test that an empty pool raises ConfigurationError."""
        with pytest.raises(ConfigurationError):
            generate_sample(SourcePool(images=[]), cfg, "pristine", index=0, seed=0)

    def test_removal_on_flat_image_rejected(self, cfg):
        """Test that refilling a region of a constant image raises GenerationError."""
        flat = SourceImage(np.full((64, 64, 3), 128 / 255, dtype=np.float32), "flat")
        with pytest.raises(GenerationError):
            make_removal(flat, np.random.default_rng(0), cfg)

    def test_flat_pool_exhausts_removal_attempts(self, cfg):
        """Test that a pool of constant images gives up after the configured attempts."""
        flat = SourcePool(images=[SourceImage(np.full((64, 64, 3), 128 / 255, dtype=np.float32), "flat")])
        with pytest.raises(GenerationError) as excinfo:
            generate_sample(flat, cfg.model_copy(update={"max_sample_attempts": 3}), "removal", index=0, seed=0)
        assert excinfo.value.attempts == 3


class TestSynthesizeCorpus:
    """Tests for corpus generation and per-epoch sampling."""

    def test_counts_and_order(self, pool, cfg):
        """Test that the corpus holds n samples of every kind, grouped by kind."""
        samples = synthesize_corpus(pool, cfg, n_per_class=2, seed=0)
        assert [s.kind for s in samples] == [k for k in KINDS for _ in range(2)]

    @pytest.mark.slow
    def test_parallel_matches_serial(self, pool, cfg):
        """Test that two worker processes produce the serial corpus."""
        serial = synthesize_corpus(pool, cfg, n_per_class=3, seed=1)
        parallel = synthesize_corpus(pool, cfg, n_per_class=3, seed=1, workers=2)
        for a, b in zip(serial, parallel):
            assert np.array_equal(a.image, b.image)
            assert np.array_equal(a.gt_mask, b.gt_mask)

    def test_epoch_sampler_counts(self):
        """Test that every class contributes exactly n items."""
        corpora = {"splice": list(range(10)), "pristine": list(range(100, 103))}
        stream = epoch_sampler(corpora, 5, np.random.default_rng(0))
        assert len(stream) == 10
        assert sum(1 for kind, _ in stream if kind == "splice") == 5
        splice_items = [item for kind, item in stream if kind == "splice"]
        assert len(set(splice_items)) == 5

    def test_epoch_sampler_deterministic(self):
        """Test that equal generators give equal streams."""
        corpora = {"a": list(range(8)), "b": list(range(8))}
        assert epoch_sampler(corpora, 4, np.random.default_rng(2)) == epoch_sampler(
            corpora, 4, np.random.default_rng(2)
        )

    def test_epoch_sampler_rejects_empty_class(self):
        """Test that a class without items raises ConfigurationError."""
        with pytest.raises(ConfigurationError):
            epoch_sampler({"a": [1], "b": []}, 1, np.random.default_rng(0))
        with pytest.raises(ConfigurationError):
            epoch_sampler({"a": [1]}, 0, np.random.default_rng(0))

    @pytest.mark.slow
    def test_region_area_statistics(self):
        """Test that region areas spread over the configured interval."""
        rng = np.random.default_rng(0)
        areas = np.array([random_bezier_mask(64, 64, rng).mean() for _ in range(300)])
        assert areas.min() >= 0.01 and areas.max() <= 0.30
        assert 0.08 <= areas.mean() <= 0.22
        assert areas.max() - areas.min() > 0.15

    @pytest.mark.slow
    def test_five_hundred_per_class(self, pool, cfg):
        """Test mask exactness and label consistency over 500 samples per class."""
        samples = synthesize_corpus(pool, cfg, n_per_class=500, seed=2)
        for sample in samples:
            source = source_of(pool, sample)
            changed = np.any(sample.image != source.image, axis=2)
            assert np.array_equal(changed, sample.gt_mask.astype(bool)), sample.provenance
            assert sample.label == int(sample.gt_mask.any())
            assert (sample.kind == "pristine") == (sample.label == 0)

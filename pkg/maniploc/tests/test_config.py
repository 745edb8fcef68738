"""
Tests for environment settings and the run config models.
"""

import pytest
from pydantic import ValidationError as PydanticValidationError

from maniploc.config import _safe_choice, _safe_float, _safe_int, config
from maniploc.models.configs import BackboneConfig, GenConfig, ModelConfig, RunConfig, TrainConfig


class TestEnvironmentParsing:
    """Tests for the environment variable helpers."""

    def test_float_in_range(self, monkeypatch):
        """Test that a valid value is parsed."""
        monkeypatch.setenv("MANIPLOC_TEST_FLOAT", "0.25")
        assert _safe_float("MANIPLOC_TEST_FLOAT", 1.0, 0.0, 1.0) == 0.25

    def test_float_out_of_range(self, monkeypatch):
        """Test that out-of-range values fall back to the default."""
        monkeypatch.setenv("MANIPLOC_TEST_FLOAT", "7")
        assert _safe_float("MANIPLOC_TEST_FLOAT", 1.0, 0.0, 1.0) == 1.0

    def test_float_unparseable(self, monkeypatch):
        """Test that garbage falls back to the default."""
        monkeypatch.setenv("MANIPLOC_TEST_FLOAT", "lots")
        assert _safe_float("MANIPLOC_TEST_FLOAT", 0.5) == 0.5

    def test_int_unset(self, monkeypatch):
        """Test that an unset variable gives the default."""
        monkeypatch.delenv("MANIPLOC_TEST_INT", raising=False)
        assert _safe_int("MANIPLOC_TEST_INT", 3, 0, 10) == 3

    def test_choice(self, monkeypatch):
        """Test that choices are case-insensitive and invalid ones fall back."""
        monkeypatch.setenv("MANIPLOC_TEST_CHOICE", "CPU")
        assert _safe_choice("MANIPLOC_TEST_CHOICE", "auto", ("cpu", "cuda", "auto")) == "cpu"
        monkeypatch.setenv("MANIPLOC_TEST_CHOICE", "tpu")
        assert _safe_choice("MANIPLOC_TEST_CHOICE", "auto", ("cpu", "cuda", "auto")) == "auto"

    def test_resolve_cpu(self):
        """Test that an explicit cpu preference is honoured."""
        assert config.resolve_device("cpu") == "cpu"


class TestRunConfigModels:
    """Tests for the pydantic run settings."""

    def test_defaults(self):
        """Test the default recipe."""
        cfg = RunConfig()
        assert cfg.train.batch_size == 10
        assert cfg.train.lr == 2e-4
        assert cfg.gen.out_size == (256, 256)
        assert cfg.model.sccm_ratios == (4, 2, 2, 1)
        assert cfg.model.working_sizes == [256, 128, 64, 32]

    def test_unknown_key_rejected(self):
        """Test that misspelled keys are refused."""
        with pytest.raises(PydanticValidationError):
            RunConfig(trian={})

    def test_json_round_trip(self):
        """Test that a dumped config rebuilds an equal config."""
        cfg = RunConfig(model=ModelConfig.micro(), train=TrainConfig(epochs=2))
        assert RunConfig(**cfg.model_dump(mode="json")) == cfg

    def test_corpus_size_multiple_of_working_size(self):
        """Test that synthesized samples must land on the working grid by an integer factor."""
        assert RunConfig(model=ModelConfig.micro(), gen=GenConfig(out_size=(64, 96))).gen.out_size == (64, 96)
        with pytest.raises(PydanticValidationError):
            RunConfig(model=ModelConfig.micro(), gen=GenConfig(out_size=(48, 64)))
        with pytest.raises(PydanticValidationError):
            RunConfig(gen=GenConfig(out_size=(128, 128)))

    def test_working_size_must_divide(self):
        """Test that a working size not divisible by s^3 is refused."""
        with pytest.raises(PydanticValidationError):
            ModelConfig(working_size=36)

    def test_ratio_must_divide_working_size(self):
        """Test that a fold ratio not dividing its working size is refused."""
        with pytest.raises(PydanticValidationError):
            ModelConfig.micro(sccm_ratios=(3, 2, 2, 1))

    def test_backbone_channels(self):
        """Test that channels double per scale."""
        backbone = BackboneConfig()
        assert [backbone.channels(n) for n in (1, 2, 3, 4)] == [18, 36, 72, 144]

    @pytest.mark.parametrize(
        "overrides",
        [
            {"out_size": (16, 64)},
            {"mask_area_bounds": (0.3, 0.1)},
            {"mask_area_bounds": (0.0, 0.2)},
            {"scale_range": (2.0, 0.5)},
            {"bezier_points": (2, 5)},
        ],
    )
    def test_generator_ranges(self, overrides):
        """Test that malformed generator intervals are refused."""
        with pytest.raises(PydanticValidationError):
            GenConfig(**overrides)

"""
Tests for the checkpoint container.
"""

import random

import numpy as np
import pytest
import torch

from maniploc.config import config
from maniploc.exceptions import CheckpointError
from maniploc.models.configs import ModelConfig
from maniploc.network.model import build_model
from maniploc.services.checkpoint import (
    MAGIC,
    Checkpoint,
    capture_rng_state,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    restore_model,
    restore_rng_state,
    save_checkpoint,
)


@pytest.fixture
def model():
    """A seeded micro network."""
    return build_model(ModelConfig.micro(), seed=0).eval()


@pytest.fixture
def ckpt(model):
    """A checkpoint holding the micro network and a real optimizer state."""
    optimizer = torch.optim.Adam(model.parameters(), lr=1e-3)
    loss = sum(p.sum() for p in model.parameters())
    loss.backward()
    optimizer.step()
    return Checkpoint(
        model_state=model.state_dict(),
        optimizer_state=optimizer.state_dict(),
        epoch=3,
        step=42,
        rng_state=capture_rng_state(),
        config={"model": ModelConfig.micro().model_dump(mode="json"), "seed": 0},
        metrics={"pixel_auc": 0.5, "undefined": None},
    )


class TestEncoding:
    """Tests for the byte layout."""

    def test_reencode_is_byte_identical(self, ckpt):
        """Test that decoding and re-encoding reproduces the bytes."""
        data = encode_checkpoint(ckpt)
        assert data.startswith(MAGIC)
        assert encode_checkpoint(decode_checkpoint(data)) == data

    def test_default_version_from_settings(self, model):
        """Test that a new checkpoint carries the configured format version next to its config snapshot."""
        fresh = Checkpoint(model_state=model.state_dict(), config={"seed": 1})
        assert fresh.format_version == config.CHECKPOINT_FORMAT_VERSION
        assert decode_checkpoint(encode_checkpoint(fresh)).config == {"seed": 1}

    def test_fields_survive(self, ckpt):
        """Test that scalars, containers and tensors come back equal."""
        back = decode_checkpoint(encode_checkpoint(ckpt))
        assert (back.epoch, back.step) == (3, 42)
        assert back.metrics == {"pixel_auc": 0.5, "undefined": None}
        assert list(back.model_state) == list(ckpt.model_state)
        for name, tensor in ckpt.model_state.items():
            assert torch.equal(back.model_state[name], tensor)
            assert back.model_state[name].dtype == tensor.dtype
        assert back.optimizer_state["param_groups"][0]["lr"] == 1e-3

    def test_tampered_byte_rejected(self, ckpt):
        """Test that flipping one blob byte fails the checksum."""
        data = bytearray(encode_checkpoint(ckpt))
        data[len(data) // 2] ^= 0xFF
        with pytest.raises(CheckpointError, match="checksum"):
            decode_checkpoint(bytes(data))

    def test_truncated_rejected(self, ckpt):
        """Test that a truncated file is rejected."""
        data = encode_checkpoint(ckpt)
        with pytest.raises(CheckpointError):
            decode_checkpoint(data[: len(data) - 100])
        with pytest.raises(CheckpointError, match="truncated"):
            decode_checkpoint(data[:16])

    def test_bad_magic_rejected(self, ckpt):
        """Test that a foreign file is rejected."""
        data = b"NOTACKPT" + encode_checkpoint(ckpt)[8:]
        with pytest.raises(CheckpointError, match="not a maniploc checkpoint"):
            decode_checkpoint(data)

    def test_version_mismatch_rejected(self, model):
        """Test that another format version is refused."""
        data = encode_checkpoint(Checkpoint(model_state=model.state_dict(), format_version=99))
        with pytest.raises(CheckpointError, match="format version 99"):
            decode_checkpoint(data)

    def test_unserializable_value(self, model):
        """Test that arbitrary objects cannot be stored."""
        with pytest.raises(CheckpointError):
            encode_checkpoint(Checkpoint(model_state=model.state_dict(), metrics={"bad": object()}))


class TestFiles:
    """Tests for saving, loading and restoring."""

    def test_save_load(self, ckpt, tmp_path):
        """Test that a saved file loads back and re-saves identically."""
        path = save_checkpoint(ckpt, tmp_path / "run" / "best.ckpt")
        loaded = load_checkpoint(path)
        save_checkpoint(loaded, tmp_path / "again.ckpt")
        assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()
        assert not (tmp_path / "run" / "best.ckpt.tmp").exists()

    def test_missing_file(self, tmp_path):
        """Test that a missing file raises CheckpointError."""
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_restore_model_reproduces_outputs(self, model, ckpt, tmp_path):
        """Test that the rebuilt network gives identical outputs."""
        restored = restore_model(load_checkpoint(save_checkpoint(ckpt, tmp_path / "m.ckpt")))
        images = torch.rand(1, 3, 24, 24, generator=torch.Generator().manual_seed(0))
        with torch.no_grad():
            a, b = model(images), restored(images)
        assert torch.equal(a.masks.final, b.masks.final)
        assert torch.equal(a.detection.score, b.detection.score)
        assert not restored.training

    def test_restore_without_model_section(self, model):
        """Test that a config without the model section raises CheckpointError."""
        with pytest.raises(CheckpointError, match="model section"):
            restore_model(Checkpoint(model_state=model.state_dict()))

    def test_restore_mismatched_weights(self, model):
        """Test that weights of another architecture raise CheckpointError."""
        config = {"model": ModelConfig.micro(mask_hidden=6).model_dump(mode="json")}
        with pytest.raises(CheckpointError, match="do not fit"):
            restore_model(Checkpoint(model_state=model.state_dict(), config=config))


class TestRngState:
    """Tests for generator state capture."""

    def test_round_trip_through_container(self):
        """Test that restored generators continue the captured streams."""
        random.seed(1)
        np.random.seed(2)
        torch.manual_seed(3)
        state = decode_checkpoint(encode_checkpoint(Checkpoint(model_state={}, rng_state=capture_rng_state()))).rng_state
        expected = (random.random(), np.random.rand(), torch.rand(1).item())
        restore_rng_state(state)
        assert (random.random(), np.random.rand(), torch.rand(1).item()) == expected

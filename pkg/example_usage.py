"""
Example usage script for the maniploc system.

This script demonstrates how to use the system programmatically
(as opposed to using the CLI).
"""

import sys
from pathlib import Path

# Add project root to Python path
sys.path.insert(0, str(Path(__file__).parent))

from maniploc.config import config
from maniploc.models.configs import DistortionSpec, GenConfig, ModelConfig, TrainConfig
from maniploc.network.model import build_model, parameter_budget
from maniploc.services.corpus import ForgeryDataset
from maniploc.services.evaluator import evaluate_detection, evaluate_localization
from maniploc.services.inference import infer, time_early_exit
from maniploc.services.source_pool import ingest_source_images
from maniploc.services.synth_datagen import synthesize_corpus
from maniploc.services.trainer import train


def example_1_corpus():
    """Build a small procedural corpus."""
    print("\n" + "=" * 60)
    print("EXAMPLE 1: Synthetic Corpus")
    print("=" * 60)

    gen = GenConfig(out_size=(64, 64), rng_seed=7)
    pool = ingest_source_images(None, format="procedural", out_size=gen.out_size, seed=7, pool_size=16)
    samples = synthesize_corpus(pool, gen, n_per_class=4)
    for sample in samples[::4]:
        print(f"  {sample.kind:10s} label {sample.label}  forged pixels {int(sample.gt_mask.sum())}")
    return samples


def example_2_training(samples):
    """Train the micro preset for a few steps and evaluate it."""
    print("\n" + "=" * 60)
    print("EXAMPLE 2: Training the Micro Preset")
    print("=" * 60)

    model = build_model(ModelConfig.micro(working_size=64), seed=0)
    print(f"Parameters: {parameter_budget(model)}")
    dataset = ForgeryDataset(samples)
    cfg = TrainConfig(epochs=2, per_epoch_per_class=4, batch_size=4, device="cpu")
    result = train(model, dataset, cfg, val_set=dataset, run_dir=config.RUNS_DIR / "example")
    print(f"Losses per epoch: {result.losses}")

    print(evaluate_localization(model, dataset).model_dump(exclude={"extras"}))
    print(evaluate_detection(model, dataset, mode="head").model_dump(exclude={"extras"}))
    print(evaluate_localization(model, dataset, DistortionSpec(kind="jpegcomp", param=50)).pixel_auc)
    return model


def example_3_inference(model, samples):
    """Early exit and timing on one image."""
    print("\n" + "=" * 60)
    print("EXAMPLE 3: Inference and Early Exit")
    print("=" * 60)

    image = samples[0].image
    for stop_at in (4, 1):
        result = infer(model, image, stop_at=stop_at)
        print(f"  stop_at={stop_at}: score {result.score:.3f}, scales {sorted(result.masks)}")
    print(time_early_exit(model, image, repeats=3))


def main():
    """Run all examples."""
    print("\n" + "=" * 60)
    print("maniploc - EXAMPLE USAGE")
    print("=" * 60)

    samples = example_1_corpus()
    model = example_2_training(samples)
    example_3_inference(model, samples)

    print("\n" + "=" * 60)
    print("Examples complete!")
    print("=" * 60 + "\n")


if __name__ == "__main__":
    main()

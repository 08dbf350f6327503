"""Shared fixtures: synthetic corpora and the session-wide smoke training run."""

import numpy as np
import pytest
from scipy import ndimage

from mmfuse import NetworkConfig, TrainConfig, image_io, training

# Desk-scale configuration for the 200-step smoke run (8 images, 64x64).
SMOKE_NET = NetworkConfig(
    encoder_channels=16,
    encoder_dilations=(1, 2, 4, 1),
    embed_dim=48,
    window_size=4,
    num_heads=2,
    patch_size=2,
    decoder_depth=3,
)
SMOKE_TRAIN = TrainConfig(
    lr_init=5e-3,
    lr_final=1e-6,
    batch_size=4,
    epochs=100,  # 8 images / batch 4 -> 2 steps per epoch -> 200 steps
    crop_size=64,
    lambda_1=0.5,
    seed=7,
)


def synthetic_image(rng, size=64, low=20, high=235):
    """Smooth random blob image with values safely inside the 8-bit range."""
    base = rng.normal(size=(size // 8, size // 8))
    img = ndimage.zoom(base, 8, order=3)
    img = (img - img.min()) / (img.max() - img.min())
    return (img * (high - low) + low).astype(np.uint8)


def write_corpus(directory, count=8, size=64, seed=1234):
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        path = directory / f"img_{i}.png"
        image_io.save_image(image_io.ImageSample(synthetic_image(rng, size), 8, "gray"), path)
        paths.append(path)
    return paths


@pytest.fixture(scope="session")
def smoke_corpus(tmp_path_factory):
    directory = tmp_path_factory.mktemp("corpus")
    write_corpus(directory)
    return directory


def read_loss_trace(log_path):
    lines = log_path.read_text().strip().splitlines()[1:]
    return [float(line.split(",")[2]) for line in lines]


@pytest.fixture(scope="session")
def smoke_run(smoke_corpus, tmp_path_factory):
    """One full 200-step training run shared across the session."""
    out = tmp_path_factory.mktemp("smoke")
    ckpt_path = out / "smoke.pt"
    log_path = out / "smoke.loss.csv"
    ckpt = training.fit(
        smoke_corpus, SMOKE_NET, SMOKE_TRAIN, checkpoint_path=ckpt_path, log_path=log_path
    )
    return {
        "corpus": smoke_corpus,
        "checkpoint": ckpt,
        "checkpoint_path": ckpt_path,
        "log_path": log_path,
        "trace": read_loss_trace(log_path),
    }

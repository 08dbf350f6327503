"""Unsupervised training loop: the same image is fed to both modality
branches and the network learns to reconstruct it, so no registered
multimodal pairs (and no ground truth) are ever needed."""

from __future__ import annotations

import math
import random
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import image_io
from .config import AblationFlags, NetworkConfig, TrainConfig
from .losses import LossWeights, total_loss
from .model import FusionNet

CHECKPOINT_VERSION = 1

TRAIN_SUFFIXES = image_io.SUPPORTED_SUFFIXES + (".jpg", ".jpeg", ".bmp")


class NumericalError(RuntimeError):
    """Raised when the loss or a gradient stops being finite."""


def seed_all(seed: int) -> None:
    """Seed every stochastic source: init, shuffling, cropping."""
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def lr_at(step, total_steps, cfg: TrainConfig) -> float:
    """Cosine-annealed learning rate at a given step of the run."""
    if not 0 <= step <= max(total_steps, 0):
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if total_steps == 0:
        return cfg.lr_init
    cos = math.cos(math.pi * step / total_steps)
    return cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + cos)


def build_model(cfg: NetworkConfig, ablation: AblationFlags | None = None) -> FusionNet:
    return FusionNet(cfg, ablation)


def make_optimizer(model, cfg: TrainConfig):
    return torch.optim.AdamW(
        model.parameters(),
        lr=cfg.lr_init,
        betas=(cfg.beta1, cfg.beta2),
        weight_decay=cfg.weight_decay,
    )


def train_step(batch, model, optimizer, lr, cfg: TrainConfig) -> float:
    """One same-image reconstruction step at the given learning rate."""
    window = min(11, batch.shape[-2], batch.shape[-1])
    output = model(batch, batch)
    loss = total_loss(output, batch, LossWeights(cfg.lambda_1), window_size=window)
    optimizer.zero_grad()
    loss.backward()
    if not torch.isfinite(loss):
        bad = next(
            (
                name
                for name, p in model.named_parameters()
                if p.grad is not None and not torch.isfinite(p.grad).all()
            ),
            "<none>",
        )
        raise NumericalError(
            f"non-finite loss {loss.item()}; first non-finite parameter gradient: {bad}"
        )
    if cfg.grad_clip:
        torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.step()
    return float(loss.detach())


@dataclass
class Checkpoint:
    """Versioned container for the parameters and both config snapshots."""

    state_dict: dict
    net_config: NetworkConfig
    train_config: TrainConfig
    step: int
    format_version: int = CHECKPOINT_VERSION

    def build_model(self) -> FusionNet:
        model = build_model(self.net_config, self.train_config.ablation)
        model.load_state_dict(self.state_dict)
        model.eval()
        return model


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    torch.save(
        {
            "format_version": ckpt.format_version,
            "state_dict": ckpt.state_dict,
            "net_config": asdict(ckpt.net_config),
            "train_config": asdict(ckpt.train_config),
            "step": ckpt.step,
        },
        path,
    )


def load_checkpoint(path) -> Checkpoint:
    data = torch.load(path, weights_only=False)
    version = data.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version!r}")
    return Checkpoint(
        state_dict=data["state_dict"],
        net_config=NetworkConfig(**data["net_config"]),
        train_config=TrainConfig(**data["train_config"]),
        step=data["step"],
    )


def load_corpus(corpus_dir) -> list[np.ndarray]:
    """Load every readable image as a grayscale [0, 1] float array."""
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {corpus_dir}")
    images = []
    for path in sorted(corpus_dir.iterdir()):
        if path.suffix.lower() not in TRAIN_SUFFIXES:
            continue
        try:
            sample = image_io.to_gray(image_io.load_image(path))
        except Exception as exc:  # unreadable file: skip, keep training
            warnings.warn(f"skipping unreadable image {path}: {exc}", stacklevel=2)
            continue
        images.append(image_io.to_unit(sample.pixels, sample.bit_depth))
    if not images:
        raise ValueError(f"no readable training images in {corpus_dir}")
    return images


def _crop_or_resize(img, size, rng):
    h, w = img.shape
    if h >= size and w >= size:
        top = int(rng.integers(0, h - size + 1))
        left = int(rng.integers(0, w - size + 1))
        return img[top : top + size, left : left + size]
    t = torch.from_numpy(img[None, None].astype(np.float32))
    return F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False)[0, 0].numpy()


def make_batch(images, cfg: TrainConfig, rng, order) -> torch.Tensor:
    """Assemble one [B, 1, crop, crop] batch in [-1, 1] from corpus indices."""
    idx = list(order)
    while len(idx) < cfg.batch_size:  # pad short batches by resampling
        idx.append(int(rng.integers(0, len(images))))
    crops = [_crop_or_resize(images[i], cfg.crop_size, rng) for i in idx]
    batch = np.stack(crops)[:, None].astype(np.float32) * 2.0 - 1.0
    return torch.from_numpy(batch)


def fit(
    corpus_dir,
    net_cfg: NetworkConfig,
    train_cfg: TrainConfig,
    checkpoint_path=None,
    log_path=None,
) -> Checkpoint:
    """Run the full training protocol and return the final checkpoint.

    Writes a step,lr,loss log when log_path is given and the checkpoint
    file when checkpoint_path is given.
    """
    seed_all(train_cfg.seed)
    images = load_corpus(corpus_dir)
    rng = np.random.default_rng(train_cfg.seed)
    model = build_model(net_cfg, train_cfg.ablation)
    model.train()
    optimizer = make_optimizer(model, train_cfg)

    steps_per_epoch = math.ceil(len(images) / train_cfg.batch_size)
    total_steps = train_cfg.epochs * steps_per_epoch
    log_lines = ["step,lr,loss"]
    step = 0
    for _ in range(train_cfg.epochs):
        perm = rng.permutation(len(images))
        for s in range(steps_per_epoch):
            order = perm[s * train_cfg.batch_size : (s + 1) * train_cfg.batch_size]
            batch = make_batch(images, train_cfg, rng, order)
            lr = lr_at(step, total_steps, train_cfg)
            loss = train_step(batch, model, optimizer, lr, train_cfg)
            log_lines.append(f"{step},{lr!r},{loss!r}")
            step += 1

    ckpt = Checkpoint(model.state_dict(), net_cfg, train_cfg, step)
    if log_path is not None:
        Path(log_path).write_text("\n".join(log_lines) + "\n")
    if checkpoint_path is not None:
        save_checkpoint(ckpt, checkpoint_path)
    return ckpt


def evaluate_loss(model, batch, lambda_1=10.0) -> float:
    """Same-image reconstruction loss on a fixed batch (no gradient)."""
    window = min(11, batch.shape[-2], batch.shape[-1])
    with torch.no_grad():
        out = model(batch, batch)
        return float(total_loss(out, batch, LossWeights(lambda_1), window_size=window))

"""Hybrid CNN-Transformer multimodal image fusion."""

from .bfm import average_branches, branch_weights, fuse_branches
from .config import AblationFlags, NetworkConfig, TrainConfig
from .decoder import (
    Decoder,
    TokenGrid,
    window_attention_macs,
    window_partition,
    window_reverse,
)
from .encoder import CanEncoder, encode_pair
from .losses import LossWeights, mse_loss, ssim, total_loss
from .metrics import MetricReport, evaluate_dir, fmi, psnr_fusion, qcv
from .model import FusionNet
from .nca import ChannelAttention, channel_affinity, nca_pair
from .training import (
    Checkpoint,
    build_model,
    fit,
    load_checkpoint,
    lr_at,
    save_checkpoint,
    seed_all,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "AblationFlags",
    "CanEncoder",
    "ChannelAttention",
    "Checkpoint",
    "Decoder",
    "FusionNet",
    "LossWeights",
    "MetricReport",
    "NetworkConfig",
    "TokenGrid",
    "TrainConfig",
    "average_branches",
    "branch_weights",
    "build_model",
    "channel_affinity",
    "encode_pair",
    "evaluate_dir",
    "fit",
    "fmi",
    "fuse_branches",
    "load_checkpoint",
    "lr_at",
    "mse_loss",
    "nca_pair",
    "psnr_fusion",
    "qcv",
    "save_checkpoint",
    "seed_all",
    "ssim",
    "total_loss",
    "train_step",
    "window_attention_macs",
    "window_partition",
    "window_reverse",
]

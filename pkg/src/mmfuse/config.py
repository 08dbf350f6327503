"""Configuration dataclasses for the fusion network and its training loop."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path


@dataclass
class NetworkConfig:
    """Architectural hyperparameters.

    encoder_channels / encoder_dilations / kernel_size describe the dilated
    convolution stack; embed_dim / window_size / num_heads / patch_size /
    decoder_depth describe the windowed-attention decoder.
    """

    encoder_channels: int = 64
    encoder_dilations: tuple[int, ...] = (1, 2, 4, 8, 1)
    kernel_size: int = 3
    negative_slope: float = 0.2
    embed_dim: int = 96
    window_size: int = 8
    num_heads: int = 3
    patch_size: int = 2
    decoder_depth: int = 3
    # Optional 1x1-conv embeddings inside the channel-attention similarity,
    # and sharing of the residual gate between the two attention blocks.
    nca_embedded: bool = False
    nca_shared: bool = False

    def __post_init__(self):
        self.encoder_dilations = tuple(int(d) for d in self.encoder_dilations)
        if self.encoder_channels < 1:
            raise ValueError("encoder_channels must be >= 1")
        if not self.encoder_dilations or any(d < 1 for d in self.encoder_dilations):
            raise ValueError("encoder_dilations must be a non-empty list of integers >= 1")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be a positive odd integer")
        if not 0.0 < self.negative_slope < 1.0:
            raise ValueError("negative_slope must lie in (0, 1)")
        for name in ("embed_dim", "window_size", "num_heads", "patch_size", "decoder_depth"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.embed_dim % self.num_heads != 0:
            raise ValueError(
                f"embed_dim ({self.embed_dim}) must be divisible by num_heads ({self.num_heads})"
            )


@dataclass
class AblationFlags:
    """Structural switches for the ablation variants."""

    disable_stb: bool = False
    disable_nca: bool = False
    disable_bfm: bool = False


@dataclass
class TrainConfig:
    """Optimizer, schedule and seeding parameters of the training protocol."""

    lr_init: float = 1e-4
    lr_final: float = 1e-8
    schedule: str = "cosine"
    batch_size: int = 16
    epochs: int = 8
    crop_size: int = 256
    lambda_1: float = 10.0
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    grad_clip: float = 1.0  # 0 disables clipping
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def __post_init__(self):
        if isinstance(self.ablation, dict):
            self.ablation = AblationFlags(**self.ablation)
        if self.schedule != "cosine":
            raise ValueError(f"unsupported schedule {self.schedule!r} (only 'cosine')")
        if self.lr_final > self.lr_init:
            raise ValueError("lr_final must not exceed lr_init")
        for name in ("batch_size", "epochs", "crop_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.lambda_1 >= 0:
            raise ValueError("lambda_1 must be a finite non-negative number")
        if self.grad_clip < 0:
            raise ValueError("grad_clip must be >= 0 (0 disables)")


# Config files are flat key=value text; ablation flags are spelled as their
# field names (disable_stb, ...).  Unknown keys are rejected outright.

_NET_FIELDS = {f.name: f for f in fields(NetworkConfig)}
_TRAIN_FIELDS = {f.name: f for f in fields(TrainConfig) if f.name != "ablation"}
_ABLATION_FIELDS = {f.name: f for f in fields(AblationFlags)}


def _parse_value(key, raw, typ):
    raw = raw.strip()
    if typ is bool or typ == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"config key {key!r}: expected a boolean, got {raw!r}")
    if typ is int or typ == "int":
        return int(raw)
    if typ is float or typ == "float":
        return float(raw)
    if "tuple" in str(typ):
        return tuple(int(tok) for tok in raw.replace(",", " ").split())
    return raw


def parse_config_text(text: str) -> tuple[NetworkConfig, TrainConfig]:
    """Parse flat key=value configuration text into the two config objects."""
    net_kwargs, train_kwargs, ablation_kwargs = {}, {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key in _NET_FIELDS:
            net_kwargs[key] = _parse_value(key, raw, _NET_FIELDS[key].type)
        elif key in _TRAIN_FIELDS:
            train_kwargs[key] = _parse_value(key, raw, _TRAIN_FIELDS[key].type)
        elif key in _ABLATION_FIELDS:
            ablation_kwargs[key] = _parse_value(key, raw, bool)
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    train_kwargs["ablation"] = AblationFlags(**ablation_kwargs)
    return NetworkConfig(**net_kwargs), TrainConfig(**train_kwargs)


def parse_config_file(path) -> tuple[NetworkConfig, TrainConfig]:
    return parse_config_text(Path(path).read_text())

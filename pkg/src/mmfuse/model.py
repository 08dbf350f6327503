"""Full fusion network: shared two-branch encoder, cross-modal channel
attention on each branch, adaptive branch fusion, transformer decoder."""

from __future__ import annotations

import torch.nn as nn

from .bfm import BranchFusion
from .config import AblationFlags, NetworkConfig
from .decoder import Decoder
from .encoder import CanEncoder, encode_pair
from .nca import ChannelAttention, nca_pair


class FusionNet(nn.Module):
    """End-to-end fusion model.

    Both modality branches share one encoder (training feeds the same image
    to both, which makes separate branch weights unidentifiable).  Ablation
    flags swap attention for identity, the weighted merge for an average,
    and the transformer blocks for convolution + activation stacks.
    """

    def __init__(self, cfg: NetworkConfig, ablation: AblationFlags | None = None):
        super().__init__()
        self.config = cfg
        self.ablation = ablation or AblationFlags()
        self.encoder = CanEncoder(cfg)
        if self.ablation.disable_nca:
            self.attn_1 = None
            self.attn_2 = None
        else:
            self.attn_1 = ChannelAttention(cfg.encoder_channels, embedded=cfg.nca_embedded)
            self.attn_2 = (
                self.attn_1
                if cfg.nca_shared
                else ChannelAttention(cfg.encoder_channels, embedded=cfg.nca_embedded)
            )
        self.fusion = BranchFusion("average" if self.ablation.disable_bfm else "weighted")
        self.decoder = Decoder(cfg, use_transformer=not self.ablation.disable_stb)

    def fuse_features(self, x1, x2):
        """Encoder + attention + branch merge, without the decoder."""
        f1, f2 = encode_pair(x1, x2, self.encoder)
        if self.attn_1 is not None:
            f1, f2 = nca_pair(f1, f2, self.attn_1, self.attn_2)
        return self.fusion(f1, f2)

    def forward(self, x1, x2):
        return self.decoder(self.fuse_features(x1, x2))

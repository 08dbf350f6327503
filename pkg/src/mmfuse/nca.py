"""Non-local cross-modal channel attention.

Each output channel of the primary feature is augmented with a softmax-
weighted aggregation over all primary channels, where the weights come from
inner products between the vice feature's channels and the primary feature's
channels.  A learnable scalar gate (initialised to zero) blends the attended
signal back into the primary feature, so the block starts as an identity.
"""

from __future__ import annotations

import torch
import torch.nn as nn


def _check_pair(phi_a, phi_b):
    if phi_a.dim() != 4 or phi_b.dim() != 4:
        raise ValueError("channel attention expects [B, C, H, W] features")
    if phi_a.shape != phi_b.shape:
        raise ValueError(f"feature shapes differ: {tuple(phi_a.shape)} vs {tuple(phi_b.shape)}")


def channel_affinity(phi_v, phi_p):
    """Positive channel-to-channel affinity matrix [B, C, C].

    Entry (i, j) is exp of the inner product between channel i of phi_v and
    channel j of phi_p, each flattened over its H*W positions and scaled by
    1/(H*W).  The per-row maximum is subtracted before exponentiation, so the
    entries are safe to normalise into softmax weights.
    """
    _check_pair(phi_v, phi_p)
    b, c, h, w = phi_v.shape
    v = phi_v.reshape(b, c, h * w)
    p = phi_p.reshape(b, c, h * w)
    logits = torch.bmm(v, p.transpose(1, 2)) / float(h * w)
    logits = logits - logits.max(dim=2, keepdim=True).values
    return torch.exp(logits)


class ChannelAttention(nn.Module):
    """Cross-modal channel attention with a zero-initialised residual gate.

    Args:
        channels: feature width, only required when embedded=True.
        embedded: apply learned 1x1-conv embeddings inside the similarity
            and to the aggregated channels (channel count is preserved).
    """

    def __init__(self, channels: int | None = None, embedded: bool = False):
        super().__init__()
        self.alpha = nn.Parameter(torch.zeros(()))
        self.embedded = embedded
        if embedded:
            if channels is None:
                raise ValueError("channels is required when embedded=True")
            self.embed_v = nn.Conv2d(channels, channels, 1)
            self.embed_p = nn.Conv2d(channels, channels, 1)
            self.embed_g = nn.Conv2d(channels, channels, 1)

    def forward(self, phi_p, phi_v):
        _check_pair(phi_p, phi_v)
        b, c, h, w = phi_p.shape
        if self.embedded:
            affinity = channel_affinity(self.embed_v(phi_v), self.embed_p(phi_p))
            values = self.embed_g(phi_p)
        else:
            affinity = channel_affinity(phi_v, phi_p)
            values = phi_p
        weights = affinity / affinity.sum(dim=2, keepdim=True)
        y = torch.bmm(weights, values.reshape(b, c, h * w)).reshape(b, c, h, w)
        return phi_p + self.alpha * y


def nca_pair(phi_1, phi_2, attn_1: ChannelAttention, attn_2: ChannelAttention):
    """Attend both branches, each playing the primary role once."""
    return attn_1(phi_1, phi_2), attn_2(phi_2, phi_1)

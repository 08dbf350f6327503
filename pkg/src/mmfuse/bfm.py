"""Adaptive branch fusion: elementwise sigmoid-weighted merge of two features.

The merge is parameter-free.  Each branch's weight is its sigmoid response
divided by the sum of both responses plus a small epsilon, so the weights
live strictly inside (0, 1) and sum to just under one.
"""

from __future__ import annotations

import torch
import torch.nn as nn

EPSILON = 1e-8
# features are clamped before the sigmoid so the denominator is always
# >= 2*sigmoid(-CLAMP), far above underflow
CLAMP = 50.0


def _check_pair(phi_1, phi_2):
    if phi_1.shape != phi_2.shape:
        raise ValueError(f"branch shapes differ: {tuple(phi_1.shape)} vs {tuple(phi_2.shape)}")


def branch_weights(phi_1, phi_2, eps: float = EPSILON):
    """Elementwise fusion weights (w1, w2) for the two branches."""
    _check_pair(phi_1, phi_2)
    s1 = torch.sigmoid(phi_1.clamp(-CLAMP, CLAMP))
    s2 = torch.sigmoid(phi_2.clamp(-CLAMP, CLAMP))
    den = s1 + s2 + eps
    return s1 / den, s2 / den


def fuse_branches(phi_1, phi_2, eps: float = EPSILON):
    """Weighted elementwise merge of the two branch features."""
    w1, w2 = branch_weights(phi_1, phi_2, eps)
    return w1 * phi_1 + w2 * phi_2


def average_branches(phi_1, phi_2):
    """Plain average of the two branches (the fusion-ablation fallback)."""
    _check_pair(phi_1, phi_2)
    return (phi_1 + phi_2) / 2


class BranchFusion(nn.Module):
    """Module wrapper selecting the weighted merge or the average fallback."""

    def __init__(self, mode: str = "weighted"):
        super().__init__()
        if mode not in ("weighted", "average"):
            raise ValueError(f"unknown fusion mode {mode!r}")
        self.mode = mode

    def forward(self, phi_1, phi_2):
        if self.mode == "weighted":
            return fuse_branches(phi_1, phi_2)
        return average_branches(phi_1, phi_2)

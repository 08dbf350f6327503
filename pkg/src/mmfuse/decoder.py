"""Transformer-based reconstruction head.

Patch embedding bridges the convolutional features into a token grid, a
short stack of windowed-attention blocks (plain and cyclically shifted
windows alternating) refines the tokens with linear cost in token count,
and a small convolutional tail with a Tanh output maps the tokens back to
a single-channel image in (-1, 1).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from .config import NetworkConfig

MASK_SENTINEL = -100.0


@dataclass
class TokenGrid:
    """Token sequence [B, L, D] plus its grid shape and output crop size."""

    tokens: torch.Tensor
    grid_dims: tuple[int, int]
    crop_dims: tuple[int, int]

    def __post_init__(self):
        ht, wt = self.grid_dims
        if self.tokens.dim() != 3 or self.tokens.shape[1] != ht * wt:
            raise ValueError(
                f"token shape {tuple(self.tokens.shape)} inconsistent with grid {self.grid_dims}"
            )


@dataclass
class WindowedTokens:
    """Window-partitioned tokens [B*nW, M*M, D] plus the layout metadata."""

    windows: torch.Tensor
    window: int
    batch: int
    grid_dims: tuple[int, int]
    padded_dims: tuple[int, int]
    crop_dims: tuple[int, int]


def _partition(x, window):
    # x: [B, H, W, D] with H, W divisible by window -> [B*nW, window*window, D]
    b, h, w, d = x.shape
    x = x.view(b, h // window, window, w // window, window, d)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window * window, d)


def _reverse(windows, window, h, w):
    b = windows.shape[0] // ((h // window) * (w // window))
    x = windows.view(b, h // window, w // window, window, window, -1)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(b, h, w, -1)


def effective_window(window, grid_dims):
    """Clamp the window to the grid (with a warning) when it does not fit."""
    ht, wt = grid_dims
    if window > min(ht, wt):
        eff = min(ht, wt)
        warnings.warn(
            f"window {window} larger than token grid {grid_dims}; clamped to {eff}",
            stacklevel=2,
        )
        return eff
    return window


def window_partition(grid: TokenGrid, window: int) -> WindowedTokens:
    """Split the token grid into non-overlapping windows, zero-padding as needed."""
    ht, wt = grid.grid_dims
    window = effective_window(window, grid.grid_dims)
    b, _, d = grid.tokens.shape
    x = grid.tokens.view(b, ht, wt, d)
    pad_h = (window - ht % window) % window
    pad_w = (window - wt % window) % window
    if pad_h or pad_w:
        x = F.pad(x, (0, 0, 0, pad_w, 0, pad_h))
    return WindowedTokens(
        windows=_partition(x, window),
        window=window,
        batch=b,
        grid_dims=grid.grid_dims,
        padded_dims=(ht + pad_h, wt + pad_w),
        crop_dims=grid.crop_dims,
    )


def window_reverse(win: WindowedTokens) -> TokenGrid:
    """Exact inverse of window_partition (padding is cropped away)."""
    hp, wp = win.padded_dims
    ht, wt = win.grid_dims
    x = _reverse(win.windows, win.window, hp, wp)
    x = x[:, :ht, :wt, :]
    return TokenGrid(x.reshape(win.batch, ht * wt, -1), win.grid_dims, win.crop_dims)


def shifted_window_mask(grid_dims, window, shift, device=None, dtype=torch.float32):
    """Additive attention mask [nW, M*M, M*M] for cyclically shifted windows.

    Token pairs coming from different pre-shift regions get MASK_SENTINEL;
    all other entries (and the whole mask when shift == 0) are zero.
    """
    ht, wt = grid_dims
    nw = (ht // window) * (wt // window)
    if shift == 0:
        return torch.zeros(nw, window * window, window * window, device=device, dtype=dtype)
    region = torch.zeros(1, ht, wt, 1, device=device)
    cnt = 0
    for hs in (slice(0, -window), slice(-window, -shift), slice(-shift, None)):
        for ws in (slice(0, -window), slice(-window, -shift), slice(-shift, None)):
            region[:, hs, ws, :] = cnt
            cnt += 1
    region_windows = _partition(region, window).squeeze(-1)  # [nW, M*M]
    diff = region_windows.unsqueeze(1) - region_windows.unsqueeze(2)
    return torch.where(
        diff != 0,
        torch.tensor(MASK_SENTINEL, dtype=dtype, device=device),
        torch.tensor(0.0, dtype=dtype, device=device),
    )


def window_attention_macs(num_tokens, window, dim):
    """Analytic multiply-accumulate count of one windowed self-attention pass.

    qkv and output projections cost 4*L*D^2; the window-local score and
    weighted-sum products cost 2*L*M^2*D.  Linear in L at fixed window.
    """
    num_windows = num_tokens // (window * window)
    proj = 4 * num_tokens * dim * dim
    attn = 2 * num_windows * (window * window) ** 2 * dim
    return proj + attn


class PatchEmbed(nn.Module):
    """Non-overlapping patch projection from feature maps to tokens.

    Args:
        in_channels: feature width C of the incoming maps.
        embed_dim: token width D.
        patch_size: side length of the square patches.
    """

    def __init__(self, in_channels, embed_dim, patch_size):
        super().__init__()
        self.patch_size = patch_size
        self.proj = nn.Conv2d(in_channels, embed_dim, patch_size, stride=patch_size)

    def forward(self, x) -> TokenGrid:
        if x.dim() != 4:
            raise ValueError(f"expected [B, C, H, W], got {tuple(x.shape)}")
        b, c, h, w = x.shape
        if h == 0 or w == 0 or b == 0:
            raise ValueError("zero-sized input")
        p = self.patch_size
        pad_h = (p - h % p) % p
        pad_w = (p - w % p) % p
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h), mode="reflect")
        tokens = self.proj(x)  # [B, D, H/p, W/p]
        ht, wt = tokens.shape[-2:]
        tokens = tokens.flatten(2).transpose(1, 2)
        return TokenGrid(tokens, (ht, wt), (h, w))


class PatchUnembed(nn.Module):
    """Linear projection from tokens back to pixel patches."""

    def __init__(self, embed_dim, out_channels, patch_size):
        super().__init__()
        self.patch_size = patch_size
        self.out_channels = out_channels
        self.proj = nn.Linear(embed_dim, out_channels * patch_size * patch_size)

    def forward(self, grid: TokenGrid):
        ht, wt = grid.grid_dims
        x = self.proj(grid.tokens)
        return rearrange(
            x,
            "b (ht wt) (c ph pw) -> b c (ht ph) (wt pw)",
            ht=ht,
            wt=wt,
            c=self.out_channels,
            ph=self.patch_size,
            pw=self.patch_size,
        )


class WindowAttention(nn.Module):
    """Multi-head self-attention within windows, with relative position bias.

    The bias table is sized for the configured window; smaller effective
    windows index a centred subset of the same table.

    Args:
        dim: token width.
        window_size: largest window the bias table must support.
        num_heads: number of attention heads.
        qkv_bias: add a learnable bias to query, key, value projections.
    """

    def __init__(self, dim, window_size, num_heads, qkv_bias=True):
        super().__init__()
        if dim % num_heads != 0:
            raise ValueError(f"dim {dim} not divisible by num_heads {num_heads}")
        self.dim = dim
        self.window_size = window_size
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3, bias=qkv_bias)
        self.proj = nn.Linear(dim, dim)
        self.relative_position_bias_table = nn.Parameter(
            torch.zeros((2 * window_size - 1) ** 2, num_heads)
        )
        nn.init.trunc_normal_(self.relative_position_bias_table, std=0.02)

    def _relative_position_index(self, window):
        coords = torch.stack(
            torch.meshgrid(torch.arange(window), torch.arange(window), indexing="ij")
        ).flatten(1)
        rel = coords[:, :, None] - coords[:, None, :]  # [2, M*M, M*M]
        rel = rel.permute(1, 2, 0) + (self.window_size - 1)
        return rel[..., 0] * (2 * self.window_size - 1) + rel[..., 1]

    def forward(self, x, mask=None, window=None, return_attn=False):
        bw, n, d = x.shape
        window = window or self.window_size
        if n != window * window:
            raise ValueError(f"expected {window * window} tokens per window, got {n}")
        qkv = (
            self.qkv(x)
            .reshape(bw, n, 3, self.num_heads, d // self.num_heads)
            .permute(2, 0, 3, 1, 4)
        )
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q @ k.transpose(-2, -1)) * self.scale
        index = self._relative_position_index(window).to(x.device)
        bias = self.relative_position_bias_table[index.reshape(-1)]
        bias = bias.reshape(n, n, -1).permute(2, 0, 1)
        attn = attn + bias.unsqueeze(0).to(attn.dtype)
        if mask is not None:
            nw = mask.shape[0]
            attn = attn.view(bw // nw, nw, self.num_heads, n, n) + mask.unsqueeze(1).unsqueeze(0)
            attn = attn.view(bw, self.num_heads, n, n)
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(bw, n, d)
        out = self.proj(out)
        if return_attn:
            return out, attn
        return out


class Mlp(nn.Module):
    """Two-layer feed-forward with GELU."""

    def __init__(self, dim, hidden_dim):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden_dim)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden_dim, dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class SwinBlock(nn.Module):
    """Windowed-attention transformer block.

    norm -> (shifted-)window multi-head self-attention -> residual ->
    norm -> MLP (expansion 4) -> residual.  When shifted=True the windows
    are displaced cyclically by half a window and an additive mask keeps
    tokens from different pre-shift regions apart.

    Args:
        dim: token width.
        num_heads: attention heads.
        window_size: window side length (clamped to the grid at call time).
        shifted: use the cyclically shifted window arrangement.
        mlp_ratio: hidden width multiplier of the MLP.
    """

    def __init__(self, dim, num_heads, window_size, shifted, mlp_ratio=4.0):
        super().__init__()
        self.window_size = window_size
        self.shifted = shifted
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, window_size, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, grid: TokenGrid) -> TokenGrid:
        b, l, d = grid.tokens.shape
        ht, wt = grid.grid_dims
        window = effective_window(self.window_size, grid.grid_dims)
        # a single window covers everything: shifting would only relabel it
        shift = window // 2 if self.shifted and (ht > window or wt > window) else 0

        shortcut = grid.tokens
        x = self.norm1(grid.tokens).view(b, ht, wt, d)
        pad_h = (window - ht % window) % window
        pad_w = (window - wt % window) % window
        if pad_h or pad_w:
            x = F.pad(x, (0, 0, 0, pad_w, 0, pad_h))
        hp, wp = ht + pad_h, wt + pad_w
        if shift:
            x = torch.roll(x, (-shift, -shift), dims=(1, 2))
            mask = shifted_window_mask((hp, wp), window, shift, device=x.device, dtype=x.dtype)
        else:
            mask = None
        x = self.attn(_partition(x, window), mask=mask, window=window)
        x = _reverse(x, window, hp, wp)
        if shift:
            x = torch.roll(x, (shift, shift), dims=(1, 2))
        x = x[:, :ht, :wt, :].reshape(b, l, d)

        tokens = shortcut + x
        tokens = tokens + self.mlp(self.norm2(tokens))
        return TokenGrid(tokens, grid.grid_dims, grid.crop_dims)


class ConvTokenBlock(nn.Module):
    """Convolution + activation drop-in for a transformer block (ablation)."""

    def __init__(self, dim, negative_slope=0.2):
        super().__init__()
        self.conv = nn.Conv2d(dim, dim, 3, padding=1)
        self.act = nn.LeakyReLU(negative_slope)

    def forward(self, grid: TokenGrid) -> TokenGrid:
        b, l, d = grid.tokens.shape
        ht, wt = grid.grid_dims
        x = grid.tokens.transpose(1, 2).reshape(b, d, ht, wt)
        x = self.act(self.conv(x))
        return TokenGrid(x.reshape(b, d, l).transpose(1, 2), grid.grid_dims, grid.crop_dims)


class Decoder(nn.Module):
    """Token-space refinement plus convolutional reconstruction tail.

    Args:
        cfg: architectural hyperparameters.
        in_channels: feature width entering the decoder (encoder_channels).
        use_transformer: replace the attention blocks with convolution +
            activation blocks of matching dimensions when False.
    """

    def __init__(self, cfg: NetworkConfig, in_channels: int | None = None, use_transformer=True):
        super().__init__()
        c = cfg.encoder_channels if in_channels is None else in_channels
        d = cfg.embed_dim
        self.patch_embed = PatchEmbed(c, d, cfg.patch_size)
        if use_transformer:
            # alternate plain and shifted windows, starting unshifted
            self.blocks = nn.ModuleList(
                SwinBlock(d, cfg.num_heads, cfg.window_size, shifted=(i % 2 == 1))
                for i in range(cfg.decoder_depth)
            )
        else:
            self.blocks = nn.ModuleList(
                ConvTokenBlock(d, cfg.negative_slope) for _ in range(cfg.decoder_depth)
            )
        self.unembed = PatchUnembed(d, c, cfg.patch_size)
        self.conv1 = nn.Conv2d(c, max(c // 2, 1), 3, padding=1)
        self.conv2 = nn.Conv2d(max(c // 2, 1), 1, 3, padding=1)
        self.act = nn.LeakyReLU(cfg.negative_slope)
        self._reset_parameters(cfg.negative_slope)

    def _reset_parameters(self, slope):
        for mod in self.modules():
            if isinstance(mod, nn.Linear):
                nn.init.trunc_normal_(mod.weight, std=0.02)
                if mod.bias is not None:
                    nn.init.zeros_(mod.bias)
        for conv in (self.conv1, self.conv2):
            nn.init.kaiming_normal_(conv.weight, a=slope, mode="fan_in", nonlinearity="leaky_relu")
            nn.init.zeros_(conv.bias)

    def reconstruct(self, grid: TokenGrid):
        """Map a refined token grid back to an image batch in (-1, 1)."""
        ht, wt = grid.grid_dims
        if grid.tokens.shape[1] != ht * wt:
            raise ValueError("token grid metadata inconsistent with token count")
        h, w = grid.crop_dims
        x = self.unembed(grid)
        x = self.act(self.conv1(x))
        x = torch.tanh(self.conv2(x))
        return x[:, :, :h, :w]

    def forward(self, x):
        grid = self.patch_embed(x)
        for block in self.blocks:
            grid = block(grid)
        return self.reconstruct(grid)

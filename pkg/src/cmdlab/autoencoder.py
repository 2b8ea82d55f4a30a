"""Video autoencoder: content frame + low-dimensional motion latents.

The encoder maps a video [B, C, L, H, W] to a feature grid
u [B, C', L, H', W'] with a factorized space-time transformer (alternating
spatial-only and temporal-only attention), then two heads produce:

  * per-pixel temporal-softmax importance weights -> the content frame, a
    convex combination of the input frames along time;
  * axis-averaged, channel-projected motion latents z_x [B, D, L, H'] and
    z_y [B, D, L, W'].

The decoder embeds content frame and motion latents back to channel C',
broadcast-sums them into a [B, C', L, H', W'] grid and runs a second
factorized transformer, ending in a linear unpatchify and tanh.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
from einops import rearrange

from .errors import ConfigError, DimensionError
from .networks import TransformerBlock, init_weights


@dataclass(frozen=True)
class AEConfig:
    input_patch: tuple[int, int] = (2, 2)
    hidden_dim: int = 32
    depth: int = 4
    heads: int = 4
    head_dim: int = 8
    motion_channels: int = 8
    channel_shared_weights: bool = False

    def __post_init__(self):
        for name in ("hidden_dim", "depth", "heads", "head_dim", "motion_channels"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"AEConfig.{name} must be positive")
        if any(p <= 0 for p in self.input_patch):
            raise ConfigError("AEConfig.input_patch entries must be positive")
        if self.hidden_dim != self.heads * self.head_dim:
            raise ConfigError(
                f"hidden_dim ({self.hidden_dim}) must equal heads*head_dim "
                f"({self.heads}*{self.head_dim})")


def validate_video(x: torch.Tensor):
    if x.dim() != 5:
        raise DimensionError(f"video must be [B, C, L, H, W], got shape {tuple(x.shape)}")
    if x.shape[2] <= 1:
        raise ConfigError(f"video length must be > 1, got L={x.shape[2]}")
    if not torch.isfinite(x).all():
        raise ValueError("video contains non-finite values")


class SpaceTimeTransformer(nn.Module):
    """Alternating spatial / temporal attention blocks over a
    [B, N_space, L, dim] token grid (even blocks spatial, odd temporal)."""

    def __init__(self, dim: int, depth: int, heads: int):
        super().__init__()
        self.blocks = nn.ModuleList(TransformerBlock(dim, heads) for _ in range(depth))

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        b, n, l, d = tokens.shape
        x = tokens
        for i, block in enumerate(self.blocks):
            if i % 2 == 0:
                x = rearrange(x, "b n l d -> (b l) n d")
                x = block(x)
                x = rearrange(x, "(b l) n d -> b n l d", b=b)
            else:
                x = rearrange(x, "b n l d -> (b n) l d")
                x = block(x)
                x = rearrange(x, "(b n) l d -> b n l d", b=b)
        return x


def content_frame(video: torch.Tensor, weights: torch.Tensor,
                  tol: float = 1e-5) -> torch.Tensor:
    """Weighted temporal sum of frames; weights must sum to 1 along time."""
    if video.shape != weights.shape:
        raise DimensionError(
            f"weights shape {tuple(weights.shape)} must match video {tuple(video.shape)}")
    sums = weights.sum(dim=2)
    if (sums - 1.0).abs().max().item() > tol:
        raise ValueError(
            f"importance weights violate temporal normalization beyond {tol}")
    return (video * weights).sum(dim=2)


def recon_loss(video: torch.Tensor, recon: torch.Tensor) -> torch.Tensor:
    if video.shape != recon.shape:
        raise DimensionError(
            f"recon shape {tuple(recon.shape)} must match video {tuple(video.shape)}")
    return ((video - recon) ** 2).mean()


class VideoAutoencoder(nn.Module):
    def __init__(self, video_shape: tuple[int, int, int, int], cfg: AEConfig = AEConfig()):
        super().__init__()
        c, l, h, w = video_shape
        ph, pw = cfg.input_patch
        if h % ph != 0 or w % pw != 0:
            raise ConfigError(
                f"input_patch {cfg.input_patch} must divide spatial size ({h}, {w})")
        self.cfg = cfg
        self.video_shape = (c, l, h, w)
        self.grid = (l, h // ph, w // pw)
        d = cfg.hidden_dim

        lg, hg, wg = self.grid
        self.patch_embed = nn.Linear(c * ph * pw, d)
        self.pos_spatial = nn.Parameter(torch.zeros(1, hg * wg, 1, d))
        self.pos_temporal = nn.Parameter(torch.zeros(1, 1, lg, d))
        self.encoder = SpaceTimeTransformer(d, cfg.depth, cfg.heads)

        weight_ch = 1 if cfg.channel_shared_weights else c
        self.importance_head = nn.Linear(d, weight_ch * ph * pw)
        self.motion_head = nn.Linear(d, cfg.motion_channels)

        self.content_embed = nn.Linear(c * ph * pw, d)
        self.motion_embed = nn.Linear(cfg.motion_channels, d)
        self.dec_pos_spatial = nn.Parameter(torch.zeros(1, hg * wg, 1, d))
        self.dec_pos_temporal = nn.Parameter(torch.zeros(1, 1, lg, d))
        self.decoder = SpaceTimeTransformer(d, cfg.depth, cfg.heads)
        self.unpatch = nn.Linear(d, c * ph * pw)

        init_weights(self)
        nn.init.trunc_normal_(self.pos_spatial, std=0.02)
        nn.init.trunc_normal_(self.pos_temporal, std=0.02)
        nn.init.trunc_normal_(self.dec_pos_spatial, std=0.02)
        nn.init.trunc_normal_(self.dec_pos_temporal, std=0.02)
        nn.init.zeros_(self.unpatch.weight)
        nn.init.zeros_(self.unpatch.bias)

    def _check_input(self, video: torch.Tensor):
        validate_video(video)
        if tuple(video.shape[1:]) != self.video_shape:
            raise ConfigError(
                f"video shape {tuple(video.shape[1:])} does not match configured "
                f"shape {self.video_shape}")

    def _to_tokens(self, x: torch.Tensor) -> torch.Tensor:
        ph, pw = self.cfg.input_patch
        tokens = rearrange(x, "b c l (hg ph) (wg pw) -> b (hg wg) l (c ph pw)",
                           ph=ph, pw=pw)
        return self.patch_embed(tokens)

    def encode_base(self, video: torch.Tensor) -> torch.Tensor:
        """Feature grid u: [B, C', L, H', W']."""
        self._check_input(video)
        tokens = self._to_tokens(video) + self.pos_spatial + self.pos_temporal
        tokens = self.encoder(tokens)
        _, hg, wg = self.grid[0], self.grid[1], self.grid[2]
        return rearrange(tokens, "b (hg wg) l d -> b d l hg wg", hg=hg, wg=wg)

    def importance_weights(self, u: torch.Tensor) -> torch.Tensor:
        """Temporal-softmax weights [B, C, L, H, W]; sums to 1 along L."""
        c, l, h, w = self.video_shape
        ph, pw = self.cfg.input_patch
        weight_ch = 1 if self.cfg.channel_shared_weights else c
        logits = self.importance_head(rearrange(u, "b d l hg wg -> b l hg wg d"))
        logits = rearrange(logits, "b l hg wg (c ph pw) -> b c l (hg ph) (wg pw)",
                           c=weight_ch, ph=ph, pw=pw)
        if self.cfg.channel_shared_weights:
            logits = logits.expand(-1, c, -1, -1, -1)
        return torch.softmax(logits, dim=2)

    def motion_latents(self, u: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """z_x [B, D, L, H'] and z_y [B, D, L, W'] from axis means of u."""
        ux = u.mean(dim=4)  # [B, C', L, H']
        uy = u.mean(dim=3)  # [B, C', L, W']
        z_x = self.motion_head(ux.movedim(1, -1)).movedim(-1, 1)
        z_y = self.motion_head(uy.movedim(1, -1)).movedim(-1, 1)
        return z_x, z_y

    def encode(self, video: torch.Tensor):
        """-> (content_frame [B, C, H, W], (z_x, z_y))."""
        u = self.encode_base(video)
        weights = self.importance_weights(u)
        return content_frame(video, weights), self.motion_latents(u)

    def broadcast_sum(self, xbar: torch.Tensor, z_x: torch.Tensor,
                      z_y: torch.Tensor) -> torch.Tensor:
        """Additive [B, C', L, H', W'] grid: v_t(h,w) + v_x(l,h) + v_y(l,w)."""
        c, l, h, w = self.video_shape
        ph, pw = self.cfg.input_patch
        if tuple(xbar.shape[1:]) != (c, h, w):
            raise ConfigError(
                f"content frame shape {tuple(xbar.shape[1:])} does not match ({c}, {h}, {w})")
        lg, hg, wg = self.grid
        if tuple(z_x.shape[1:]) != (self.cfg.motion_channels, lg, hg) or \
                tuple(z_y.shape[1:]) != (self.cfg.motion_channels, lg, wg):
            raise ConfigError("motion latent shapes inconsistent with autoencoder config")
        patches = rearrange(xbar, "b c (hg ph) (wg pw) -> b hg wg (c ph pw)", ph=ph, pw=pw)
        v_t = self.content_embed(patches)                      # [B, H', W', C']
        v_x = self.motion_embed(z_x.movedim(1, -1))            # [B, L, H', C']
        v_y = self.motion_embed(z_y.movedim(1, -1))            # [B, L, W', C']
        return (v_t[:, None, :, :, :] + v_x[:, :, :, None, :] + v_y[:, :, None, :, :])

    def decode(self, xbar: torch.Tensor, z_x: torch.Tensor,
               z_y: torch.Tensor) -> torch.Tensor:
        c, l, h, w = self.video_shape
        ph, pw = self.cfg.input_patch
        v = self.broadcast_sum(xbar, z_x, z_y)                 # [B, L, H', W', C']
        tokens = rearrange(v, "b l hg wg d -> b (hg wg) l d")
        tokens = tokens + self.dec_pos_spatial + self.dec_pos_temporal
        tokens = self.decoder(tokens)
        out = self.unpatch(tokens)
        out = rearrange(out, "b (hg wg) l (c ph pw) -> b c l (hg ph) (wg pw)",
                        hg=self.grid[1], c=c, ph=ph, pw=pw)
        return torch.tanh(out)

    def forward(self, video: torch.Tensor) -> torch.Tensor:
        xbar, (z_x, z_y) = self.encode(video)
        return self.decode(xbar, z_x, z_y)

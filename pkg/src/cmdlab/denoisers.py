"""The two trainable noise-prediction networks.

Both are DiT-style transformers: tokens from patch embeddings, blocks
modulated by an adaptive-layernorm conditioning vector built from the
timestep embedding plus a class-label embedding, and a zero-initialized
final projection (so a fresh model predicts exactly zero noise).

The content denoiser operates on content frames [C, H, W]. The motion
denoiser operates on the motion latent pair (z_x, z_y), patchified
independently and concatenated along the token axis together with content
frame condition tokens; predictions are read back only at z positions.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import ConfigError
from .networks import (AdaLNBlock, FinalLayer, TimestepEmbedding, init_weights,
                       patchify, patchify_batched, unpatchify, unpatchify_batched)


@dataclass(frozen=True)
class DenoiserConfig:
    hidden_dim: int = 64
    depth: int = 4
    heads: int = 4
    patch: int = 2          # content denoiser's own patch size, in pixels
    z_patch: int = 2        # motion-latent token patch size, on the (L, H'/W') grids
    content_patch: int = 4  # condition token patch size, on the (H', W') grid
    num_classes: int = 4

    def __post_init__(self):
        for name in ("hidden_dim", "heads", "patch", "z_patch",
                     "content_patch", "num_classes"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"DenoiserConfig.{name} must be positive")
        if self.depth < 0:
            raise ConfigError("DenoiserConfig.depth must be nonnegative")

    @property
    def null_class_id(self) -> int:
        return self.num_classes


def check_condition(c: torch.Tensor, cfg: DenoiserConfig):
    if c.min().item() < 0 or c.max().item() > cfg.num_classes:
        raise ValueError(
            f"condition ids must lie in [0, {cfg.num_classes}] "
            f"({cfg.num_classes} is the null id)")


class _DiTCore(nn.Module):
    """Conditioning embeddings + modulated block stack shared by both models."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.hidden_dim
        self.t_embed = TimestepEmbedding(d)
        self.c_embed = nn.Embedding(cfg.num_classes + 1, d)
        self.blocks = nn.ModuleList(AdaLNBlock(d, cfg.heads) for _ in range(cfg.depth))

    def cond_vector(self, c: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        check_condition(c, self.cfg)
        return self.t_embed(t.to(self.c_embed.weight.dtype)) + self.c_embed(c)

    def run_tokens(self, tokens: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        x = tokens
        for block in self.blocks:
            x = block(x, emb)
        return x


def _reinit(model: nn.Module):
    # init_weights clobbers the zero-init of modulation/final layers; redo it.
    init_weights(model)
    for m in model.modules():
        if isinstance(m, (AdaLNBlock, FinalLayer)):
            nn.init.zeros_(m.modulation[1].weight)
            nn.init.zeros_(m.modulation[1].bias)
        if isinstance(m, FinalLayer):
            nn.init.zeros_(m.proj.weight)
            nn.init.zeros_(m.proj.bias)


class ContentDenoiser(nn.Module):
    """eps(x_t [B, C, H, W], class id, t) -> [B, C, H, W]."""

    def __init__(self, frame_shape: tuple[int, int, int], cfg: DenoiserConfig = DenoiserConfig()):
        super().__init__()
        c, h, w = frame_shape
        p = cfg.patch
        if h % p != 0 or w % p != 0:
            raise ConfigError(f"patch {p} must divide frame size ({h}, {w})")
        self.cfg = cfg
        self.frame_shape = (c, h, w)
        self.n_tokens = (h // p) * (w // p)
        d = cfg.hidden_dim
        self.embed = nn.Linear(c * p * p, d)
        self.pos = nn.Parameter(torch.zeros(1, self.n_tokens, d))
        self.core = _DiTCore(cfg)
        self.final = FinalLayer(d, c * p * p)
        _reinit(self)
        nn.init.trunc_normal_(self.pos, std=0.02)

    def forward(self, x_t: torch.Tensor, c: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        ch, h, w = self.frame_shape
        if tuple(x_t.shape[1:]) != self.frame_shape:
            raise ConfigError(
                f"input shape {tuple(x_t.shape[1:])} does not match {self.frame_shape}")
        p = self.cfg.patch
        tokens = self.embed(patchify_batched(x_t, p, p)) + self.pos
        emb = self.core.cond_vector(c, t)
        tokens = self.core.run_tokens(tokens, emb)
        out = self.final(tokens, emb)
        return unpatchify_batched(out, p, p, ch, h, w)


class MotionDenoiser(nn.Module):
    """eps(z_t, class id, content frame, t) -> MotionLatent-shaped prediction.

    z_x and z_y share one backbone; learned segment embeddings distinguish
    the two latent planes and the content-frame condition tokens. Condition
    tokens are consumed but never emitted.
    """

    def __init__(self, latent_shape: tuple[int, int, int, int],
                 frame_shape: tuple[int, int, int],
                 cfg: DenoiserConfig = DenoiserConfig()):
        super().__init__()
        dz, l, hg, wg = latent_shape  # (D, L, H', W')
        c, h, w = frame_shape
        zp, cp = cfg.z_patch, cfg.content_patch
        if l % zp != 0 or hg % zp != 0 or wg % zp != 0:
            raise ConfigError(
                f"z_patch {zp} must divide latent grids (L={l}, H'={hg}, W'={wg})")
        if hg % cp != 0 or wg % cp != 0:
            raise ConfigError(
                f"content_patch {cp} must divide the feature grid ({hg}, {wg})")
        # condition tokens tile the (H', W') grid; each covers cp*(H/H') pixels
        if h % hg != 0 or w % wg != 0:
            raise ConfigError(
                f"frame size ({h}, {w}) must be a multiple of the feature grid ({hg}, {wg})")
        self.cfg = cfg
        self.latent_shape = (dz, l, hg, wg)
        self.frame_shape = (c, h, w)
        self.n_zx = (l // zp) * (hg // zp)
        self.n_zy = (l // zp) * (wg // zp)
        self.cond_pixel_patch = (cp * (h // hg), cp * (w // wg))
        self.n_cond = (hg // cp) * (wg // cp)

        d = cfg.hidden_dim
        cph, cpw = self.cond_pixel_patch
        self.zx_embed = nn.Linear(dz * zp * zp, d)
        self.zy_embed = nn.Linear(dz * zp * zp, d)
        self.cond_embed = nn.Linear(c * cph * cpw, d)
        self.pos = nn.Parameter(torch.zeros(1, self.n_zx + self.n_zy + self.n_cond, d))
        self.segment = nn.Parameter(torch.zeros(3, d))
        self.core = _DiTCore(cfg)
        self.final = FinalLayer(d, dz * zp * zp)
        _reinit(self)
        nn.init.trunc_normal_(self.pos, std=0.02)
        nn.init.trunc_normal_(self.segment, std=0.02)

    @property
    def sequence_length(self) -> int:
        return self.n_zx + self.n_zy + self.n_cond

    def forward(self, z_x: torch.Tensor, z_y: torch.Tensor, c: torch.Tensor,
                xbar: torch.Tensor, t: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        dz, l, hg, wg = self.latent_shape
        if tuple(z_x.shape[1:]) != (dz, l, hg) or tuple(z_y.shape[1:]) != (dz, l, wg):
            raise ConfigError(
                f"latent shapes {tuple(z_x.shape[1:])}, {tuple(z_y.shape[1:])} do not "
                f"match configured ({dz}, {l}, {hg}) / ({dz}, {l}, {wg})")
        if tuple(xbar.shape[1:]) != self.frame_shape:
            raise ConfigError(
                f"content frame shape {tuple(xbar.shape[1:])} does not match "
                f"{self.frame_shape}")
        zp = self.cfg.z_patch
        cph, cpw = self.cond_pixel_patch
        tok_zx = self.zx_embed(patchify_batched(z_x, zp, zp)) + self.segment[0]
        tok_zy = self.zy_embed(patchify_batched(z_y, zp, zp)) + self.segment[1]
        tok_cd = self.cond_embed(patchify_batched(xbar, cph, cpw)) + self.segment[2]
        tokens = torch.cat([tok_zx, tok_zy, tok_cd], dim=1) + self.pos
        emb = self.core.cond_vector(c, t)
        tokens = self.core.run_tokens(tokens, emb)
        out = self.final(tokens[:, : self.n_zx + self.n_zy], emb)
        eps_zx = unpatchify_batched(out[:, : self.n_zx], zp, zp, dz, l, hg)
        eps_zy = unpatchify_batched(out[:, self.n_zx :], zp, zp, dz, l, wg)
        return eps_zx, eps_zy


__all__ = ["DenoiserConfig", "ContentDenoiser", "MotionDenoiser",
           "patchify", "unpatchify", "check_condition"]

"""Shared transformer building blocks for the autoencoder and denoisers."""
from __future__ import annotations

import math

import torch
import torch.nn as nn
from einops import rearrange

from .errors import ConfigError


def patchify(map2d: torch.Tensor, p: int) -> torch.Tensor:
    """[K, A, B] -> [(A/p)(B/p), K*p*p] non-overlapping patch tokens.

    Lossless: unpatchify(patchify(m, p), p) == m exactly.
    """
    k, a, b = map2d.shape
    if a % p != 0 or b % p != 0:
        raise ConfigError(f"patch size p={p} must divide map shape ({a}, {b})")
    return rearrange(map2d, "k (ah p1) (bw p2) -> (ah bw) (k p1 p2)", p1=p, p2=p)


def unpatchify(tokens: torch.Tensor, p: int, k: int, a: int, b: int) -> torch.Tensor:
    """Inverse of patchify back to [K, A, B]."""
    if tokens.shape != (a // p * (b // p), k * p * p):
        raise ConfigError(
            f"token array shape {tuple(tokens.shape)} inconsistent with "
            f"K={k}, A={a}, B={b}, p={p}")
    return rearrange(tokens, "(ah bw) (k p1 p2) -> k (ah p1) (bw p2)",
                     ah=a // p, k=k, p1=p, p2=p)


def patchify_batched(x: torch.Tensor, p1: int, p2: int) -> torch.Tensor:
    """[B, K, A, C] -> [B, (A/p1)(C/p2), K*p1*p2]."""
    return rearrange(x, "b k (ah q1) (bw q2) -> b (ah bw) (k q1 q2)", q1=p1, q2=p2)


def unpatchify_batched(tokens: torch.Tensor, p1: int, p2: int, k: int,
                       a: int, c: int) -> torch.Tensor:
    return rearrange(tokens, "b (ah bw) (k q1 q2) -> b k (ah q1) (bw q2)",
                     ah=a // p1, k=k, q1=p1, q2=p2)


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise ConfigError(f"hidden dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        q, k, v = rearrange(self.qkv(x), "b n (three h d) -> three b h n d",
                            three=3, h=self.heads)
        attn = torch.softmax(q @ k.transpose(-2, -1) * self.scale, dim=-1)
        out = rearrange(attn @ v, "b h n d -> b n (h d)")
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, dim: int, ratio: int = 4):
        super().__init__()
        self.fc1 = nn.Linear(dim, ratio * dim)
        self.fc2 = nn.Linear(ratio * dim, dim)

    def forward(self, x):
        return self.fc2(torch.nn.functional.gelu(self.fc1(x)))


class TransformerBlock(nn.Module):
    """Plain pre-LN attention + MLP block (no conditioning)."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


def _modulate(x, shift, scale):
    return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1)


class AdaLNBlock(nn.Module):
    """Attention + MLP block whose layernorms are modulated by a conditioning
    vector (scale/shift/gate for each sub-layer, zero-initialized so the block
    is the identity at init)."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, elementwise_affine=False)
        self.attn = SelfAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim, elementwise_affine=False)
        self.mlp = Mlp(dim)
        self.modulation = nn.Sequential(nn.SiLU(), nn.Linear(dim, 6 * dim))
        nn.init.zeros_(self.modulation[1].weight)
        nn.init.zeros_(self.modulation[1].bias)

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        shift1, scale1, gate1, shift2, scale2, gate2 = self.modulation(emb).chunk(6, dim=-1)
        x = x + gate1.unsqueeze(1) * self.attn(_modulate(self.norm1(x), shift1, scale1))
        return x + gate2.unsqueeze(1) * self.mlp(_modulate(self.norm2(x), shift2, scale2))


class FinalLayer(nn.Module):
    """Modulated layernorm followed by a zero-initialized linear projection."""

    def __init__(self, dim: int, out_dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim, elementwise_affine=False)
        self.modulation = nn.Sequential(nn.SiLU(), nn.Linear(dim, 2 * dim))
        self.proj = nn.Linear(dim, out_dim)
        nn.init.zeros_(self.modulation[1].weight)
        nn.init.zeros_(self.modulation[1].bias)
        nn.init.zeros_(self.proj.weight)
        nn.init.zeros_(self.proj.bias)

    def forward(self, x, emb):
        shift, scale = self.modulation(emb).chunk(2, dim=-1)
        return self.proj(_modulate(self.norm(x), shift, scale))


class TimestepEmbedding(nn.Module):
    """Sinusoidal features of the integer timestep through a 2-layer MLP."""

    def __init__(self, dim: int, max_period: float = 10000.0):
        super().__init__()
        if dim % 2 != 0:
            raise ConfigError(f"timestep embedding dim must be even, got {dim}")
        self.dim = dim
        self.max_period = max_period
        self.mlp = nn.Sequential(nn.Linear(dim, dim), nn.SiLU(), nn.Linear(dim, dim))

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        half = self.dim // 2
        freqs = torch.exp(
            -math.log(self.max_period)
            * torch.arange(half, dtype=t.dtype, device=t.device) / half)
        args = t[:, None] * freqs[None, :]
        feats = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
        return self.mlp(feats)


def init_weights(module: nn.Module, std: float = 0.02):
    """Truncated-normal linear weights, zero biases; embeddings likewise."""
    for m in module.modules():
        if isinstance(m, nn.Linear):
            nn.init.trunc_normal_(m.weight, std=std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Embedding):
            nn.init.trunc_normal_(m.weight, std=std)

"""Optimization loops for the three stages plus gradient verification.

All randomness flows through one torch.Generator per run, so a fixed seed
with single-threaded execution gives bit-identical checkpoints. The
autoencoder is frozen (bit-identical before and after) while either
denoiser trains.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import torch

from .autoencoder import AEConfig, VideoAutoencoder, recon_loss
from .denoisers import ContentDenoiser, DenoiserConfig, MotionDenoiser
from .diffusion import NoiseSchedule
from .errors import ConfigError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    adam_betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 16
    max_steps: int = 1000
    ema_decay: float = 0.999
    cond_dropout_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be nonnegative")
        if not 0 <= self.ema_decay < 1:
            raise ConfigError(f"ema_decay must lie in [0, 1), got {self.ema_decay}")
        if not 0 <= self.cond_dropout_prob < 1:
            raise ConfigError(
                f"cond_dropout_prob must lie in [0, 1), got {self.cond_dropout_prob}")
        if self.batch_size < 1 or self.max_steps < 0:
            raise ConfigError("batch_size must be >= 1 and max_steps >= 0")


class Ema:
    """ema_t = decay * ema_{t-1} + (1 - decay) * theta_t; decay 0 tracks raw weights."""

    def __init__(self, model: torch.nn.Module, decay: float):
        self.decay = decay
        self.shadow = {k: v.detach().clone() for k, v in model.state_dict().items()}

    @torch.no_grad()
    def update(self, model: torch.nn.Module):
        for k, v in model.state_dict().items():
            self.shadow[k].mul_(self.decay).add_(v, alpha=1.0 - self.decay)


def _write_loss_curve(path: str | None, rows: list[tuple[int, float, float]]):
    if path is None:
        return
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        f.write("step\tloss\tema_loss\n")
        for step, loss, ema_loss in rows:
            f.write(f"{step}\t{loss!r}\t{ema_loss!r}\n")


def _stack_dataset(dataset) -> tuple[torch.Tensor, torch.Tensor]:
    videos = torch.stack([torch.as_tensor(np.asarray(v), dtype=torch.float32)
                          for v, _ in dataset])
    labels = torch.tensor([c for _, c in dataset], dtype=torch.long)
    return videos, labels


def _check_finite(loss: torch.Tensor, step: int):
    if not torch.isfinite(loss):
        raise RuntimeError(f"training diverged: non-finite loss at step {step}")


def train_autoencoder(dataset, model: VideoAutoencoder, cfg: TrainConfig,
                      log_path: str | None = None):
    """Minimize reconstruction MSE; returns (loss curve rows, EMA)."""
    if len(dataset) == 0:
        raise ConfigError("dataset is empty")
    videos, _ = _stack_dataset(dataset)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, betas=cfg.adam_betas)
    ema = Ema(model, cfg.ema_decay)
    rows, smooth = [], None
    for step in range(1, cfg.max_steps + 1):
        idx = torch.randint(len(videos), (cfg.batch_size,), generator=gen)
        batch = videos[idx]
        loss = recon_loss(batch, model(batch))
        _check_finite(loss, step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        ema.update(model)
        val = float(loss.detach().to(torch.float64))
        smooth = val if smooth is None else 0.99 * smooth + 0.01 * val
        rows.append((step, val, smooth))
    _write_loss_curve(log_path, rows)
    return rows, ema


def _draw_timesteps(n: int, T: int, gen: torch.Generator) -> torch.Tensor:
    return torch.randint(1, T + 1, (n,), generator=gen)


def train_denoiser(kind: str, dataset, autoencoder: VideoAutoencoder,
                   model: torch.nn.Module, sched: NoiseSchedule, cfg: TrainConfig,
                   log_path: str | None = None):
    """Noise-prediction training for the content or motion model.

    Each step: encode a batch with the frozen autoencoder, draw t uniform in
    [1, T] and Gaussian noise, minimize the squared noise-prediction error.
    The class label is replaced by the null id with cond_dropout_prob.
    """
    if kind not in ("content", "motion"):
        raise ConfigError(f"kind must be 'content' or 'motion', got {kind!r}")
    if len(dataset) == 0:
        raise ConfigError("dataset is empty")
    videos, labels = _stack_dataset(dataset)
    if tuple(videos.shape[2:]) != tuple(autoencoder.video_shape[1:]) or \
            videos.shape[1] != autoencoder.video_shape[0]:
        raise ConfigError(
            f"dataset clip shape {tuple(videos.shape[1:])} does not match "
            f"autoencoder shape {autoencoder.video_shape}")
    null_id = model.cfg.null_class_id
    if int(labels.max()) >= model.cfg.num_classes:
        raise ConfigError(
            f"dataset class id {int(labels.max())} exceeds num_classes "
            f"{model.cfg.num_classes}")
    autoencoder.eval()
    autoencoder.requires_grad_(False)

    abar = torch.from_numpy(sched.alpha_bar).to(torch.float32)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, betas=cfg.adam_betas)
    ema = Ema(model, cfg.ema_decay)
    rows, smooth = [], None
    for step in range(1, cfg.max_steps + 1):
        idx = torch.randint(len(videos), (cfg.batch_size,), generator=gen)
        batch, c = videos[idx], labels[idx].clone()
        if cfg.cond_dropout_prob > 0:
            drop = torch.rand(len(c), generator=gen) < cfg.cond_dropout_prob
            c[drop] = null_id
        t = _draw_timesteps(cfg.batch_size, sched.T, gen)
        a = abar[t - 1].view(-1, 1, 1, 1)
        with torch.no_grad():
            xbar, (z_x, z_y) = autoencoder.encode(batch)
        if kind == "content":
            eps = torch.randn(xbar.shape, generator=gen)
            x_t = a.sqrt() * xbar + (1 - a).sqrt() * eps
            pred = model(x_t, c, t)
            loss = ((pred - eps) ** 2).mean()
        else:
            eps_x = torch.randn(z_x.shape, generator=gen)
            eps_y = torch.randn(z_y.shape, generator=gen)
            zx_t = a.sqrt() * z_x + (1 - a).sqrt() * eps_x
            zy_t = a.sqrt() * z_y + (1 - a).sqrt() * eps_y
            pred_x, pred_y = model(zx_t, zy_t, c, xbar, t)
            err = torch.cat([(pred_x - eps_x).flatten(1), (pred_y - eps_y).flatten(1)], dim=1)
            loss = (err**2).mean()
        _check_finite(loss, step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        ema.update(model)
        val = float(loss.detach().to(torch.float64))
        smooth = val if smooth is None else 0.99 * smooth + 0.01 * val
        rows.append((step, val, smooth))
    _write_loss_curve(log_path, rows)
    return rows, ema


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

def _randomize(model: torch.nn.Module, gen: torch.Generator, scale: float = 0.05):
    # zero-initialized heads block gradient flow; give every weight a value
    with torch.no_grad():
        for p in model.parameters():
            p.copy_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * scale)


def _grad_check_setup(kind: str, seed: int = 0):
    gen = torch.Generator().manual_seed(seed)
    torch.manual_seed(seed)
    if kind == "autoencoder":
        model = VideoAutoencoder(
            (3, 4, 8, 8),
            AEConfig(input_patch=(2, 2), hidden_dim=8, depth=2, heads=2, head_dim=4,
                     motion_channels=4))
        x = torch.randn((1, 3, 4, 8, 8), generator=gen, dtype=torch.float64)

        def loss_fn():
            return recon_loss(x, model(x))
    elif kind == "content":
        model = ContentDenoiser(
            (2, 4, 4), DenoiserConfig(hidden_dim=8, depth=1, heads=2, patch=2,
                                      num_classes=3))
        x = torch.randn((1, 2, 4, 4), generator=gen, dtype=torch.float64)
        target = torch.randn((1, 2, 4, 4), generator=gen, dtype=torch.float64)
        c = torch.tensor([1])
        t = torch.tensor([3])

        def loss_fn():
            return ((model(x, c, t) - target) ** 2).mean()
    elif kind == "motion":
        model = MotionDenoiser(
            (2, 4, 4, 4), (2, 8, 8),
            DenoiserConfig(hidden_dim=8, depth=1, heads=2, z_patch=2, content_patch=2,
                           num_classes=3))
        z_x = torch.randn((1, 2, 4, 4), generator=gen, dtype=torch.float64)
        z_y = torch.randn((1, 2, 4, 4), generator=gen, dtype=torch.float64)
        xbar = torch.randn((1, 2, 8, 8), generator=gen, dtype=torch.float64)
        tx = torch.randn((1, 2, 4, 4), generator=gen, dtype=torch.float64)
        ty = torch.randn((1, 2, 4, 4), generator=gen, dtype=torch.float64)
        c = torch.tensor([0])
        t = torch.tensor([2])

        def loss_fn():
            px, py = model(z_x, z_y, c, xbar, t)
            return ((px - tx) ** 2).mean() + ((py - ty) ** 2).mean()
    elif kind == "linear":
        model = torch.nn.Linear(6, 3)
        x = torch.randn((4, 6), generator=gen, dtype=torch.float64)
        target = torch.randn((4, 3), generator=gen, dtype=torch.float64)

        def loss_fn():
            return ((model(x) - target) ** 2).mean()
    else:
        raise ConfigError(f"unknown grad_check kind {kind!r}")
    model.double()
    _randomize(model, gen)
    return model, loss_fn


def grad_check(kind: str, tol: float = 1e-4, step: float = 1e-5, seed: int = 0,
               corrupt_param: str | None = None) -> dict:
    """Compare autograd gradients against central finite differences.

    Runs a tiny 64-bit model; reports the max relative error per parameter
    group and overall. corrupt_param perturbs one analytic gradient (test
    fixture for the negative control).
    """
    model, loss_fn = _grad_check_setup(kind, seed)
    loss = loss_fn()
    analytic = torch.autograd.grad(loss, list(model.parameters()))
    names = [n for n, _ in model.named_parameters()]

    report = {"kind": kind, "tol": tol, "groups": {}, "failures": []}
    max_err = 0.0
    for name, param, grad in zip(names, model.parameters(), analytic):
        if corrupt_param == name:
            grad = grad + 1e-2
        if not torch.isfinite(grad).all():
            report["failures"].append(f"non-finite analytic gradient in {name}")
            report["groups"][name] = float("inf")
            max_err = float("inf")
            continue
        flat = param.data.view(-1)
        fd = torch.empty_like(grad).view(-1)
        with torch.no_grad():
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                lp = float(loss_fn())
                flat[i] = orig - step
                lm = float(loss_fn())
                flat[i] = orig
                fd[i] = (lp - lm) / (2 * step)
        fd = fd.view(grad.shape)
        # relative error at the parameter-group scale, so elements whose true
        # gradient is incidentally near zero do not amplify FD rounding noise
        denom = max(float(grad.abs().max()), float(fd.abs().max()), 1e-6)
        err = float((grad - fd).abs().max()) / denom
        report["groups"][name] = err
        max_err = max(max_err, err)
    report["max_rel_err"] = max_err
    report["pass"] = bool(max_err < tol and not report["failures"])
    return report

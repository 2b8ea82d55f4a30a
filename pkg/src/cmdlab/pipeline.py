"""Two-stage sampling and model persistence.

Sampling: generate a content frame by a reverse-diffusion loop with
classifier-free guidance, then motion latents conditioned on the finished
content frame (never on intermediates), then decode to a video. Stage seeds
are independent; a single user seed is split via SHA-256.

Persistence: each stage saves its parameters (raw and EMA) into one
checkpoint archive under "<stage>." / "<stage>.ema." prefixes, together
with a config blob sufficient to rebuild the module.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch

from .autoencoder import AEConfig, VideoAutoencoder
from .checkpoint import load_checkpoint, save_checkpoint
from .denoisers import ContentDenoiser, DenoiserConfig, MotionDenoiser
from .diffusion import NoiseSchedule, cfg_combine, ddim_step, ddpm_step, make_schedule
from .errors import ConfigError

SAMPLER_KINDS = ("ddpm", "ddim")


@dataclass(frozen=True)
class SampleSpec:
    steps: int
    eta: float = 0.0
    guidance_w: float = 0.0
    seed: int = 0
    sampler_kind: str = "ddim"

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.eta < 0:
            raise ConfigError(f"eta must be >= 0, got {self.eta}")
        if self.guidance_w < 0:
            raise ConfigError(f"guidance_w must be >= 0, got {self.guidance_w}")
        if self.sampler_kind not in SAMPLER_KINDS:
            raise ConfigError(
                f"sampler_kind must be one of {SAMPLER_KINDS}, got {self.sampler_kind!r}")


def split_seed(seed: int, label: str) -> int:
    """Derive a stage seed from a user seed: low 63 bits of
    SHA-256(seed as 8-byte little-endian || label)."""
    digest = hashlib.sha256((seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
                            + label.encode()).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFFFFFFFFFFFFFF


def timestep_sequence(T: int, steps: int) -> list[int]:
    """Evenly spaced subsequence T = t_1 > ... > t_steps >= 1, followed by 0."""
    if steps > T:
        raise ConfigError(f"steps ({steps}) must not exceed schedule T ({T})")
    ts = [round(T * k / steps) for k in range(steps, 0, -1)]
    ts = sorted(set(max(1, t) for t in ts), reverse=True)
    return ts + [0]


def sample_stage(denoiser, cond, null_cond, spec: SampleSpec, sched: NoiseSchedule,
                 shape: tuple[int, ...], dtype=torch.float32) -> torch.Tensor:
    """Generic reverse loop: denoiser(x_t, t, c) is called with cond and (if
    guidance_w > 0) null_cond, combined by classifier-free guidance each step."""
    gen = torch.Generator().manual_seed(spec.seed)
    x = torch.randn(shape, generator=gen, dtype=dtype)
    if spec.sampler_kind == "ddpm" and spec.steps != sched.T:
        raise ConfigError(
            f"ddpm sampling requires steps == T ({sched.T}), got {spec.steps}")
    ts = timestep_sequence(sched.T, spec.steps)
    for t, t_prev in zip(ts[:-1], ts[1:]):
        eps = denoiser(x, t, cond)
        if spec.guidance_w > 0:
            eps = cfg_combine(eps, denoiser(x, t, null_cond), spec.guidance_w)
        if spec.sampler_kind == "ddpm":
            noise = (torch.zeros(shape, dtype=dtype) if t == 1
                     else torch.randn(shape, generator=gen, dtype=dtype))
            x = ddpm_step(x, eps, t, sched, noise)
        else:
            x = ddim_step(x, eps, t, t_prev, sched)
            if spec.eta > 0 and t_prev > 0:
                # generalized DDIM: trade part of the deterministic noise
                # share for fresh noise of matched marginal variance
                abar_t, abar_prev = sched.abar(t), sched.abar(t_prev)
                sig = spec.eta * math.sqrt((1 - abar_prev) / (1 - abar_t)) \
                    * math.sqrt(1 - abar_t / abar_prev)
                sig = min(sig, math.sqrt(1 - abar_prev))
                shrink = math.sqrt(max(1 - abar_prev - sig**2, 0.0)) \
                    - math.sqrt(1 - abar_prev)
                x = x + shrink * eps + sig * torch.randn(shape, generator=gen, dtype=dtype)
    return x


# ---------------------------------------------------------------------------
# checkpoint glue
# ---------------------------------------------------------------------------

def _state_to_params(model: torch.nn.Module, prefix: str) -> dict[str, np.ndarray]:
    return {prefix + k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}


def _params_to_state(model: torch.nn.Module, params: dict[str, np.ndarray], prefix: str):
    state = model.state_dict()
    mismatches = []
    loaded = {}
    for k, v in state.items():
        key = prefix + k
        if key not in params:
            mismatches.append(f"missing entry {key}")
            continue
        arr = params[key]
        if tuple(arr.shape) != tuple(v.shape):
            mismatches.append(f"{key}: shape {tuple(arr.shape)} != {tuple(v.shape)}")
            continue
        loaded[k] = torch.from_numpy(arr).to(v.dtype)
    if mismatches:
        raise ConfigError("checkpoint incompatible with model: " + "; ".join(mismatches))
    model.load_state_dict(loaded)


def _schedule_blob(sched: NoiseSchedule) -> dict:
    return {"T": sched.T, "sigma": sched.sigma.tolist()}


def schedule_from_blob(blob: dict) -> NoiseSchedule:
    sigma = np.asarray(blob["sigma"], dtype=np.float64)
    alpha = 1.0 - sigma**2
    return NoiseSchedule(T=int(blob["T"]), sigma=sigma, alpha=alpha,
                         alpha_bar=np.cumprod(alpha))


def save_stage(stage: str, model: torch.nn.Module, ema_shadow: dict, path: str,
               config: dict, sched: NoiseSchedule | None = None):
    params = _state_to_params(model, f"{stage}.")
    for k, v in ema_shadow.items():
        params[f"{stage}.ema.{k}"] = v.detach().cpu().numpy()
    save_checkpoint(params, path, config={"stage": stage, **config},
                    schedule=_schedule_blob(sched) if sched is not None else None)


def _build_from_config(config: dict) -> torch.nn.Module:
    stage = config["stage"]
    if stage == "ae":
        return VideoAutoencoder(tuple(config["video_shape"]),
                                AEConfig(**{**config["cfg"],
                                            "input_patch": tuple(config["cfg"]["input_patch"])}))
    if stage == "content":
        return ContentDenoiser(tuple(config["frame_shape"]), DenoiserConfig(**config["cfg"]))
    if stage == "motion":
        return MotionDenoiser(tuple(config["latent_shape"]), tuple(config["frame_shape"]),
                              DenoiserConfig(**config["cfg"]))
    raise ConfigError(f"unknown checkpoint stage {stage!r}")


def load_stage(path: str, expect_stage: str | None = None, use_ema: bool = False):
    """-> (model, config blob, schedule or None)."""
    params, config, sched_blob = load_checkpoint(path)
    if config is None or "stage" not in config:
        raise ConfigError(f"{path}: checkpoint has no stage config blob")
    stage = config["stage"]
    if expect_stage is not None and stage != expect_stage:
        raise ConfigError(f"{path}: expected a {expect_stage!r} checkpoint, got {stage!r}")
    model = _build_from_config(config)
    prefix = f"{stage}.ema." if use_ema else f"{stage}."
    if use_ema:
        params = {k: v for k, v in params.items() if k.startswith(prefix)}
        params = {f"{stage}." + k[len(prefix):]: v for k, v in params.items()}
        prefix = f"{stage}."
    else:
        params = {k: v for k, v in params.items() if not k.startswith(f"{stage}.ema.")}
    _params_to_state(model, params, prefix)
    model.eval()
    sched = schedule_from_blob(sched_blob) if sched_blob else None
    return model, config, sched


def ae_config_blob(video_shape, cfg: AEConfig) -> dict:
    return {"video_shape": list(video_shape), "cfg": asdict(cfg)}


def denoiser_config_blob(cfg: DenoiserConfig, frame_shape, latent_shape=None) -> dict:
    blob = {"frame_shape": list(frame_shape), "cfg": asdict(cfg)}
    if latent_shape is not None:
        blob["latent_shape"] = list(latent_shape)
    return blob


# ---------------------------------------------------------------------------
# full two-stage sampler
# ---------------------------------------------------------------------------

def sample_video_from_models(c: int, spec_content: SampleSpec, spec_motion: SampleSpec,
                             autoencoder: VideoAutoencoder, content_model: ContentDenoiser,
                             motion_model: MotionDenoiser,
                             sched: NoiseSchedule) -> torch.Tensor:
    """Content stage, then motion stage conditioned on the finished content
    frame, then decode; returns one video [C, L, H, W] in (-1, 1)."""
    if content_model.frame_shape != motion_model.frame_shape:
        raise ConfigError(
            f"content/motion checkpoints disagree on frame shape: "
            f"{content_model.frame_shape} vs {motion_model.frame_shape}")
    ch, l, h, w = autoencoder.video_shape
    if content_model.frame_shape != (ch, h, w):
        raise ConfigError(
            f"content denoiser frame shape {content_model.frame_shape} does not match "
            f"autoencoder frames ({ch}, {h}, {w})")
    dz = autoencoder.cfg.motion_channels
    lg, hg, wg = autoencoder.grid
    if motion_model.latent_shape != (dz, lg, hg, wg):
        raise ConfigError(
            f"motion denoiser latent shape {motion_model.latent_shape} does not match "
            f"autoencoder latents {(dz, lg, hg, wg)}")
    null_c = content_model.cfg.null_class_id
    if not 0 <= c < content_model.cfg.num_classes:
        raise ValueError(f"class id {c} out of range [0, {content_model.cfg.num_classes})")

    def content_denoise(x, t, cond):
        with torch.no_grad():
            return content_model(x, torch.tensor([cond]), torch.tensor([t]))

    xbar = sample_stage(content_denoise, c, null_c, spec_content, sched,
                        (1, ch, h, w))
    xbar = xbar.detach().clone()  # motion stage sees the final value only

    n_x = dz * lg * hg

    def motion_denoise(z_flat, t, cond):
        z_x = z_flat[:, :n_x].reshape(1, dz, lg, hg)
        z_y = z_flat[:, n_x:].reshape(1, dz, lg, wg)
        with torch.no_grad():
            ex, ey = motion_model(z_x, z_y, torch.tensor([cond]), xbar, torch.tensor([t]))
        return torch.cat([ex.flatten(1), ey.flatten(1)], dim=1)

    z_flat = sample_stage(motion_denoise, c, null_c, spec_motion, sched,
                          (1, n_x + dz * lg * wg))
    z_x = z_flat[:, :n_x].reshape(1, dz, lg, hg)
    z_y = z_flat[:, n_x:].reshape(1, dz, lg, wg)
    with torch.no_grad():
        video = autoencoder.decode(xbar, z_x, z_y)
    return video[0]


def sample_video(c: int, spec_content: SampleSpec, spec_motion: SampleSpec,
                 ae_path: str, content_path: str, motion_path: str,
                 use_ema: bool = True) -> torch.Tensor:
    """Checkpoint-driven variant of sample_video_from_models."""
    autoencoder, _, _ = load_stage(ae_path, "ae", use_ema=use_ema)
    content_model, _, sched_c = load_stage(content_path, "content", use_ema=use_ema)
    motion_model, _, sched_m = load_stage(motion_path, "motion", use_ema=use_ema)
    if sched_c is None:
        raise ConfigError(f"{content_path}: checkpoint carries no noise schedule")
    if sched_m is not None and not np.array_equal(sched_c.sigma, sched_m.sigma):
        raise ConfigError("content and motion checkpoints carry different schedules")
    return sample_video_from_models(c, spec_content, spec_motion, autoencoder,
                                    content_model, motion_model, sched_c)


def default_schedule() -> NoiseSchedule:
    return make_schedule(1000, "linear", 1e-4, 0.02)

"""Single configuration document covering every stage.

Unknown keys are rejected and all cross-references (patch divisibility,
shared grid sizes, class vocabularies) are validated before any work
starts. Defaults are toy-scale; sampler defaults follow the two-stage
convention of 50 content steps / 100 motion steps, eta = 0, guidance 4.0.
"""
from __future__ import annotations

import json

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .autoencoder import AEConfig
from .denoisers import DenoiserConfig
from .diffusion import NoiseSchedule, make_schedule
from .errors import ConfigError
from .pipeline import SampleSpec
from .training import TrainConfig


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataSection(_Section):
    seed: int = 0
    count: int = Field(64, ge=1)
    channels: int = 3
    length: int = Field(8, ge=2)
    height: int = Field(16, ge=1)
    width: int = Field(16, ge=1)
    num_classes: int = Field(4, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.channels != 3:
            raise ValueError("the synthetic generator emits RGB clips; channels must be 3")
        return self


class ScheduleSection(_Section):
    T: int = Field(1000, ge=1)
    kind: str = "linear"
    beta_min: float = Field(1e-4, gt=0)
    beta_max: float = Field(0.02, gt=0, le=1)


class AutoencoderSection(_Section):
    input_patch: tuple[int, int] = (2, 2)
    hidden_dim: int = Field(32, ge=1)
    depth: int = Field(4, ge=1)
    heads: int = Field(4, ge=1)
    head_dim: int = Field(8, ge=1)
    motion_channels: int = Field(8, ge=1)
    channel_shared_weights: bool = False


class DenoiserSection(_Section):
    hidden_dim: int = Field(64, ge=2)
    depth: int = Field(4, ge=0)
    heads: int = Field(4, ge=1)
    patch: int = Field(2, ge=1)
    z_patch: int = Field(2, ge=1)
    content_patch: int = Field(4, ge=1)


class TrainSection(_Section):
    learning_rate: float = Field(1e-4, gt=0)
    adam_betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = Field(16, ge=1)
    max_steps: int = Field(2000, ge=0)
    ema_decay: float = Field(0.999, ge=0, lt=1)
    cond_dropout_prob: float = Field(0.1, ge=0, lt=1)
    seed: int = 0


class SampleSection(_Section):
    steps: int = Field(ge=1)
    eta: float = Field(0.0, ge=0)
    guidance_w: float = Field(4.0, ge=0)
    sampler_kind: str = "ddim"


class RuntimeSection(_Section):
    threads: int | None = Field(None, ge=1)
    deterministic: bool = False


class RunConfig(_Section):
    data: DataSection = DataSection()
    schedule: ScheduleSection = ScheduleSection()
    autoencoder: AutoencoderSection = AutoencoderSection()
    content_denoiser: DenoiserSection = DenoiserSection()
    motion_denoiser: DenoiserSection = DenoiserSection()
    train_ae: TrainSection = TrainSection(learning_rate=1e-3, adam_betas=(0.5, 0.9),
                                          max_steps=5000)
    train_content: TrainSection = TrainSection(learning_rate=3e-4, max_steps=3000)
    train_motion: TrainSection = TrainSection(learning_rate=3e-4, max_steps=10000)
    sample_content: SampleSection = SampleSection(steps=50)
    sample_motion: SampleSection = SampleSection(steps=100)
    runtime: RuntimeSection = RuntimeSection()

    @model_validator(mode="after")
    def _cross_check(self):
        d, ae = self.data, self.autoencoder
        ph, pw = ae.input_patch
        if d.height % ph or d.width % pw:
            raise ValueError(
                f"autoencoder.input_patch {ae.input_patch} must divide clip size "
                f"({d.height}, {d.width})")
        if ae.hidden_dim != ae.heads * ae.head_dim:
            raise ValueError("autoencoder.hidden_dim must equal heads * head_dim")
        hg, wg = d.height // ph, d.width // pw
        cd, md = self.content_denoiser, self.motion_denoiser
        if d.height % cd.patch or d.width % cd.patch:
            raise ValueError(
                f"content_denoiser.patch {cd.patch} must divide clip size "
                f"({d.height}, {d.width})")
        if d.length % md.z_patch or hg % md.z_patch or wg % md.z_patch:
            raise ValueError(
                f"motion_denoiser.z_patch {md.z_patch} must divide (L={d.length}, "
                f"H'={hg}, W'={wg})")
        if hg % md.content_patch or wg % md.content_patch:
            raise ValueError(
                f"motion_denoiser.content_patch {md.content_patch} must divide "
                f"(H'={hg}, W'={wg})")
        for name, dn in (("content_denoiser", cd), ("motion_denoiser", md)):
            if dn.hidden_dim % dn.heads:
                raise ValueError(f"{name}.hidden_dim must be divisible by heads")
        if self.schedule.beta_min > self.schedule.beta_max:
            raise ValueError("schedule.beta_min must be <= beta_max")
        for name, s in (("sample_content", self.sample_content),
                        ("sample_motion", self.sample_motion)):
            if s.steps > self.schedule.T:
                raise ValueError(f"{name}.steps must not exceed schedule.T")
        return self

    # ---- derived core objects -------------------------------------------

    @property
    def video_shape(self) -> tuple[int, int, int, int]:
        d = self.data
        return (d.channels, d.length, d.height, d.width)

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        d = self.data
        return (d.channels, d.height, d.width)

    @property
    def latent_shape(self) -> tuple[int, int, int, int]:
        d, ae = self.data, self.autoencoder
        return (ae.motion_channels, d.length,
                d.height // ae.input_patch[0], d.width // ae.input_patch[1])

    def ae_config(self) -> AEConfig:
        ae = self.autoencoder
        return AEConfig(input_patch=tuple(ae.input_patch), hidden_dim=ae.hidden_dim,
                        depth=ae.depth, heads=ae.heads, head_dim=ae.head_dim,
                        motion_channels=ae.motion_channels,
                        channel_shared_weights=ae.channel_shared_weights)

    def denoiser_config(self, which: str) -> DenoiserConfig:
        dn = self.content_denoiser if which == "content" else self.motion_denoiser
        return DenoiserConfig(hidden_dim=dn.hidden_dim, depth=dn.depth, heads=dn.heads,
                              patch=dn.patch, z_patch=dn.z_patch,
                              content_patch=dn.content_patch,
                              num_classes=self.data.num_classes)

    def noise_schedule(self) -> NoiseSchedule:
        s = self.schedule
        return make_schedule(s.T, s.kind, s.beta_min, s.beta_max)

    def train_config(self, stage: str) -> TrainConfig:
        t = {"ae": self.train_ae, "content": self.train_content,
             "motion": self.train_motion}[stage]
        return TrainConfig(learning_rate=t.learning_rate, adam_betas=tuple(t.adam_betas),
                           batch_size=t.batch_size, max_steps=t.max_steps,
                           ema_decay=t.ema_decay, cond_dropout_prob=t.cond_dropout_prob,
                           seed=t.seed)

    def sample_spec(self, stage: str, seed: int) -> SampleSpec:
        s = self.sample_content if stage == "content" else self.sample_motion
        return SampleSpec(steps=s.steps, eta=s.eta, guidance_w=s.guidance_w,
                          seed=seed, sampler_kind=s.sampler_kind)


def load_run_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from a JSON file, deep-merging overrides on top."""
    doc: dict = {}
    if path is not None:
        with open(path) as f:
            doc = json.load(f)
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config document must be a JSON object")
    if overrides:
        doc = _deep_merge(doc, overrides)
    return RunConfig.model_validate(doc)


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out

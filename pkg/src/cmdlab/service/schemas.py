"""Request/response models for the HTTP service."""
from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

from ..config import RunConfig


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GenDataRequest(_Model):
    config: RunConfig = RunConfig()
    out_dir: str


class GenDataResponse(_Model):
    out_dir: str
    manifest: str
    count: int


class TrainAutoencoderRequest(_Model):
    config: RunConfig = RunConfig()
    data_dir: str
    out_path: str


class TrainDenoiserRequest(_Model):
    config: RunConfig = RunConfig()
    data_dir: str
    ae_checkpoint: str
    out_path: str


class TrainResponse(_Model):
    checkpoint: str
    steps: int
    final_loss: float | None
    loss_curve: str


class SampleRequest(_Model):
    config: RunConfig = RunConfig()
    class_id: int = Field(ge=0)
    seed: int = 0
    ae_checkpoint: str
    content_checkpoint: str
    motion_checkpoint: str
    out_path: str
    export_frames_dir: str | None = None
    use_ema: bool = True


class SampleResponse(_Model):
    out: str
    shape: list[int]
    seed_content: int
    seed_motion: int
    value_range: list[float]
    frames: list[str] | None = None


class GradCheckRequest(_Model):
    kinds: list[str] = ["autoencoder", "content", "motion"]
    tol: float = Field(1e-4, gt=0)


class GradCheckResponse(_Model):
    passed: bool
    max_rel_err: float
    reports: dict


class CostReportRequest(_Model):
    config: RunConfig = RunConfig()
    baseline_steps: int | None = Field(None, ge=1)


class CostReportResponse(_Model):
    text: str
    tsv: str
    ratios: dict[str, float]
    per_network_flops: dict[str, int]


class VerifyRow(_Model):
    name: str
    passed: bool
    detail: str


class VerifyResponse(_Model):
    passed: bool
    results: list[VerifyRow]


class HealthResponse(_Model):
    status: str
    version: str

"""Desk-scale content/motion factorized latent video diffusion.

The package factorizes a video into a single content frame plus compact
2D motion latents, trains a diffusion denoiser for each, and recombines
them through a learned decoder. It ships as a core library, a FastAPI
service wrapping it, and a thin CLI client.
"""

__version__ = "0.1.0"

from .autoencoder import AEConfig, VideoAutoencoder, content_frame
from .denoisers import ContentDenoiser, DenoiserConfig, MotionDenoiser
from .diffusion import (NoiseSchedule, cfg_combine, ddim_step, ddpm_step,
                        forward_diffuse, make_schedule)
from .errors import ConfigError, DimensionError, IntegrityError
from .pipeline import SampleSpec, sample_stage, sample_video, split_seed

__all__ = [
    "__version__",
    "AEConfig", "VideoAutoencoder", "content_frame",
    "ContentDenoiser", "DenoiserConfig", "MotionDenoiser",
    "NoiseSchedule", "cfg_combine", "ddim_step", "ddpm_step",
    "forward_diffuse", "make_schedule",
    "ConfigError", "DimensionError", "IntegrityError",
    "SampleSpec", "sample_stage", "sample_video", "split_seed",
]

import numpy as np
import pytest
import torch

from cmdlab.autoencoder import AEConfig, VideoAutoencoder
from cmdlab.diffusion import NoiseSchedule, make_schedule

TINY_VIDEO_SHAPE = (3, 4, 8, 8)
TINY_AE_CFG = AEConfig(input_patch=(2, 2), hidden_dim=16, depth=2, heads=2,
                       head_dim=8, motion_channels=4)


@pytest.fixture
def tiny_ae():
    torch.manual_seed(0)
    return VideoAutoencoder(TINY_VIDEO_SHAPE, TINY_AE_CFG)


@pytest.fixture
def default_schedule():
    return make_schedule(1000, "linear", 1e-4, 0.02)


def schedule_from_alpha_bar(targets) -> NoiseSchedule:
    """Build a valid schedule whose alpha_bar approximates the given values
    (useful for hand-worked reverse-step cases)."""
    targets = np.asarray(targets, dtype=np.float64)
    alphas = targets / np.concatenate([[1.0], targets[:-1]])
    sigma = np.sqrt(1.0 - alphas)
    alpha = 1.0 - sigma**2
    return NoiseSchedule(T=len(targets), sigma=sigma, alpha=alpha,
                         alpha_bar=np.cumprod(alpha))


@pytest.fixture
def tiny_dataset():
    from cmdlab.data import gen_moving_shapes

    return gen_moving_shapes(3, 6, 4, 8, 8, 3)

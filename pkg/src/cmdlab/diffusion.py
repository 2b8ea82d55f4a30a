"""Diffusion mathematics shared by both denoising models.

Everything here is a pure function of its inputs: noise schedules, the
forward corruption x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps, the
squared-error noise-prediction objective, DDPM / DDIM reverse updates and
classifier-free guidance. Functions accept numpy arrays or torch tensors
(anything supporting elementwise arithmetic); schedule coefficients are
plain float64 scalars so no precision is lost on the array side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError

SCHEDULE_KINDS = ("linear", "terminal_one")


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise levels sigma_t with alpha_t = 1 - sigma_t^2 and
    abar_t = prod_{i<=t} alpha_i, stored as float64 arrays of length T
    (index 0 holds t=1)."""

    T: int
    sigma: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        for name in ("sigma", "alpha", "alpha_bar"):
            arr = getattr(self, name)
            if arr.shape != (self.T,):
                raise ConfigError(f"{name} must have shape ({self.T},), got {arr.shape}")
        if not (np.all(self.sigma > 0) and np.all(self.sigma <= 1)):
            raise ConfigError("sigma values must lie in (0, 1]")
        if np.any(np.diff(self.sigma) < 0):
            raise ConfigError("sigma must be nondecreasing")
        if not np.allclose(self.alpha, 1.0 - self.sigma**2, rtol=0, atol=0):
            raise ConfigError("alpha must equal 1 - sigma^2 exactly")
        # strictly decreasing until the product underflows to exactly zero
        # (near-terminal steps of an abar_T = 0 schedule), then constant
        diffs = np.diff(self.alpha_bar)
        if np.any((diffs >= 0) & (self.alpha_bar[1:] != 0.0)):
            raise ConfigError("alpha_bar must be strictly decreasing while positive")
        if np.any(self.alpha_bar < 0) or np.any(self.alpha_bar >= 1):
            raise ConfigError("alpha_bar values must lie in [0, 1)")

    def abar(self, t: int) -> float:
        """abar_t with the convention abar_0 = 1."""
        if t == 0:
            return 1.0
        self._check_t(t)
        return float(self.alpha_bar[t - 1])

    def _check_t(self, t: int):
        if not 1 <= t <= self.T:
            raise IndexError(f"timestep t={t} out of range [1, {self.T}]")


def make_schedule(T: int, kind: str = "linear", beta_min: float = 1e-4,
                  beta_max: float = 0.02) -> NoiseSchedule:
    """Build a noise schedule with sigma_t^2 linear in t.

    kind="linear": sigma_t^2 = beta_min + (t-1)(beta_max-beta_min)/(T-1).
    kind="terminal_one": same ramp rescaled so sigma_T = 1 exactly, which
    forces abar_T = 0 (the final marginal is pure noise).
    """
    if T < 1:
        raise ConfigError(f"T must be >= 1, got T={T}")
    if not 0 < beta_min:
        raise ConfigError(f"beta_min must be > 0, got beta_min={beta_min}")
    if not beta_min <= beta_max:
        raise ConfigError(f"beta_max must be >= beta_min, got beta_max={beta_max}")
    if not beta_max <= 1:
        raise ConfigError(f"beta_max must be <= 1, got beta_max={beta_max}")
    if kind not in SCHEDULE_KINDS:
        raise ConfigError(f"unknown schedule kind {kind!r}, expected one of {SCHEDULE_KINDS}")

    if T == 1:
        sigma_sq = np.array([beta_min], dtype=np.float64)
    else:
        sigma_sq = np.linspace(beta_min, beta_max, T, dtype=np.float64)
    if kind == "terminal_one":
        sigma_sq = sigma_sq / sigma_sq[-1]
        sigma_sq[-1] = 1.0
    # alpha is defined from the stored sigma (not from sigma_sq directly) so
    # the identity alpha = 1 - sigma^2 holds bit-exactly after the sqrt.
    sigma = np.sqrt(sigma_sq)
    alpha = 1.0 - sigma**2
    return NoiseSchedule(
        T=T,
        sigma=sigma,
        alpha=alpha,
        alpha_bar=np.cumprod(alpha),
    )


def _check_same_shape(a, b, what: str):
    if tuple(a.shape) != tuple(b.shape):
        raise DimensionError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def forward_diffuse(x0, t: int, eps, sched: NoiseSchedule):
    """x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps."""
    _check_same_shape(x0, eps, "forward_diffuse(x0, eps)")
    abar = sched.abar(t)
    return math.sqrt(abar) * x0 + math.sqrt(1.0 - abar) * eps


def eps_objective(eps_pred, eps):
    """Mean squared error between predicted and true noise."""
    _check_same_shape(eps_pred, eps, "eps_objective(eps_pred, eps)")
    return ((eps_pred - eps) ** 2).mean()


def ddpm_step(x_t, eps_pred, t: int, sched: NoiseSchedule, noise):
    """Stochastic reverse update: mean = (x_t - sigma_t^2/sqrt(1-abar_t) eps)/sqrt(alpha_t),
    plus sigma_t * noise. The caller passes noise = 0 at t = 1."""
    sched._check_t(t)
    _check_same_shape(x_t, eps_pred, "ddpm_step(x_t, eps_pred)")
    sigma = float(sched.sigma[t - 1])
    alpha = float(sched.alpha[t - 1])
    abar = float(sched.alpha_bar[t - 1])
    mean = (x_t - (sigma**2 / math.sqrt(1.0 - abar)) * eps_pred) / math.sqrt(alpha)
    return mean + sigma * noise


def ddim_step(x_t, eps_pred, t: int, t_prev: int, sched: NoiseSchedule):
    """Deterministic (eta = 0) reverse jump from t to t_prev.

    Predicts x0_hat = (x_t - sqrt(1-abar_t) eps)/sqrt(abar_t) and re-noises
    it to level t_prev; t_prev = 0 (abar_0 = 1) yields the final sample.
    """
    sched._check_t(t)
    if t_prev >= t:
        raise ValueError(f"ddim_step requires t_prev < t, got t_prev={t_prev}, t={t}")
    if t_prev < 0:
        raise IndexError(f"t_prev={t_prev} out of range [0, {sched.T}]")
    _check_same_shape(x_t, eps_pred, "ddim_step(x_t, eps_pred)")
    abar_t = sched.abar(t)
    abar_prev = sched.abar(t_prev)
    x0_hat = (x_t - math.sqrt(1.0 - abar_t) * eps_pred) / math.sqrt(abar_t)
    return math.sqrt(abar_prev) * x0_hat + math.sqrt(1.0 - abar_prev) * eps_pred


def cfg_combine(eps_cond, eps_uncond, w: float):
    """Classifier-free guidance: (1+w) * eps_cond - w * eps_uncond."""
    _check_same_shape(eps_cond, eps_uncond, "cfg_combine(eps_cond, eps_uncond)")
    if w < 0:
        raise ValueError(f"guidance scale must be >= 0, got w={w}")
    return (1.0 + w) * eps_cond - w * eps_uncond

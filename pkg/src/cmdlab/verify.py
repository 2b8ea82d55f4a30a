"""Self-contained invariant suite behind the `verify` command.

Each check is fast (whole suite well under a minute) and reports one
pass/fail row; the heavier statistical and training criteria live in the
acceptance test suite.
"""
from __future__ import annotations

import math
import os
import tempfile

import numpy as np
import torch

from .autoencoder import AEConfig, VideoAutoencoder
from .checkpoint import load_checkpoint, save_checkpoint
from .costmodel import latent_video_sizes, linear_layer_report
from .data import load_video, save_video
from .diffusion import cfg_combine, ddim_step, ddpm_step, forward_diffuse, make_schedule
from .networks import patchify, unpatchify
from .pipeline import SampleSpec, sample_stage


def _check(name, fn):
    try:
        detail = fn()
        return {"name": name, "passed": True, "detail": detail or "ok"}
    except AssertionError as exc:
        return {"name": name, "passed": False, "detail": str(exc) or "assertion failed"}
    except Exception as exc:  # noqa: BLE001 - report, do not crash the suite
        return {"name": name, "passed": False, "detail": f"{type(exc).__name__}: {exc}"}


def _schedule_invariants():
    sched = make_schedule(1000, "linear", 1e-4, 0.02)
    assert np.all(np.diff(sched.alpha_bar) < 0), "alpha_bar not strictly decreasing"
    assert np.all(np.diff(sched.sigma) >= 0), "sigma not nondecreasing"
    assert sched.alpha_bar[-1] < 1e-4, f"abar_T = {sched.alpha_bar[-1]:.3e} >= 1e-4"
    term = make_schedule(1000, "terminal_one", 1e-4, 0.02)
    assert term.alpha_bar[-1] == 0.0, "terminal_one abar_T != 0"
    return f"abar_T={sched.alpha_bar[-1]:.3e}"


def _forward_marginals():
    rng = np.random.default_rng(0)
    sched = make_schedule(1000, "linear", 1e-4, 0.02)
    x0, n = 0.7, 10_000
    for t in (1, 500, 1000):
        abar = sched.abar(t)
        xs = forward_diffuse(np.full(n, x0), t, rng.standard_normal(n), sched)
        se_mean = math.sqrt(1 - abar) / math.sqrt(n)
        se_var = (1 - abar) * math.sqrt(2 / (n - 1))
        assert abs(xs.mean() - math.sqrt(abar) * x0) < 4 * se_mean, f"mean off at t={t}"
        assert abs(xs.var(ddof=1) - (1 - abar)) < 4 * se_var, f"variance off at t={t}"
    return "3 timesteps x 10k draws"


def _ddim_consistency():
    sched = make_schedule(1000, "linear", 1e-4, 0.02)
    rng = np.random.default_rng(1)
    x0 = rng.standard_normal(32)
    eps = rng.standard_normal(32)
    t, t_mid = 900, 400
    x_t = forward_diffuse(x0, t, eps, sched)
    via = ddim_step(ddim_step(x_t, eps, t, t_mid, sched), eps, t_mid, 0, sched)
    direct = ddim_step(x_t, eps, t, 0, sched)
    rel = np.max(np.abs(via - direct)) / np.max(np.abs(direct))
    assert rel < 1e-10, f"relative error {rel:.2e}"
    assert np.max(np.abs(direct - x0)) < 1e-10, "single jump does not invert forward"
    return f"rel err {rel:.1e}"


def _ddpm_mean_equivalence():
    sched = make_schedule(100, "linear", 1e-3, 0.05)
    rng = np.random.default_rng(2)
    x = rng.standard_normal(16)
    eps = rng.standard_normal(16)
    for t in (1, 50, 100):
        alpha, sigma2 = sched.alpha[t - 1], sched.sigma[t - 1] ** 2
        abar = sched.alpha_bar[t - 1]
        a = ddpm_step(x, eps, t, sched, np.zeros(16))
        b = (x - (1 - alpha) / math.sqrt(1 - abar) * eps) / math.sqrt(alpha)
        assert np.max(np.abs(a - b)) < 1e-12, f"forms disagree at t={t}"
        assert abs(sigma2 - (1 - alpha)) < 1e-15
    return "both mean forms agree to 1e-12"


def _cfg_affine():
    rng = np.random.default_rng(3)
    a, b, c, d = (rng.standard_normal(8) for _ in range(4))
    lhs = cfg_combine(a, b, 4.0) + cfg_combine(c, d, 4.0)
    rhs = cfg_combine(a + c, b + d, 4.0)
    assert np.allclose(lhs, rhs, atol=1e-12), "cfg_combine not affine"
    assert np.array_equal(cfg_combine(a, b, 0.0), a), "w=0 must return eps_cond"
    return "affine, w=0 identity"


def _content_frame_convexity():
    torch.manual_seed(0)
    model = VideoAutoencoder((3, 4, 8, 8), AEConfig(hidden_dim=16, depth=2, heads=2,
                                                    head_dim=8, motion_channels=4))
    video = torch.rand(4, 3, 4, 8, 8) * 2 - 1
    with torch.no_grad():
        xbar, _ = model.encode(video)
    lo, hi = video.min(dim=2).values, video.max(dim=2).values
    assert (xbar >= lo - 1e-6).all() and (xbar <= hi + 1e-6).all(), "convexity violated"
    static = video[:, :, :1].expand(-1, -1, 4, -1, -1).contiguous()
    with torch.no_grad():
        xbar_s, _ = model.encode(static)
        weights = model.importance_weights(model.encode_base(static))
    assert (xbar_s - static[:, :, 0]).abs().max() < 1e-6, "static fixed point violated"
    assert (weights.sum(dim=2) - 1).abs().max() < 1e-6, "softmax normalization violated"
    return "convexity, static fixed point, normalization"


def _patchify_round_trip():
    m = torch.arange(2 * 4 * 4, dtype=torch.float32).reshape(2, 4, 4)
    toks = patchify(m, 2)
    assert toks.shape == (4, 8)
    assert torch.equal(unpatchify(toks, 2, 2, 4, 4), m), "round trip not exact"
    return "exact round trip"


def _vtrf_round_trip():
    rng = np.random.default_rng(4)
    v = rng.standard_normal((3, 4, 6, 6)).astype(np.float32)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "v.vtrf")
        save_video(v, path)
        assert np.array_equal(load_video(path), v), "payload not bit-exact"
    return "bit-exact"


def _checkpoint_round_trip():
    rng = np.random.default_rng(5)
    params = {"a.w": rng.standard_normal((3, 4)).astype(np.float32),
              "a.b": rng.standard_normal(4).astype(np.float32)}
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "c.ckpt")
        save_checkpoint(params, path, config={"stage": "test"})
        loaded, config, _ = load_checkpoint(path)
    assert config == {"stage": "test"}
    assert all(np.array_equal(loaded[k], params[k]) for k in params), "not bit-exact"
    return "bit-exact"


def _compression_ratio():
    ae = AEConfig(input_patch=(2, 2), motion_channels=8)
    latent, video = latent_video_sizes(ae, (3, 16, 32, 32))
    assert latent == 7168 and video == 49152, f"sizes {latent}, {video}"
    ratios = []
    for length in (4, 8, 16, 32):
        lat, vid = latent_video_sizes(ae, (3, length, 32, 32))
        assert lat < vid, "latent not smaller than video"
        ratios.append(vid / lat)
    assert all(b > a for a, b in zip(ratios, ratios[1:])), "ratio not increasing in L"
    return f"compression {video / latent:.4f}x, increasing in L"


def _flop_hand_count():
    report = linear_layer_report(10, 4, 8)
    assert report.total_flops == 640, f"got {report.total_flops}"
    return "640 FLOPs"


def _oracle_inversion():
    sched = make_schedule(50, "linear", 1e-3, 0.05)
    gen = torch.Generator().manual_seed(6)
    x0 = torch.rand((2, 3), generator=gen, dtype=torch.float64) * 2 - 1

    def oracle(x_t, t, cond):
        abar = sched.abar(t)
        return (x_t - math.sqrt(abar) * x0) / math.sqrt(1 - abar)

    spec = SampleSpec(steps=50, guidance_w=0.0, seed=7, sampler_kind="ddpm")
    out = sample_stage(oracle, 0, 0, spec, sched, (2, 3), dtype=torch.float64)
    err = (out - x0).abs().max().item()
    assert err < 1e-4, f"ddpm oracle error {err:.2e}"
    return f"ddpm chain err {err:.1e}"


def _sampler_defaults():
    from .config import RunConfig

    cfg = RunConfig()
    assert cfg.sample_content.steps == 50 and cfg.sample_motion.steps == 100
    assert cfg.sample_content.eta == 0.0 and cfg.sample_motion.eta == 0.0
    assert cfg.sample_content.guidance_w == 4.0
    return "content 50 / motion 100 / eta 0 / w 4.0"


CHECKS = [
    ("schedule-invariants", _schedule_invariants),
    ("forward-marginal-statistics", _forward_marginals),
    ("ddim-consistency", _ddim_consistency),
    ("ddpm-mean-equivalence", _ddpm_mean_equivalence),
    ("cfg-affine", _cfg_affine),
    ("content-frame-invariants", _content_frame_convexity),
    ("patchify-round-trip", _patchify_round_trip),
    ("vtrf-round-trip", _vtrf_round_trip),
    ("checkpoint-round-trip", _checkpoint_round_trip),
    ("compression-ratio", _compression_ratio),
    ("flop-hand-count", _flop_hand_count),
    ("oracle-inversion", _oracle_inversion),
    ("sampler-defaults", _sampler_defaults),
]


def run_verify() -> list[dict]:
    return [_check(name, fn) for name, fn in CHECKS]

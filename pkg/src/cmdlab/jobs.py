"""Orchestration of the file-based subcommands.

Every job takes a validated RunConfig plus paths, composes with the other
jobs only through files (dataset dir, checkpoints, VTRF outputs), and
echoes the effective configuration next to whatever it writes.
"""
from __future__ import annotations

import os

import torch

from . import data as data_mod
from .autoencoder import VideoAutoencoder
from .config import RunConfig
from .costmodel import compare_report, flops_network
from .denoisers import ContentDenoiser, MotionDenoiser
from .errors import ConfigError
from .pipeline import (ae_config_blob, denoiser_config_blob, load_stage, save_stage,
                       sample_video_from_models, split_seed)
from .training import grad_check, train_autoencoder, train_denoiser
from .verify import run_verify


def apply_runtime(cfg: RunConfig):
    threads = cfg.runtime.threads
    if threads is None:
        env = os.environ.get("CMDLAB_THREADS")
        threads = int(env) if env else None
    if cfg.runtime.deterministic:
        threads = 1
    if threads is not None:
        torch.set_num_threads(threads)


def echo_config(cfg: RunConfig, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, "effective_config.json")
    data_mod._atomic_write(path, cfg.model_dump_json(indent=2).encode())
    return path


def job_gen_data(cfg: RunConfig, out_dir: str) -> dict:
    apply_runtime(cfg)
    d = cfg.data
    dataset = data_mod.gen_moving_shapes(d.seed, d.count, d.length, d.height,
                                         d.width, d.num_classes)
    manifest = data_mod.write_dataset(dataset, out_dir)
    echo_config(cfg, out_dir)
    return {"out_dir": out_dir, "manifest": manifest, "count": len(dataset)}


def _load_dataset(cfg: RunConfig, data_dir: str):
    dataset = data_mod.load_dataset(data_dir)
    shape = tuple(dataset[0][0].shape) if dataset else None
    if shape != cfg.video_shape:
        raise ConfigError(
            f"dataset clips have shape {shape}, config expects {cfg.video_shape}")
    return dataset


def job_train_ae(cfg: RunConfig, data_dir: str, out_path: str) -> dict:
    apply_runtime(cfg)
    dataset = _load_dataset(cfg, data_dir)
    tcfg = cfg.train_config("ae")
    torch.manual_seed(tcfg.seed)
    model = VideoAutoencoder(cfg.video_shape, cfg.ae_config())
    rows, ema = train_autoencoder(dataset, model, tcfg, log_path=out_path + ".loss.tsv")
    save_stage("ae", model, ema.shadow, out_path,
               ae_config_blob(cfg.video_shape, cfg.ae_config()))
    echo_config(cfg, os.path.dirname(os.path.abspath(out_path)))
    return {"checkpoint": out_path, "steps": len(rows),
            "final_loss": rows[-1][1] if rows else None,
            "loss_curve": out_path + ".loss.tsv"}


def job_train_denoiser(kind: str, cfg: RunConfig, data_dir: str, ae_path: str,
                       out_path: str) -> dict:
    apply_runtime(cfg)
    dataset = _load_dataset(cfg, data_dir)
    autoencoder, ae_blob, _ = load_stage(ae_path, "ae")
    if tuple(ae_blob["video_shape"]) != cfg.video_shape:
        raise ConfigError(
            f"autoencoder checkpoint was trained on video shape "
            f"{tuple(ae_blob['video_shape'])}, config expects {cfg.video_shape}")
    tcfg = cfg.train_config(kind)
    sched = cfg.noise_schedule()
    torch.manual_seed(tcfg.seed)
    if kind == "content":
        model = ContentDenoiser(cfg.frame_shape, cfg.denoiser_config("content"))
        blob = denoiser_config_blob(cfg.denoiser_config("content"), cfg.frame_shape)
    else:
        model = MotionDenoiser(cfg.latent_shape, cfg.frame_shape,
                               cfg.denoiser_config("motion"))
        blob = denoiser_config_blob(cfg.denoiser_config("motion"), cfg.frame_shape,
                                    cfg.latent_shape)
    rows, ema = train_denoiser(kind, dataset, autoencoder, model, sched, tcfg,
                               log_path=out_path + ".loss.tsv")
    save_stage(kind, model, ema.shadow, out_path, blob, sched)
    echo_config(cfg, os.path.dirname(os.path.abspath(out_path)))
    return {"checkpoint": out_path, "steps": len(rows),
            "final_loss": rows[-1][1] if rows else None,
            "loss_curve": out_path + ".loss.tsv"}


def job_sample(cfg: RunConfig, class_id: int, seed: int, ae_path: str,
               content_path: str, motion_path: str, out_path: str,
               export_frames: str | None = None, use_ema: bool = True) -> dict:
    apply_runtime(cfg)
    autoencoder, _, _ = load_stage(ae_path, "ae", use_ema=use_ema)
    content_model, _, sched = load_stage(content_path, "content", use_ema=use_ema)
    motion_model, _, _ = load_stage(motion_path, "motion", use_ema=use_ema)
    if sched is None:
        sched = cfg.noise_schedule()
    seed_content = split_seed(seed, "content")
    seed_motion = split_seed(seed, "motion")
    video = sample_video_from_models(
        class_id,
        cfg.sample_spec("content", seed_content),
        cfg.sample_spec("motion", seed_motion),
        autoencoder, content_model, motion_model, sched)
    arr = video.numpy()
    data_mod.save_video(arr, out_path)
    result = {"out": out_path, "shape": list(arr.shape),
              "seed_content": seed_content, "seed_motion": seed_motion,
              "value_range": [float(arr.min()), float(arr.max())]}
    if export_frames:
        result["frames"] = data_mod.export_ppm_frames(arr, export_frames)
    echo_config(cfg, os.path.dirname(os.path.abspath(out_path)))
    return result


def job_grad_check(kinds: list[str], tol: float) -> dict:
    reports = {kind: grad_check(kind, tol) for kind in kinds}
    return {"pass": all(r["pass"] for r in reports.values()),
            "max_rel_err": max(r["max_rel_err"] for r in reports.values()),
            "reports": reports}


def job_cost_report(cfg: RunConfig, baseline_steps: int | None = None) -> dict:
    apply_runtime(cfg)
    content_cfg = cfg.denoiser_config("content")
    motion_cfg = cfg.denoiser_config("motion")
    # baseline: width/depth-matched transformer over the full L*H'*W' token
    # grid (spatial patch equal to the autoencoder's input patch)
    baseline_cfg = content_cfg.__class__(
        hidden_dim=content_cfg.hidden_dim, depth=content_cfg.depth,
        heads=content_cfg.heads, patch=cfg.autoencoder.input_patch[0],
        z_patch=content_cfg.z_patch, content_patch=content_cfg.content_patch,
        num_classes=content_cfg.num_classes)
    if baseline_steps is None:
        baseline_steps = cfg.sample_motion.steps
    report = compare_report(
        (content_cfg, cfg.frame_shape),
        (motion_cfg, (cfg.latent_shape, cfg.frame_shape)),
        (baseline_cfg, cfg.video_shape),
        (cfg.ae_config(), cfg.video_shape),
        cfg.sample_content.steps, cfg.sample_motion.steps, baseline_steps)
    per_network = {
        role: flops_network(c, shape, role).total_flops
        for role, c, shape in (
            ("autoencoder", cfg.ae_config(), cfg.video_shape),
            ("content", content_cfg, cfg.frame_shape),
            ("motion", motion_cfg, (cfg.latent_shape, cfg.frame_shape)),
            ("monolithic_baseline", baseline_cfg, cfg.video_shape))}
    return {"text": report.to_text(), "tsv": report.to_tsv(),
            "ratios": report.ratios, "per_network_flops": per_network}


def job_verify() -> dict:
    results = run_verify()
    return {"pass": all(r["passed"] for r in results), "results": results}

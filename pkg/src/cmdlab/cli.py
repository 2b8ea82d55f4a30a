"""Thin command-line client for the cmdlab service.

By default every subcommand talks to an in-process instance of the FastAPI
app (no server needed); --server points it at a running instance instead.
Subcommands compose through files only. Exit codes: 0 success, 2 invalid
configuration, 3 missing inputs, 1 anything else.
"""
from __future__ import annotations

import json
import sys

import click
import httpx
from pydantic import ValidationError

from .config import load_run_config
from .errors import ConfigError

_EXIT_BY_STATUS = {422: 2, 404: 3}


def _fail(code: int, message: str):
    click.echo(f"error: {message.splitlines()[0]}", err=True)
    sys.exit(code)


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def _post(ctx, path: str, payload: dict) -> dict:
    with _client(ctx.obj["server"]) as client:
        resp = client.post(path, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json()
        except ValueError:
            detail = {"error": resp.text}
        msg = detail.get("error") or json.dumps(detail.get("detail", detail))
        _fail(_EXIT_BY_STATUS.get(resp.status_code, 1), msg)
    return resp.json()


def _load_config(ctx, overrides: dict | None = None) -> dict:
    try:
        cfg = load_run_config(ctx.obj["config_path"], overrides)
    except FileNotFoundError as exc:
        _fail(3, str(exc))
    except (ConfigError, json.JSONDecodeError) as exc:
        _fail(2, str(exc))
    except ValidationError as exc:
        err = exc.errors()[0]
        path = ".".join(str(p) for p in err["loc"])
        _fail(2, f"{path}: {err['msg']}")
    return cfg.model_dump()


def _runtime_overrides(ctx) -> dict:
    runtime = {}
    if ctx.obj["threads"] is not None:
        runtime["threads"] = ctx.obj["threads"]
    if ctx.obj["deterministic"]:
        runtime["deterministic"] = True
    return {"runtime": runtime} if runtime else {}


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON configuration file; flags override file values.")
@click.option("--server", default=None,
              help="Base URL of a running cmdlab service (default: in-process).")
@click.option("--threads", type=int, default=None, envvar="CMDLAB_THREADS",
              help="Internal parallelism (CMDLAB_THREADS as fallback).")
@click.option("--deterministic", is_flag=True,
              help="Force single-threaded, bit-reproducible execution.")
@click.pass_context
def main(ctx, config_path, server, threads, deterministic):
    """Content/motion factorized video diffusion at desk scale."""
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, server=server, threads=threads,
                   deterministic=deterministic)


@main.command("gen-data")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--count", type=int, default=None)
@click.option("--classes", type=int, default=None)
@click.pass_context
def gen_data(ctx, out_dir, seed, count, classes):
    """Generate the deterministic moving-shapes dataset."""
    data = {k: v for k, v in (("seed", seed), ("count", count),
                              ("num_classes", classes)) if v is not None}
    overrides = {"data": data} if data else {}
    overrides.update(_runtime_overrides(ctx))
    cfg = _load_config(ctx, overrides)
    result = _post(ctx, "/gen-data", {"config": cfg, "out_dir": out_dir})
    click.echo(f"wrote {result['count']} clips to {result['out_dir']} "
               f"(manifest: {result['manifest']})")


def _train_overrides(ctx, stage, steps, lr, batch, seed):
    section = {k: v for k, v in (("max_steps", steps), ("learning_rate", lr),
                                 ("batch_size", batch), ("seed", seed))
               if v is not None}
    overrides = {f"train_{stage}": section} if section else {}
    overrides.update(_runtime_overrides(ctx))
    return _load_config(ctx, overrides)


def _train_options(f):
    for opt in (click.option("--seed", type=int, default=None),
                click.option("--batch", type=int, default=None),
                click.option("--lr", type=float, default=None),
                click.option("--steps", type=int, default=None),
                click.option("--out", "out_path", required=True, type=click.Path()),
                click.option("--data", "data_dir", required=True, type=click.Path())):
        f = opt(f)
    return f


@main.command("train-ae")
@_train_options
@click.pass_context
def train_ae(ctx, data_dir, out_path, steps, lr, batch, seed):
    """Train the content/motion autoencoder."""
    cfg = _train_overrides(ctx, "ae", steps, lr, batch, seed)
    result = _post(ctx, "/train/autoencoder",
                   {"config": cfg, "data_dir": data_dir, "out_path": out_path})
    click.echo(f"checkpoint {result['checkpoint']} after {result['steps']} steps "
               f"(final loss {result['final_loss']:.6g})")


def _denoiser_command(stage: str, help_text: str):
    @main.command(f"train-{stage}", help=help_text)
    @_train_options
    @click.option("--ae", "ae_path", required=True, type=click.Path())
    @click.pass_context
    def cmd(ctx, data_dir, out_path, steps, lr, batch, seed, ae_path):
        cfg = _train_overrides(ctx, stage, steps, lr, batch, seed)
        result = _post(ctx, f"/train/{stage}",
                       {"config": cfg, "data_dir": data_dir,
                        "ae_checkpoint": ae_path, "out_path": out_path})
        click.echo(f"checkpoint {result['checkpoint']} after {result['steps']} steps "
                   f"(final loss {result['final_loss']:.6g})")

    return cmd


_denoiser_command("content", "Train the content-frame denoiser.")
_denoiser_command("motion", "Train the motion-latent denoiser.")


@main.command("sample")
@click.option("--class", "class_id", type=int, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--ae", "ae_path", required=True, type=click.Path())
@click.option("--content", "content_path", required=True, type=click.Path())
@click.option("--motion", "motion_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--steps-content", type=int, default=None)
@click.option("--steps-motion", type=int, default=None)
@click.option("--guidance", type=float, default=None)
@click.option("--eta", type=float, default=None)
@click.option("--frames-dir", type=click.Path(), default=None,
              help="Also export each frame as a PPM file.")
@click.option("--raw-weights", is_flag=True, help="Sample with raw instead of EMA weights.")
@click.pass_context
def sample(ctx, class_id, seed, ae_path, content_path, motion_path, out_path,
           steps_content, steps_motion, guidance, eta, frames_dir, raw_weights):
    """Generate one video with the two-stage sampler."""
    overrides: dict = {}
    if steps_content is not None:
        overrides.setdefault("sample_content", {})["steps"] = steps_content
    if steps_motion is not None:
        overrides.setdefault("sample_motion", {})["steps"] = steps_motion
    for key, val in (("guidance_w", guidance), ("eta", eta)):
        if val is not None:
            overrides.setdefault("sample_content", {})[key] = val
            overrides.setdefault("sample_motion", {})[key] = val
    overrides.update(_runtime_overrides(ctx))
    cfg = _load_config(ctx, overrides)
    result = _post(ctx, "/sample", {
        "config": cfg, "class_id": class_id, "seed": seed,
        "ae_checkpoint": ae_path, "content_checkpoint": content_path,
        "motion_checkpoint": motion_path, "out_path": out_path,
        "export_frames_dir": frames_dir, "use_ema": not raw_weights})
    click.echo(f"wrote {result['out']} shape {result['shape']} "
               f"range {result['value_range']}")


@main.command("grad-check")
@click.option("--kind", "kinds", multiple=True,
              default=("autoencoder", "content", "motion"))
@click.option("--tol", type=float, default=1e-4)
@click.pass_context
def cmd_grad_check(ctx, kinds, tol):
    """Verify analytic gradients against central finite differences."""
    result = _post(ctx, "/grad-check", {"kinds": list(kinds), "tol": tol})
    for kind, report in result["reports"].items():
        status = "PASS" if report["pass"] else "FAIL"
        click.echo(f"{kind:<14} {status}  max_rel_err={report['max_rel_err']:.3e}")
    if not result["passed"]:
        sys.exit(1)


@main.command("cost-report")
@click.option("--baseline-steps", type=int, default=None)
@click.option("--tsv", "tsv_path", type=click.Path(), default=None,
              help="Also write the report as TSV.")
@click.pass_context
def cost_report(ctx, baseline_steps, tsv_path):
    """Analytic FLOPs/params comparison against a monolithic baseline."""
    cfg = _load_config(ctx, _runtime_overrides(ctx))
    result = _post(ctx, "/cost-report",
                   {"config": cfg, "baseline_steps": baseline_steps})
    click.echo(result["text"], nl=False)
    if tsv_path:
        with open(tsv_path, "w") as f:
            f.write(result["tsv"])
        click.echo(f"wrote {tsv_path}")


@main.command("verify")
@click.pass_context
def verify(ctx):
    """Run the fast invariant suite and print a pass/fail table."""
    result = _post(ctx, "/verify", {})
    for row in result["results"]:
        status = "PASS" if row["passed"] else "FAIL"
        click.echo(f"{row['name']:<32} {status}  {row['detail']}")
    if not result["passed"]:
        _fail(1, "one or more verify checks failed")
    click.echo("all checks passed")


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()

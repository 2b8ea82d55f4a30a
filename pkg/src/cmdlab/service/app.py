"""FastAPI service wrapping the core package.

Jobs run synchronously in the request handler and compose through files on
the server's filesystem, mirroring the CLI contract: configuration errors
map to 422, missing inputs to 404, corrupt artifacts to 409.
"""
from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, jobs
from ..errors import ConfigError, IntegrityError
from . import schemas


def create_app() -> FastAPI:
    app = FastAPI(title="cmdlab", version=__version__)

    @app.exception_handler(ConfigError)
    async def _config_error(request: Request, exc: ConfigError):
        return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def _missing_input(request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=404, content={"error": str(exc)})

    @app.exception_handler(IntegrityError)
    async def _integrity(request: Request, exc: IntegrityError):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/gen-data", response_model=schemas.GenDataResponse)
    def gen_data(req: schemas.GenDataRequest):
        return jobs.job_gen_data(req.config, req.out_dir)

    @app.post("/train/autoencoder", response_model=schemas.TrainResponse)
    def train_autoencoder(req: schemas.TrainAutoencoderRequest):
        return jobs.job_train_ae(req.config, req.data_dir, req.out_path)

    @app.post("/train/content", response_model=schemas.TrainResponse)
    def train_content(req: schemas.TrainDenoiserRequest):
        return jobs.job_train_denoiser("content", req.config, req.data_dir,
                                       req.ae_checkpoint, req.out_path)

    @app.post("/train/motion", response_model=schemas.TrainResponse)
    def train_motion(req: schemas.TrainDenoiserRequest):
        return jobs.job_train_denoiser("motion", req.config, req.data_dir,
                                       req.ae_checkpoint, req.out_path)

    @app.post("/sample", response_model=schemas.SampleResponse)
    def sample(req: schemas.SampleRequest):
        if req.class_id >= req.config.data.num_classes:
            raise ConfigError(
                f"class_id {req.class_id} out of range "
                f"[0, {req.config.data.num_classes})")
        return jobs.job_sample(req.config, req.class_id, req.seed,
                               req.ae_checkpoint, req.content_checkpoint,
                               req.motion_checkpoint, req.out_path,
                               export_frames=req.export_frames_dir,
                               use_ema=req.use_ema)

    @app.post("/grad-check", response_model=schemas.GradCheckResponse)
    def run_grad_check(req: schemas.GradCheckRequest):
        result = jobs.job_grad_check(req.kinds, req.tol)
        return {"passed": result["pass"], "max_rel_err": result["max_rel_err"],
                "reports": result["reports"]}

    @app.post("/cost-report", response_model=schemas.CostReportResponse)
    def cost_report(req: schemas.CostReportRequest):
        return jobs.job_cost_report(req.config, req.baseline_steps)

    @app.post("/verify", response_model=schemas.VerifyResponse)
    def verify():
        result = jobs.job_verify()
        return {"passed": result["pass"], "results": result["results"]}

    return app

import filecmp
import json
import os

import numpy as np
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from cmdlab.cli import main as cli_main
from cmdlab.config import RunConfig, load_run_config
from cmdlab.service.app import create_app

TINY_DOC = {
    "data": {"seed": 0, "count": 6, "length": 4, "height": 8, "width": 8,
             "num_classes": 3},
    "schedule": {"T": 10, "kind": "linear", "beta_min": 0.01, "beta_max": 0.2},
    "autoencoder": {"hidden_dim": 16, "depth": 2, "heads": 2, "head_dim": 8,
                    "motion_channels": 4},
    "content_denoiser": {"hidden_dim": 16, "depth": 1, "heads": 2, "patch": 2},
    "motion_denoiser": {"hidden_dim": 16, "depth": 1, "heads": 2, "z_patch": 2,
                        "content_patch": 2},
    "train_ae": {"max_steps": 3, "batch_size": 2, "seed": 1},
    "train_content": {"max_steps": 3, "batch_size": 2, "seed": 2},
    "train_motion": {"max_steps": 3, "batch_size": 2, "seed": 3},
    "sample_content": {"steps": 5, "sampler_kind": "ddim", "guidance_w": 1.0},
    "sample_motion": {"steps": 5, "sampler_kind": "ddim", "guidance_w": 1.0},
}


@pytest.fixture
def client():
    return TestClient(create_app(), raise_server_exceptions=False)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(TINY_DOC))
    return str(path)


class TestRunConfig:
    def test_sampler_defaults_match_convention(self):
        cfg = RunConfig()
        assert cfg.sample_content.steps == 50
        assert cfg.sample_motion.steps == 100
        assert cfg.sample_content.eta == 0.0 and cfg.sample_motion.eta == 0.0
        assert cfg.sample_content.guidance_w == 4.0
        assert cfg.sample_motion.guidance_w == 4.0

    def test_unknown_keys_rejected(self):
        with pytest.raises(Exception, match="extra|Extra"):
            RunConfig.model_validate({"data": {"seeed": 3}})

    def test_cross_checks(self):
        with pytest.raises(ValueError, match="input_patch"):
            RunConfig.model_validate({"data": {"height": 9}})
        with pytest.raises(ValueError, match="steps"):
            RunConfig.model_validate({"schedule": {"T": 40}})

    def test_derived_objects(self):
        cfg = RunConfig.model_validate(TINY_DOC)
        assert cfg.video_shape == (3, 4, 8, 8)
        assert cfg.frame_shape == (3, 8, 8)
        assert cfg.latent_shape == (4, 4, 4, 4)
        assert cfg.noise_schedule().T == 10
        assert cfg.denoiser_config("content").num_classes == 3
        assert cfg.train_config("ae").seed == 1
        assert cfg.sample_spec("motion", 7).seed == 7

    def test_load_with_overrides(self, config_file):
        cfg = load_run_config(config_file, {"data": {"seed": 9}})
        assert cfg.data.seed == 9
        assert cfg.data.count == 6  # untouched siblings survive the merge

    def test_channels_fixed_to_rgb(self):
        with pytest.raises(ValueError, match="channels"):
            RunConfig.model_validate({"data": {"channels": 4}})


class TestService:
    def test_health(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        assert resp.json()["status"] == "ok"

    def test_gen_data_and_echo(self, client, tmp_path):
        out = str(tmp_path / "data")
        resp = client.post("/gen-data", json={"config": TINY_DOC, "out_dir": out})
        assert resp.status_code == 200
        assert resp.json()["count"] == 6
        assert os.path.exists(os.path.join(out, "manifest.tsv"))
        echoed = json.load(open(os.path.join(out, "effective_config.json")))
        assert echoed["data"]["count"] == 6

    def test_invalid_config_is_422(self, client, tmp_path):
        doc = {"data": {"channels": 4}}
        resp = client.post("/gen-data", json={"config": doc,
                                              "out_dir": str(tmp_path)})
        assert resp.status_code == 422

    def test_missing_dataset_is_404(self, client, tmp_path):
        resp = client.post("/train/autoencoder", json={
            "config": TINY_DOC, "data_dir": str(tmp_path / "nope"),
            "out_path": str(tmp_path / "ae.ckpt")})
        assert resp.status_code == 404

    def test_corrupt_checkpoint_is_409(self, client, tmp_path):
        data = str(tmp_path / "data")
        client.post("/gen-data", json={"config": TINY_DOC, "out_dir": data})
        ae = str(tmp_path / "ae.ckpt")
        resp = client.post("/train/autoencoder", json={
            "config": TINY_DOC, "data_dir": data, "out_path": ae})
        assert resp.status_code == 200
        blob = bytearray(open(ae, "rb").read())
        blob[-3] ^= 0xFF
        open(ae, "wb").write(bytes(blob))
        resp = client.post("/train/content", json={
            "config": TINY_DOC, "data_dir": data, "ae_checkpoint": ae,
            "out_path": str(tmp_path / "c.ckpt")})
        assert resp.status_code == 409

    def test_class_out_of_range_is_422(self, client, tmp_path):
        resp = client.post("/sample", json={
            "config": TINY_DOC, "class_id": 7, "seed": 0,
            "ae_checkpoint": "x", "content_checkpoint": "y",
            "motion_checkpoint": "z", "out_path": str(tmp_path / "v.vtrf")})
        assert resp.status_code == 422

    def test_verify_endpoint(self, client):
        resp = client.post("/verify", json={})
        assert resp.status_code == 200
        body = resp.json()
        assert body["passed"] is True
        assert len(body["results"]) >= 10

    def test_cost_report_endpoint(self, client):
        resp = client.post("/cost-report", json={"config": TINY_DOC})
        assert resp.status_code == 200
        body = resp.json()
        assert "multiply-add=2 FLOPs" in body["text"]
        assert body["ratios"]["compression"] > 1
        assert set(body["per_network_flops"]) == {
            "autoencoder", "content", "motion", "monolithic_baseline"}


class TestCli:
    def _run(self, args, expect=0):
        runner = CliRunner()
        result = runner.invoke(cli_main, args)
        assert result.exit_code == expect, result.output
        return result

    def test_gen_data_idempotent_byte_for_byte(self, config_file, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        self._run(["--config", config_file, "gen-data", "--out", a])
        self._run(["--config", config_file, "gen-data", "--out", b])
        names = sorted(os.listdir(a))
        assert names == sorted(os.listdir(b))
        match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
        assert not mismatch and not errors

    def test_invalid_config_exits_2_with_key_path(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"data": {"channels": 4}}))
        result = CliRunner().invoke(
            cli_main, ["--config", str(bad), "gen-data", "--out",
                       str(tmp_path / "d")])
        assert result.exit_code == 2
        assert "channels" in result.stderr

    def test_unknown_key_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"data": {"n_classes": 4}}))
        result = CliRunner().invoke(
            cli_main, ["--config", str(bad), "gen-data", "--out",
                       str(tmp_path / "d")])
        assert result.exit_code == 2
        assert "n_classes" in result.stderr

    def test_missing_input_exits_3(self, config_file, tmp_path):
        result = CliRunner().invoke(cli_main, [
            "--config", config_file, "train-ae", "--data",
            str(tmp_path / "missing"), "--out", str(tmp_path / "ae.ckpt")])
        assert result.exit_code == 3

    def test_missing_config_file_exits_3(self, tmp_path):
        result = CliRunner().invoke(cli_main, [
            "--config", str(tmp_path / "none.json"), "gen-data", "--out",
            str(tmp_path / "d")])
        assert result.exit_code == 3

    def test_full_pipeline_and_sample_idempotence(self, config_file, tmp_path):
        data = str(tmp_path / "data")
        ae, c, m = (str(tmp_path / f"{s}.ckpt") for s in ("ae", "c", "m"))
        cfg = ["--config", config_file]
        self._run(cfg + ["gen-data", "--out", data])
        self._run(cfg + ["train-ae", "--data", data, "--out", ae])
        self._run(cfg + ["train-content", "--data", data, "--ae", ae, "--out", c])
        self._run(cfg + ["train-motion", "--data", data, "--ae", ae, "--out", m])
        v1, v2 = str(tmp_path / "v1.vtrf"), str(tmp_path / "v2.vtrf")
        sample = ["sample", "--class", "1", "--seed", "42", "--ae", ae,
                  "--content", c, "--motion", m]
        self._run(cfg + sample + ["--out", v1])
        self._run(cfg + sample + ["--out", v2])
        assert open(v1, "rb").read() == open(v2, "rb").read()
        from cmdlab.data import load_video

        video = load_video(v1)
        assert video.shape == (3, 4, 8, 8)
        assert np.abs(video).max() <= 1.0

    def test_grad_check_command(self):
        result = self._run(["grad-check", "--kind", "linear", "--tol", "1e-6"])
        assert "PASS" in result.output

    def test_cost_report_command(self, config_file, tmp_path):
        tsv = str(tmp_path / "cost.tsv")
        result = self._run(["--config", config_file, "cost-report", "--tsv", tsv])
        assert "compression" in result.output
        assert os.path.exists(tsv)

    def test_verify_command(self):
        result = self._run(["verify"])
        assert "all checks passed" in result.output

    def test_threads_env_var_accepted(self, config_file, tmp_path, monkeypatch):
        monkeypatch.setenv("CMDLAB_THREADS", "1")
        self._run(["--config", config_file, "gen-data", "--out",
                   str(tmp_path / "d")])

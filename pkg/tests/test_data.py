import os

import numpy as np
import pytest

from cmdlab.data import (MOTION_KINDS, export_ppm_frames, gen_clip,
                         gen_moving_shapes, load_dataset, load_video,
                         motion_kind, save_video, write_dataset)
from cmdlab.errors import ConfigError, IntegrityError


class TestGeneration:
    def test_determinism(self):
        a = gen_moving_shapes(7, 2, 8, 16, 16, 4)
        b = gen_moving_shapes(7, 2, 8, 16, 16, 4)
        assert len(a) == len(b) == 2
        for (va, ca), (vb, cb) in zip(a, b):
            assert ca == cb
            assert np.array_equal(va, vb)

    def test_different_seeds_differ(self):
        a = gen_moving_shapes(7, 1, 4, 8, 8, 4)[0][0]
        b = gen_moving_shapes(8, 1, 4, 8, 8, 4)[0][0]
        assert not np.array_equal(a, b)

    def test_class_cycle_and_motion_kinds(self):
        ds = gen_moving_shapes(0, 10, 4, 8, 8, 5)
        assert [c for _, c in ds] == [0, 1, 2, 3, 4, 0, 1, 2, 3, 4]
        assert motion_kind(4) == "static"
        assert motion_kind(9) == "static"
        assert motion_kind(0) == "horizontal"
        assert len(MOTION_KINDS) == 5

    def test_static_class_frames_identical(self):
        clip = gen_clip(3, 0, 4, 8, 16, 16)  # class 4 -> static
        for ell in range(1, 8):
            assert np.array_equal(clip[:, ell], clip[:, 0])

    def test_values_in_range(self):
        clip = gen_clip(0, 1, 2, 8, 16, 16)
        assert clip.min() >= -1.0 and clip.max() <= 1.0
        assert clip.dtype == np.float32

    def test_background_constant_across_frames(self):
        # every pixel takes at most two values over time: its static
        # background value and the square color (+-0.9)
        clip = gen_clip(11, 0, 0, 8, 16, 16)
        for c in range(3):
            for y in range(16):
                for x in range(16):
                    vals = set(np.unique(clip[c, :, y, x]).tolist())
                    assert len(vals) <= 2
                    if len(vals) == 2:
                        assert 0.9 in {abs(round(v, 6)) for v in vals}

    def test_moving_class_actually_moves(self):
        clip = gen_clip(0, 0, 0, 8, 16, 16)  # horizontal
        assert not np.array_equal(clip[:, 0], clip[:, 4])

    def test_invalid_parameters(self):
        with pytest.raises(ConfigError):
            gen_moving_shapes(0, 0, 4, 8, 8, 4)
        with pytest.raises(ConfigError):
            gen_moving_shapes(0, 2, 4, 8, 8, 0)


class TestVtrf:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        v = rng.standard_normal((3, 4, 6, 5)).astype(np.float32)
        path = str(tmp_path / "v.vtrf")
        save_video(v, path)
        assert np.array_equal(load_video(path), v)

    def test_flipped_byte_detected(self, tmp_path):
        path = str(tmp_path / "v.vtrf")
        save_video(np.ones((1, 2, 2, 2), dtype=np.float32), path)
        blob = bytearray(open(path, "rb").read())
        blob[25] ^= 0xFF  # header is 23 bytes; this lands in the payload
        open(path, "wb").write(bytes(blob))
        with pytest.raises(IntegrityError, match="CRC"):
            load_video(path)

    def test_bad_magic(self, tmp_path):
        path = str(tmp_path / "v.vtrf")
        save_video(np.ones((1, 2, 2, 2), dtype=np.float32), path)
        blob = bytearray(open(path, "rb").read())
        blob[0] = ord("X")
        open(path, "wb").write(bytes(blob))
        with pytest.raises(IntegrityError, match="magic"):
            load_video(path)

    def test_truncation_detected(self, tmp_path):
        path = str(tmp_path / "v.vtrf")
        save_video(np.ones((1, 2, 2, 2), dtype=np.float32), path)
        blob = open(path, "rb").read()
        open(path, "wb").write(blob[:-6])
        with pytest.raises(IntegrityError):
            load_video(path)

    def test_zero_dims_rejected_on_write(self, tmp_path):
        with pytest.raises(ConfigError):
            save_video(np.ones((1, 0, 2, 2), dtype=np.float32),
                       str(tmp_path / "v.vtrf"))

    def test_wrong_rank_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            save_video(np.ones((2, 2, 2), dtype=np.float32), str(tmp_path / "v.vtrf"))


class TestPpmExport:
    def _payload(self, path):
        blob = open(path, "rb").read()
        # header is three newline-terminated fields: magic, dims, maxval
        idx = 0
        for _ in range(3):
            idx = blob.index(b"\n", idx) + 1
        return blob[:idx], blob[idx:]

    def test_all_minus_one_is_zero_bytes(self, tmp_path):
        v = -np.ones((3, 2, 4, 4), dtype=np.float32)
        paths = export_ppm_frames(v, str(tmp_path))
        assert [os.path.basename(p) for p in paths] == ["frame_0000.ppm",
                                                        "frame_0001.ppm"]
        header, payload = self._payload(paths[0])
        assert header == b"P6\n4 4\n255\n"
        assert payload == bytes(48)

    def test_all_plus_one_is_255(self, tmp_path):
        v = np.ones((3, 1, 2, 2), dtype=np.float32)
        (path,) = export_ppm_frames(v, str(tmp_path))
        assert self._payload(path)[1] == b"\xff" * 12

    def test_zero_maps_to_128_round_half_up(self, tmp_path):
        v = np.zeros((3, 1, 1, 1), dtype=np.float32)
        (path,) = export_ppm_frames(v, str(tmp_path))
        assert self._payload(path)[1] == bytes([128, 128, 128])

    def test_non_rgb_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="C=3"):
            export_ppm_frames(np.zeros((1, 1, 2, 2), dtype=np.float32), str(tmp_path))


class TestDatasetIo:
    def test_manifest_round_trip(self, tmp_path):
        ds = gen_moving_shapes(1, 3, 4, 8, 8, 2)
        manifest = write_dataset(ds, str(tmp_path))
        assert os.path.basename(manifest) == "manifest.tsv"
        loaded = load_dataset(str(tmp_path))
        assert len(loaded) == 3
        for (va, ca), (vb, cb) in zip(ds, loaded):
            assert ca == cb and np.array_equal(va, vb)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(str(tmp_path))

    def test_bad_manifest_header(self, tmp_path):
        (tmp_path / "manifest.tsv").write_text("wrong\theader\n")
        with pytest.raises(IntegrityError):
            load_dataset(str(tmp_path))

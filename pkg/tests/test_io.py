"""File formats: PFM maps, PGM masks, configs, metric reports."""

from __future__ import annotations

import json

import numpy as np
import pytest

from nint.camera import BrownConradyPinhole, IdealPinhole, TabulatedRays
from nint.errors import (
    ConfigError,
    DimensionMismatch,
    MalformedHeader,
    MapIoError,
    NonUnitNormals,
)
from nint.io import (
    read_camera_config,
    read_config,
    read_depth_map,
    read_mask,
    read_metrics_report,
    read_normal_map,
    read_pfm,
    read_ray_map,
    read_report_csv,
    read_scene_config,
    renormalization_events,
    report_rows,
    write_depth_map,
    write_mask,
    write_metrics_report,
    write_normal_map,
    write_pfm,
    write_report_csv,
    write_report_json,
)
from nint.metrics import MetricsReport
from nint.synth import Plane, SphereCap, StepPlanes, Wave


# ---------------------------------------------------------------------------
# PFM


def test_pfm_roundtrip_is_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    for shape in ((5, 7), (4, 6, 3)):
        data = rng.standard_normal(shape).astype(np.float32)
        data.flat[0] = -0.0
        path = tmp_path / "map.pfm"
        write_pfm(path, data)
        back = read_pfm(path)
        assert back.dtype == np.float32
        assert back.tobytes() == data.tobytes()


def test_pfm_rejects_other_shapes(tmp_path):
    with pytest.raises(DimensionMismatch):
        write_pfm(tmp_path / "x.pfm", np.zeros((4, 4, 2)))
    with pytest.raises(DimensionMismatch):
        write_pfm(tmp_path / "x.pfm", np.zeros(16))


def test_pfm_reads_big_endian_payloads(tmp_path):
    data = np.arange(6, dtype=">f4").reshape(2, 3)
    path = tmp_path / "be.pfm"
    path.write_bytes(b"Pf\n3 2\n1.0\n" + np.flipud(data).tobytes())
    np.testing.assert_array_equal(read_pfm(path), data.astype(np.float32))


@pytest.mark.parametrize(
    "payload",
    [
        b"P6\n3 2\n-1.0\n" + b"\0" * 24,          # wrong magic
        b"Pf\n3",                                  # truncated header
        b"Pf\nx 2\n-1.0\n" + b"\0" * 24,           # non-integer width
        b"Pf\n0 2\n-1.0\n",                        # zero width
        b"Pf\n3 2\n0.0\n" + b"\0" * 24,            # zero scale
    ],
)
def test_pfm_header_strictness(tmp_path, payload):
    path = tmp_path / "bad.pfm"
    path.write_bytes(payload)
    with pytest.raises(MalformedHeader):
        read_pfm(path)


def test_pfm_data_byte_count_is_checked(tmp_path):
    path = tmp_path / "short.pfm"
    path.write_bytes(b"Pf\n3 2\n-1.0\n" + b"\0" * 23)
    with pytest.raises(MapIoError, match="data bytes"):
        read_pfm(path)


def test_missing_file_is_an_io_error(tmp_path):
    with pytest.raises(MapIoError):
        read_pfm(tmp_path / "nope.pfm")


# ---------------------------------------------------------------------------
# PGM masks


def test_mask_roundtrip(tmp_path):
    mask = np.zeros((4, 5), dtype=bool)
    mask[1:3, 2:] = True
    path = tmp_path / "mask.pgm"
    write_mask(path, mask)
    np.testing.assert_array_equal(read_mask(path), mask)


def test_mask_threshold_and_comments(tmp_path):
    path = tmp_path / "gray.pgm"
    path.write_bytes(b"P5\n# says who\n2 1 # trailing\n255\n" + bytes([127, 128]))
    np.testing.assert_array_equal(read_mask(path), [[False, True]])


@pytest.mark.parametrize(
    "payload",
    [
        b"P2\n2 1\n255\n\0\0",                 # ASCII PGM is not supported
        b"P5\n2 1\n300\n\0\0",                 # maxval out of range
        b"P5\n-1 1\n255\n",                    # bad geometry
    ],
)
def test_mask_header_strictness(tmp_path, payload):
    path = tmp_path / "bad.pgm"
    path.write_bytes(payload)
    with pytest.raises(MalformedHeader):
        read_mask(path)


def test_mask_byte_count_is_checked(tmp_path):
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n3 2\n255\n" + b"\0" * 5)
    with pytest.raises(MapIoError):
        read_mask(path)


# ---------------------------------------------------------------------------
# typed maps


def test_normal_map_roundtrip_without_renormalization(tmp_path):
    rng = np.random.default_rng(1)
    normals = rng.standard_normal((6, 6, 3))
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    normals[0, 0] = 0.0  # invalid pixel passes through untouched
    path = tmp_path / "normals.pfm"
    before = renormalization_events.count
    write_normal_map(path, normals)
    back, size = read_normal_map(path)
    assert size == (6, 6)
    assert renormalization_events.count == before
    np.testing.assert_array_equal(back, normals.astype(np.float32).astype(np.float64))
    assert np.all(back[0, 0] == 0.0)


def test_normal_map_renormalizes_quantized_norms(tmp_path):
    normals = np.zeros((2, 2, 3))
    normals[..., 2] = -1.001  # off by ~1e-3: quantization-scale, repairable
    path = tmp_path / "normals.pfm"
    write_normal_map(path, normals)
    before = renormalization_events.count
    back, _ = read_normal_map(path)
    assert renormalization_events.count == before + 4
    np.testing.assert_allclose(np.linalg.norm(back, axis=-1), 1.0, atol=1e-12)


def test_normal_map_rejects_gross_norm_violations(tmp_path):
    normals = np.zeros((2, 2, 3))
    normals[..., 2] = -1.2
    path = tmp_path / "normals.pfm"
    write_normal_map(path, normals)
    with pytest.raises(NonUnitNormals):
        read_normal_map(path)


def test_normal_map_requires_three_channels(tmp_path):
    write_pfm(tmp_path / "one.pfm", np.zeros((3, 3)))
    with pytest.raises(MapIoError):
        read_normal_map(tmp_path / "one.pfm")
    with pytest.raises(DimensionMismatch):
        write_normal_map(tmp_path / "bad.pfm", np.zeros((3, 3)))


def test_depth_map_masking_and_finiteness(tmp_path):
    depth = np.full((3, 3), 2.0)
    depth[0, 0] = np.inf
    mask = np.ones((3, 3), dtype=bool)
    mask[0, 0] = False
    path = tmp_path / "depth.pfm"
    write_depth_map(path, depth, mask)  # non-finite only outside the mask: fine
    back = read_depth_map(path)
    assert back[0, 0] == 0.0
    assert np.all(back[mask] == 2.0)
    with pytest.raises(ValueError, match="non-finite"):
        write_depth_map(path, depth, np.ones((3, 3), dtype=bool))
    with pytest.raises(ValueError, match="non-finite"):
        write_depth_map(path, depth)
    with pytest.raises(DimensionMismatch):
        write_depth_map(path, depth, np.ones((2, 3), dtype=bool))


def test_depth_and_ray_channel_checks(tmp_path):
    write_pfm(tmp_path / "three.pfm", np.zeros((3, 3, 3)))
    with pytest.raises(MapIoError):
        read_depth_map(tmp_path / "three.pfm")
    write_pfm(tmp_path / "one.pfm", np.zeros((3, 3)))
    with pytest.raises(MapIoError):
        read_ray_map(tmp_path / "one.pfm")


# ---------------------------------------------------------------------------
# configs


def test_config_parsing(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("# header\n key = 1 # inline\n\nother=  two words \n")
    assert read_config(path) == {"key": "1", "other": "two words"}


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("key 1\n", "expected 'key = value'"),
        ("key =\n", "expected 'key = value'"),
        ("= 1\n", "expected 'key = value'"),
        ("key = 1\nkey = 2\n", "duplicate key"),
    ],
)
def test_config_errors_carry_line_numbers(tmp_path, text, fragment):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    with pytest.raises(ConfigError, match=fragment) as err:
        read_config(path)
    assert "bad.cfg:" in str(err.value)


def test_pinhole_camera_config(tmp_path):
    path = tmp_path / "cam.cfg"
    path.write_text("model = pinhole\nfx = 600\nfy = 600\ncx = 31.5\ncy = 31.5\n")
    cam = read_camera_config(path)
    assert isinstance(cam, IdealPinhole)
    assert (cam.fx, cam.cx) == (600.0, 31.5)


def test_brown_conrady_config_defaults_missing_coefficients_to_zero(tmp_path):
    path = tmp_path / "cam.cfg"
    path.write_text("model = brown_conrady\nfx = 600\nfy = 600\ncx = 31.5\ncy = 31.5\nk1 = -0.2\n")
    cam = read_camera_config(path)
    assert isinstance(cam, BrownConradyPinhole)
    assert cam.k1 == -0.2 and cam.k2 == 0.0 and cam.p2 == 0.0


def test_tabulated_camera_resolves_ray_file_relative_to_config(tmp_path):
    rays = np.zeros((2, 3, 3))
    rays[..., 2] = 1.0
    write_pfm(tmp_path / "rays.pfm", rays)
    path = tmp_path / "cam.cfg"
    path.write_text("model = tabulated\nray_file = rays.pfm\n")
    cam = read_camera_config(path)
    assert isinstance(cam, TabulatedRays)
    np.testing.assert_array_equal(cam.ray_map(3, 2), rays)


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("fx = 1\n", "missing required key 'model'"),
        ("model = pinhole\nfx = 1\nfy = 1\ncx = 0\n", "missing required key 'cy'"),
        ("model = pinhole\nfx = a\nfy = 1\ncx = 0\ncy = 0\n", "not a number"),
        ("model = pinhole\nfx = 1\nfy = 1\ncx = 0\ncy = 0\nzoom = 2\n", "unknown key"),
        ("model = tabulated\n", "needs 'ray_file'"),
        ("model = orthographic\n", "no single center"),
        ("model = fisheye\n", "unknown camera model"),
    ],
)
def test_camera_config_errors(tmp_path, text, fragment):
    path = tmp_path / "cam.cfg"
    path.write_text(text)
    with pytest.raises(ConfigError, match=fragment):
        read_camera_config(path)


def test_scene_configs_build_all_four_kinds(tmp_path):
    cases = {
        "scene = plane\npx=0\npy=0\npz=2\nnx=0\nny=0\nnz=-1\n": Plane,
        "scene = sphere\ncx=0\ncy=0\ncz=3\nradius=1\n": SphereCap,
        "scene = step\nz_near=2\nz_far=3\nsplit_a=1\nsplit_b=0\nsplit_c=-4.6\n": StepPlanes,
        "scene = wave\nz0=2\namplitude=0.1\nfu=2\nfv=3\n": Wave,
    }
    for text, kind in cases.items():
        path = tmp_path / "scene.cfg"
        path.write_text(text)
        assert isinstance(read_scene_config(path), kind)


def test_scene_config_errors(tmp_path):
    path = tmp_path / "scene.cfg"
    path.write_text("scene = torus\n")
    with pytest.raises(ConfigError, match="unknown scene"):
        read_scene_config(path)
    path.write_text("z0 = 1\n")
    with pytest.raises(ConfigError, match="missing required key 'scene'"):
        read_scene_config(path)


# ---------------------------------------------------------------------------
# reports


def _report():
    return MetricsReport(
        made=1.0 / 3.0,
        re_percent=0.123456789012345678,
        era_percent=2.0,
        alignment="median:linear",
        pixel_count=4096,
        residual_mean={"abs": 1e-12},
        residual_std={"abs": 7e-13},
    )


def test_report_csv_roundtrip_is_lossless(tmp_path):
    report = _report()
    path = tmp_path / "report.csv"
    write_metrics_report(path, report)
    assert read_metrics_report(path) == report


def test_report_rows_are_flat_and_ordered(tmp_path):
    rows = report_rows(_report())
    assert list(rows) == [
        "made",
        "re_percent",
        "era_percent",
        "residual_mean_abs",
        "residual_std_abs",
    ]


def test_report_csv_header_and_row_strictness(tmp_path):
    path = tmp_path / "report.csv"
    path.write_text("metric,value\nmade,0.0\n")
    with pytest.raises(MalformedHeader, match="header"):
        read_report_csv(path)
    path.write_text("metric,value,alignment,pixels\nmade,0.0,none\n")
    with pytest.raises(MalformedHeader, match="row"):
        read_report_csv(path)
    write_report_csv(path, {"re_percent": 0.0, "era_percent": 0.0}, "none", 1)
    with pytest.raises(MalformedHeader, match="missing metric"):
        read_metrics_report(path)


def test_report_json_structure(tmp_path):
    path = tmp_path / "report.json"
    write_report_json(path, {"made": 0.5}, "median:linear", 9)
    payload = json.loads(path.read_text())
    assert payload == {
        "alignment": "median:linear",
        "pixels": 9,
        "metrics": {"made": 0.5},
    }

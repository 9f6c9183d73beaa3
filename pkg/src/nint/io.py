"""Bit-exact file I/O: PFM float maps, PGM masks, key-value configs, reports.

Formats, pinned so files written here read identically anywhere:

* Float maps are PFM: magic ``PF`` (3-channel) or ``Pf`` (1-channel), ASCII
  width/height, a scale whose sign encodes endianness (we write ``-1.0`` =
  little-endian), then raw 32-bit float rows stored bottom-to-top.  Reads
  honor either endianness; writes are little-endian.  Round trips through
  :func:`write_pfm`/:func:`read_pfm` are bitwise stable.
* Masks are binary PGM ``P5`` with maxval 255; a pixel is valid iff its
  value is >= 128.  ``#`` comments in the header are accepted on read.
* Configs are UTF-8 ``key = value`` lines; ``#`` starts a comment; unknown
  or duplicate keys are hard errors so typos cannot silently change an
  experiment.
* Reports are CSV with the fixed header ``metric,value,alignment,pixels``
  (floats serialized via repr for lossless round trips), plus a JSON twin.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Mapping

import numpy as np

from .camera import BrownConradyPinhole, CameraModel, IdealPinhole, TabulatedRays
from .errors import (
    ConfigError,
    DimensionMismatch,
    MalformedHeader,
    MapIoError,
    NonUnitNormals,
)
from .formulation import EventCounter
from .metrics import MetricsReport
from .synth import Plane, Scene, SphereCap, StepPlanes, Wave

logger = logging.getLogger(__name__)

#: Squared-norm deviation beyond which stored normals are renormalized on
#: read.  Chosen above float32 quantization (~2e-7) so exact unit maps round
#: trip untouched, but catching anything encoded at lower precision.
RENORM_SQ_TOL = 1e-6

#: Norm deviation beyond which a "normal map" is rejected outright — that is
#: not quantization, the file likely holds a different quantity/convention.
HARD_NORM_TOL = 1e-2

#: Normals renormalized on read, cumulative over the process.
renormalization_events = EventCounter()


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise MapIoError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# PFM float maps


def write_pfm(path, data: np.ndarray) -> None:
    """Write a (H, W) or (H, W, 3) float array as little-endian PFM."""
    data = np.asarray(data)
    if data.ndim == 2:
        magic = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        magic = b"PF"
    else:
        raise DimensionMismatch(f"PFM holds (H, W) or (H, W, 3) data, got {data.shape}")
    h, w = data.shape[:2]
    try:
        with open(path, "wb") as fh:
            fh.write(magic + b"\n")
            fh.write(f"{w} {h}\n".encode("ascii"))
            fh.write(b"-1.0\n")
            fh.write(np.flipud(data.astype("<f4")).tobytes())
    except OSError as exc:
        raise MapIoError(f"{path}: {exc}") from exc


def _pfm_token(buf: bytes, pos: int, path) -> tuple[bytes, int]:
    while pos < len(buf) and buf[pos : pos + 1].isspace():
        pos += 1
    start = pos
    while pos < len(buf) and not buf[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise MalformedHeader(f"{path}: truncated PFM header")
    return buf[start:pos], pos


def read_pfm(path) -> np.ndarray:
    """Read a PFM file to float32, (H, W) or (H, W, 3), top-to-bottom rows."""
    raw = _read_bytes(path)
    magic, pos = _pfm_token(raw, 0, path)
    if magic not in (b"PF", b"Pf"):
        raise MalformedHeader(f"{path}: not a PFM file (magic {magic!r})")
    channels = 3 if magic == b"PF" else 1
    w_tok, pos = _pfm_token(raw, pos, path)
    h_tok, pos = _pfm_token(raw, pos, path)
    scale_tok, pos = _pfm_token(raw, pos, path)
    try:
        w, h, scale = int(w_tok), int(h_tok), float(scale_tok)
    except ValueError:
        raise MalformedHeader(f"{path}: bad PFM dimensions/scale") from None
    if w <= 0 or h <= 0 or scale == 0 or not np.isfinite(scale):
        raise MalformedHeader(f"{path}: bad PFM dimensions/scale ({w}x{h}, scale {scale})")
    blob = raw[pos + 1 :]  # exactly one whitespace byte separates header and data
    expected = w * h * channels * 4
    if len(blob) != expected:
        raise MapIoError(f"{path}: expected {expected} data bytes, found {len(blob)}")
    arr = np.frombuffer(blob, dtype="<f4" if scale < 0 else ">f4")
    arr = arr.astype(np.float32)  # native order, writable
    arr = arr.reshape((h, w, 3) if channels == 3 else (h, w))
    return np.flipud(arr).copy()


# ---------------------------------------------------------------------------
# PGM masks


def write_mask(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise DimensionMismatch(f"mask must be 2-D, got shape {mask.shape}")
    h, w = mask.shape
    try:
        with open(path, "wb") as fh:
            fh.write(b"P5\n")
            fh.write(f"{w} {h}\n255\n".encode("ascii"))
            fh.write(np.where(mask, 255, 0).astype(np.uint8).tobytes())
    except OSError as exc:
        raise MapIoError(f"{path}: {exc}") from exc


def _pgm_token(buf: bytes, pos: int, path) -> tuple[bytes, int]:
    while pos < len(buf):
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < len(buf) and buf[pos : pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(buf) and not buf[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise MalformedHeader(f"{path}: truncated PGM header")
    return buf[start:pos], pos


def read_mask(path) -> np.ndarray:
    """Read a binary PGM; values >= 128 are valid pixels."""
    raw = _read_bytes(path)
    magic, pos = _pgm_token(raw, 0, path)
    if magic != b"P5":
        raise MalformedHeader(f"{path}: not a binary PGM (magic {magic!r})")
    w_tok, pos = _pgm_token(raw, pos, path)
    h_tok, pos = _pgm_token(raw, pos, path)
    max_tok, pos = _pgm_token(raw, pos, path)
    try:
        w, h, maxval = int(w_tok), int(h_tok), int(max_tok)
    except ValueError:
        raise MalformedHeader(f"{path}: bad PGM header fields") from None
    if w <= 0 or h <= 0 or not (0 < maxval <= 255):
        raise MalformedHeader(f"{path}: bad PGM geometry ({w}x{h}, maxval {maxval})")
    blob = raw[pos + 1 :]
    if len(blob) != w * h:
        raise MapIoError(f"{path}: expected {w * h} mask bytes, found {len(blob)}")
    return (np.frombuffer(blob, dtype=np.uint8).reshape(h, w) >= 128).copy()


# ---------------------------------------------------------------------------
# typed maps


def write_normal_map(path, normals: np.ndarray) -> None:
    normals = np.asarray(normals)
    if normals.ndim != 3 or normals.shape[2] != 3:
        raise DimensionMismatch(f"normal map must be (H, W, 3), got {normals.shape}")
    write_pfm(path, normals)


def read_normal_map(path) -> tuple[np.ndarray, tuple[int, int]]:
    """Normals as float64 (H, W, 3) plus the (height, width) read from the file.

    Channels are (n_x, n_y, n_z) in the camera frame (x right, y down, z
    forward).  Zero vectors mark invalid pixels and pass through untouched.
    Unit-length is enforced: quantization-level deviations (squared norm off
    by more than ``RENORM_SQ_TOL``) are renormalized and counted in
    :data:`renormalization_events`; deviations beyond ``HARD_NORM_TOL``
    abort, since they indicate the file does not hold unit normals at all.
    """
    arr = read_pfm(path)
    if arr.ndim != 3:
        raise MapIoError(f"{path}: expected a 3-channel PFM normal map")
    normals = arr.astype(np.float64)
    norms = np.linalg.norm(normals, axis=2)
    nonzero = norms > 0
    worst = float(np.abs(norms[nonzero] - 1.0).max()) if nonzero.any() else 0.0
    if worst > HARD_NORM_TOL:
        raise NonUnitNormals(
            f"{path}: normals deviate from unit length by up to {worst:.3g}; "
            "wrong convention or not a normal map"
        )
    flagged = nonzero & (np.abs(norms**2 - 1.0) > RENORM_SQ_TOL)
    n_flagged = int(np.count_nonzero(flagged))
    if n_flagged:
        renormalization_events.bump(n_flagged)
        logger.info("%s: renormalized %d normal(s)", path, n_flagged)
        normals[flagged] /= norms[flagged][:, None]
    return normals, normals.shape[:2]


def write_depth_map(path, depth: np.ndarray, mask: np.ndarray | None = None) -> None:
    """Write depth as 1-channel PFM; pixels outside the mask are stored as 0."""
    depth = np.asarray(depth, dtype=np.float64)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != depth.shape:
            raise DimensionMismatch(
                f"mask shape {mask.shape} does not match depth {depth.shape}"
            )
        if not np.all(np.isfinite(depth[mask])):
            raise ValueError(f"{path}: non-finite depth inside the mask")
        depth = np.where(mask, depth, 0.0)
    elif not np.all(np.isfinite(depth)):
        raise ValueError(f"{path}: non-finite depth values")
    write_pfm(path, depth)


def read_depth_map(path) -> np.ndarray:
    arr = read_pfm(path)
    if arr.ndim != 2:
        raise MapIoError(f"{path}: expected a 1-channel PFM depth map")
    return arr.astype(np.float64)


def read_ray_map(path) -> np.ndarray:
    """Tabulated ray directions as float64 (H, W, 3); no unit-norm expectations."""
    arr = read_pfm(path)
    if arr.ndim != 3:
        raise MapIoError(f"{path}: expected a 3-channel PFM ray map")
    return arr.astype(np.float64)


# ---------------------------------------------------------------------------
# key = value configs


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` comments; duplicates are errors."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise MapIoError(f"{path}: {exc}") from exc
    result: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        if key in result:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        result[key] = value
    return result


def _take_floats(cfg: dict[str, str], keys: list[str], path, required: bool = True):
    values = []
    for key in keys:
        if key not in cfg:
            if required:
                raise ConfigError(f"{path}: missing required key {key!r}")
            values.append(0.0)
            continue
        raw = cfg.pop(key)
        try:
            values.append(float(raw))
        except ValueError:
            raise ConfigError(f"{path}: key {key!r} is not a number: {raw!r}") from None
    return values


def _reject_unknown(cfg: dict[str, str], path) -> None:
    if cfg:
        raise ConfigError(f"{path}: unknown key(s): {', '.join(sorted(cfg))}")


def read_camera_config(path) -> CameraModel:
    """Build a camera from a config file (``model = pinhole|brown_conrady|tabulated``).

    A tabulated camera's ``ray_file`` is resolved relative to the config.
    Non-central models are rejected: every supported camera projects through
    a single center.
    """
    cfg = read_config(path)
    model = cfg.pop("model", None)
    if model is None:
        raise ConfigError(f"{path}: missing required key 'model'")
    if model == "pinhole":
        fx, fy, cx, cy = _take_floats(cfg, ["fx", "fy", "cx", "cy"], path)
        _reject_unknown(cfg, path)
        return IdealPinhole(fx=fx, fy=fy, cx=cx, cy=cy)
    if model == "brown_conrady":
        fx, fy, cx, cy = _take_floats(cfg, ["fx", "fy", "cx", "cy"], path)
        k1, k2, k3, p1, p2 = _take_floats(
            cfg, ["k1", "k2", "k3", "p1", "p2"], path, required=False
        )
        _reject_unknown(cfg, path)
        return BrownConradyPinhole(fx=fx, fy=fy, cx=cx, cy=cy, k1=k1, k2=k2, k3=k3, p1=p1, p2=p2)
    if model == "tabulated":
        ray_file = cfg.pop("ray_file", None)
        if ray_file is None:
            raise ConfigError(f"{path}: tabulated camera needs 'ray_file'")
        _reject_unknown(cfg, path)
        rays = read_ray_map(Path(path).parent / ray_file)
        return TabulatedRays(rays)
    if model == "orthographic":
        raise ConfigError(
            f"{path}: orthographic projection has no single center; only central "
            "cameras are supported"
        )
    raise ConfigError(f"{path}: unknown camera model {model!r}")


def read_scene_config(path) -> Scene:
    """Build a scene from a config file (``scene = plane|sphere|step|wave``)."""
    cfg = read_config(path)
    kind = cfg.pop("scene", None)
    if kind is None:
        raise ConfigError(f"{path}: missing required key 'scene'")
    if kind == "plane":
        px, py, pz, nx, ny, nz = _take_floats(cfg, ["px", "py", "pz", "nx", "ny", "nz"], path)
        _reject_unknown(cfg, path)
        return Plane(point=(px, py, pz), normal=(nx, ny, nz))
    if kind == "sphere":
        cx, cy, cz, radius = _take_floats(cfg, ["cx", "cy", "cz", "radius"], path)
        _reject_unknown(cfg, path)
        return SphereCap(center=(cx, cy, cz), radius=radius)
    if kind == "step":
        z_near, z_far, a, b, c = _take_floats(
            cfg, ["z_near", "z_far", "split_a", "split_b", "split_c"], path
        )
        _reject_unknown(cfg, path)
        return StepPlanes(z_near=z_near, z_far=z_far, split=(a, b, c))
    if kind == "wave":
        z0, amplitude, fu, fv = _take_floats(cfg, ["z0", "amplitude", "fu", "fv"], path)
        _reject_unknown(cfg, path)
        return Wave(z0=z0, amplitude=amplitude, fu=fu, fv=fv)
    raise ConfigError(f"{path}: unknown scene {kind!r}")


# ---------------------------------------------------------------------------
# reports


def report_rows(report: MetricsReport) -> dict[str, float]:
    """Flatten a report into ordered metric rows for serialization."""
    rows: dict[str, float] = {
        "made": report.made,
        "re_percent": report.re_percent,
        "era_percent": report.era_percent,
    }
    for variant, value in report.residual_mean.items():
        rows[f"residual_mean_{variant}"] = value
    for variant, value in report.residual_std.items():
        rows[f"residual_std_{variant}"] = value
    return rows


def write_report_csv(path, rows: Mapping[str, float], alignment: str, pixel_count: int) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["metric", "value", "alignment", "pixels"])
            for key, value in rows.items():
                writer.writerow([key, repr(float(value)), alignment, pixel_count])
    except OSError as exc:
        raise MapIoError(f"{path}: {exc}") from exc


def read_report_csv(path) -> tuple[dict[str, float], str, int]:
    try:
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["metric", "value", "alignment", "pixels"]:
                raise MalformedHeader(f"{path}: unexpected report header {header!r}")
            rows: dict[str, float] = {}
            alignment, pixel_count = "none", 0
            for record in reader:
                if len(record) != 4:
                    raise MalformedHeader(f"{path}: malformed report row {record!r}")
                rows[record[0]] = float(record[1])
                alignment, pixel_count = record[2], int(record[3])
            return rows, alignment, pixel_count
    except OSError as exc:
        raise MapIoError(f"{path}: {exc}") from exc


def write_report_json(path, rows: Mapping[str, float], alignment: str, pixel_count: int) -> None:
    payload = {"alignment": alignment, "pixels": pixel_count, "metrics": dict(rows)}
    try:
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise MapIoError(f"{path}: {exc}") from exc


def write_metrics_report(path, report: MetricsReport) -> None:
    write_report_csv(path, report_rows(report), report.alignment, report.pixel_count)


def read_metrics_report(path) -> MetricsReport:
    rows, alignment, pixel_count = read_report_csv(path)
    try:
        made = rows.pop("made")
        re_percent = rows.pop("re_percent")
        era_percent = rows.pop("era_percent")
    except KeyError as exc:
        raise MalformedHeader(f"{path}: report is missing metric {exc}") from None
    residual_mean = {
        k.removeprefix("residual_mean_"): v
        for k, v in rows.items()
        if k.startswith("residual_mean_")
    }
    residual_std = {
        k.removeprefix("residual_std_"): v
        for k, v in rows.items()
        if k.startswith("residual_std_")
    }
    return MetricsReport(
        made=made,
        re_percent=re_percent,
        era_percent=era_percent,
        alignment=alignment,
        pixel_count=pixel_count,
        residual_mean=residual_mean,
        residual_std=residual_std,
    )

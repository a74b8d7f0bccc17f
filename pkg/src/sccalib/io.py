"""Readers and writers for calibration artifacts.

All writers are deterministic: identical inputs produce byte-identical
files, which is what makes pipeline reruns hash-stable.  JSON is emitted
with sorted keys and no trailing whitespace; PLY is binary little-endian.
"""

from __future__ import annotations

import json

import numpy as np

from .exceptions import InvalidParameterError, TrackFileError
from .geometry import CameraParams, Intrinsics, quat_to_rotation

_PLY_HEADER = (
    "ply\n"
    "format binary_little_endian 1.0\n"
    "element vertex {count}\n"
    "property float x\n"
    "property float y\n"
    "property float z\n"
    "end_header\n"
)


def write_ply(path, points: np.ndarray) -> None:
    """Write an (N, 3) point array as a binary little-endian PLY file."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise InvalidParameterError("points must have shape (N, 3)")
    if not np.isfinite(points).all():
        raise InvalidParameterError("points must be finite")
    with open(path, "wb") as fh:
        fh.write(_PLY_HEADER.format(count=points.shape[0]).encode("ascii"))
        fh.write(np.ascontiguousarray(points, dtype="<f4").tobytes())


def read_ply(path) -> np.ndarray:
    """Read back a PLY written by write_ply; returns float64 (N, 3)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    marker = b"end_header\n"
    pos = blob.find(marker)
    if pos < 0 or not blob.startswith(b"ply\n"):
        raise TrackFileError(f"{path} is not a PLY file")
    header = blob[:pos].decode("ascii", errors="replace")
    if "binary_little_endian" not in header:
        raise TrackFileError(f"{path}: only binary little-endian PLY is supported")
    count = None
    for line in header.splitlines():
        if line.startswith("element vertex"):
            count = int(line.split()[-1])
    if count is None:
        raise TrackFileError(f"{path}: missing vertex element")
    body = blob[pos + len(marker):]
    expected = count * 3 * 4
    if len(body) < expected:
        raise TrackFileError(f"{path}: truncated vertex data")
    pts = np.frombuffer(body[:expected], dtype="<f4").reshape(count, 3)
    return pts.astype(np.float64)


def _dump_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=1)


def write_cameras_json(path, cameras, intrinsics: Intrinsics) -> None:
    """Write per-frame world-to-camera poses plus shared intrinsics."""
    frames = [
        {
            "index": int(c.frame_index),
            "quat": [float(v) for v in c.quat],
            "trans": [float(v) for v in c.trans],
        }
        for c in sorted(cameras, key=lambda c: c.frame_index)
    ]
    payload = {
        "focal": float(intrinsics.focal),
        "width": int(intrinsics.width),
        "height": int(intrinsics.height),
        "frames": frames,
    }
    with open(path, "w") as fh:
        fh.write(_dump_json(payload))


def read_cameras_json(path):
    """Returns (list of CameraParams, Intrinsics)."""
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TrackFileError(f"{path}: invalid JSON ({exc})") from exc
    for key in ("focal", "width", "height", "frames"):
        if key not in payload:
            raise TrackFileError(f"{path}: missing key '{key}'")
    intr = Intrinsics(
        focal=float(payload["focal"]),
        width=int(payload["width"]),
        height=int(payload["height"]),
    )
    cams = []
    for rec in payload["frames"]:
        cams.append(
            CameraParams(
                quat=np.asarray(rec["quat"], dtype=np.float64),
                trans=np.asarray(rec["trans"], dtype=np.float64),
                frame_index=int(rec["index"]),
            )
        )
    cams.sort(key=lambda c: c.frame_index)
    return cams, intr


def write_loss_trace(path, trace) -> None:
    """CSV with header iteration,loss and one row per trace entry."""
    lines = ["iteration,loss"]
    for i, v in enumerate(np.asarray(trace, dtype=np.float64)):
        lines.append(f"{i},{float(v)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_loss_trace(path) -> np.ndarray:
    with open(path) as fh:
        lines = fh.read().strip().splitlines()
    if not lines or lines[0] != "iteration,loss":
        raise TrackFileError(f"{path}: not a loss trace CSV")
    return np.array([float(line.split(",")[1]) for line in lines[1:]])


def write_report_json(path, report: dict) -> None:
    with open(path, "w") as fh:
        fh.write(_dump_json(report))


def _svg_polyline(points2d, color: str) -> list:
    coords = " ".join(f"{x:.3f},{y:.3f}" for x, y in points2d)
    return [
        f'<polyline points="{coords}" fill="none" stroke="{color}" '
        'stroke-width="1" opacity="0.6"/>'
    ]


def _svg_glyphs(points2d, dirs2d, color: str) -> list:
    parts = []
    for (x, y), (dx, dy) in zip(points2d, dirs2d):
        parts.append(
            f'<circle cx="{x:.3f}" cy="{y:.3f}" r="2.5" fill="{color}"/>'
        )
        parts.append(
            f'<line x1="{x:.3f}" y1="{y:.3f}" x2="{x + 8 * dx:.3f}" '
            f'y2="{y + 8 * dy:.3f}" stroke="{color}" stroke-width="1.2"/>'
        )
    return parts


def write_trajectory_svg(path, est_cameras, gt_cameras=None,
                         size: int = 640) -> None:
    """Top-down (x, z) plot of camera centers with viewing-direction ticks.

    The estimated trajectory is drawn in blue; ground truth, when given, in
    orange.  One dot plus one tick per camera.
    """
    def centers_dirs(cams):
        cams = sorted(cams, key=lambda c: c.frame_index)
        cen = np.stack([c.center() for c in cams])
        # third rotation row = world-space viewing direction of each camera
        fwd = np.stack([quat_to_rotation(c.quat)[2] for c in cams])
        return cen[:, [0, 2]], fwd[:, [0, 2]]

    groups = [(centers_dirs(est_cameras), "#3366cc")]
    if gt_cameras is not None:
        groups.append((centers_dirs(gt_cameras), "#dd7711"))

    allpts = np.vstack([g[0][0] for g in groups])
    lo = allpts.min(axis=0)
    hi = allpts.max(axis=0)
    span = max(float((hi - lo).max()), 1e-9)
    pad = 0.08 * span

    def to_px(p):
        q = (p - lo + pad) / (span + 2 * pad) * size
        # flip vertical so +z points up the page
        return np.stack([q[:, 0], size - q[:, 1]], axis=1)

    body = []
    for (cen, fwd), color in groups:
        px = to_px(cen)
        nrm = np.maximum(np.linalg.norm(fwd, axis=1, keepdims=True), 1e-9)
        d = fwd / nrm
        d = np.stack([d[:, 0], -d[:, 1]], axis=1)
        body += _svg_polyline(px, color)
        body += _svg_glyphs(px, d, color)

    svg = "\n".join(
        [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
            f'height="{size}" viewBox="0 0 {size} {size}">',
            f'<rect width="{size}" height="{size}" fill="white"/>',
        ]
        + body
        + ["</svg>"]
    )
    with open(path, "w") as fh:
        fh.write(svg + "\n")

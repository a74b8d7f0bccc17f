"""Synthetic dataset generation for pipeline tests and recovery experiments.

Builds an arc-of-cameras scene around a cloud of bright structural dots,
adds one moving blob so motion masks have something to exclude, renders RGB
frames and masks with the splat forward model, and writes the ground truth
(cameras, points, tracks) alongside so recovered calibrations can be scored.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .dataset import save_image_rgb, save_mask
from .exceptions import InvalidParameterError
from .geometry import CameraParams, Intrinsics, project_points, rotation_to_quat
from .gsplat import Gaussian3D, GaussianCloud, render_preview
from .tracking import SyntheticScene, synthetic_track, save_tracks

_MASK_DILATE = 5


def look_at(eye, target=(0.0, 0.0, 0.0), frame_index: int = 0) -> CameraParams:
    """World-to-camera pose for a camera at `eye` looking toward `target`.

    Uses world -y as up, matching the y-down image convention, and keeps the
    horizon level.
    """
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(fwd)
    if norm == 0:
        raise InvalidParameterError("eye and target coincide")
    fwd = fwd / norm
    up = np.array([0.0, 1.0, 0.0])
    down = fwd * (up @ fwd) - up
    dnorm = np.linalg.norm(down)
    if dnorm < 1e-12:
        raise InvalidParameterError("viewing direction is vertical")
    down = down / dnorm
    right = np.cross(down, fwd)
    rot = np.stack([right, down, fwd])
    return CameraParams(quat=rotation_to_quat(rot), trans=-rot @ eye,
                        frame_index=frame_index)


@dataclass
class SynthConfig:
    """Parameters of the generated scene; defaults give the desk-scale setup."""

    n_frames: int = 20
    n_points: int = 200
    width: int = 640
    height: int = 360
    focal: float = 500.0
    radius: float = 4.0
    arc_deg: float = 60.0
    cube_center: tuple = (0.0, 0.0, 0.0)
    target_jitter: float = 0.15
    point_scale: float = 0.006
    moving_object: bool = True
    seed: int = 7

    def __post_init__(self):
        if self.n_frames < 2:
            raise InvalidParameterError("need at least two frames")
        if self.n_points < 1:
            raise InvalidParameterError("need at least one point")
        if self.focal <= 0 or self.radius <= 0 or self.point_scale <= 0:
            raise InvalidParameterError("focal, radius, point_scale must be > 0")


@dataclass
class SynthScene:
    points: np.ndarray
    colors: np.ndarray
    cameras: list
    intrinsics: Intrinsics
    times: np.ndarray
    moving_centers: np.ndarray  # (n_frames, 3); NaN rows when disabled
    config: SynthConfig = field(repr=False, default=None)


def make_scene(cfg: SynthConfig) -> SynthScene:
    """Deterministic scene from the config seed.

    Cameras sit on a horizontal arc of the given radius and angular extent,
    each fixating a jittered target near the cube center; points fill a unit
    cube around it.  The moving blob crosses in front of the cube.
    """
    rng = np.random.default_rng(cfg.seed)
    center = np.asarray(cfg.cube_center, dtype=np.float64)
    points = rng.uniform(-0.5, 0.5, size=(cfg.n_points, 3)) + center
    colors = rng.uniform(0.35, 1.0, size=(cfg.n_points, 3))
    intr = Intrinsics(cfg.focal, cfg.width, cfg.height)

    cameras = []
    for k in range(cfg.n_frames):
        frac = k / (cfg.n_frames - 1)
        th = np.deg2rad(-cfg.arc_deg / 2 + cfg.arc_deg * frac)
        eye = cfg.radius * np.array([np.sin(th), 0.0, -np.cos(th)])
        tgt = center + rng.uniform(-cfg.target_jitter, cfg.target_jitter, 3)
        cameras.append(look_at(eye, target=tgt, frame_index=k))

    times = np.arange(cfg.n_frames, dtype=np.float64) / (cfg.n_frames - 1)
    if cfg.moving_object:
        # Sweeps left to right slightly in front of the cube, bobbing a bit.
        mx = center[0] - 0.9 + 1.8 * times
        my = center[1] + 0.25 * np.sin(2 * np.pi * times)
        mz = center[2] - 1.1 + np.zeros_like(times)
        moving = np.stack([mx, my, mz], axis=1)
    else:
        moving = np.full((cfg.n_frames, 3), np.nan)
    return SynthScene(points=points, colors=colors, cameras=cameras,
                      intrinsics=intr, times=times, moving_centers=moving,
                      config=cfg)


def _static_cloud(scene: SynthScene) -> list:
    s = scene.config.point_scale
    return [
        Gaussian3D(mu=p, quat=(1.0, 0.0, 0.0, 0.0), scale=(s, s, s),
                   opacity=1.0, color=c)
        for p, c in zip(scene.points, scene.colors)
    ]


def _moving_cloud(scene: SynthScene, frame: int) -> list:
    c = scene.moving_centers[frame]
    if not np.isfinite(c).all():
        return []
    base = scene.config.point_scale
    blob = 12.0 * base
    offsets = np.array([[0.0, 0.0, 0.0], [1.1, 0.4, 0.0], [-0.9, 0.5, 0.1]])
    out = []
    for k, off in enumerate(offsets):
        out.append(Gaussian3D(
            mu=c + off * blob, quat=(1.0, 0.0, 0.0, 0.0),
            scale=(blob, blob, blob), opacity=0.95,
            color=(0.9, 0.25 + 0.2 * k, 0.1),
        ))
    return out


def render_frame(scene: SynthScene, frame: int):
    """Returns (rgb, mask) for one frame; mask is True on static pixels."""
    static = _static_cloud(scene)
    moving = _moving_cloud(scene, frame)
    cam = scene.cameras[frame]
    intr = scene.intrinsics
    rgb = render_preview(GaussianCloud(static + moving), cam, intr)
    if moving:
        dyn = render_preview(GaussianCloud(moving), cam, intr)
        footprint = dyn.max(axis=2) > 1.0 / 255.0
        footprint = ndimage.maximum_filter(footprint, size=_MASK_DILATE)
        mask = ~footprint
    else:
        mask = np.ones((intr.height, intr.width), dtype=bool)
    return rgb, mask


def gt_projection_table(scene: SynthScene):
    """Noise-free projections of all points in all frames: (pos, vis)."""
    n, p = scene.config.n_frames, scene.config.n_points
    pos = np.zeros((n, p, 2))
    vis = np.zeros((n, p), dtype=np.uint8)
    idx = np.arange(p)
    for i, cam in enumerate(scene.cameras):
        pix, depth = project_points(scene.points, idx, cam, scene.intrinsics)
        pos[i] = pix
        inb = ((depth > 0) & np.isfinite(pix).all(axis=1)
               & (np.rint(pix[:, 0]) >= 0)
               & (np.rint(pix[:, 0]) <= scene.intrinsics.width - 1)
               & (np.rint(pix[:, 1]) >= 0)
               & (np.rint(pix[:, 1]) <= scene.intrinsics.height - 1))
        vis[i] = inb.astype(np.uint8)
        pos[i][~inb] = 0.0
    return pos, vis


def scene_to_json(scene: SynthScene) -> dict:
    return {
        "width": int(scene.intrinsics.width),
        "height": int(scene.intrinsics.height),
        "focal": float(scene.intrinsics.focal),
        "times": [float(t) for t in scene.times],
        "points": [[float(v) for v in p] for p in scene.points],
        "colors": [[float(v) for v in c] for c in scene.colors],
        "cameras": [
            {
                "index": int(c.frame_index),
                "quat": [float(v) for v in c.quat],
                "trans": [float(v) for v in c.trans],
            }
            for c in scene.cameras
        ],
    }


def scene_from_json(payload: dict) -> SyntheticScene:
    """Rebuild the tracker-facing scene (points + cameras + intrinsics)."""
    intr = Intrinsics(focal=float(payload["focal"]),
                      width=int(payload["width"]),
                      height=int(payload["height"]))
    cams = [
        CameraParams(quat=np.asarray(r["quat"], dtype=np.float64),
                     trans=np.asarray(r["trans"], dtype=np.float64),
                     frame_index=int(r["index"]))
        for r in payload["cameras"]
    ]
    cams.sort(key=lambda c: c.frame_index)
    return SyntheticScene(
        gt_points=np.asarray(payload["points"], dtype=np.float64),
        gt_cameras=cams,
        gt_intrinsics=intr,
    )


def write_dataset(scene: SynthScene, dataset_dir) -> list:
    """Render and write frames/, masks/, synth.json, and seed-0 gt tracks.

    Returns the list of paths written (relative to dataset_dir).
    """
    frames_dir = os.path.join(dataset_dir, "frames")
    masks_dir = os.path.join(dataset_dir, "masks")
    tracks_dir = os.path.join(dataset_dir, "tracks")
    for d in (frames_dir, masks_dir, tracks_dir):
        os.makedirs(d, exist_ok=True)

    written = []
    for i in range(scene.config.n_frames):
        rgb, mask = render_frame(scene, i)
        fp = os.path.join("frames", f"{i:05d}.png")
        mp = os.path.join("masks", f"{i:05d}.png")
        save_image_rgb(os.path.join(dataset_dir, fp), rgb)
        save_mask(os.path.join(dataset_dir, mp), mask)
        written += [fp, mp]

    with open(os.path.join(dataset_dir, "synth.json"), "w") as fh:
        fh.write(json.dumps(scene_to_json(scene), sort_keys=True, indent=1))
    written.append("synth.json")

    # Ground-truth tracks from frame 0: the noise-free reference trajectories
    # of every structural point, in the track-file format.
    tracker_scene = SyntheticScene(
        gt_points=scene.points, gt_cameras=scene.cameras,
        gt_intrinsics=scene.intrinsics)
    pos0, vis0 = gt_projection_table(scene)
    queries = pos0[0][vis0[0].astype(bool)]
    result = synthetic_track(tracker_scene, 0, queries,
                             seed=scene.config.seed, assoc_radius=1e-6)
    tp = os.path.join("tracks", "tracks_00000.json")
    save_tracks(os.path.join(dataset_dir, tp), result)
    written.append(tp)
    return written

"""Point tracking: the tracker contract, a synthetic oracle, and a file adapter.

A tracker is anything with

    track(frames, seed_frame, queries) -> TrackResult

where queries are (B, 2) pixel positions in the seed frame.  The result's
first row repeats the queries exactly with visibility 1; later rows hold the
tracked positions for frames seed_frame+1 .. end.

The real neural tracker runs out of process; its output is consumed from
JSON track files (FileTracker).  SyntheticTracker is a ground-truth oracle
over a known scene, used for tests and synthetic pipelines.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .exceptions import InvalidParameterError, TrackFileError
from .geometry import CameraParams, Intrinsics, project_points


@dataclass
class TrackResult:
    """Tracked positions (F, B, 2) and visibility (F, B) from a seed frame."""

    positions: np.ndarray
    visibility: np.ndarray
    seed_frame: int = 0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.visibility = np.asarray(self.visibility).astype(np.uint8)
        if self.positions.ndim != 3 or self.positions.shape[2] != 2:
            raise InvalidParameterError("positions must have shape (F, B, 2)")
        if self.visibility.shape != self.positions.shape[:2]:
            raise InvalidParameterError("visibility must have shape (F, B)")
        vis = self.visibility.astype(bool)
        if not np.isfinite(self.positions[vis]).all():
            raise InvalidParameterError("visible positions must be finite")
        if self.positions.shape[0] >= 1 and not vis[0].all():
            raise InvalidParameterError("seed-frame visibility must be all 1")

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def n_points(self) -> int:
        return self.positions.shape[1]


class Tracker(Protocol):
    def track(self, frames, seed_frame: int, queries) -> TrackResult: ...


@dataclass
class SyntheticScene:
    """Known geometry behind the oracle tracker."""

    gt_points: np.ndarray
    gt_cameras: list[CameraParams]
    gt_intrinsics: Intrinsics
    noise_sigma: float = 0.0
    dropout: float = 0.0

    def __post_init__(self):
        self.gt_points = np.asarray(self.gt_points, dtype=np.float64).reshape(-1, 3)
        if self.noise_sigma < 0.0:
            raise InvalidParameterError("noise_sigma must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidParameterError("dropout must lie in [0, 1)")

    @property
    def n_frames(self) -> int:
        return len(self.gt_cameras)


def _in_bounds(pix, intr: Intrinsics):
    """True where the rounded pixel lands on the image grid."""
    with np.errstate(invalid="ignore"):
        r = np.rint(pix)
    finite = np.isfinite(pix).all(axis=-1)
    return (finite
            & (r[..., 0] >= 0) & (r[..., 0] <= intr.width - 1)
            & (r[..., 1] >= 0) & (r[..., 1] <= intr.height - 1))


def synthetic_track(scene: SyntheticScene, seed_frame: int, queries,
                    seed: int = 0, assoc_radius: float = 0.5) -> TrackResult:
    """Oracle tracks: exact reprojections plus the scene's noise model.

    Each query is associated to the nearest ground-truth projection at the
    seed frame; association farther than assoc_radius raises.  Rows after
    the seed get Gaussian pixel noise (noise_sigma); visibility drops where
    the point is behind the camera, its reported position leaves the image,
    or a dropout coin (seeded per seed_frame) fires.  Noise is drawn before
    dropout, so results are reproducible for a given (seed, seed_frame, B).
    """
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 2)
    n_total = scene.n_frames
    if not 0 <= seed_frame < n_total:
        raise InvalidParameterError(f"seed_frame {seed_frame} out of range")
    if seed < 0:
        raise InvalidParameterError("seed must be >= 0")
    intr = scene.gt_intrinsics
    all_idx = np.arange(scene.gt_points.shape[0])
    pix0, depth0 = project_points(scene.gt_points, all_idx,
                                  scene.gt_cameras[seed_frame], intr)
    visible0 = depth0 > 0
    if not visible0.any():
        raise InvalidParameterError("no ground-truth point visible at seed frame")
    cand = pix0[visible0]
    cand_idx = all_idx[visible0]
    assoc = np.empty(queries.shape[0], dtype=np.int64)
    for k, q in enumerate(queries):
        d = np.linalg.norm(cand - q, axis=1)
        j = int(np.argmin(d))
        if d[j] > assoc_radius:
            raise InvalidParameterError(
                f"query {k} at {tuple(q)} has no ground-truth projection "
                f"within {assoc_radius} px (nearest is {d[j]:.3f} px away)")
        assoc[k] = cand_idx[j]

    f_count = n_total - seed_frame
    b = queries.shape[0]
    rng = np.random.default_rng([seed, seed_frame])
    noise = rng.normal(0.0, scene.noise_sigma, size=(f_count, b, 2))
    drop = rng.random((f_count, b)) < scene.dropout

    positions = np.empty((f_count, b, 2))
    visibility = np.empty((f_count, b), dtype=np.uint8)
    for f in range(f_count):
        pix, depth = project_points(scene.gt_points, assoc,
                                    scene.gt_cameras[seed_frame + f], intr)
        pos = pix + noise[f]
        vis = (depth > 0) & _in_bounds(pos, intr) & ~drop[f]
        pos = np.where(np.isfinite(pos), pos, 0.0)
        positions[f] = pos
        visibility[f] = vis.astype(np.uint8)
    positions[0] = queries
    visibility[0] = 1
    return TrackResult(positions=positions, visibility=visibility,
                       seed_frame=seed_frame)


class SyntheticTracker:
    """Tracker-contract adapter over a SyntheticScene oracle."""

    def __init__(self, scene: SyntheticScene, seed: int = 0,
                 assoc_radius: float = 0.5):
        self.scene = scene
        self.seed = seed
        self.assoc_radius = assoc_radius

    def track(self, frames, seed_frame: int, queries) -> TrackResult:
        if frames is not None and len(frames) != self.scene.n_frames:
            raise InvalidParameterError(
                f"sequence has {len(frames)} frames, scene has "
                f"{self.scene.n_frames}")
        return synthetic_track(self.scene, seed_frame, queries,
                               seed=self.seed, assoc_radius=self.assoc_radius)


def save_tracks(path, result: TrackResult) -> None:
    """Write a TrackResult as a JSON track file."""
    payload = {
        "seed_frame": int(result.seed_frame),
        "num_frames": int(result.n_frames),
        "num_points": int(result.n_points),
        "tracks": [
            [[float(x), float(y), int(v)]
             for (x, y), v in zip(result.positions[f], result.visibility[f])]
            for f in range(result.n_frames)
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_tracks(path) -> TrackResult:
    """Read a JSON track file, validating schema and invariants."""
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except OSError as e:
        raise TrackFileError(f"cannot read track file {path!r}: {e}") from e
    except json.JSONDecodeError as e:
        raise TrackFileError(
            f"malformed JSON in {path!r} at line {e.lineno}, column {e.colno}: "
            f"{e.msg}") from e

    for key in ("seed_frame", "num_frames", "num_points", "tracks"):
        if key not in payload:
            raise TrackFileError(f"{path!r}: missing key {key!r}")
    f_count, b = payload["num_frames"], payload["num_points"]
    rows = payload["tracks"]
    if len(rows) != f_count:
        raise TrackFileError(
            f"{path!r}: num_frames is {f_count} but tracks has {len(rows)} rows")
    positions = np.zeros((f_count, b, 2))
    visibility = np.zeros((f_count, b), dtype=np.uint8)
    for f, row in enumerate(rows):
        if len(row) != b:
            raise TrackFileError(
                f"{path!r}: frame row {f} has {len(row)} points, expected {b}")
        for k, entry in enumerate(row):
            if len(entry) != 3:
                raise TrackFileError(
                    f"{path!r}: frame row {f}, point {k}: expected [x, y, v]")
            x, y, v = entry
            if v not in (0, 1):
                raise TrackFileError(
                    f"{path!r}: frame row {f}, point {k}: visibility {v!r} "
                    f"is not 0 or 1")
            if v == 1 and not (np.isfinite(x) and np.isfinite(y)):
                raise TrackFileError(
                    f"{path!r}: frame row {f}, point {k}: visible position "
                    f"is not finite")
            positions[f, k] = (x, y)
            visibility[f, k] = int(v)
    try:
        return TrackResult(positions=positions, visibility=visibility,
                           seed_frame=int(payload["seed_frame"]))
    except InvalidParameterError as e:
        raise TrackFileError(f"{path!r}: {e}") from e


class FileTracker:
    """Adapter over per-seed-frame track files written by an external tracker.

    Expects <root>/tracks_%05d.json for every seed frame that gets queried.
    Queries are matched to the file's seed-frame positions by nearest
    neighbor within match_radius.
    """

    def __init__(self, root, match_radius: float = 0.5):
        self.root = root
        self.match_radius = match_radius
        self._cache: dict[int, TrackResult] = {}

    def _load(self, seed_frame: int) -> TrackResult:
        if seed_frame not in self._cache:
            path = os.path.join(self.root, f"tracks_{seed_frame:05d}.json")
            if not os.path.isfile(path):
                raise TrackFileError(f"no track file for seed frame "
                                     f"{seed_frame}: {path!r}")
            result = load_tracks(path)
            if result.seed_frame != seed_frame:
                raise TrackFileError(
                    f"{path!r}: seed_frame field is {result.seed_frame}, "
                    f"expected {seed_frame}")
            self._cache[seed_frame] = result
        return self._cache[seed_frame]

    def track(self, frames, seed_frame: int, queries) -> TrackResult:
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 2)
        stored = self._load(seed_frame)
        if frames is not None and stored.n_frames != len(frames) - seed_frame:
            raise TrackFileError(
                f"track file for seed frame {seed_frame} covers "
                f"{stored.n_frames} frames, sequence needs "
                f"{len(frames) - seed_frame}")
        cols = np.empty(queries.shape[0], dtype=np.int64)
        taken = set()
        for k, q in enumerate(queries):
            d = np.linalg.norm(stored.positions[0] - q, axis=1)
            j = int(np.argmin(d))
            if d[j] > self.match_radius:
                raise TrackFileError(
                    f"query {k} at {tuple(q)} matches no stored track at "
                    f"seed frame {seed_frame} (nearest is {d[j]:.3f} px away)")
            if j in taken:
                raise TrackFileError(
                    f"queries {k} and others map to the same stored track "
                    f"{j} at seed frame {seed_frame}")
            taken.add(j)
            cols[k] = j
        positions = stored.positions[:, cols].copy()
        visibility = stored.visibility[:, cols].copy()
        positions[0] = queries
        visibility[0] = 1
        return TrackResult(positions=positions, visibility=visibility,
                           seed_frame=seed_frame)

"""Structural point extraction: seeding, credit tracking, and the point table.

A structural point table holds, for a sequence of N frames, a fixed budget of
tau track slots per frame.  Slot (i, j) stores a 2D pixel position and the
global index of the 3D structural point it observes; -1 marks an unfilled
(sentinel) slot.  Extraction fills every slot by seeding new tracks in the
frame where older tracks die out.
"""

from __future__ import annotations

from dataclasses import dataclass
import json

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .exceptions import InvalidParameterError, SeedingFailureError
from .imagefeat import build_candidate_pool

SENTINEL = -1


@dataclass
class StructuralPointTable:
    """Per-frame track slots plus the shared 3D point array.

    Attributes
    ----------
    p_pos : (N, tau, 2) float64 pixel positions, -1 where unfilled.
    p_index : (N, tau) int64 global point indices, -1 where unfilled.
    h_total : total number of distinct global indices assigned so far.
    sp3d : (h_total, 3) float64 structural point coordinates.
    """

    p_pos: np.ndarray
    p_index: np.ndarray
    h_total: int
    sp3d: np.ndarray

    def __post_init__(self):
        self.p_pos = np.asarray(self.p_pos, dtype=np.float64)
        self.p_index = np.asarray(self.p_index, dtype=np.int64)
        self.sp3d = np.asarray(self.sp3d, dtype=np.float64)
        if self.p_pos.ndim != 3 or self.p_pos.shape[2] != 2:
            raise InvalidParameterError("p_pos must have shape (N, tau, 2)")
        if self.p_index.shape != self.p_pos.shape[:2]:
            raise InvalidParameterError("p_index must have shape (N, tau)")
        if self.sp3d.shape != (self.h_total, 3):
            raise InvalidParameterError("sp3d must have shape (h_total, 3)")
        filled = self.p_index >= 0
        if filled.any() and self.p_index[filled].max() >= self.h_total:
            raise InvalidParameterError("p_index refers past h_total")

    @classmethod
    def empty(cls, n_frames: int, tau: int) -> "StructuralPointTable":
        if n_frames < 1 or tau < 1:
            raise InvalidParameterError("table needs n_frames >= 1 and tau >= 1")
        return cls(
            p_pos=np.full((n_frames, tau, 2), float(SENTINEL)),
            p_index=np.full((n_frames, tau), SENTINEL, dtype=np.int64),
            h_total=0,
            sp3d=np.zeros((0, 3)),
        )

    @property
    def n_frames(self) -> int:
        return self.p_pos.shape[0]

    @property
    def tau(self) -> int:
        return self.p_pos.shape[1]

    def complete(self) -> bool:
        """True when every slot holds a real track sample."""
        return bool((self.p_index >= 0).all())

    def to_json(self) -> str:
        payload = {
            "n": int(self.n_frames),
            "tau": int(self.tau),
            "h_total": int(self.h_total),
            "p_pos": self.p_pos.tolist(),
            "p_index": self.p_index.tolist(),
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "StructuralPointTable":
        payload = json.loads(text)
        n, tau, h_total = payload["n"], payload["tau"], payload["h_total"]
        p_pos = np.asarray(payload["p_pos"], dtype=np.float64)
        p_index = np.asarray(payload["p_index"], dtype=np.int64)
        if p_pos.shape != (n, tau, 2) or p_index.shape != (n, tau):
            raise InvalidParameterError("table JSON dimensions are inconsistent")
        return cls(
            p_pos=p_pos,
            p_index=p_index,
            h_total=h_total,
            sp3d=np.full((h_total, 3), 0.5),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "StructuralPointTable":
        with open(path) as fh:
            return cls.from_json(fh.read())


@dataclass
class GenerationState:
    """Liveness of one generation's candidate tracks.

    ``credit`` holds one flag per candidate in the generation's pool: 1 while
    the track is still usable, 0 once it has been retired.  Credits only ever
    move from 1 to 0; a retired track is never revived.
    """

    seed_frame: int
    credit: np.ndarray

    def __post_init__(self):
        self.credit = np.asarray(self.credit, dtype=np.int64)
        if self.credit.ndim != 1:
            raise InvalidParameterError("credit must be one-dimensional")
        if not np.isin(self.credit, (0, 1)).all():
            raise InvalidParameterError("credit entries must be 0 or 1")
        if self.seed_frame < 0:
            raise InvalidParameterError("seed_frame must be non-negative")

    def survivors(self) -> int:
        return int(self.credit.sum())


def update_credit(
    state: GenerationState,
    pred_pos: np.ndarray,
    pred_vis: np.ndarray,
    mask: np.ndarray,
) -> GenerationState:
    """Retire tracks that left the static scene at one frame.

    A track keeps its credit only if the tracker still reports it visible and
    its predicted position, rounded to the nearest pixel, lands inside the
    image on a static (mask=1) pixel.  Non-finite predictions retire the
    track.  Returns a new state; the input is not modified.
    """
    pred_pos = np.asarray(pred_pos, dtype=np.float64)
    pred_vis = np.asarray(pred_vis)
    mask = np.asarray(mask, dtype=bool)
    b = state.credit.shape[0]
    if pred_pos.shape != (b, 2):
        raise InvalidParameterError(f"pred_pos must have shape ({b}, 2)")
    if pred_vis.shape != (b,):
        raise InvalidParameterError(f"pred_vis must have shape ({b},)")
    if mask.ndim != 2:
        raise InvalidParameterError("mask must be two-dimensional")

    h, w = mask.shape
    alive = state.credit.astype(bool) & (np.asarray(pred_vis) != 0)
    finite = np.isfinite(pred_pos).all(axis=1)
    alive &= finite
    # Rounded lookup; clip first so the fancy index is safe, then reject
    # anything that was actually outside the frame.  Non-finite rows are
    # already retired; zero them so the integer cast stays well-defined.
    safe_pos = np.where(finite[:, np.newaxis], pred_pos, 0.0)
    col = np.rint(safe_pos[:, 0]).astype(np.int64)
    row = np.rint(safe_pos[:, 1]).astype(np.int64)
    inside = (col >= 0) & (col <= w - 1) & (row >= 0) & (row <= h - 1)
    alive &= inside
    col_c = np.clip(col, 0, w - 1)
    row_c = np.clip(row, 0, h - 1)
    alive &= mask[row_c, col_c]
    return GenerationState(
        seed_frame=state.seed_frame, credit=alive.astype(np.int64)
    )


def run_spe(
    frames,
    tracker,
    tau: int = 100,
    window: int = 9,
    canny_low: float = 0.1,
    canny_high: float = 0.2,
    seed: int = 0,
    pool_provider=None,
) -> StructuralPointTable:
    """Extract a table of tracked 2D observations from a frame sequence.

    Frames are scanned in order.  Whenever frame ``i`` has ``k > 0`` empty
    slots, a generation is seeded there: edge candidates are detected on the
    static region of frame ``i`` (``pool_provider(i)`` may supply a
    precomputed pool), the tracker follows all of them forward, and tracks
    are retired as they become invisible or drift onto moving content.  The
    generation commits ``k`` tracks chosen uniformly at random from the
    survivors at the last frame where at least ``k`` remain; each chosen
    track fills one slot in every frame from ``i`` until the frame where it
    was retired.  Point indices are issued contiguously per generation.

    Raises SeedingFailureError if a frame needs ``k`` new tracks but the
    candidate pool holds fewer.
    """
    n = len(frames)
    if n < 1:
        raise InvalidParameterError("need at least one frame")
    if tau < 4:
        raise InvalidParameterError("tau must be at least 4")
    rng = np.random.default_rng(seed)

    p_pos = np.full((n, tau, 2), float(SENTINEL))
    p_index = np.full((n, tau), SENTINEL, dtype=np.int64)
    h_total = 0

    for i in range(n):
        holes = int((p_index[i] == SENTINEL).sum())
        if holes == 0:
            continue
        k = holes

        if pool_provider is not None:
            pool = pool_provider(i)
        else:
            pool = build_candidate_pool(
                frames.packet(i),
                window=window,
                canny_low=canny_low,
                canny_high=canny_high,
            )
        # An injected pool may carry candidates that sit on moving content;
        # drop them so every committed observation lands on mask=1.
        seed_mask = np.asarray(frames.mask(i), dtype=bool)
        mh, mw = seed_mask.shape
        rr, cc = pool.points[:, 0], pool.points[:, 1]
        ok = (rr >= 0) & (rr < mh) & (cc >= 0) & (cc < mw)
        ok &= seed_mask[np.clip(rr, 0, mh - 1), np.clip(cc, 0, mw - 1)]
        points = pool.points[ok]
        b = points.shape[0]
        if b < k:
            raise SeedingFailureError(
                f"frame {i} needs {k} tracks but the candidate pool "
                f"holds only {b}",
                frame_index=i,
            )

        # Pool points are (row, col); the tracker speaks pixel (x, y).
        queries = points[:, ::-1].astype(np.float64)
        result = tracker.track(frames, i, queries)
        if result.positions.shape != (n - i, b, 2):
            raise InvalidParameterError(
                "tracker output does not cover frames "
                f"{i}..{n - 1} for {b} queries"
            )

        state = GenerationState(seed_frame=i, credit=np.ones(b, dtype=np.int64))
        # deaths[j] = first frame where track j was retired; n if never.
        deaths = np.full(b, n, dtype=np.int64)
        crossing = None
        for p in range(i + 1, n):
            new_state = update_credit(
                state,
                result.positions[p - i],
                result.visibility[p - i],
                frames.mask(p),
            )
            died = (state.credit == 1) & (new_state.credit == 0)
            deaths[died] = p
            state = new_state
            if crossing is None and state.survivors() < k:
                crossing = p

        if crossing is None:
            eligible = np.flatnonzero(deaths == n)
        else:
            eligible = np.flatnonzero(deaths >= crossing)
        chosen = np.sort(rng.choice(eligible, size=k, replace=False))

        for rank, j in enumerate(chosen):
            idx = h_total + rank
            for p in range(i, int(deaths[j])):
                free = int(np.argmax(p_index[p] == SENTINEL))
                p_index[p, free] = idx
                p_pos[p, free] = result.positions[p - i, j]
        h_total += k

    return StructuralPointTable(
        p_pos=p_pos,
        p_index=p_index,
        h_total=h_total,
        sp3d=np.full((h_total, 3), 0.5),
    )


def validate_table(table: StructuralPointTable, frames) -> list:
    """Check a table against its frame sequence; returns violation strings.

    An empty list means the table is structurally sound: every slot is
    filled, indices are in range and unique per frame, each point is observed
    over one contiguous frame range, and every recorded position lies inside
    the image on a static pixel of its frame's motion mask.
    """
    problems = []
    n, tau = table.n_frames, table.tau
    if len(frames) != n:
        problems.append(
            f"table covers {n} frames but the sequence has {len(frames)}"
        )
        return problems

    pos_hole = (table.p_pos == SENTINEL).any(axis=2)
    idx_hole = table.p_index == SENTINEL
    for i in range(n):
        if idx_hole[i].any() or pos_hole[i].any():
            problems.append(f"frame {i} has unfilled slots")
    if problems:
        return problems

    if table.p_index.max() >= table.h_total or table.p_index.min() < 0:
        problems.append("point index out of range for h_total")
    for i in range(n):
        if np.unique(table.p_index[i]).size != tau:
            problems.append(f"frame {i} repeats a point index")

    for idx in range(table.h_total):
        present = (table.p_index == idx).any(axis=1)
        hit = np.flatnonzero(present)
        if hit.size == 0:
            problems.append(f"point {idx} never observed")
            continue
        if hit.size != hit[-1] - hit[0] + 1:
            problems.append(f"point {idx} observed over a gappy frame range")

    for i in range(n):
        mask = np.asarray(frames.mask(i), dtype=bool)
        h, w = mask.shape
        col = np.rint(table.p_pos[i, :, 0]).astype(np.int64)
        row = np.rint(table.p_pos[i, :, 1]).astype(np.int64)
        inside = (col >= 0) & (col <= w - 1) & (row >= 0) & (row <= h - 1)
        if not inside.all():
            problems.append(f"frame {i} has positions outside the image")
            continue
        if not mask[row, col].all():
            problems.append(f"frame {i} has positions on moving content")
    return problems


class StructuralPointExtractor(BaseEstimator, TransformerMixin):
    """Estimator wrapper around the track-table extraction stage.

    fit(X) runs extraction on a frame sequence X and stores the resulting
    table as ``table_``; transform(X) returns that table.  The tracker is a
    required constructor argument because extraction is meaningless without
    one.
    """

    def __init__(
        self,
        tracker=None,
        tau: int = 100,
        window: int = 9,
        canny_low: float = 0.1,
        canny_high: float = 0.2,
        random_state: int = 0,
    ):
        self.tracker = tracker
        self.tau = tau
        self.window = window
        self.canny_low = canny_low
        self.canny_high = canny_high
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.tracker is None:
            raise InvalidParameterError("a tracker must be supplied")
        self.table_ = run_spe(
            X,
            self.tracker,
            tau=self.tau,
            window=self.window,
            canny_low=self.canny_low,
            canny_high=self.canny_high,
            seed=self.random_state,
        )
        self.n_points_ = self.table_.h_total
        return self

    def transform(self, X):
        if not hasattr(self, "table_"):
            raise NotFittedError(
                "this StructuralPointExtractor instance is not fitted yet"
            )
        return self.table_

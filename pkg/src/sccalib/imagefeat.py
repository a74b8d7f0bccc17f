"""Per-frame candidate construction: gradients, edges, max-filter selection.

Candidates for new tracks are pixels that are strong multi-channel gradient
maxima, lie on a Canny edge, and sit inside the static (mask = 1) region.
The maximum filter enforces spatial separation so one image region cannot
flood the pool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .dataset import FramePacket
from .exceptions import InvalidParameterError

_LUMA = np.array([0.299, 0.587, 0.114])
_SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                     [-2.0, 0.0, 2.0],
                     [-1.0, 0.0, 1.0]])


@dataclass
class CandidatePool:
    """Candidate pixels of one frame, ordered by (row, col).

    points holds (row, col) integer positions; scores the gradient magnitude
    at each point.  All points lie on edges inside the static mask, pairwise
    at least ceil(window/2) apart in Chebyshev distance.
    """

    frame_index: int
    points: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if self.scores.shape[0] != self.points.shape[0]:
            raise InvalidParameterError("scores must match points")

    def __len__(self) -> int:
        return self.points.shape[0]


def _check_rgb(rgb) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.shape[0] == 0 or rgb.shape[1] == 0:
        raise InvalidParameterError("expected a nonempty (H, W, 3) image")
    return rgb


def grayscale(rgb) -> np.ndarray:
    """Luma grayscale: 0.299 R + 0.587 G + 0.114 B."""
    return _check_rgb(rgb) @ _LUMA


def _sobel(field):
    gx = ndimage.correlate(field, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(field, _SOBEL_X.T, mode="nearest")
    return gx, gy


def gradient_magnitude(rgb) -> np.ndarray:
    """Multi-channel Sobel magnitude: sqrt of the summed squared responses.

    Border pixels use replicate padding.
    """
    rgb = _check_rgb(rgb)
    if rgb.shape[0] < 3 or rgb.shape[1] < 3:
        raise InvalidParameterError("image must be at least 3x3")
    acc = np.zeros(rgb.shape[:2])
    for c in range(3):
        gx, gy = _sobel(rgb[..., c])
        acc += gx * gx + gy * gy
    return np.sqrt(acc)


def canny_edges(gray, low_frac: float = 0.1, high_frac: float = 0.2) -> np.ndarray:
    """Canny edge map of a grayscale field.

    Sobel gradients, non-maximum suppression along the quantized gradient
    direction, then double-threshold hysteresis.  Thresholds are fractions
    of the maximum gradient magnitude.  Returns a bool map.
    """
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2 or gray.shape[0] < 3 or gray.shape[1] < 3:
        raise InvalidParameterError("gray field must be 2D, at least 3x3")
    if not 0.0 < low_frac < high_frac <= 1.0:
        raise InvalidParameterError("need 0 < low_frac < high_frac <= 1")

    gx, gy = _sobel(gray)
    mag = np.hypot(gx, gy)
    mmax = mag.max()
    # Constant inputs can leave float-noise residue in the Sobel response;
    # thresholds are relative to mmax, so treat noise-scale fields as flat.
    if mmax <= 1e-12 * max(1.0, float(np.abs(gray).max())):
        return np.zeros(gray.shape, dtype=bool)

    # Quantize the gradient direction to 45 degree bins (y points down).
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    bins = (np.floor((theta + np.pi / 8) / (np.pi / 4)).astype(np.int64)) % 4
    h, w = gray.shape
    padded = np.pad(mag, 1, mode="constant")

    def shifted(dr, dc):
        return padded[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]

    # Neighbor along the gradient (pos) and against it (neg) per bin.
    pos = np.choose(bins, [shifted(0, 1), shifted(1, 1),
                           shifted(1, 0), shifted(1, -1)])
    neg = np.choose(bins, [shifted(0, -1), shifted(-1, -1),
                           shifted(-1, 0), shifted(-1, 1)])
    # Strict against one side so a two-pixel ridge tie thins to one pixel.
    nms = np.where((mag > neg) & (mag >= pos), mag, 0.0)

    strong = nms >= high_frac * mmax
    candidate = nms >= low_frac * mmax
    labels, _ = ndimage.label(candidate, structure=np.ones((3, 3), dtype=bool))
    strong_ids = np.unique(labels[strong])
    strong_ids = strong_ids[strong_ids > 0]
    return np.isin(labels, strong_ids)


def select_candidates(grad, edges, mask, window: int = 9,
                      frame_index: int = 0) -> CandidatePool:
    """Select masked edge pixels that are window-maxima of the gradient.

    A pixel is selected iff F = grad*edges is positive there, equals the
    maximum of F over the window x window neighborhood, and mask is 1.
    Equal-valued maxima within one window keep only the lexicographically
    smallest (row, col).
    """
    grad = np.asarray(grad, dtype=np.float64)
    edges = np.asarray(edges).astype(bool)
    mask = np.asarray(mask).astype(bool)
    if grad.ndim != 2 or grad.shape != edges.shape or grad.shape != mask.shape:
        raise InvalidParameterError("grad, edges, mask must share one 2D shape")
    if window < 3 or window % 2 == 0:
        raise InvalidParameterError("window must be odd and >= 3")

    field = np.where(edges, grad, 0.0)
    local_max = ndimage.maximum_filter(field, size=window, mode="constant",
                                       cval=0.0)
    selected = (field > 0.0) & (field == local_max) & mask
    coords = np.argwhere(selected)          # row-major: lexicographic order
    if coords.shape[0] == 0:
        return CandidatePool(frame_index, np.empty((0, 2), dtype=np.int64),
                             np.empty(0))

    # Ties: two selected pixels within the same window must share the max
    # value; keep the first in scan order.  Only pixels with another
    # selected pixel nearby need the greedy pass.
    radius = (window - 1) // 2
    near = ndimage.convolve(selected.astype(np.int64),
                            np.ones((window, window), dtype=np.int64),
                            mode="constant", cval=0)
    crowded = near[coords[:, 0], coords[:, 1]] > 1
    if crowded.any():
        keep = np.ones(coords.shape[0], dtype=bool)
        kept_pts = []
        for k in np.flatnonzero(crowded):
            r, c = coords[k]
            drop = False
            for rr, cc in kept_pts:
                if max(abs(rr - r), abs(cc - c)) <= radius:
                    drop = True
                    break
            if drop:
                keep[k] = False
            else:
                kept_pts.append((r, c))
        coords = coords[keep]

    scores = grad[coords[:, 0], coords[:, 1]]
    return CandidatePool(frame_index, coords, scores)


def build_candidate_pool(packet: FramePacket, window: int = 9,
                         canny_low: float = 0.1,
                         canny_high: float = 0.2) -> CandidatePool:
    """Full per-frame pipeline from an RGB frame to its candidate pool."""
    gray = grayscale(packet.rgb)
    grad = gradient_magnitude(packet.rgb)
    edges = canny_edges(gray, canny_low, canny_high)
    return select_candidates(grad, edges, packet.motion_mask, window,
                             frame_index=packet.index)

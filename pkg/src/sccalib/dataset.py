"""Frame sequences: RGB frames, per-frame motion masks, and timestamps.

A dataset directory holds frames/%05d.png and masks/%05d.png (8-bit; mask
pixels >= 128 count as static/usable).  RGB frames are loaded lazily so long
sequences do not hold every decoded image in memory; masks are small (1 bit
per pixel after thresholding) and load eagerly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .exceptions import InvalidParameterError


def load_image_rgb(path) -> np.ndarray:
    """Load a PNG as float64 RGB in [0, 1], shape (H, W, 3)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_image_rgb(path, rgb) -> None:
    """Save a float RGB array in [0, 1] as an 8-bit PNG."""
    rgb = np.asarray(rgb)
    out = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(out, mode="RGB").save(path)


def load_mask(path) -> np.ndarray:
    """Load an 8-bit mask PNG as bool, thresholding at 128."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr >= 128


def save_mask(path, mask) -> None:
    mask = np.asarray(mask).astype(bool)
    Image.fromarray((mask * np.uint8(255)), mode="L").save(path)


@dataclass
class FramePacket:
    """One frame: index, RGB image, motion mask (True = static), timestamp."""

    index: int
    rgb: np.ndarray
    motion_mask: np.ndarray
    time: float

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        self.motion_mask = np.asarray(self.motion_mask).astype(bool)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise InvalidParameterError("rgb must have shape (H, W, 3)")
        if self.motion_mask.shape != self.rgb.shape[:2]:
            raise InvalidParameterError("mask shape must match the image")


class FrameSequence:
    """Ordered frames with masks and timestamps.

    Construct eagerly with from_arrays or lazily with from_directory; either
    way rgb(i) returns float64 in [0, 1] and mask(i) returns bool.
    """

    def __init__(self, rgb_sources, masks, times=None):
        n = len(rgb_sources)
        if n == 0:
            raise InvalidParameterError("sequence must contain frames")
        if len(masks) != n:
            raise InvalidParameterError("need one mask per frame")
        self._sources = list(rgb_sources)
        self._masks = [np.asarray(m).astype(bool) for m in masks]
        shape = self._masks[0].shape
        for m in self._masks:
            if m.shape != shape:
                raise InvalidParameterError("all masks must share one shape")
        if times is None:
            times = [0.0] * n if n == 1 else [i / (n - 1) for i in range(n)]
        times = [float(t) for t in times]
        if len(times) != n:
            raise InvalidParameterError("need one timestamp per frame")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidParameterError("timestamps must strictly increase")
        self._times = times
        self._shape = shape

    @classmethod
    def from_arrays(cls, rgbs, masks, times=None) -> "FrameSequence":
        seq = cls(list(rgbs), masks, times)
        for i, r in enumerate(seq._sources):
            r = np.asarray(r, dtype=np.float64)
            if r.ndim != 3 or r.shape[2] != 3 or r.shape[:2] != seq._shape:
                raise InvalidParameterError(f"frame {i} shape mismatch")
            seq._sources[i] = r
        return seq

    @classmethod
    def from_directory(cls, root) -> "FrameSequence":
        frame_dir = os.path.join(root, "frames")
        mask_dir = os.path.join(root, "masks")
        if not os.path.isdir(frame_dir) or not os.path.isdir(mask_dir):
            raise InvalidParameterError(
                f"dataset at {root!r} needs frames/ and masks/ directories")
        names = sorted(f for f in os.listdir(frame_dir) if f.endswith(".png"))
        if not names:
            raise InvalidParameterError(f"no PNG frames under {frame_dir!r}")
        paths, masks = [], []
        for name in names:
            mask_path = os.path.join(mask_dir, name)
            if not os.path.isfile(mask_path):
                raise InvalidParameterError(f"missing mask for frame {name}")
            paths.append(os.path.join(frame_dir, name))
            masks.append(load_mask(mask_path))
        return cls(paths, masks)

    def __len__(self) -> int:
        return len(self._sources)

    @property
    def height(self) -> int:
        return self._shape[0]

    @property
    def width(self) -> int:
        return self._shape[1]

    def rgb(self, i: int) -> np.ndarray:
        src = self._sources[i]
        if isinstance(src, str):
            img = load_image_rgb(src)
            if img.shape[:2] != self._shape:
                raise InvalidParameterError(
                    f"frame {i} has shape {img.shape[:2]}, expected {self._shape}")
            return img
        return src

    def mask(self, i: int) -> np.ndarray:
        return self._masks[i]

    def time(self, i: int) -> float:
        return self._times[i]

    def packet(self, i: int) -> FramePacket:
        return FramePacket(index=i, rgb=self.rgb(i),
                           motion_mask=self._masks[i], time=self._times[i])

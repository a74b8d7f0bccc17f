"""Camera model and projection geometry.

Conventions used throughout the package:

- World and camera frames are right-handed.  The camera looks down +z
  (OpenCV style): x right, y down, z forward.  View depth is the camera-space
  z coordinate.
- Quaternions are (w, x, y, z), and a camera pose is stored as the
  world-to-camera rotation plus translation: x_cam = R x_world + t.
- Points are row vectors.  A 3D point is projected by appending a homogeneous
  1, multiplying by W2C^T then by the perspective matrix transposed, dividing
  by the homogeneous coordinate, and mapping NDC to pixels with
  (ndc + 1) / 2 * (width, height).
- Pixel origin is the top-left corner, x right, y down, pixel centers at
  integer coordinates.  The principal point is fixed at (width/2, height/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidParameterError


def normalize_quaternion(q):
    """Return q scaled to unit norm. Raises on zero-norm input."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0.0):
        raise InvalidParameterError("cannot normalize a zero-norm quaternion")
    return q / norm


def quat_to_rotation(q):
    """Convert unit quaternion(s) (w, x, y, z) to rotation matrix(es).

    Accepts shape (4,) or (..., 4); the input is normalized internally.
    Returns shape (3, 3) or (..., 3, 3).
    """
    u = normalize_quaternion(q)
    w, x, y, z = (u[..., i] for i in range(4))
    rot = np.empty(u.shape[:-1] + (3, 3), dtype=np.float64)
    rot[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    rot[..., 0, 1] = 2.0 * (x * y - w * z)
    rot[..., 0, 2] = 2.0 * (x * z + w * y)
    rot[..., 1, 0] = 2.0 * (x * y + w * z)
    rot[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    rot[..., 1, 2] = 2.0 * (y * z - w * x)
    rot[..., 2, 0] = 2.0 * (x * z - w * y)
    rot[..., 2, 1] = 2.0 * (y * z + w * x)
    rot[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return rot


def rotation_to_quat(rot):
    """Convert a rotation matrix to a unit quaternion (w, x, y, z) with w >= 0."""
    rot = np.asarray(rot, dtype=np.float64)
    if rot.shape != (3, 3):
        raise InvalidParameterError("rotation matrix must have shape (3, 3)")
    m00, m01, m02 = rot[0]
    m10, m11, m12 = rot[1]
    m20, m21, m22 = rot[2]
    trace = m00 + m11 + m22
    # Pick the numerically largest diagonal branch.
    if trace > 0.0:
        s = np.sqrt(trace + 1.0) * 2.0
        q = np.array([0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s])
    elif m00 > m11 and m00 > m22:
        s = np.sqrt(1.0 + m00 - m11 - m22) * 2.0
        q = np.array([(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s])
    elif m11 > m22:
        s = np.sqrt(1.0 + m11 - m00 - m22) * 2.0
        q = np.array([(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s])
    else:
        s = np.sqrt(1.0 + m22 - m00 - m11) * 2.0
        q = np.array([(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s])
    if q[0] < 0.0:
        q = -q
    return normalize_quaternion(q)


def quat_from_axis_angle(axis, angle):
    """Unit quaternion for a rotation of `angle` radians about `axis`."""
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if norm == 0.0:
        raise InvalidParameterError("rotation axis must be nonzero")
    axis = axis / norm
    half = 0.5 * float(angle)
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


@dataclass(frozen=True)
class Intrinsics:
    """Shared pinhole intrinsics. The principal point is fixed at the image center."""

    focal: float
    width: int
    height: int
    znear: float = 0.01
    zfar: float = 100.0

    def __post_init__(self):
        if self.focal <= 0.0:
            raise InvalidParameterError("focal must be positive")
        if self.width <= 0 or self.height <= 0:
            raise InvalidParameterError("image size must be positive")
        if not 0.0 < self.znear < self.zfar:
            raise InvalidParameterError("require 0 < znear < zfar")

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0


@dataclass(frozen=True)
class CameraParams:
    """World-to-camera pose of one frame: x_cam = R(quat) x_world + trans."""

    quat: np.ndarray
    trans: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        quat = np.asarray(self.quat, dtype=np.float64).reshape(4)
        trans = np.asarray(self.trans, dtype=np.float64).reshape(3)
        if np.linalg.norm(quat) == 0.0:
            raise InvalidParameterError("camera quaternion must be nonzero")
        object.__setattr__(self, "quat", quat)
        object.__setattr__(self, "trans", trans)

    def rotation(self) -> np.ndarray:
        return quat_to_rotation(self.quat)

    def center(self) -> np.ndarray:
        """Camera center in world coordinates, -R^T t."""
        return -self.rotation().T @ self.trans


def build_w2c(cam: CameraParams) -> np.ndarray:
    """4x4 world-to-camera matrix [[R, t], [0, 1]]."""
    m = np.eye(4)
    m[:3, :3] = cam.rotation()
    m[:3, 3] = cam.trans
    return m


def build_perspective(intr: Intrinsics) -> np.ndarray:
    """4x4 perspective matrix mapping camera space to clip space.

    The homogeneous coordinate of the result equals the view depth z, so
    clip/w yields NDC with x, y in [-1, 1] inside the frustum.
    """
    m = np.zeros((4, 4))
    m[0, 0] = 2.0 * intr.focal / intr.width
    m[1, 1] = 2.0 * intr.focal / intr.height
    m[2, 2] = intr.zfar / (intr.zfar - intr.znear)
    m[2, 3] = -intr.zfar * intr.znear / (intr.zfar - intr.znear)
    m[3, 2] = 1.0
    return m


def project_points(sp3d, indices, cam: CameraParams, intr: Intrinsics):
    """Project the selected 3D points into one camera.

    Parameters
    ----------
    sp3d : (H, 3) array of 3D points.
    indices : (M,) integer array selecting rows of sp3d.
    cam, intr : camera pose and shared intrinsics.

    Returns
    -------
    pixels : (M, 2) float array. Points at or behind the camera plane divide
        by a non-positive depth; zero depth yields non-finite pixels.
    depth : (M,) view depth of each point (camera-space z).
    """
    sp3d = np.asarray(sp3d, dtype=np.float64).reshape(-1, 3)
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= sp3d.shape[0]):
        raise InvalidParameterError(
            f"point index out of range [0, {sp3d.shape[0]}): "
            f"min {idx.min()}, max {idx.max()}"
        )
    pts = sp3d[idx]
    homo = np.concatenate([pts, np.ones((pts.shape[0], 1))], axis=1)
    clip = homo @ build_w2c(cam).T @ build_perspective(intr).T
    depth = clip[:, 3]
    with np.errstate(divide="ignore", invalid="ignore"):
        ndc = clip[:, :2] / depth[:, None]
    pixels = (ndc + 1.0) / 2.0 * np.array([intr.width, intr.height])
    return pixels, depth

"""Minimal CPU forward model for 3D Gaussian splats.

This is a sanity renderer, not a training rasterizer: it projects anisotropic
3D Gaussians through a pinhole camera with a local affine (Jacobian)
approximation and composites them front to back.  It exists so that a
calibration result can be checked visually (do the recovered points land
where the tracks say they should?) without any GPU machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    BehindCameraError,
    InvalidParameterError,
    NumericalError,
)
from .geometry import CameraParams, Intrinsics, quat_to_rotation

_COND_CAP = 1e12
_WEIGHT_FLOOR = 1.0 / 255.0
_ALPHA_CAP = 0.999


@dataclass
class Gaussian3D:
    """One anisotropic Gaussian primitive with constant RGB color."""

    mu: np.ndarray
    quat: np.ndarray
    scale: np.ndarray
    opacity: float = 1.0
    color: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.quat = np.asarray(self.quat, dtype=np.float64)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        self.color = np.asarray(self.color, dtype=np.float64)
        if self.mu.shape != (3,):
            raise InvalidParameterError("mu must be a 3-vector")
        if self.quat.shape != (4,):
            raise InvalidParameterError("quat must be a 4-vector")
        if not np.isclose(np.linalg.norm(self.quat), 1.0, atol=1e-6):
            raise InvalidParameterError("quat must be unit-norm")
        if self.scale.shape != (3,) or (self.scale <= 0).any():
            raise InvalidParameterError("scale components must be positive")
        if not 0.0 <= self.opacity <= 1.0:
            raise InvalidParameterError("opacity must lie in [0, 1]")
        if self.color.shape != (3,) or (self.color < 0).any() or (self.color > 1).any():
            raise InvalidParameterError("color channels must lie in [0, 1]")


@dataclass
class GaussianCloud:
    gaussians: list

    def __post_init__(self):
        self.gaussians = list(self.gaussians)

    def __len__(self):
        return len(self.gaussians)

    def __iter__(self):
        return iter(self.gaussians)


def covariance_from(scale: np.ndarray, quat: np.ndarray) -> np.ndarray:
    """3x3 covariance of a Gaussian with per-axis scales and orientation.

    Computes R diag(s) diag(s) R^T, which is symmetric positive definite for
    positive scales.
    """
    scale = np.asarray(scale, dtype=np.float64)
    if scale.shape != (3,) or (scale <= 0).any():
        raise InvalidParameterError("scale components must be positive")
    r = quat_to_rotation(np.asarray(quat, dtype=np.float64))
    rs = r * scale[np.newaxis, :]
    return rs @ rs.T


def project_covariance(
    sigma: np.ndarray,
    cam: CameraParams,
    intr: Intrinsics,
    mu: np.ndarray,
) -> np.ndarray:
    """Screen-space 2x2 covariance of a 3D Gaussian under a pinhole camera.

    Uses the local affine approximation: with W the world-to-camera rotation
    and J the Jacobian of (x, y, z) -> (f x / z, f y / z) at the view-space
    center, the projected covariance is J W Sigma W^T J^T.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if sigma.shape != (3, 3):
        raise InvalidParameterError("sigma must be a 3x3 matrix")
    if mu.shape != (3,):
        raise InvalidParameterError("mu must be a 3-vector")
    w = cam.rotation()
    v = w @ mu + cam.trans
    x, y, z = v
    if z <= 0:
        raise BehindCameraError(
            f"gaussian center has non-positive view depth {z:.6g}"
        )
    f = intr.focal
    jac = np.array([
        [f / z, 0.0, -f * x / (z * z)],
        [0.0, f / z, -f * y / (z * z)],
    ])
    m = jac @ w
    return m @ sigma @ m.T


def _weight(mu: np.ndarray, sigma: np.ndarray, x: np.ndarray) -> float:
    if np.linalg.cond(sigma) > _COND_CAP:
        raise NumericalError("covariance is numerically singular")
    d = np.asarray(x, dtype=np.float64) - mu
    return float(np.exp(-0.5 * d @ np.linalg.solve(sigma, d)))


def gaussian_weight(g, x) -> float:
    """Unnormalized Gaussian density exp(-1/2 (x-mu)^T Sigma^-1 (x-mu)).

    ``g`` is either a Gaussian3D (evaluated in 3D) or a (mu, sigma) pair of
    matching dimension, e.g. a projected 2D splat.  Always 1 at the center.
    """
    if isinstance(g, Gaussian3D):
        return _weight(g.mu, covariance_from(g.scale, g.quat), x)
    mu, sigma = g
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (mu.shape[0], mu.shape[0]):
        raise InvalidParameterError("mu and sigma dimensions disagree")
    return _weight(mu, sigma, x)


def alpha_blend_pixel(splats) -> np.ndarray:
    """Composite (color, alpha) pairs front to back over a black background.

    ``splats`` must already be sorted by increasing view depth.  Alphas are
    clamped to [0, 0.999] so transmittance stays positive.
    """
    out = np.zeros(3)
    transmittance = 1.0
    for color, alpha in splats:
        a = min(max(float(alpha), 0.0), _ALPHA_CAP)
        out += np.asarray(color, dtype=np.float64) * (a * transmittance)
        transmittance *= 1.0 - a
    return out


def render_preview(
    cloud: GaussianCloud,
    cam: CameraParams,
    intr: Intrinsics,
    size=None,
) -> np.ndarray:
    """Rasterize a Gaussian cloud to an RGB float image in [0, 1].

    Splats are composited front to back with per-pixel transmittance, which
    is equivalent to sorting contributions at every pixel because one global
    depth order induces all per-pixel orders.  Gaussians behind the camera
    are skipped.  Pixels where a splat's weight falls below 1/255 receive no
    contribution from it; the search window per splat is a 3.5-sigma box, so
    nothing above that floor is missed.
    """
    if len(cloud) == 0:
        raise InvalidParameterError("cannot render an empty cloud")
    if size is None:
        size = (intr.width, intr.height)
    width, height = int(size[0]), int(size[1])

    rot = cam.rotation()
    entries = []
    for g in cloud:
        v = rot @ g.mu + cam.trans
        if v[2] <= 0:
            continue
        sigma2 = project_covariance(
            covariance_from(g.scale, g.quat), cam, intr, g.mu
        )
        px = intr.cx + intr.focal * v[0] / v[2]
        py = intr.cy + intr.focal * v[1] / v[2]
        entries.append((float(v[2]), px, py, sigma2, g))
    entries.sort(key=lambda e: e[0])

    image = np.zeros((height, width, 3))
    transmittance = np.ones((height, width))
    for _, px, py, sigma2, g in entries:
        lam = max(np.linalg.eigvalsh(sigma2).max(), 1e-12)
        r = 3.5 * np.sqrt(lam)
        x0 = max(int(np.floor(px - r)), 0)
        x1 = min(int(np.ceil(px + r)) + 1, width)
        y0 = max(int(np.floor(py - r)), 0)
        y1 = min(int(np.ceil(py + r)) + 1, height)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1) - px
        ys = np.arange(y0, y1) - py
        dx, dy = np.meshgrid(xs, ys)
        if np.linalg.cond(sigma2) > _COND_CAP:
            raise NumericalError("projected covariance is numerically singular")
        inv = np.linalg.inv(sigma2)
        maha = inv[0, 0] * dx * dx + 2 * inv[0, 1] * dx * dy + inv[1, 1] * dy * dy
        weight = np.exp(-0.5 * maha)
        alpha = np.clip(g.opacity * weight, 0.0, _ALPHA_CAP)
        alpha[weight <= _WEIGHT_FLOOR] = 0.0
        patch_t = transmittance[y0:y1, x0:x1]
        image[y0:y1, x0:x1] += (alpha * patch_t)[:, :, np.newaxis] * g.color
        transmittance[y0:y1, x0:x1] = patch_t * (1.0 - alpha)
    return np.clip(image, 0.0, 1.0)


def positional_encoding(x: np.ndarray, L: int) -> np.ndarray:
    """NeRF-style frequency features: x plus sin/cos(2^l pi x) per dimension.

    Output dimension is d + 2 d L; frequencies for one input dimension stay
    adjacent, alternating sin then cos with increasing l.
    """
    if L < 1:
        raise InvalidParameterError("L must be at least 1")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.ndim != 1:
        raise InvalidParameterError("x must be a flat vector")
    freqs = (2.0 ** np.arange(L)) * np.pi
    ang = x[:, np.newaxis] * freqs[np.newaxis, :]
    block = np.stack([np.sin(ang), np.cos(ang)], axis=2)  # (d, L, 2)
    return np.concatenate([x, block.reshape(-1)])

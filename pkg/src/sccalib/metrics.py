"""Trajectory and image-quality metrics.

Monocular reconstructions carry a free global similarity (gauge), so
trajectory errors are only meaningful after a Sim(3) alignment: ATE aligns
and reports the RMSE of camera-center distances, while RPE compares relative
motions between consecutive frames (scale fixed by the same alignment,
rotation part scale-free by construction).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import AlignmentError, InvalidParameterError
from .geometry import CameraParams, quat_to_rotation, rotation_to_quat

_PSNR_CAP = 99.0
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5


@dataclass
class Trajectory:
    """Per-frame camera poses: world-to-camera quaternions plus centers."""

    quats: np.ndarray
    centers: np.ndarray

    def __post_init__(self):
        self.quats = np.asarray(self.quats, dtype=np.float64)
        self.centers = np.asarray(self.centers, dtype=np.float64)
        if self.quats.ndim != 2 or self.quats.shape[1] != 4:
            raise InvalidParameterError("quats must have shape (M, 4)")
        if self.centers.shape != (self.quats.shape[0], 3):
            raise InvalidParameterError("centers must have shape (M, 3)")
        if not (np.isfinite(self.quats).all() and np.isfinite(self.centers).all()):
            raise InvalidParameterError("trajectory entries must be finite")

    def __len__(self):
        return self.quats.shape[0]

    @classmethod
    def from_cameras(cls, cameras) -> "Trajectory":
        cams = sorted(cameras, key=lambda c: c.frame_index)
        if not cams:
            raise InvalidParameterError("need at least one camera")
        return cls(
            quats=np.stack([c.quat for c in cams]),
            centers=np.stack([c.center() for c in cams]),
        )

    def poses(self) -> np.ndarray:
        """Camera-to-world 4x4 matrices, one per frame."""
        m = len(self)
        out = np.tile(np.eye(4), (m, 1, 1))
        out[:, :3, :3] = quat_to_rotation(self.quats).transpose(0, 2, 1)
        out[:, :3, 3] = self.centers
        return out


@dataclass
class Sim3:
    """Similarity transform x -> scale * R x + trans."""

    scale: float
    quat: np.ndarray
    trans: np.ndarray

    def __post_init__(self):
        self.quat = np.asarray(self.quat, dtype=np.float64)
        self.trans = np.asarray(self.trans, dtype=np.float64)
        if self.scale <= 0:
            raise InvalidParameterError("scale must be positive")
        if self.quat.shape != (4,) or self.trans.shape != (3,):
            raise InvalidParameterError("quat must be (4,) and trans (3,)")

    def rotation(self) -> np.ndarray:
        return quat_to_rotation(self.quat)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return self.scale * points @ self.rotation().T + self.trans


@dataclass
class TrajectoryReport:
    ate: float
    rpe_trans: float
    rpe_rot: float
    sim3: Sim3


def umeyama_align(est: Trajectory, gt: Trajectory) -> Sim3:
    """Least-squares similarity mapping est centers onto gt centers.

    Closed-form SVD solution of min over (s, R, t) of
    sum_i ||gt_i - (s R est_i + t)||^2, with det(R) = +1 enforced.  Requires
    at least 3 poses whose centers are not all collinear; otherwise the
    rotation (or scale) is not determined and AlignmentError is raised.
    """
    if len(est) != len(gt):
        raise AlignmentError("trajectories differ in length")
    m = len(est)
    if m < 3:
        raise AlignmentError("need at least 3 poses to align")
    src = est.centers
    dst = gt.centers
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    # Collinear centers leave a rotation about the line undetermined.
    for centered in (xs, xd):
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[0] <= 0 or sv[1] <= 1e-9 * sv[0]:
            raise AlignmentError("camera centers are collinear or coincident")
    cov = xd.T @ xs / m
    u, d, vt = np.linalg.svd(cov)
    sign = np.sign(np.linalg.det(u) * np.linalg.det(vt))
    flip = np.ones(3)
    flip[2] = sign
    rot = u @ np.diag(flip) @ vt
    var_s = (xs ** 2).sum() / m
    scale = float((d * flip).sum() / var_s)
    if scale <= 0:
        raise AlignmentError("alignment produced a non-positive scale")
    trans = mu_d - scale * rot @ mu_s
    return Sim3(scale=scale, quat=rotation_to_quat(rot), trans=trans)


def ate(est: Trajectory, gt: Trajectory) -> float:
    """RMSE of camera-center distances after Sim(3) alignment."""
    sim = umeyama_align(est, gt)
    resid = sim.apply(est.centers) - gt.centers
    return float(np.sqrt((resid ** 2).sum(axis=1).mean()))


def _rotation_angle_deg(r: np.ndarray) -> float:
    # atan2 form: accurate for tiny angles where arccos loses digits.
    sin_vec = 0.5 * np.array([
        r[2, 1] - r[1, 2],
        r[0, 2] - r[2, 0],
        r[1, 0] - r[0, 1],
    ])
    cos_term = (np.trace(r) - 1.0) / 2.0
    return float(np.degrees(np.arctan2(np.linalg.norm(sin_vec), cos_term)))


def rpe(est: Trajectory, gt: Trajectory, delta: int = 1):
    """Relative pose error over frame gaps of delta; returns (trans, rot_deg).

    Relative motions E_i = est_i^-1 est_{i+delta} are compared with the
    ground-truth counterparts; the translational part is evaluated after
    fixing the free monocular scale via Sim(3) alignment (falling back to
    scale 1 when the trajectory is too short or degenerate to align).  The
    rotational part needs no scale.  Both are RMSE over all gaps.
    """
    if len(est) != len(gt):
        raise InvalidParameterError("trajectories differ in length")
    m = len(est)
    if delta < 1 or delta >= m:
        raise InvalidParameterError("delta must satisfy 1 <= delta < length")
    try:
        scale = umeyama_align(est, gt).scale
    except AlignmentError:
        scale = 1.0
    est_scaled = Trajectory(quats=est.quats, centers=est.centers * scale)
    pe = est_scaled.poses()
    pg = gt.poses()
    t_sq = []
    r_sq = []
    for i in range(m - delta):
        e_rel = np.linalg.inv(pe[i]) @ pe[i + delta]
        g_rel = np.linalg.inv(pg[i]) @ pg[i + delta]
        d = np.linalg.inv(g_rel) @ e_rel
        t_sq.append((d[:3, 3] ** 2).sum())
        r_sq.append(_rotation_angle_deg(d[:3, :3]) ** 2)
    return float(np.sqrt(np.mean(t_sq))), float(np.sqrt(np.mean(r_sq)))


def evaluate_trajectory(
    est: Trajectory, gt: Trajectory, delta: int = 1
) -> TrajectoryReport:
    sim = umeyama_align(est, gt)
    resid = sim.apply(est.centers) - gt.centers
    ate_val = float(np.sqrt((resid ** 2).sum(axis=1).mean()))
    rpe_t, rpe_r = rpe(est, gt, delta=delta)
    return TrajectoryReport(ate=ate_val, rpe_trans=rpe_t, rpe_rot=rpe_r, sim3=sim)


def psnr(img_a: np.ndarray, img_b: np.ndarray, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 99 for identical inputs."""
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidParameterError("image shapes differ")
    if max_value <= 0:
        raise InvalidParameterError("max_value must be positive")
    mse = float(((a - b) ** 2).mean())
    if mse == 0.0:
        return _PSNR_CAP
    return min(float(10.0 * np.log10(max_value ** 2 / mse)), _PSNR_CAP)


def _gaussian_window_filter(img: np.ndarray) -> np.ndarray:
    half = _SSIM_WINDOW // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(ax ** 2) / (2 * _SSIM_SIGMA ** 2))
    kernel = np.outer(g, g)
    kernel /= kernel.sum()
    return ndimage.correlate(img, kernel, mode="reflect")


def _ssim_single(a: np.ndarray, b: np.ndarray) -> float:
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    mu_a = _gaussian_window_filter(a)
    mu_b = _gaussian_window_filter(b)
    var_a = _gaussian_window_filter(a * a) - mu_a ** 2
    var_b = _gaussian_window_filter(b * b) - mu_b ** 2
    cov = _gaussian_window_filter(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float((num / den).mean())


def ssim(img_a: np.ndarray, img_b: np.ndarray) -> float:
    """Mean structural similarity over 11x11 Gaussian windows (sigma 1.5).

    Intensities are assumed to lie in [0, 1] (dynamic range L = 1).  RGB
    images are scored per channel and averaged.
    """
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidParameterError("image shapes differ")
    if a.ndim == 2:
        return _ssim_single(a, b)
    if a.ndim == 3:
        vals = [_ssim_single(a[:, :, c], b[:, :, c]) for c in range(a.shape[2])]
        return float(np.mean(vals))
    raise InvalidParameterError("images must be 2D grayscale or 3D RGB")

"""Joint optimization of camera poses, shared focal length, and structural points.

The objective is a sum of three terms over a complete structural point table:

- projection loss: per frame, the mean squared pixel error between projected
  structural points and their tracked positions, summed over frames;
- distance loss: per frame, the mean squared difference between all pairwise
  point distances of the projected set and of the tracked set, summed over
  frames;
- depth loss: ReLU(-view depth) summed over every projected point, pushing
  structure in front of the cameras.

All three use unit weights.  Optimization is plain Adam with constant
per-group learning rates; quaternions are stored as raw 4-vectors and
renormalized after every step, and the focal length is clamped positive.
Gradients are computed analytically (chain rule through normalization,
rotation, rigid transform, perspective division, and the pairwise-distance
reduction) and are checked against finite differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .exceptions import DivergenceError, InvalidParameterError
from .geometry import CameraParams, Intrinsics, normalize_quaternion, quat_to_rotation
from .spe import StructuralPointTable

# Pairs closer than this in pixels get a zero distance-loss subgradient.
_DIST_EPS = 1e-12


def _pair_terms_py(px, py, tx, ty, gpx, gpy) -> float:
    """Distance-loss pair reduction: returns sum of squared residuals over
    all frames and pairs, and accumulates the unscaled pair gradient of the
    projected pixels into gpx/gpy.

    px, py, tx, ty : (n_frames, tau) projected and tracked pixel coordinates.
    gpx, gpy : (n_frames, tau) zeroed output buffers.
    """
    n, tau = px.shape
    total = 0.0
    for f in range(n):
        for j in range(tau - 1):
            pxj = px[f, j]
            pyj = py[f, j]
            txj = tx[f, j]
            tyj = ty[f, j]
            gx = 0.0
            gy = 0.0
            for k in range(j + 1, tau):
                dx = pxj - px[f, k]
                dy = pyj - py[f, k]
                d = math.sqrt(dx * dx + dy * dy)
                ex = txj - tx[f, k]
                ey = tyj - ty[f, k]
                r = d - math.sqrt(ex * ex + ey * ey)
                total += r * r
                if d > _DIST_EPS:
                    c = r / d
                    cgx = c * dx
                    cgy = c * dy
                    gx += cgx
                    gy += cgy
                    gpx[f, k] -= cgx
                    gpy[f, k] -= cgy
            gpx[f, j] += gx
            gpy[f, j] += gy
    return total


if njit is not None:
    _pair_terms = njit(cache=True, fastmath=False)(_pair_terms_py)
else:
    _pair_terms = None


def guess_intrinsics(width: int, height: int, znear: float = 0.01,
                     zfar: float = 100.0) -> Intrinsics:
    """Initial intrinsics guess for a sequence: focal = image width."""
    return Intrinsics(focal=float(width), width=width, height=height,
                      znear=znear, zfar=zfar)


@dataclass
class CalibParams:
    """All optimizable parameters: N poses, one focal length, H points."""

    quats: np.ndarray        # (N, 4) world-to-camera rotations, (w, x, y, z)
    trans: np.ndarray        # (N, 3) world-to-camera translations
    intrinsics: Intrinsics   # focal optimizable, everything else fixed
    sp3d: np.ndarray         # (H, 3) structural points

    def __post_init__(self):
        self.quats = np.asarray(self.quats, dtype=np.float64)
        self.trans = np.asarray(self.trans, dtype=np.float64)
        self.sp3d = np.asarray(self.sp3d, dtype=np.float64)
        if self.quats.ndim != 2 or self.quats.shape[1] != 4:
            raise InvalidParameterError("quats must have shape (N, 4)")
        if self.trans.shape != (self.quats.shape[0], 3):
            raise InvalidParameterError("trans must have shape (N, 3)")
        if self.sp3d.ndim != 2 or self.sp3d.shape[1] != 3:
            raise InvalidParameterError("sp3d must have shape (H, 3)")
        if np.any(np.linalg.norm(self.quats, axis=1) == 0.0):
            raise InvalidParameterError("camera quaternions must be nonzero")

    @property
    def n_frames(self) -> int:
        return self.quats.shape[0]

    @property
    def n_points(self) -> int:
        return self.sp3d.shape[0]

    def camera(self, i: int) -> CameraParams:
        return CameraParams(quat=self.quats[i], trans=self.trans[i], frame_index=i)

    def cameras(self) -> list[CameraParams]:
        return [self.camera(i) for i in range(self.n_frames)]

    def copy(self) -> "CalibParams":
        return CalibParams(self.quats.copy(), self.trans.copy(),
                           self.intrinsics, self.sp3d.copy())

    @classmethod
    def from_cameras(cls, cameras, intrinsics: Intrinsics, sp3d) -> "CalibParams":
        quats = np.stack([c.quat for c in cameras])
        trans = np.stack([c.trans for c in cameras])
        return cls(quats, trans, intrinsics, np.asarray(sp3d, dtype=np.float64))


@dataclass
class OptimizerConfig:
    lr_quat: float = 0.01
    lr_trans: float = 0.01
    lr_focal: float = 1.0
    lr_points: float = 0.01
    iterations: int = 1000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    # Optional early exit: stop once the recorded loss drops to this value.
    stop_loss: float | None = None
    # Return the lowest-loss iterate instead of the last one.  Useful when
    # large constant learning rates leave the final iterations oscillating.
    keep_best: bool = False

    def __post_init__(self):
        for name in ("lr_quat", "lr_trans", "lr_focal", "lr_points"):
            if getattr(self, name) <= 0.0:
                raise InvalidParameterError(f"{name} must be positive")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise InvalidParameterError("Adam betas must lie in [0, 1)")
        if self.adam_eps <= 0.0:
            raise InvalidParameterError("adam_eps must be positive")
        if self.iterations < 0:
            raise InvalidParameterError("iterations must be >= 0")


@dataclass
class CalibGradient:
    """Gradient of total_loss, same shapes as the parameters."""

    quats: np.ndarray
    trans: np.ndarray
    focal: float
    sp3d: np.ndarray


def init_cameras(n: int, intr_guess: Intrinsics, seed: int = 0,
                 n_points: int = 0, rot_sigma_deg: float = 1.0,
                 trans_sigma: float = 0.01) -> CalibParams:
    """Random initialization around the identity rig.

    Quaternions are the identity perturbed by an axis-angle rotation with a
    Gaussian angle (sigma in degrees), translations are zero-mean Gaussian,
    the focal length is taken from intr_guess, and every structural point
    starts at (0.5, 0.5, 0.5).
    """
    if n < 2:
        raise InvalidParameterError("need at least two cameras")
    if n_points < 0:
        raise InvalidParameterError("n_points must be >= 0")
    rng = np.random.default_rng(seed)
    axes = rng.normal(size=(n, 3))
    norms = np.linalg.norm(axes, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    axes = axes / norms
    angles = rng.normal(0.0, np.deg2rad(rot_sigma_deg), size=n)
    half = 0.5 * angles
    quats = np.concatenate([np.cos(half)[:, None],
                            np.sin(half)[:, None] * axes], axis=1)
    trans = rng.normal(0.0, trans_sigma, size=(n, 3))
    sp3d = np.full((n_points, 3), 0.5)
    return CalibParams(quats=quats, trans=trans, intrinsics=intr_guess, sp3d=sp3d)


def _require_complete(table: StructuralPointTable):
    if not table.complete():
        raise InvalidParameterError("structural point table has unfilled slots")


def _frame_projection(table, params, i):
    from .geometry import project_points

    return project_points(params.sp3d, table.p_index[i],
                          params.camera(i), params.intrinsics)


def loss_projection(table: StructuralPointTable, params: CalibParams) -> float:
    """Sum over frames of the mean squared pixel error against the tracks."""
    _require_complete(table)
    total = 0.0
    for i in range(table.n_frames):
        pixels, _ = _frame_projection(table, params, i)
        d = pixels - table.p_pos[i]
        total += float(np.mean(np.sum(d * d, axis=1)))
    return total


def loss_distance(table: StructuralPointTable, params: CalibParams) -> float:
    """Sum over frames of the mean squared pairwise-distance mismatch."""
    _require_complete(table)
    if table.tau < 2:
        raise InvalidParameterError("distance loss needs tau >= 2")
    ia, ib = np.triu_indices(table.tau, k=1)
    total = 0.0
    for i in range(table.n_frames):
        pixels, _ = _frame_projection(table, params, i)
        d_proj = np.linalg.norm(pixels[ia] - pixels[ib], axis=1)
        d_track = np.linalg.norm(table.p_pos[i][ia] - table.p_pos[i][ib], axis=1)
        r = d_proj - d_track
        total += float(np.mean(r * r))
    return total


def loss_depth(table: StructuralPointTable, params: CalibParams) -> float:
    """ReLU(-view depth) summed over every projected structural point."""
    _require_complete(table)
    total = 0.0
    for i in range(table.n_frames):
        _, depth = _frame_projection(table, params, i)
        total += float(np.sum(np.maximum(-depth, 0.0)))
    return total


def total_loss(table: StructuralPointTable, params: CalibParams) -> float:
    return (loss_projection(table, params)
            + loss_distance(table, params)
            + loss_depth(table, params))


class _Workspace:
    """Table quantities and work buffers precomputed once per optimization run.

    The pairwise stage dominates the cost.  With numba present it runs as a
    fused compiled loop that needs only the tracked coordinates; otherwise a
    vectorized fallback materializes per-pair buffers once and scatters back
    to per-point pixel gradients with segment sums over pair lists presorted
    by each endpoint.
    """

    def __init__(self, table: StructuralPointTable, max_chunk_pairs: int = 1_500_000):
        _require_complete(table)
        if table.tau < 2:
            raise InvalidParameterError("distance loss needs tau >= 2")
        self.idx = table.p_index
        self.tracked = np.ascontiguousarray(table.p_pos)
        n, tau = self.idx.shape
        self.n, self.tau = n, tau
        self.n_pairs = tau * (tau - 1) // 2
        self.tx = np.ascontiguousarray(self.tracked[..., 0])
        self.ty = np.ascontiguousarray(self.tracked[..., 1])
        self.gpx = np.empty((n, tau))
        self.gpy = np.empty((n, tau))
        if _pair_terms is not None:
            return
        self.ia, self.ib = np.triu_indices(tau, k=1)
        # ia is already sorted; segment k holds the pairs whose first point
        # is k (k = 0 .. tau-2).  For the second endpoint, sort once.
        self.ia_starts = np.searchsorted(self.ia, np.arange(tau - 1))
        self.ib_perm = np.argsort(self.ib, kind="stable")
        ib_sorted = self.ib[self.ib_perm]
        self.ib_starts = np.searchsorted(ib_sorted, np.arange(1, tau))
        # Frame chunk size bounding the (chunk, n_pairs) work buffers.
        self.chunk = max(1, min(n, max_chunk_pairs // self.n_pairs))
        shape = (self.chunk, self.n_pairs)
        self.buf_dx = np.empty(shape)
        self.buf_dy = np.empty(shape)
        self.buf_dist = np.empty(shape)
        self.buf_work = np.empty(shape)
        self.track_dist = np.empty((n, self.n_pairs))
        for f0 in range(0, n, self.chunk):
            f1 = min(f0 + self.chunk, n)
            seg = self.tracked[f0:f1]
            dx = np.take(seg[..., 0], self.ia, axis=1)
            dx -= np.take(seg[..., 0], self.ib, axis=1)
            dy = np.take(seg[..., 1], self.ia, axis=1)
            dy -= np.take(seg[..., 1], self.ib, axis=1)
            np.sqrt(dx * dx + dy * dy, out=self.track_dist[f0:f1])


def _loss_and_grad(ws: _Workspace, quats, trans, focal, sp3d, intr,
                   want_grad=True):
    """Fused evaluation of the total loss and, optionally, its gradient."""
    n, tau = ws.n, ws.tau
    u = normalize_quaternion(quats)
    rot = quat_to_rotation(u)
    pts = sp3d[ws.idx]                                     # (n, tau, 3)
    v = pts @ rot.transpose(0, 2, 1) + trans[:, None, :]
    w = v[..., 2]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inv_w = 1.0 / w
        f_over_w = focal * inv_w
        px = np.ascontiguousarray(intr.cx + f_over_w * v[..., 0])
        py = np.ascontiguousarray(intr.cy + f_over_w * v[..., 1])

        dx = px - ws.tracked[..., 0]
        dy = py - ws.tracked[..., 1]
        l_proj = (np.einsum("nt,nt->", dx, dx)
                  + np.einsum("nt,nt->", dy, dy)) / tau
        l_depth = float(np.sum(np.maximum(-w, 0.0)))

        gpx = (2.0 / tau) * dx if want_grad else None
        gpy = (2.0 / tau) * dy if want_grad else None

        if _pair_terms is not None:
            ws.gpx[:] = 0.0
            ws.gpy[:] = 0.0
            l_dist = _pair_terms(px, py, ws.tx, ws.ty, ws.gpx, ws.gpy) / ws.n_pairs
            if want_grad:
                gpx += (2.0 / ws.n_pairs) * ws.gpx
                gpy += (2.0 / ws.n_pairs) * ws.gpy
        else:
            l_dist = 0.0
            for f0 in range(0, n, ws.chunk):
                f1 = min(f0 + ws.chunk, n)
                c = f1 - f0
                pdx, pdy = ws.buf_dx[:c], ws.buf_dy[:c]
                dist, work = ws.buf_dist[:c], ws.buf_work[:c]
                np.take(px[f0:f1], ws.ia, axis=1, out=pdx)
                np.take(px[f0:f1], ws.ib, axis=1, out=work)
                pdx -= work
                np.take(py[f0:f1], ws.ia, axis=1, out=pdy)
                np.take(py[f0:f1], ws.ib, axis=1, out=work)
                pdy -= work
                np.multiply(pdx, pdx, out=dist)
                np.multiply(pdy, pdy, out=work)
                dist += work
                np.sqrt(dist, out=dist)
                # work := residual against the tracked pairwise distances
                np.subtract(dist, ws.track_dist[f0:f1], out=work)
                l_dist += np.einsum("cp,cp->", work, work) / ws.n_pairs
                if not want_grad:
                    continue
                # work := per-pair gradient coefficient.  Clamping the
                # denominator keeps coincident pairs finite; their numerator
                # (pdx, pdy) is exactly zero there, so the subgradient
                # contribution is zero.
                np.maximum(dist, _DIST_EPS, out=dist)
                np.divide(work, dist, out=work)
                work *= 2.0 / ws.n_pairs
                pdx *= work
                pdy *= work
                # Scatter pair terms to both endpoints via segment sums.
                gpx[f0:f1, :tau - 1] += np.add.reduceat(pdx, ws.ia_starts, axis=1)
                gpy[f0:f1, :tau - 1] += np.add.reduceat(pdy, ws.ia_starts, axis=1)
                np.take(pdx, ws.ib_perm, axis=1, out=work)
                gpx[f0:f1, 1:] -= np.add.reduceat(work, ws.ib_starts, axis=1)
                np.take(pdy, ws.ib_perm, axis=1, out=work)
                gpy[f0:f1, 1:] -= np.add.reduceat(work, ws.ib_starts, axis=1)

        loss = float(l_proj + l_dist + l_depth)
        if not want_grad:
            return loss, None

        # Pixel gradients back to camera-space coordinates and the focal.
        s = v[..., 0] * gpx + v[..., 1] * gpy
        gvx = f_over_w * gpx
        gvy = f_over_w * gpy
        gvz = -focal * inv_w * inv_w * s - (w < 0.0).astype(np.float64)
        g_focal = float(np.sum(inv_w * s))
        gv = np.stack([gvx, gvy, gvz], axis=-1)            # (n, tau, 3)

    g_trans = np.sum(gv, axis=1)
    g_pts = gv @ rot                                       # R^T gv per sample
    h = sp3d.shape[0]
    g_sp3d = np.stack([
        np.bincount(ws.idx.ravel(), g_pts[..., k].ravel(), h) for k in range(3)
    ], axis=1)
    g_rot = gv.transpose(0, 2, 1) @ pts                    # dL/dR entries

    # Chain through R(u) for unit u = (w, x, y, z), then through u = q/|q|.
    uw, ux, uy, uz = u[:, 0], u[:, 1], u[:, 2], u[:, 3]
    g = g_rot
    gu = np.empty_like(u)
    gu[:, 0] = 2.0 * (-uz * g[:, 0, 1] + uy * g[:, 0, 2] + uz * g[:, 1, 0]
                      - ux * g[:, 1, 2] - uy * g[:, 2, 0] + ux * g[:, 2, 1])
    gu[:, 1] = 2.0 * (uy * g[:, 0, 1] + uz * g[:, 0, 2] + uy * g[:, 1, 0]
                      - 2.0 * ux * g[:, 1, 1] - uw * g[:, 1, 2]
                      + uz * g[:, 2, 0] + uw * g[:, 2, 1] - 2.0 * ux * g[:, 2, 2])
    gu[:, 2] = 2.0 * (-2.0 * uy * g[:, 0, 0] + ux * g[:, 0, 1] + uw * g[:, 0, 2]
                      + ux * g[:, 1, 0] + uz * g[:, 1, 2]
                      - uw * g[:, 2, 0] + uz * g[:, 2, 1] - 2.0 * uy * g[:, 2, 2])
    gu[:, 3] = 2.0 * (-2.0 * uz * g[:, 0, 0] - uw * g[:, 0, 1] + ux * g[:, 0, 2]
                      + uw * g[:, 1, 0] - 2.0 * uz * g[:, 1, 1] + uy * g[:, 1, 2]
                      + ux * g[:, 2, 0] + uy * g[:, 2, 1])
    qnorm = np.linalg.norm(quats, axis=1, keepdims=True)
    g_quats = (gu - u * np.sum(u * gu, axis=1, keepdims=True)) / qnorm

    return loss, CalibGradient(quats=g_quats, trans=g_trans,
                               focal=g_focal, sp3d=g_sp3d)


def grad_total_loss(table: StructuralPointTable, params: CalibParams) -> CalibGradient:
    """Analytic gradient of total_loss with respect to every parameter."""
    ws = _Workspace(table)
    _, grad = _loss_and_grad(ws, params.quats, params.trans,
                             params.intrinsics.focal, params.sp3d,
                             params.intrinsics)
    return grad


class _Adam:
    """Plain Adam over named parameter groups with constant learning rates."""

    def __init__(self, shapes: dict, lrs: dict, beta1, beta2, eps):
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}
        self.lrs = lrs
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, values: dict, grads: dict) -> dict:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        out = {}
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            out[k] = values[k] - self.lrs[k] * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


def calibrate(table: StructuralPointTable, init: CalibParams,
              cfg: OptimizerConfig | None = None):
    """Run Adam on the total loss from `init`.

    Returns (optimized CalibParams, loss trace).  The trace holds the loss
    before any update and after each completed iteration, so a full run has
    iterations + 1 entries.  With cfg.keep_best the returned parameters are
    those of the lowest trace entry rather than the last; the trace itself is
    unchanged.  A non-finite loss raises DivergenceError with the iteration
    at which it appeared.
    """
    if cfg is None:
        cfg = OptimizerConfig()
    if init.sp3d.shape[0] < table.h_total:
        raise InvalidParameterError(
            f"init has {init.sp3d.shape[0]} points, table needs {table.h_total}")
    if init.n_frames != table.n_frames:
        raise InvalidParameterError("init camera count != table frame count")
    ws = _Workspace(table)
    intr = init.intrinsics
    values = {
        "quats": normalize_quaternion(init.quats),
        "trans": init.trans.copy(),
        "focal": np.float64(intr.focal),
        "sp3d": init.sp3d.copy(),
    }
    lrs = {"quats": cfg.lr_quat, "trans": cfg.lr_trans,
           "focal": cfg.lr_focal, "sp3d": cfg.lr_points}
    adam = _Adam({k: np.shape(val) for k, val in values.items()}, lrs,
                 cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    trace = []
    best = None
    for it in range(cfg.iterations + 1):
        last = it == cfg.iterations
        loss, grad = _loss_and_grad(ws, values["quats"], values["trans"],
                                    float(values["focal"]), values["sp3d"],
                                    intr, want_grad=not last)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at iteration {it}",
                                  iteration=it)
        trace.append(loss)
        if cfg.keep_best and (best is None or loss < best[0]):
            best = (loss, {k: np.copy(v) for k, v in values.items()})
        if last or (cfg.stop_loss is not None and loss <= cfg.stop_loss):
            break
        grads = {"quats": grad.quats, "trans": grad.trans,
                 "focal": np.float64(grad.focal), "sp3d": grad.sp3d}
        values = adam.step(values, grads)
        norms = np.linalg.norm(values["quats"], axis=1, keepdims=True)
        if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
            raise DivergenceError(f"degenerate quaternion at iteration {it}",
                                  iteration=it)
        values["quats"] = values["quats"] / norms
        values["focal"] = np.maximum(values["focal"], 1e-6)

    if cfg.keep_best:
        values = best[1]
    final_intr = replace(intr, focal=float(values["focal"]))
    result = CalibParams(quats=values["quats"], trans=values["trans"],
                         intrinsics=final_intr, sp3d=values["sp3d"])
    return result, np.asarray(trace)


def mean_reprojection_error(table: StructuralPointTable, params: CalibParams) -> float:
    """Mean Euclidean pixel distance between projections and tracks."""
    _require_complete(table)
    total = 0.0
    for i in range(table.n_frames):
        pixels, _ = _frame_projection(table, params, i)
        total += float(np.mean(np.linalg.norm(pixels - table.p_pos[i], axis=1)))
    return total / table.n_frames


class SelfCalibrator(BaseEstimator):
    """Estimator wrapper around the joint camera/point optimization.

    fit(X) optimizes poses, focal length, and 3D points against a complete
    structural point table X.  The intrinsics guess defaults to focal = image
    width for the given image size.  predict(X) reprojects the fitted points
    into the fitted cameras frame by frame, and score(X) is the negative
    total loss, so "larger is better" as estimators expect.
    """

    def __init__(
        self,
        width: int = 640,
        height: int = 360,
        focal_init: float | None = None,
        lr_quat: float = 0.01,
        lr_trans: float = 0.01,
        lr_focal: float = 1.0,
        lr_points: float = 0.01,
        iterations: int = 1000,
        stop_loss: float | None = None,
        keep_best: bool = False,
        random_state: int = 0,
    ):
        self.width = width
        self.height = height
        self.focal_init = focal_init
        self.lr_quat = lr_quat
        self.lr_trans = lr_trans
        self.lr_focal = lr_focal
        self.lr_points = lr_points
        self.iterations = iterations
        self.stop_loss = stop_loss
        self.keep_best = keep_best
        self.random_state = random_state

    def _config(self) -> OptimizerConfig:
        return OptimizerConfig(
            lr_quat=self.lr_quat,
            lr_trans=self.lr_trans,
            lr_focal=self.lr_focal,
            lr_points=self.lr_points,
            iterations=self.iterations,
            stop_loss=self.stop_loss,
            keep_best=self.keep_best,
            seed=self.random_state,
        )

    def fit(self, X, y=None):
        if not isinstance(X, StructuralPointTable):
            raise InvalidParameterError("X must be a StructuralPointTable")
        guess = guess_intrinsics(self.width, self.height)
        if self.focal_init is not None:
            guess = replace(guess, focal=float(self.focal_init))
        init = init_cameras(X.n_frames, guess, seed=self.random_state,
                            n_points=X.h_total)
        params, trace = calibrate(X, init, self._config())
        self.params_ = params
        self.cameras_ = params.cameras()
        self.intrinsics_ = params.intrinsics
        self.points_ = params.sp3d
        self.loss_trace_ = trace
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError(
                "this SelfCalibrator instance is not fitted yet")

    def predict(self, X):
        """Per-frame reprojections of the fitted points: (N, tau, 2)."""
        self._check_fitted()
        if not isinstance(X, StructuralPointTable):
            raise InvalidParameterError("X must be a StructuralPointTable")
        out = np.empty_like(X.p_pos)
        for i in range(X.n_frames):
            out[i] = _frame_projection(X, self.params_, i)[0]
        return out

    def score(self, X, y=None) -> float:
        self._check_fitted()
        return -total_loss(X, self.params_)

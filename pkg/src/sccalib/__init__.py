"""Self-calibration of camera poses, shared focal length, and sparse structure
from monocular video with motion masks.

The pipeline runs in three stages: detect stable structural point candidates
on static image regions (imagefeat), maintain exactly tau tracked points per
frame through occlusions via generation bookkeeping (spe), then jointly
optimize camera poses, one shared focal length, and the 3D points against the
tracked table (calib).  Supporting modules cover the camera model (geometry),
frame/mask ingestion (dataset), point tracking interfaces (tracking), a small
Gaussian-splat forward model for visual checks (gsplat), trajectory and image
metrics (metrics), file formats (io), and a synthetic scene generator used by
the test oracles and the CLI (synth).
"""

from .calib import (
    CalibGradient,
    CalibParams,
    OptimizerConfig,
    SelfCalibrator,
    calibrate,
    grad_total_loss,
    guess_intrinsics,
    init_cameras,
    loss_depth,
    loss_distance,
    loss_projection,
    mean_reprojection_error,
    total_loss,
)
from .dataset import FramePacket, FrameSequence
from .exceptions import (
    AlignmentError,
    BehindCameraError,
    DivergenceError,
    InvalidParameterError,
    NumericalError,
    SeedingFailureError,
    TrackFileError,
)
from .geometry import CameraParams, Intrinsics, project_points
from .gsplat import Gaussian3D, GaussianCloud, render_preview
from .imagefeat import CandidatePool, build_candidate_pool, select_candidates
from .metrics import Sim3, Trajectory, TrajectoryReport, ate, evaluate_trajectory, psnr, rpe, ssim, umeyama_align
from .spe import (
    GenerationState,
    StructuralPointExtractor,
    StructuralPointTable,
    run_spe,
    update_credit,
    validate_table,
)
from .tracking import FileTracker, SyntheticScene, SyntheticTracker, TrackResult, load_tracks, save_tracks

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "BehindCameraError",
    "CalibGradient",
    "CalibParams",
    "CameraParams",
    "CandidatePool",
    "DivergenceError",
    "FileTracker",
    "FramePacket",
    "FrameSequence",
    "Gaussian3D",
    "GaussianCloud",
    "GenerationState",
    "Intrinsics",
    "InvalidParameterError",
    "NumericalError",
    "OptimizerConfig",
    "SeedingFailureError",
    "SelfCalibrator",
    "Sim3",
    "StructuralPointExtractor",
    "StructuralPointTable",
    "SyntheticScene",
    "SyntheticTracker",
    "TrackFileError",
    "TrackResult",
    "Trajectory",
    "TrajectoryReport",
    "ate",
    "build_candidate_pool",
    "calibrate",
    "evaluate_trajectory",
    "grad_total_loss",
    "guess_intrinsics",
    "init_cameras",
    "load_tracks",
    "loss_depth",
    "loss_distance",
    "loss_projection",
    "mean_reprojection_error",
    "project_points",
    "psnr",
    "render_preview",
    "rpe",
    "run_spe",
    "save_tracks",
    "select_candidates",
    "ssim",
    "total_loss",
    "umeyama_align",
    "update_credit",
    "validate_table",
]

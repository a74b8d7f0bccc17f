"""Pipeline command line: synth | extract | spe | calibrate | render-check | eval | report.

Each stage reads a shared TOML config, consumes only the outputs of earlier
stages (failing with a pointer at the missing stage rather than recomputing),
and appends a record with content hashes to manifest.json in the output
directory.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field, fields as dc_fields, replace

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import calib, io as sio, metrics, spe, synth
from .dataset import FrameSequence, load_image_rgb, save_image_rgb
from .exceptions import DivergenceError, InvalidParameterError
from .geometry import Intrinsics, project_points
from .gsplat import Gaussian3D, GaussianCloud, render_preview
from .imagefeat import CandidatePool, build_candidate_pool
from .tracking import FileTracker, SyntheticTracker


@dataclass
class PipelineConfig:
    dataset_dir: str
    output_dir: str
    tau: int = 100
    window: int = 9
    canny_low: float = 0.1
    canny_high: float = 0.2
    tracker: str = "synthetic"
    seed: int = 0
    deterministic: bool = False
    optimizer: calib.OptimizerConfig = field(
        default_factory=calib.OptimizerConfig)
    synth: synth.SynthConfig = field(default_factory=synth.SynthConfig)
    assoc_radius: float = 3.0
    noise_sigma: float = 0.0
    dropout: float = 0.0
    # Optional learning-rate schedule for the calibrate stage; each phase
    # scales the optimizer's four learning rates and caps its iterations.
    phases: list = field(default_factory=list)

    def __post_init__(self):
        if self.tau < 4:
            raise InvalidParameterError("tau must be at least 4")
        if self.tracker != "synthetic" and not self.tracker.startswith("file:"):
            raise InvalidParameterError(
                "tracker must be 'synthetic' or 'file:<path>'")


def _parse_phases(rows) -> list:
    phases = []
    for k, row in enumerate(rows):
        extra = set(row) - {"iterations", "scale", "stop_loss"}
        if extra:
            raise InvalidParameterError(
                f"phase {k}: unknown keys: {', '.join(sorted(extra))}")
        if "iterations" not in row:
            raise InvalidParameterError(f"phase {k}: missing 'iterations'")
        iterations = int(row["iterations"])
        if iterations < 1:
            raise InvalidParameterError(f"phase {k}: iterations must be >= 1")
        scale = float(row.get("scale", 1.0))
        if scale <= 0.0:
            raise InvalidParameterError(f"phase {k}: scale must be positive")
        stop = row.get("stop_loss")
        phases.append({"iterations": iterations, "scale": scale,
                       "stop_loss": None if stop is None else float(stop)})
    return phases


def load_config(path, seed=None, deterministic=False) -> PipelineConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    for key in ("dataset_dir", "output_dir"):
        if key not in raw:
            raise InvalidParameterError(f"config is missing '{key}'")

    opt_raw = raw.pop("optimizer", {})
    synth_raw = raw.pop("synth", {})
    tracker_raw = raw.pop("tracker_opts", {})
    phases_raw = raw.pop("phases", [])
    known = {f.name for f in dc_fields(PipelineConfig)}
    unknown = set(raw) - known
    if unknown:
        raise InvalidParameterError(
            f"unknown config keys: {', '.join(sorted(unknown))}")

    cfg = PipelineConfig(
        dataset_dir=resolve(raw["dataset_dir"]),
        output_dir=resolve(raw["output_dir"]),
        tau=int(raw.get("tau", 100)),
        window=int(raw.get("window", 9)),
        canny_low=float(raw.get("canny_low", 0.1)),
        canny_high=float(raw.get("canny_high", 0.2)),
        tracker=str(raw.get("tracker", "synthetic")),
        seed=int(raw.get("seed", 0)),
        optimizer=calib.OptimizerConfig(**opt_raw),
        synth=synth.SynthConfig(**synth_raw),
        assoc_radius=float(tracker_raw.get("assoc_radius", 3.0)),
        noise_sigma=float(tracker_raw.get("noise_sigma", 0.0)),
        dropout=float(tracker_raw.get("dropout", 0.0)),
        phases=_parse_phases(phases_raw),
    )
    if seed is not None:
        cfg.seed = int(seed)
    cfg.deterministic = bool(deterministic)
    return cfg


class RunManifest:
    """Append-only record of stage runs with output hashes and timings."""

    def __init__(self, output_dir):
        self.path = os.path.join(output_dir, "manifest.json")
        if os.path.exists(self.path):
            with open(self.path) as fh:
                self.data = json.load(fh)
        else:
            self.data = {"stages": []}

    def record(self, stage: str, duration: float, root, outputs, **extra):
        hashes = {}
        for rel in sorted(outputs):
            with open(os.path.join(root, rel), "rb") as fh:
                hashes[rel] = hashlib.sha256(fh.read()).hexdigest()
        entry = {"stage": stage, "duration_s": round(duration, 3),
                 "outputs": hashes}
        entry.update(extra)
        self.data["stages"].append(entry)
        with open(self.path, "w") as fh:
            json.dump(self.data, fh, indent=1, sort_keys=True)


def _require(path, stage_hint):
    if not os.path.exists(path):
        raise click.ClickException(
            f"missing {path}; run the {stage_hint} stage first")
    return path


def _load_sequence(cfg) -> FrameSequence:
    frames_dir = os.path.join(cfg.dataset_dir, "frames")
    masks_dir = os.path.join(cfg.dataset_dir, "masks")
    for d in (frames_dir, masks_dir):
        if not os.path.isdir(d):
            raise click.ClickException(
                f"missing {d}; generate or provide a dataset first")
    return FrameSequence.from_directory(cfg.dataset_dir)


def _make_tracker(cfg):
    if cfg.tracker == "synthetic":
        sj = _require(os.path.join(cfg.dataset_dir, "synth.json"), "synth")
        with open(sj) as fh:
            scene = synth.scene_from_json(json.load(fh))
        scene.noise_sigma = cfg.noise_sigma
        scene.dropout = cfg.dropout
        return SyntheticTracker(scene, seed=cfg.seed,
                                assoc_radius=cfg.assoc_radius)
    root = cfg.tracker[len("file:"):]
    if not os.path.isabs(root):
        root = os.path.join(cfg.dataset_dir, root)
    return FileTracker(root, match_radius=cfg.assoc_radius)


def _pool_path(cfg, i):
    return os.path.join(cfg.output_dir, "pools", f"{i:05d}.json")


@click.group()
def main():
    """Self-calibration pipeline for monocular video."""


def _common(f):
    f = click.option("--config", "config_path", required=True,
                     type=click.Path(exists=True, dir_okay=False),
                     help="TOML pipeline configuration.")(f)
    f = click.option("--seed", type=int, default=None,
                     help="Override the config seed.")(f)
    f = click.option("--deterministic", is_flag=True, default=False,
                     help="Record strict-determinism intent in the manifest.")(f)
    return f


@main.command("synth")
@_common
def cmd_synth(config_path, seed, deterministic):
    """Generate the synthetic dataset (frames, masks, ground truth)."""
    cfg = load_config(config_path, seed, deterministic)
    t0 = time.time()
    scene = synth.make_scene(cfg.synth)
    os.makedirs(cfg.dataset_dir, exist_ok=True)
    os.makedirs(cfg.output_dir, exist_ok=True)
    written = synth.write_dataset(scene, cfg.dataset_dir)
    RunManifest(cfg.output_dir).record(
        "synth", time.time() - t0, cfg.dataset_dir, written,
        seed=cfg.seed, deterministic=cfg.deterministic,
        frames=cfg.synth.n_frames)
    click.echo(f"wrote {len(written)} files to {cfg.dataset_dir}")


@main.command("extract")
@_common
def cmd_extract(config_path, seed, deterministic):
    """Detect candidate pools on every frame and cache them to disk."""
    cfg = load_config(config_path, seed, deterministic)
    t0 = time.time()
    seq = _load_sequence(cfg)
    os.makedirs(os.path.join(cfg.output_dir, "pools"), exist_ok=True)
    rels = []
    for i in range(len(seq)):
        pool = build_candidate_pool(seq.packet(i), window=cfg.window,
                                    canny_low=cfg.canny_low,
                                    canny_high=cfg.canny_high)
        payload = {
            "frame": i,
            "points": [[int(r), int(c)] for r, c in pool.points],
            "scores": [float(s) for s in pool.scores],
        }
        rel = os.path.join("pools", f"{i:05d}.json")
        with open(os.path.join(cfg.output_dir, rel), "w") as fh:
            fh.write(json.dumps(payload, sort_keys=True))
        rels.append(rel)
    RunManifest(cfg.output_dir).record(
        "extract", time.time() - t0, cfg.output_dir, rels,
        seed=cfg.seed, deterministic=cfg.deterministic)
    click.echo(f"wrote {len(rels)} candidate pools")


@main.command("spe")
@_common
def cmd_spe(config_path, seed, deterministic):
    """Build the structural-point table from cached pools and the tracker."""
    cfg = load_config(config_path, seed, deterministic)
    t0 = time.time()
    seq = _load_sequence(cfg)
    _require(_pool_path(cfg, 0), "extract")

    def pool_provider(i):
        path = _require(_pool_path(cfg, i), "extract")
        with open(path) as fh:
            payload = json.load(fh)
        return CandidatePool(
            frame_index=i,
            points=np.asarray(payload["points"], dtype=np.int64).reshape(-1, 2),
            scores=np.asarray(payload["scores"], dtype=np.float64),
        )

    tracker = _make_tracker(cfg)
    table = spe.run_spe(seq, tracker, tau=cfg.tau, window=cfg.window,
                        canny_low=cfg.canny_low, canny_high=cfg.canny_high,
                        seed=cfg.seed, pool_provider=pool_provider)
    problems = spe.validate_table(table, seq)
    table.save(os.path.join(cfg.output_dir, "table.json"))
    RunManifest(cfg.output_dir).record(
        "spe", time.time() - t0, cfg.output_dir, ["table.json"],
        seed=cfg.seed, deterministic=cfg.deterministic,
        h_total=table.h_total, violations=problems)
    click.echo(f"table complete: h_total={table.h_total}, "
               f"violations={len(problems)}")


def _run_calibration(cfg, table, init):
    """One optimizer run, or a chained schedule when [[phases]] is set.

    Each phase scales the four learning rates, keeps its best iterate, and
    hands it to the next phase.  Traces concatenate with later phases'
    leading entry dropped, so len(trace) - 1 stays the iteration count; a
    phase whose stop_loss is already met contributes nothing.
    """
    if not cfg.phases:
        return calib.calibrate(table, init, cfg.optimizer)
    base = cfg.optimizer
    params = init
    parts = []
    for ph in cfg.phases:
        oc = replace(base,
                     lr_quat=base.lr_quat * ph["scale"],
                     lr_trans=base.lr_trans * ph["scale"],
                     lr_focal=base.lr_focal * ph["scale"],
                     lr_points=base.lr_points * ph["scale"],
                     iterations=ph["iterations"],
                     stop_loss=ph["stop_loss"],
                     keep_best=True)
        params, tr = calib.calibrate(table, params, oc)
        parts.append(tr if not parts else tr[1:])
    return params, np.concatenate(parts)


@main.command("calibrate")
@_common
def cmd_calibrate(config_path, seed, deterministic):
    """Optimize cameras, focal, and 3D points against the table."""
    cfg = load_config(config_path, seed, deterministic)
    t0 = time.time()
    table_path = _require(os.path.join(cfg.output_dir, "table.json"), "spe")
    table = spe.StructuralPointTable.load(table_path)
    seq = _load_sequence(cfg)
    guess = calib.guess_intrinsics(seq.width, seq.height)
    init = calib.init_cameras(len(seq), guess, seed=cfg.seed,
                              n_points=table.h_total)
    try:
        params, trace = _run_calibration(cfg, table, init)
    except DivergenceError as exc:
        click.echo(f"calibration diverged at iteration {exc.iteration}",
                   err=True)
        sys.exit(2)
    sio.write_cameras_json(os.path.join(cfg.output_dir, "cameras.json"),
                           params.cameras(), params.intrinsics)
    sio.write_ply(os.path.join(cfg.output_dir, "points.ply"), params.sp3d)
    sio.write_loss_trace(os.path.join(cfg.output_dir, "loss_trace.csv"), trace)
    reproj = calib.mean_reprojection_error(table, params)
    RunManifest(cfg.output_dir).record(
        "calibrate", time.time() - t0, cfg.output_dir,
        ["cameras.json", "points.ply", "loss_trace.csv"],
        seed=cfg.seed, deterministic=cfg.deterministic,
        final_loss=float(trace[-1]), iterations=len(trace) - 1,
        mean_reprojection_px=reproj, focal=params.intrinsics.focal)
    click.echo(f"final loss {trace[-1]:.6g}, focal {params.intrinsics.focal:.2f}, "
               f"mean reprojection {reproj:.3f} px")


def _load_calibration(cfg):
    cam_path = _require(os.path.join(cfg.output_dir, "cameras.json"),
                        "calibrate")
    pts_path = _require(os.path.join(cfg.output_dir, "points.ply"),
                        "calibrate")
    cams, intr = sio.read_cameras_json(cam_path)
    pts = sio.read_ply(pts_path)
    return cams, intr, pts


@main.command("render-check")
@_common
def cmd_render_check(config_path, seed, deterministic):
    """Render the calibrated points as tiny splats from the optimized cameras."""
    cfg = load_config(config_path, seed, deterministic)
    t0 = time.time()
    cams, intr, pts = _load_calibration(cfg)
    os.makedirs(os.path.join(cfg.output_dir, "renders"), exist_ok=True)
    # Splat size relative to the recovered scene so previews stay visible
    # regardless of the gauge the optimizer settled in.
    extent = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    s = max(extent, 1e-6) * 0.004
    cloud = GaussianCloud([
        Gaussian3D(mu=p, quat=(1.0, 0.0, 0.0, 0.0), scale=(s, s, s),
                   opacity=1.0, color=(1.0, 1.0, 1.0))
        for p in pts
    ])
    rels = []
    for cam in cams:
        img = render_preview(cloud, cam, intr)
        rel = os.path.join("renders", f"{cam.frame_index:05d}.png")
        save_image_rgb(os.path.join(cfg.output_dir, rel), img)
        rels.append(rel)
    RunManifest(cfg.output_dir).record(
        "render-check", time.time() - t0, cfg.output_dir, rels,
        seed=cfg.seed, deterministic=cfg.deterministic)
    click.echo(f"wrote {len(rels)} preview renders")


def _compute_report(cfg) -> dict:
    cams, intr, pts = _load_calibration(cfg)
    report = {}

    table_path = os.path.join(cfg.output_dir, "table.json")
    if os.path.exists(table_path):
        table = spe.StructuralPointTable.load(table_path)
        params = calib.CalibParams.from_cameras(cams, intr, pts)
        per_frame = []
        for i in range(table.n_frames):
            pix, _ = project_points(pts, table.p_index[i], params.camera(i),
                                    intr)
            err = np.linalg.norm(pix - table.p_pos[i], axis=1)
            per_frame.append(float(err.mean()))
        report["reprojection"] = {
            "mean_px": float(np.mean(per_frame)),
            "per_frame_px": per_frame,
        }

    synth_path = os.path.join(cfg.dataset_dir, "synth.json")
    if os.path.exists(synth_path):
        with open(synth_path) as fh:
            gt = synth.scene_from_json(json.load(fh))
        est_traj = metrics.Trajectory.from_cameras(cams)
        gt_traj = metrics.Trajectory.from_cameras(gt.gt_cameras)
        rep = metrics.evaluate_trajectory(est_traj, gt_traj)
        report["trajectory"] = {
            "ate": rep.ate,
            "rpe_trans": rep.rpe_trans,
            "rpe_rot_deg": rep.rpe_rot,
        }
        report["sim3"] = {
            "scale": rep.sim3.scale,
            "quat": [float(v) for v in rep.sim3.quat],
            "trans": [float(v) for v in rep.sim3.trans],
        }
        report["focal"] = {
            "estimated": float(intr.focal),
            "ground_truth": float(gt.gt_intrinsics.focal),
        }

    renders_dir = os.path.join(cfg.output_dir, "renders")
    frames_dir = os.path.join(cfg.dataset_dir, "frames")
    if os.path.isdir(renders_dir) and os.path.isdir(frames_dir):
        ps, ss = [], []
        for name in sorted(os.listdir(renders_dir)):
            frame_file = os.path.join(frames_dir, name)
            if not name.endswith(".png") or not os.path.exists(frame_file):
                continue
            a = load_image_rgb(frame_file)
            b = load_image_rgb(os.path.join(renders_dir, name))
            ps.append(metrics.psnr(a, b))
            ss.append(metrics.ssim(a, b))
        if ps:
            report["image"] = {"psnr": float(np.mean(ps)),
                               "ssim": float(np.mean(ss))}
    return report


@main.command("eval")
@_common
def cmd_eval(config_path, seed, deterministic):
    """Score the calibration and write report.json."""
    cfg = load_config(config_path, seed, deterministic)
    t0 = time.time()
    report = _compute_report(cfg)
    sio.write_report_json(os.path.join(cfg.output_dir, "report.json"), report)
    RunManifest(cfg.output_dir).record(
        "eval", time.time() - t0, cfg.output_dir, ["report.json"],
        seed=cfg.seed, deterministic=cfg.deterministic)
    click.echo(json.dumps(report.get("trajectory",
                                     report.get("reprojection", {}))))


def _draw_overlay(rgb, tracked, projected):
    """Green squares at tracked positions, red crosses at projections."""
    img = rgb.copy()
    h, w = img.shape[:2]

    def paint(x, y, color, arm, square):
        xi, yi = int(round(x)), int(round(y))
        if not (0 <= xi < w and 0 <= yi < h):
            return
        if square:
            img[max(yi - 1, 0):yi + 2, max(xi - 1, 0):xi + 2] = color
        else:
            img[yi, max(xi - arm, 0):xi + arm + 1] = color
            img[max(yi - arm, 0):yi + arm + 1, xi] = color

    for x, y in tracked:
        paint(x, y, (0.0, 1.0, 0.0), 0, True)
    for x, y in projected:
        paint(x, y, (1.0, 0.0, 0.0), 2, False)
    return img


@main.command("report")
@_common
def cmd_report(config_path, seed, deterministic):
    """Write report.json, the trajectory SVG, and overlay PNGs."""
    cfg = load_config(config_path, seed, deterministic)
    t0 = time.time()
    cams, intr, pts = _load_calibration(cfg)
    report = _compute_report(cfg)
    rels = ["report.json", "trajectory.svg"]
    sio.write_report_json(os.path.join(cfg.output_dir, "report.json"), report)

    gt_cams = None
    synth_path = os.path.join(cfg.dataset_dir, "synth.json")
    if os.path.exists(synth_path):
        with open(synth_path) as fh:
            gt_cams = synth.scene_from_json(json.load(fh)).gt_cameras
    sio.write_trajectory_svg(os.path.join(cfg.output_dir, "trajectory.svg"),
                             cams, gt_cams)

    table_path = os.path.join(cfg.output_dir, "table.json")
    if os.path.exists(table_path):
        table = spe.StructuralPointTable.load(table_path)
        seq = _load_sequence(cfg)
        params = calib.CalibParams.from_cameras(cams, intr, pts)
        os.makedirs(os.path.join(cfg.output_dir, "overlays"), exist_ok=True)
        n = table.n_frames
        picks = sorted(set(np.linspace(0, n - 1, min(n, 24)).astype(int)))
        for i in picks:
            pix, _ = project_points(pts, table.p_index[i], params.camera(i),
                                    intr)
            img = _draw_overlay(seq.rgb(i), table.p_pos[i], pix)
            rel = os.path.join("overlays", f"{i:05d}.png")
            save_image_rgb(os.path.join(cfg.output_dir, rel), img)
            rels.append(rel)

    RunManifest(cfg.output_dir).record(
        "report", time.time() - t0, cfg.output_dir, rels,
        seed=cfg.seed, deterministic=cfg.deterministic)
    click.echo(f"report written to {cfg.output_dir}")


if __name__ == "__main__":
    main()

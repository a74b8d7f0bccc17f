"""Tests for the tracker contract: result invariants, the synthetic oracle,
and the JSON track-file adapter."""

import json
import os

import numpy as np
import pytest

from sccalib.exceptions import InvalidParameterError, TrackFileError
from sccalib.geometry import CameraParams, Intrinsics, project_points
from sccalib.tracking import (
    FileTracker,
    SyntheticScene,
    SyntheticTracker,
    TrackResult,
    load_tracks,
    save_tracks,
    synthetic_track,
)

INTR = Intrinsics(focal=100.0, width=200, height=100)


def cam(k, tx=0.0, ty=0.0, tz=0.0):
    return CameraParams(quat=np.array([1.0, 0.0, 0.0, 0.0]),
                        trans=np.array([tx, ty, tz]), frame_index=k)


def grid_points():
    """15 points on a plane 4 units ahead; projections 15 px / 10 px apart."""
    xs = [-1.2, -0.6, 0.0, 0.6, 1.2]
    ys = [-0.4, 0.0, 0.4]
    return np.array([[x, y, 4.0] for x in xs for y in ys])


def static_scene(n_frames, **kw):
    return SyntheticScene(gt_points=grid_points(),
                          gt_cameras=[cam(k) for k in range(n_frames)],
                          gt_intrinsics=INTR, **kw)


def exact_queries(scene, indices, frame=0):
    pix, _ = project_points(scene.gt_points, indices,
                            scene.gt_cameras[frame], scene.gt_intrinsics)
    return pix


# ---------------------------------------------------------------- TrackResult


def test_track_result_shape_validation():
    with pytest.raises(InvalidParameterError, match=r"\(F, B, 2\)"):
        TrackResult(positions=np.zeros((3, 4)), visibility=np.ones((3, 4)))
    with pytest.raises(InvalidParameterError, match=r"\(F, B\)"):
        TrackResult(positions=np.zeros((3, 4, 2)), visibility=np.ones((3, 5)))


def test_track_result_seed_row_must_be_visible():
    vis = np.ones((2, 3), dtype=np.uint8)
    vis[0, 1] = 0
    with pytest.raises(InvalidParameterError, match="seed-frame visibility"):
        TrackResult(positions=np.zeros((2, 3, 2)), visibility=vis)


def test_track_result_visible_positions_must_be_finite():
    pos = np.zeros((2, 2, 2))
    pos[1, 0] = np.nan
    with pytest.raises(InvalidParameterError, match="finite"):
        TrackResult(positions=pos, visibility=np.ones((2, 2)))
    # the same NaN is fine once that entry is marked invisible
    vis = np.ones((2, 2), dtype=np.uint8)
    vis[1, 0] = 0
    r = TrackResult(positions=pos, visibility=vis)
    assert r.n_frames == 2 and r.n_points == 2


def test_track_result_coerces_dtypes():
    r = TrackResult(positions=[[[1, 2], [3, 4]]], visibility=[[1, 1]],
                    seed_frame=5)
    assert r.positions.dtype == np.float64
    assert r.visibility.dtype == np.uint8
    assert r.seed_frame == 5


# ------------------------------------------------------------ synthetic_track


def test_seed_frame_at_end_returns_queries_only():
    scene = static_scene(3)
    q = exact_queries(scene, [0, 7, 14], frame=2)
    r = synthetic_track(scene, 2, q)
    assert r.positions.shape == (1, 3, 2)
    assert np.array_equal(r.positions[0], q)
    assert r.visibility.all()
    assert r.seed_frame == 2


def test_zero_noise_tracks_equal_reprojection():
    cams = [cam(k, tx=0.03 * k, ty=-0.01 * k, tz=0.02 * k) for k in range(6)]
    scene = SyntheticScene(gt_points=grid_points(), gt_cameras=cams,
                           gt_intrinsics=INTR)
    idx = np.array([0, 7, 14])
    q = exact_queries(scene, idx)
    r = synthetic_track(scene, 0, q)
    assert r.visibility.all()
    for f in range(6):
        pix, _ = project_points(scene.gt_points, idx, cams[f], INTR)
        assert np.allclose(r.positions[f], pix, atol=1e-9)


def test_hand_computed_track_row():
    # point (0.4, 0.1, 4) from the identity camera: 100*0.4/4 + 100 = 110,
    # 100*0.1/4 + 50 = 52.5.  Frame 1 shifts the camera by tx = -0.5, so
    # x_cam = -0.1 and the pixel moves to 100*(-0.1)/4 + 100 = 97.5.
    scene = SyntheticScene(gt_points=[[0.4, 0.1, 4.0]],
                           gt_cameras=[cam(0), cam(1, tx=-0.5)],
                           gt_intrinsics=INTR)
    r = synthetic_track(scene, 0, [[110.0, 52.5]])
    assert np.allclose(r.positions[0, 0], [110.0, 52.5])
    assert np.allclose(r.positions[1, 0], [97.5, 52.5])


def test_seed_row_repeats_queries_despite_noise():
    scene = static_scene(4, noise_sigma=2.0)
    q = exact_queries(scene, [2, 9]) + np.array([[0.3, -0.2], [-0.1, 0.4]])
    r = synthetic_track(scene, 0, q, seed=1)
    assert np.array_equal(r.positions[0], q)
    assert r.visibility[0].all()
    # later rows carry noise, so they differ from the exact projections
    assert not np.allclose(r.positions[1], exact_queries(scene, [2, 9]))


def test_visibility_drops_while_behind_camera():
    scene = SyntheticScene(gt_points=[[0.0, 0.0, 4.0]],
                           gt_cameras=[cam(0), cam(1, tz=-8.0), cam(2), cam(3)],
                           gt_intrinsics=INTR)
    r = synthetic_track(scene, 0, [[100.0, 50.0]])
    assert r.visibility[:, 0].tolist() == [1, 0, 1, 1]
    assert np.allclose(r.positions[2, 0], [100.0, 50.0])
    assert np.allclose(r.positions[3, 0], [100.0, 50.0])


def test_visibility_uses_rounded_pixel_bounds():
    # px = 100*3.97/4 + 100 = 199.25 rounds to 199 (in bounds for width 200);
    # px = 100*3.99/4 + 100 = 199.75 rounds to 200 (out of bounds).
    scene = SyntheticScene(gt_points=[[3.97, 0.0, 4.0], [3.99, 0.0, 4.0]],
                           gt_cameras=[cam(0), cam(1)],
                           gt_intrinsics=INTR)
    r = synthetic_track(scene, 0, [[199.25, 50.0], [199.75, 50.0]])
    assert r.visibility[1].tolist() == [1, 0]


def test_queries_associate_to_nearest_point():
    scene = static_scene(2)
    # (115.3, 50.2) is 0.36 px from the projection at (115, 50) and 15.3 px
    # from the next column, so it snaps to the former.
    r = synthetic_track(scene, 0, [[115.3, 50.2]])
    assert np.array_equal(r.positions[0, 0], [115.3, 50.2])
    assert np.allclose(r.positions[1, 0], [115.0, 50.0], atol=1e-9)


def test_query_outside_association_radius_raises():
    scene = static_scene(2)
    with pytest.raises(InvalidParameterError,
                       match="query 0 .* no ground-truth projection"):
        synthetic_track(scene, 0, [[117.0, 50.0]])
    # a wider radius accepts the same query
    r = synthetic_track(scene, 0, [[117.0, 50.0]], assoc_radius=2.5)
    assert np.allclose(r.positions[1, 0], [115.0, 50.0])


def test_no_visible_point_at_seed_frame_raises():
    scene = SyntheticScene(gt_points=[[0.0, 0.0, -4.0]],
                           gt_cameras=[cam(0)], gt_intrinsics=INTR)
    with pytest.raises(InvalidParameterError, match="no ground-truth point"):
        synthetic_track(scene, 0, [[100.0, 50.0]])


def test_bad_seed_frame_and_seed_raise():
    scene = static_scene(3)
    q = [[100.0, 50.0]]
    with pytest.raises(InvalidParameterError, match="out of range"):
        synthetic_track(scene, 3, q)
    with pytest.raises(InvalidParameterError, match="out of range"):
        synthetic_track(scene, -1, q)
    with pytest.raises(InvalidParameterError, match="seed"):
        synthetic_track(scene, 0, q, seed=-1)


def test_scene_parameter_validation():
    with pytest.raises(InvalidParameterError, match="noise_sigma"):
        SyntheticScene(gt_points=[[0, 0, 4]], gt_cameras=[cam(0)],
                       gt_intrinsics=INTR, noise_sigma=-0.1)
    with pytest.raises(InvalidParameterError, match="dropout"):
        SyntheticScene(gt_points=[[0, 0, 4]], gt_cameras=[cam(0)],
                       gt_intrinsics=INTR, dropout=1.0)


def test_noise_mean_absolute_deviation():
    """With unit sigma the mean |residual| is sqrt(2/pi), about 0.7979."""
    scene = SyntheticScene(gt_points=[[0.0, 0.0, 4.0]],
                           gt_cameras=[cam(0), cam(1)],
                           gt_intrinsics=INTR, noise_sigma=1.0)
    q = np.tile([[100.0, 50.0]], (10000, 1))
    r = synthetic_track(scene, 0, q, seed=3)
    res = r.positions[1] - np.array([100.0, 50.0])
    mad = np.abs(res).mean()
    expected = np.sqrt(2.0 / np.pi)
    assert abs(mad - expected) / expected < 0.05


def test_tracks_are_deterministic_and_seed_sensitive():
    scene = static_scene(4, noise_sigma=0.7)
    q = exact_queries(scene, [0, 5, 10])
    a = synthetic_track(scene, 0, q, seed=7)
    b = synthetic_track(scene, 0, q, seed=7)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.visibility, b.visibility)
    c = synthetic_track(scene, 0, q, seed=8)
    assert not np.array_equal(a.positions[1:], c.positions[1:])


def test_noise_is_drawn_before_dropout():
    """Positions match across dropout settings; only visibility changes."""
    clean = SyntheticScene(gt_points=[[0.0, 0.0, 4.0]],
                           gt_cameras=[cam(0), cam(1)],
                           gt_intrinsics=INTR, noise_sigma=0.5)
    lossy = SyntheticScene(gt_points=[[0.0, 0.0, 4.0]],
                           gt_cameras=[cam(0), cam(1)],
                           gt_intrinsics=INTR, noise_sigma=0.5, dropout=0.5)
    q = np.tile([[100.0, 50.0]], (40, 1))
    a = synthetic_track(clean, 0, q, seed=7)
    b = synthetic_track(lossy, 0, q, seed=7)
    assert np.array_equal(a.positions, b.positions)
    assert b.visibility[0].all()
    assert b.visibility[1].sum() < a.visibility[1].sum()


def test_dropout_rate_is_respected():
    scene = SyntheticScene(gt_points=[[0.0, 0.0, 4.0]],
                           gt_cameras=[cam(0), cam(1)],
                           gt_intrinsics=INTR, dropout=0.3)
    q = np.tile([[100.0, 50.0]], (10000, 1))
    r = synthetic_track(scene, 0, q, seed=5)
    dropped = 1.0 - r.visibility[1].mean()
    assert abs(dropped - 0.3) < 0.02
    assert r.visibility[0].all()


def test_synthetic_tracker_adapter():
    scene = static_scene(3, noise_sigma=0.2)
    q = exact_queries(scene, [1, 6])
    tracker = SyntheticTracker(scene, seed=3)
    got = tracker.track(None, 0, q)
    want = synthetic_track(scene, 0, q, seed=3)
    assert np.array_equal(got.positions, want.positions)
    assert np.array_equal(got.visibility, want.visibility)
    assert np.array_equal(tracker.track([0, 1, 2], 0, q).positions,
                          want.positions)
    with pytest.raises(InvalidParameterError, match="sequence has 5 frames"):
        tracker.track([0, 1, 2, 3, 4], 0, q)


# ------------------------------------------------------------ track file I/O


def test_save_load_round_trip(tmp_path):
    scene = static_scene(6, noise_sigma=0.4, dropout=0.2)
    q = exact_queries(scene, [0, 4, 8, 12], frame=1)
    r = synthetic_track(scene, 1, q, seed=9)
    path = tmp_path / "tracks.json"
    save_tracks(path, r)
    back = load_tracks(path)
    assert np.array_equal(back.positions, r.positions)
    assert np.array_equal(back.visibility, r.visibility)
    assert back.seed_frame == 1


def tiny_payload():
    return {
        "seed_frame": 0,
        "num_frames": 2,
        "num_points": 2,
        "tracks": [
            [[10.0, 5.0, 1], [20.0, 6.0, 1]],
            [[10.5, 5.5, 1], [0.0, 0.0, 0]],
        ],
    }


def write_payload(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh)


def test_load_tracks_accepts_valid_payload(tmp_path):
    path = tmp_path / "t.json"
    write_payload(path, tiny_payload())
    r = load_tracks(path)
    assert r.positions.shape == (2, 2, 2)
    assert r.positions[1, 0].tolist() == [10.5, 5.5]
    assert r.visibility[1].tolist() == [1, 0]


def test_load_tracks_missing_file(tmp_path):
    with pytest.raises(TrackFileError, match="cannot read"):
        load_tracks(tmp_path / "absent.json")


def test_load_tracks_malformed_json(tmp_path):
    path = tmp_path / "t.json"
    path.write_text("{nope")
    with pytest.raises(TrackFileError, match="malformed JSON .* line 1"):
        load_tracks(path)


def test_load_tracks_missing_key(tmp_path):
    payload = tiny_payload()
    del payload["tracks"]
    path = tmp_path / "t.json"
    write_payload(path, payload)
    with pytest.raises(TrackFileError, match="missing key 'tracks'"):
        load_tracks(path)


def test_load_tracks_frame_count_mismatch(tmp_path):
    payload = tiny_payload()
    payload["num_frames"] = 3
    path = tmp_path / "t.json"
    write_payload(path, payload)
    with pytest.raises(TrackFileError, match="num_frames is 3 but tracks has 2"):
        load_tracks(path)


def test_load_tracks_wrong_row_width(tmp_path):
    payload = tiny_payload()
    payload["tracks"][1] = [[10.5, 5.5, 1]]
    path = tmp_path / "t.json"
    write_payload(path, payload)
    with pytest.raises(TrackFileError,
                       match="frame row 1 has 1 points, expected 2"):
        load_tracks(path)


def test_load_tracks_bad_entry_shape(tmp_path):
    payload = tiny_payload()
    payload["tracks"][1][0] = [10.5, 5.5]
    path = tmp_path / "t.json"
    write_payload(path, payload)
    with pytest.raises(TrackFileError, match=r"expected \[x, y, v\]"):
        load_tracks(path)


def test_load_tracks_bad_visibility_token(tmp_path):
    payload = tiny_payload()
    payload["tracks"][1][1][2] = 2
    path = tmp_path / "t.json"
    write_payload(path, payload)
    with pytest.raises(TrackFileError, match="visibility 2 is not 0 or 1"):
        load_tracks(path)


def test_load_tracks_visible_nonfinite_position(tmp_path):
    payload = tiny_payload()
    payload["tracks"][1][0] = [float("nan"), 5.5, 1]
    path = tmp_path / "t.json"
    write_payload(path, payload)
    with pytest.raises(TrackFileError, match="not finite"):
        load_tracks(path)


def test_load_tracks_rejects_invisible_seed_row(tmp_path):
    payload = tiny_payload()
    payload["tracks"][0][1][2] = 0
    path = tmp_path / "t.json"
    write_payload(path, payload)
    with pytest.raises(TrackFileError, match="seed-frame visibility"):
        load_tracks(path)


# ----------------------------------------------------------------- FileTracker


def stored_result():
    scene = static_scene(3)
    q = exact_queries(scene, [0, 4, 8, 12])
    return synthetic_track(scene, 0, q)


def test_file_tracker_matches_and_permutes(tmp_path):
    stored = stored_result()
    save_tracks(tmp_path / "tracks_00000.json", stored)
    ft = FileTracker(tmp_path)
    q = stored.positions[0][[2, 0]] + 0.2
    r = ft.track(None, 0, q)
    assert np.array_equal(r.positions[0], q)
    assert r.visibility[0].all()
    assert np.array_equal(r.positions[1], stored.positions[1][[2, 0]])
    assert np.array_equal(r.positions[2], stored.positions[2][[2, 0]])


def test_file_tracker_checks_sequence_length(tmp_path):
    stored = stored_result()
    save_tracks(tmp_path / "tracks_00000.json", stored)
    ft = FileTracker(tmp_path)
    q = stored.positions[0][:1]
    assert ft.track([0, 1, 2], 0, q).n_frames == 3
    with pytest.raises(TrackFileError, match="covers 3 frames, sequence needs 5"):
        ft.track([0, 1, 2, 3, 4], 0, q)


def test_file_tracker_match_radius(tmp_path):
    stored = stored_result()
    save_tracks(tmp_path / "tracks_00000.json", stored)
    far = stored.positions[0][0] + np.array([0.9, 0.0])
    with pytest.raises(TrackFileError, match="query 0 .* matches no stored"):
        FileTracker(tmp_path).track(None, 0, [far])
    loose = FileTracker(tmp_path, match_radius=1.0)
    r = loose.track(None, 0, [far])
    assert np.array_equal(r.positions[1, 0], stored.positions[1, 0])


def test_file_tracker_rejects_duplicate_matches(tmp_path):
    stored = stored_result()
    save_tracks(tmp_path / "tracks_00000.json", stored)
    base = stored.positions[0][1]
    q = [base + [0.1, 0.0], base + [-0.1, 0.0]]
    with pytest.raises(TrackFileError, match="same stored track"):
        FileTracker(tmp_path).track(None, 0, q)


def test_file_tracker_missing_file_and_bad_seed_field(tmp_path):
    stored = stored_result()
    save_tracks(tmp_path / "tracks_00003.json", stored)
    ft = FileTracker(tmp_path)
    with pytest.raises(TrackFileError, match="no track file for seed frame 5"):
        ft.track(None, 5, stored.positions[0][:1])
    with pytest.raises(TrackFileError, match="seed_frame field is 0, expected 3"):
        ft.track(None, 3, stored.positions[0][:1])


def test_file_tracker_caches_loaded_files(tmp_path):
    stored = stored_result()
    path = tmp_path / "tracks_00000.json"
    save_tracks(path, stored)
    ft = FileTracker(tmp_path)
    q = stored.positions[0][:2]
    first = ft.track(None, 0, q)
    os.remove(path)
    second = ft.track(None, 0, q)
    assert np.array_equal(first.positions, second.positions)

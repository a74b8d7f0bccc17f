"""Candidate detection: grayscale, Sobel magnitude, Canny, max-filter selection."""

import math

import numpy as np
import pytest

from sccalib.dataset import FramePacket
from sccalib.exceptions import InvalidParameterError
from sccalib.imagefeat import (
    build_candidate_pool,
    canny_edges,
    gradient_magnitude,
    grayscale,
    select_candidates,
)


def rgb_of(gray):
    return np.repeat(np.asarray(gray, dtype=np.float64)[:, :, None], 3, axis=2)


def test_grayscale_luma_weights():
    white = np.ones((4, 5, 3))
    np.testing.assert_allclose(grayscale(white), 1.0)
    red = np.zeros((4, 5, 3))
    red[..., 0] = 1.0
    np.testing.assert_allclose(grayscale(red), 0.299)
    np.testing.assert_allclose(grayscale(np.zeros((4, 5, 3))), 0.0)


def test_grayscale_rejects_bad_shapes():
    with pytest.raises(InvalidParameterError):
        grayscale(np.zeros((4, 5)))
    with pytest.raises(InvalidParameterError):
        grayscale(np.zeros((0, 5, 3)))


def test_gradient_constant_image_is_zero():
    np.testing.assert_allclose(gradient_magnitude(np.full((6, 6, 3), 0.7)),
                               0.0, atol=1e-12)


def test_gradient_vertical_step_hand_sobel():
    # Unit step between columns 3 and 4, single channel.  The 3x3 Sobel
    # response is 4 on both columns adjacent to the step, 0 elsewhere.
    img = np.zeros((6, 8, 3))
    img[:, 4:, 0] = 1.0
    mag = gradient_magnitude(img)
    np.testing.assert_allclose(mag[:, 3], 4.0, atol=1e-12)
    np.testing.assert_allclose(mag[:, 4], 4.0, atol=1e-12)
    np.testing.assert_allclose(mag[:, :3], 0.0, atol=1e-12)
    np.testing.assert_allclose(mag[:, 5:], 0.0, atol=1e-12)


def test_gradient_three_equal_channels_scale_sqrt3():
    gray = np.zeros((6, 8))
    gray[:, 4:] = 0.6
    single = np.zeros((6, 8, 3))
    single[..., 1] = gray
    mono = gradient_magnitude(single)
    trip = gradient_magnitude(rgb_of(gray))
    np.testing.assert_allclose(trip, math.sqrt(3.0) * mono, atol=1e-12)


def test_gradient_channel_permutation_invariant():
    rng = np.random.default_rng(8)
    img = rng.random((7, 9, 3))
    base = gradient_magnitude(img)
    np.testing.assert_allclose(gradient_magnitude(img[..., [2, 0, 1]]), base)


def test_gradient_rejects_small_images():
    with pytest.raises(InvalidParameterError):
        gradient_magnitude(np.zeros((2, 5, 3)))


def test_canny_constant_image_no_edges():
    assert not canny_edges(np.full((8, 8), 0.4)).any()


def test_canny_step_thins_to_one_column():
    # The Sobel ridge covers two columns; NMS keeps exactly one.
    gray = np.zeros((8, 8))
    gray[:, 4:] = 1.0
    edges = canny_edges(gray)
    expected = np.zeros((8, 8), dtype=bool)
    expected[:, 3] = True
    np.testing.assert_array_equal(edges, expected)


def test_canny_threshold_validation():
    gray = np.zeros((8, 8))
    with pytest.raises(InvalidParameterError):
        canny_edges(gray, low_frac=0.3, high_frac=0.2)
    with pytest.raises(InvalidParameterError):
        canny_edges(gray, low_frac=0.0, high_frac=0.2)
    with pytest.raises(InvalidParameterError):
        canny_edges(np.zeros((2, 8)))


def test_canny_hysteresis_keeps_connected_weak_drops_isolated():
    # One vertical step edge whose contrast decays along its length from
    # strong (mag 4.0) to weak (0.6, between the thresholds), plus a far-away
    # block whose edges are all weak (0.48).  Hysteresis keeps the weak tail
    # of the connected edge and drops the isolated block.
    height = np.interp(np.arange(28), [0, 3, 22, 27], [1.0, 1.0, 0.15, 0.15])
    gray = np.zeros((28, 24))
    gray[:, 5:] = height[:, None]
    gray[23:, 15:20] += 0.12
    edges = canny_edges(gray, low_frac=0.1, high_frac=0.2)
    # a single one-pixel-wide line through every row, nothing else
    assert (edges.sum(axis=1) == 1).all()
    rows, cols = np.nonzero(edges)
    assert set(cols) <= {4, 5}
    assert edges[23:, :6].any(axis=1).all()    # weak tail kept
    assert not edges[:, 13:].any()             # isolated weak block dropped


def test_select_single_maximum():
    grad = np.zeros((8, 8))
    grad[2, 3] = 5.0
    edges = grad > 0
    pool = select_candidates(grad, edges, np.ones((8, 8), dtype=bool), window=3)
    np.testing.assert_array_equal(pool.points, [[2, 3]])
    np.testing.assert_allclose(pool.scores, [5.0])


def test_select_tie_breaks_lexicographically():
    grad = np.zeros((9, 9))
    grad[2, 2] = 5.0
    grad[4, 4] = 5.0    # same window as (2, 2) for window=9
    edges = grad > 0
    pool = select_candidates(grad, edges, np.ones((9, 9), dtype=bool), window=9)
    np.testing.assert_array_equal(pool.points, [[2, 2]])


def test_select_masked_maximum_excluded():
    grad = np.zeros((8, 8))
    grad[3, 3] = 7.0
    edges = grad > 0
    mask = np.ones((8, 8), dtype=bool)
    mask[3, 3] = False
    pool = select_candidates(grad, edges, mask, window=3)
    assert len(pool) == 0


def test_select_requires_edge_pixels():
    grad = np.full((8, 8), 2.0)
    edges = np.zeros((8, 8), dtype=bool)
    edges[4, 4] = True
    pool = select_candidates(grad, edges, np.ones((8, 8), dtype=bool), window=3)
    np.testing.assert_array_equal(pool.points, [[4, 4]])


def test_select_validation():
    grad = np.zeros((8, 8))
    edges = np.zeros((8, 8), dtype=bool)
    mask = np.ones((8, 8), dtype=bool)
    with pytest.raises(InvalidParameterError):
        select_candidates(grad, edges[:4], mask, window=3)
    with pytest.raises(InvalidParameterError):
        select_candidates(grad, edges, mask, window=4)
    with pytest.raises(InvalidParameterError):
        select_candidates(grad, edges, mask, window=1)


def test_select_far_apart_equal_maxima_both_kept():
    grad = np.zeros((10, 12))
    grad[1, 1] = 3.0
    grad[8, 10] = 3.0
    edges = grad > 0
    pool = select_candidates(grad, edges, np.ones((10, 12), dtype=bool),
                             window=5)
    np.testing.assert_array_equal(pool.points, [[1, 1], [8, 10]])


def test_select_chebyshev_separation_invariant():
    rng = np.random.default_rng(21)
    grad = rng.random((40, 50))
    edges = rng.random((40, 50)) < 0.4
    mask = rng.random((40, 50)) < 0.8
    window = 9
    pool = select_candidates(grad, edges, mask, window=window)
    assert len(pool) > 1
    pts = pool.points
    sep = math.ceil(window / 2)
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            cheb = np.abs(pts[a] - pts[b]).max()
            assert cheb >= sep
    # every selected pixel is an edge pixel on static mask
    assert edges[pts[:, 0], pts[:, 1]].all()
    assert mask[pts[:, 0], pts[:, 1]].all()


def test_select_monotone_rescale_invariance():
    rng = np.random.default_rng(4)
    grad = rng.random((30, 30))
    edges = rng.random((30, 30)) < 0.5
    mask = np.ones((30, 30), dtype=bool)
    a = select_candidates(grad, edges, mask, window=7)
    b = select_candidates(np.exp(3.0 * grad) - 1.0, edges, mask, window=7)
    np.testing.assert_array_equal(a.points, b.points)


def test_build_candidate_pool_end_to_end():
    # Bright square on black: its outline produces edge candidates, and the
    # masked-out right half contributes none.
    rgb = np.zeros((32, 32, 3))
    rgb[8:24, 8:24] = 1.0
    mask = np.ones((32, 32), dtype=bool)
    mask[:, 16:] = False
    packet = FramePacket(index=3, rgb=rgb, motion_mask=mask, time=0.0)
    pool = build_candidate_pool(packet, window=5)
    assert pool.frame_index == 3
    assert len(pool) > 0
    assert (pool.points[:, 1] < 16).all()

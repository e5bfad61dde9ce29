"""Reliability scores: brightness, FAST corners, point feature factors and the combined scalars."""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from relnav.core import ImageRaster, PointCloud, Pose2D
from relnav.reliability import (CIRCLE, brightness, cloud_reliability, fast_corners, feature_factors,
                                image_reliability, point_feature_factor)
from relnav.simworld import PLIABLE, SOLID, SimConfig, TerrainGrid, generate_world, render_camera, render_lidar


# --------------------------------------------------------------------------
# Brute-force FAST oracle: per-pixel loops, no vectorization.


def _oracle_score(g, r, c, t, arc):
    """(best arc minimum margin, sum of absolute margins on the qualifying side)."""
    ring = [g[r + dr, c + dc] for dr, dc in CIRCLE]
    best, best_sad = -math.inf, -math.inf
    for sign in (1.0, -1.0):
        margins = [sign * (x - g[r, c]) - t for x in ring]
        qualifies, side = False, -math.inf
        for s in range(16):
            m = min(margins[(s + k) % 16] for k in range(arc))
            if m > 0:
                qualifies = True
                side = max(side, m)
        if qualifies:
            best = max(best, side)
            best_sad = max(best_sad, sum(m for m in margins if m > 0))
    return best, best_sad


def oracle_fast(g, t=20.0, arc=9):
    g = np.rint(np.asarray(g, dtype=np.float64))
    h, w = g.shape
    score = [[(-math.inf, -math.inf)] * w for _ in range(h)]
    for r in range(3, h - 3):
        for c in range(3, w - 3):
            score[r][c] = _oracle_score(g, r, c, t, arc)
    out = []
    for r in range(h):
        for c in range(w):
            s = score[r][c]
            if s[0] == -math.inf:
                continue
            neigh = [score[r + dr][c + dc] for dr in (-1, 0, 1) for dc in (-1, 0, 1)
                     if (dr, dc) != (0, 0) and 0 <= r + dr < h and 0 <= c + dc < w]
            if all(s >= n for n in neigh):          # tuple order: lexicographic
                out.append((r, c))
    return out


def _square_image(size=64, side=8, top=28):
    img = np.zeros((size, size), dtype=np.uint8)
    img[top:top + side, top:top + side] = 255
    return img


def _block_texture(rng, size=64, block=4):
    small = rng.integers(0, 256, (size // block, size // block))
    return np.kron(small, np.ones((block, block))).astype(np.uint8)


def _checkerboard(size=64, square=8, lo=0, hi=255):
    r, c = np.indices((size, size))
    return np.where(((r // square) + (c // square)) % 2 == 0, hi, lo).astype(np.uint8)


# --------------------------------------------------------------------------
# brightness


@pytest.mark.parametrize("value,expected", [(0, 0.0), (255, 1.0), (128, 128 / 255)])
def test_brightness_of_constant_images(value, expected):
    assert brightness(ImageRaster(np.full((10, 12), value, dtype=np.uint8))) == pytest.approx(expected, abs=1e-12)


def test_brightness_uses_luma_weights():
    rgb = np.zeros((4, 4, 3), dtype=np.uint8)
    rgb[..., 1] = 200
    assert brightness(ImageRaster(rgb)) == pytest.approx(np.rint(0.587 * 200) / 255, abs=1e-12)


def test_brightness_equals_direct_rms(rng):
    img = rng.integers(0, 256, (31, 17)).astype(np.uint8)
    direct = np.sqrt(np.mean(img.astype(np.float64) ** 2)) / 255
    assert brightness(ImageRaster(img)) == pytest.approx(direct, abs=1e-12)


def test_brightness_rejects_empty():
    with pytest.raises(ValueError):
        brightness(np.zeros((0, 5)))


# --------------------------------------------------------------------------
# FAST corners


def test_uniform_image_has_no_corners():
    assert fast_corners(np.full((32, 32), 77.0)) == []


def test_tiny_images_yield_no_corners():
    assert fast_corners(np.zeros((6, 40))) == []


def test_white_square_has_four_corners_at_its_vertices():
    img = _square_image()
    corners = fast_corners(ImageRaster(img))
    assert corners == oracle_fast(img)
    assert len(corners) == 4
    vertices = [(28, 28), (28, 35), (35, 28), (35, 35)]
    for v in vertices:
        assert min(max(abs(v[0] - r), abs(v[1] - c)) for r, c in corners) <= 1


@pytest.mark.parametrize("seed", range(6))
def test_fast_matches_brute_force_oracle(seed):
    rng = np.random.default_rng(seed)
    img = _block_texture(rng, size=24, block=3)
    assert fast_corners(img) == oracle_fast(img)
    assert fast_corners(img, t=40, arc=12) == oracle_fast(img, t=40, arc=12)
    assert fast_corners(img, nms=False) == sorted(
        (r, c) for r in range(3, 21) for c in range(3, 21) if _oracle_score(img.astype(float), r, c, 20, 9)[0] > -math.inf)


@pytest.mark.parametrize("seed", range(10))
def test_rotation_by_180_preserves_corner_count(seed):
    img = _block_texture(np.random.default_rng(seed))
    assert len(fast_corners(img)) == len(fast_corners(img[::-1, ::-1]))


def test_occlusion_never_increases_corner_count():
    """100 textured frames; a constant patch covers at least half of each."""
    rng = np.random.default_rng(2024)
    for _ in range(100):
        img = _block_texture(rng, block=int(rng.integers(2, 6)) * 2)
        occluded = img.copy()
        frac = rng.uniform(0.5, 1.0)
        cols = int(math.ceil(frac * img.shape[1]))
        c0 = int(rng.integers(0, img.shape[1] - cols + 1))
        occluded[:, c0:c0 + cols] = rng.integers(0, 256)
        assert len(fast_corners(occluded)) <= len(fast_corners(img))


# --------------------------------------------------------------------------
# image_reliability


def test_image_reliability_examples():
    assert image_reliability(np.zeros((64, 64))).r_img == 0.0
    white = image_reliability(np.full((64, 64), 255.0))
    assert white.r_img == pytest.approx(0.5) and white.n_c == 0


def test_bright_checkerboard_beats_dim_one():
    bright = ImageRaster(_checkerboard())
    dim = ImageRaster(np.rint(_checkerboard() * 0.1).astype(np.uint8))
    assert image_reliability(bright).r_img > image_reliability(dim).r_img


def test_image_reliability_combination_and_validation():
    img = _block_texture(np.random.default_rng(3))
    rel = image_reliability(img, 0.3, 0.7)
    assert rel.r_corners == min(1.0, rel.n_c / (0.005 * 64 * 64))
    assert rel.r_img == pytest.approx(min(1.0, 0.3 * rel.r_bright + 0.7 * rel.r_corners), abs=1e-15)
    for a, b in [(0.6, 0.6), (-0.1, 1.1)]:
        with pytest.raises(ValueError):
            image_reliability(img, a, b)


@settings(max_examples=60, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 24), st.integers(1, 24), st.sampled_from([1, 3]))),
       st.floats(0.0, 1.0))
def test_image_scores_stay_in_unit_interval(data, alpha):
    rel = image_reliability(ImageRaster(data), alpha, 1.0 - alpha, corner_norm=0.001)
    for v in (rel.r_bright, rel.r_corners, rel.r_img):
        assert 0.0 <= v <= 1.0


def test_darkening_a_rendered_scene_never_raises_brightness():
    g = generate_world(11, "open")
    pose = Pose2D(8.0, 3.0, math.pi / 2)
    levels = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0]
    values = [brightness(render_camera(replace(g, illumination=a), pose)) for a in levels]
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert values[0] == 0.0


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, (12, 12, 3)), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_multiplicative_darkening_is_monotone(data, a, b):
    a, b = sorted((a, b))
    dark = ImageRaster(np.rint(data * a).astype(np.uint8))
    light = ImageRaster(np.rint(data * b).astype(np.uint8))
    assert brightness(dark) <= brightness(light) + 1e-12


# --------------------------------------------------------------------------
# Point feature factor


def _ring_cloud(points, ring=None, num_rings=4):
    points = np.asarray(points, dtype=np.float64)
    ring = np.zeros(len(points), dtype=np.int64) if ring is None else ring
    return PointCloud(points, ring, num_rings)


def oracle_factor(points, rings, l, m=5, eps=1e-6):
    """Direct evaluation: same-ring window of half-width m in azimuth order."""
    same = [k for k in range(len(points)) if rings[k] == rings[l]]
    same.sort(key=lambda k: (math.atan2(points[k][1], points[k][0]), k))
    pos = same.index(l)
    window = same[max(0, pos - m):pos + m + 1]
    norm = math.sqrt(sum(v * v for v in points[l]))
    if norm <= eps or len(window) < 2:
        return None
    acc = [0.0, 0.0, 0.0]
    for k in window:
        if k != l:
            for d in range(3):
                acc[d] += points[l][d] - points[k][d]
    return math.sqrt(sum(v * v for v in acc)) / (norm * len(window))


def test_hand_evaluated_factor():
    cloud = _ring_cloud([(1, 0, 0), (2, 0, 0), (3, 0, 0)])
    assert point_feature_factor(0, cloud) == pytest.approx(1.0, abs=1e-15)


def test_symmetric_neighbours_cancel():
    cloud = _ring_cloud([(2, -1, 0), (2, 0, 0), (2, 1, 0)])
    assert point_feature_factor(1, cloud) == pytest.approx(0.0, abs=1e-15)


def test_factor_skips_origin_and_lonely_points():
    cloud = _ring_cloud([(0, 0, 0), (1, 0, 0), (5, 5, 0)], ring=[0, 0, 1])
    assert point_feature_factor(0, cloud) is None
    assert point_feature_factor(2, cloud) is None
    c = feature_factors(cloud)
    assert np.isnan(c[0]) and np.isnan(c[2]) and not np.isnan(c[1])


def _random_cloud(rng, n=120, rings=4):
    az = rng.uniform(-math.pi, math.pi, n)
    rad = rng.uniform(0.5, 8.0, n)
    pts = np.column_stack([rad * np.cos(az), rad * np.sin(az), rng.uniform(-1, 1, n)])
    return PointCloud(pts, rng.integers(0, rings, n), rings)


@pytest.mark.parametrize("seed", range(5))
def test_vectorized_factors_match_direct_loops(seed):
    cloud = _random_cloud(np.random.default_rng(seed))
    pts, rings = cloud.points.tolist(), cloud.ring.tolist()
    fast = feature_factors(cloud)
    for l in range(len(cloud)):
        ref = oracle_factor(pts, rings, l)
        assert ref == pytest.approx(fast[l], abs=1e-12)
        assert point_feature_factor(l, cloud) == pytest.approx(ref, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_factor_is_scale_invariant(seed, s):
    cloud = _random_cloud(np.random.default_rng(seed), n=60)
    scaled = PointCloud(cloud.points * s, cloud.ring, cloud.num_rings)
    np.testing.assert_allclose(feature_factors(scaled), feature_factors(cloud), rtol=0, atol=1e-9)


def test_wall_interior_is_planar_and_endpoints_stand_out():
    ys = np.linspace(-3.0, 3.0, 61)
    cloud = _ring_cloud(np.column_stack([np.full_like(ys, 5.0), ys, np.zeros_like(ys)]))
    pts, rings = cloud.points.tolist(), cloud.ring.tolist()
    c = np.array([oracle_factor(pts, rings, l) for l in range(len(ys))])
    interior, ends = c[5:-5], np.concatenate([c[:5], c[-5:]])
    assert interior.max() < 0.05
    assert ends.min() > interior.max()
    np.testing.assert_allclose(feature_factors(cloud), c, atol=1e-12)


# --------------------------------------------------------------------------
# cloud_reliability


def test_empty_cloud_is_maximally_unreliable():
    rel = cloud_reliability(PointCloud())
    assert rel.r_point == 0.0 and rel.r_edge == 0.0 and rel.r_planar == 0.0


def test_negative_betas_rejected():
    with pytest.raises(ValueError):
        cloud_reliability(_ring_cloud([(1, 0, 0)]), beta_e=-1)


def _wall_scene():
    """An 8 m square room: every wall lies within LiDAR range."""
    cells = np.zeros((16, 16), dtype=np.int8)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = SOLID
    return TerrainGrid(cells, 0.5)


def test_noise_free_wall_scene_is_mostly_planar():
    cloud = render_lidar(_wall_scene(), Pose2D(3.0, 4.0, 0.3), 0, SimConfig(lidar_noise=0.0))
    assert cloud_reliability(cloud).r_planar > 0.5


def test_edge_and_planar_sets_are_disjoint(rng):
    cloud = _random_cloud(rng, n=300)
    c = feature_factors(cloud)
    edge = set(np.nonzero(c >= 0.5)[0])
    planar = set(np.nonzero(c <= 0.05)[0])
    assert not edge & planar
    rel = cloud_reliability(cloud)
    assert (rel.edge_count, rel.planar_count) == (len(edge), len(planar))
    assert rel.r_point == pytest.approx(min(1.0, 0.1 * rel.r_edge + rel.r_planar))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 200), st.floats(0, 10), st.floats(0, 10),
       st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_cloud_scores_stay_in_unit_interval(seed, n, beta_e, beta_p, c1, c2):
    rng = np.random.default_rng(seed)
    pts = rng.normal(0.0, rng.uniform(0.01, 10.0), (n, 3))
    if n:
        pts[rng.random(n) < 0.05] = 0.0                  # some points at the sensor origin
    cloud = PointCloud(pts, rng.integers(0, 4, n), 4)
    c_min, c_max = min(c1, c2), max(c1, c2)
    rel = cloud_reliability(cloud, c_max, c_min, beta_e, beta_p)
    for v in (rel.r_edge, rel.r_planar, rel.r_point):
        assert 0.0 <= v <= 1.0
    if c_min < c_max:
        assert rel.edge_count + rel.planar_count <= n


def _band_pose(grid):
    rows = np.nonzero((grid.cells == PLIABLE).mean(axis=1) > 0.5)[0]
    r = rows[len(rows) // 2]
    return Pose2D(grid.width * grid.cell_size / 2, (r + 0.5) * grid.cell_size, math.pi / 2)


@pytest.mark.parametrize("seed", range(4))
def test_clutter_preset_scores_below_open_preset(seed):
    clutter = generate_world(seed, "cluttered")
    open_ = generate_world(seed, "open")
    pose = _band_pose(clutter)
    r_clutter = cloud_reliability(render_lidar(clutter, pose, seed)).r_point
    r_wall = cloud_reliability(render_lidar(open_, pose, seed)).r_point
    assert r_clutter < r_wall

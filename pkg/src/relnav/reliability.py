"""Camera and LiDAR reliability scores in [0, 1]."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ImageRaster, PointCloud

# Bresenham circle of radius 3, clockwise from 12 o'clock, as (drow, dcol).
CIRCLE = np.array([
    (-3, 0), (-3, 1), (-2, 2), (-1, 3), (0, 3), (1, 3), (2, 2), (3, 1),
    (3, 0), (3, -1), (2, -2), (1, -3), (0, -3), (-1, -3), (-2, -2), (-3, -1),
])


@dataclass(frozen=True)
class ImageReliability:
    r_bright: float
    r_corners: float
    r_img: float
    n_c: int


@dataclass(frozen=True)
class CloudReliability:
    r_edge: float
    r_planar: float
    r_point: float
    edge_count: int
    planar_count: int


def _gray(image) -> np.ndarray:
    if isinstance(image, ImageRaster):
        return image.gray()
    return np.asarray(image, dtype=np.float64)


def brightness(image) -> float:
    """RMS grey level computed through the 256-bin histogram, scaled to [0, 1]."""
    g = _gray(image)
    if g.size == 0:
        raise ValueError("empty image")
    levels = np.clip(np.rint(g), 0, 255).astype(np.int64)
    hist = np.bincount(levels.ravel(), minlength=256).astype(np.float64)
    b = np.arange(256, dtype=np.float64)
    return float(np.sqrt(np.sum(hist * b * b) / g.size) / 255.0)


def fast_corners(image, t: float = 20.0, arc: int = 9, nms: bool = True) -> list[tuple[int, int]]:
    """FAST segment-test corners as (row, col), sorted.

    A pixel is a corner when ``arc`` contiguous circle pixels are all brighter
    than ``I(p) + t`` or all darker than ``I(p) - t``. The 3x3 non-maximum
    suppression ranks pixels by the best qualifying arc's minimum margin; ties
    (common on binary images, where every margin is equal) are broken by the
    sum of absolute margins over the circle, so a plateau of equally scored
    pixels around a shape vertex collapses onto the vertex itself.
    """
    g = np.rint(_gray(image))
    h, w = g.shape
    if h < 7 or w < 7:
        return []
    score, sad = corner_score_pair(g, t, arc)
    if nms:
        pad_s = np.pad(score, 1, constant_values=-np.inf)
        pad_d = np.pad(sad, 1, constant_values=-np.inf)
        keep = score > -np.inf
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if (dr, dc) == (0, 0):
                    continue
                ns = pad_s[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
                nd = pad_d[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
                keep &= (score > ns) | ((score == ns) & (sad >= nd))
    else:
        keep = score > -np.inf
    rows, cols = np.nonzero(keep)
    return list(zip(rows.tolist(), cols.tolist()))


def corner_scores(g: np.ndarray, t: float = 20.0, arc: int = 9) -> np.ndarray:
    """Per-pixel corner score; ``-inf`` where the segment test fails."""
    return corner_score_pair(g, t, arc)[0]


def corner_score_pair(g: np.ndarray, t: float = 20.0, arc: int = 9) -> tuple[np.ndarray, np.ndarray]:
    """(best arc minimum margin, sum of absolute margins) per pixel; ``-inf`` where the test fails.

    The second score sums ``|I(x) - I(p)| - t`` over circle pixels on the
    qualifying side (the larger sum if both sides qualify).
    """
    g = np.asarray(g, dtype=np.float64)
    h, w = g.shape
    score = np.full((h, w), -np.inf)
    sad = np.full((h, w), -np.inf)
    if h < 7 or w < 7:
        return score, sad
    center = g[3:h - 3, 3:w - 3]
    ring = np.stack([g[3 + dr:h - 3 + dr, 3 + dc:w - 3 + dc] for dr, dc in CIRCLE])
    best = np.full(center.shape, -np.inf)
    best_sad = np.full(center.shape, -np.inf)
    for margin in (ring - center - t, center - ring - t):    # brighter, darker
        wrapped = np.concatenate([margin, margin[:arc - 1]])
        side = np.full(center.shape, -np.inf)
        for s in range(16):
            side = np.maximum(side, wrapped[s:s + arc].min(axis=0))
        ok = side > 0
        best = np.where(ok & (side > best), side, best)
        side_sad = np.maximum(margin, 0.0).sum(axis=0)
        best_sad = np.where(ok & (side_sad > best_sad), side_sad, best_sad)
    score[3:h - 3, 3:w - 3] = best
    sad[3:h - 3, 3:w - 3] = best_sad
    return score, sad


def image_reliability(image, alpha_b: float = 0.5, alpha_c: float = 0.5, corner_norm: float = 0.005,
                      t: float = 20.0, arc: int = 9) -> ImageReliability:
    if alpha_b < 0 or alpha_c < 0 or abs(alpha_b + alpha_c - 1.0) > 1e-12:
        raise ValueError("alpha weights must be non-negative and sum to 1")
    g = _gray(image)
    h, w = g.shape
    r_bright = brightness(g)
    n_c = len(fast_corners(g, t, arc))
    r_corners = min(1.0, n_c / (corner_norm * w * h))
    r_img = min(1.0, max(0.0, alpha_b * r_bright + alpha_c * r_corners))
    return ImageReliability(r_bright, r_corners, r_img, n_c)


def _ring_order(cloud: PointCloud) -> np.ndarray:
    """Point indices sorted by ring, then azimuth."""
    p = cloud.points
    az = np.arctan2(p[:, 1], p[:, 0])
    return np.lexsort((az, cloud.ring))


def point_feature_factor(l: int, cloud: PointCloud, neighborhood: int = 5, eps: float = 1e-6) -> float | None:
    """Smoothness factor of one point against its same-ring azimuth window.

    Returns ``None`` when the point sits at the origin or has no neighbour.
    """
    order = _ring_order(cloud)
    same = order[cloud.ring[order] == cloud.ring[l]]
    k = int(np.nonzero(same == l)[0][0])
    window = same[max(0, k - neighborhood):k + neighborhood + 1]
    x_l = cloud.points[l]
    norm = float(np.linalg.norm(x_l))
    if norm <= eps or len(window) < 2:
        return None
    diff = np.sum(x_l - cloud.points[window[window != l]], axis=0)
    return float(np.linalg.norm(diff) / (norm * len(window)))


def feature_factors(cloud: PointCloud, neighborhood: int = 5, eps: float = 1e-6) -> np.ndarray:
    """Vectorized smoothness factor for every point; NaN where undefined."""
    n = len(cloud)
    out = np.full(n, np.nan)
    if n == 0:
        return out
    order = _ring_order(cloud)
    pts = cloud.points[order]
    rings = cloud.ring[order]
    starts = np.searchsorted(rings, rings, side="left")
    ends = np.searchsorted(rings, rings, side="right")
    idx = np.arange(n)
    lo = np.maximum(starts, idx - neighborhood)
    hi = np.minimum(ends, idx + neighborhood + 1)
    csum = np.vstack([np.zeros(3), np.cumsum(pts, axis=0)])
    size = hi - lo
    neighbour_sum = csum[hi] - csum[lo] - pts
    diff = (size - 1)[:, None] * pts - neighbour_sum
    norm = np.linalg.norm(pts, axis=1)
    valid = (norm > eps) & (size >= 2)
    c = np.full(n, np.nan)
    c[valid] = np.linalg.norm(diff[valid], axis=1) / (norm[valid] * size[valid])
    out[order] = c
    return out


def cloud_reliability(cloud: PointCloud, c_max: float = 0.5, c_min: float = 0.05, beta_e: float = 0.1,
                      beta_p: float = 1.0, neighborhood: int = 5) -> CloudReliability:
    if beta_e < 0 or beta_p < 0:
        raise ValueError("beta weights must be non-negative")
    n = len(cloud)
    if n == 0:
        return CloudReliability(0.0, 0.0, 0.0, 0, 0)
    c = feature_factors(cloud, neighborhood)
    defined = ~np.isnan(c)
    edge = int(np.sum(defined & (c >= c_max)))
    planar = int(np.sum(defined & (c <= c_min)))
    r_edge, r_planar = edge / n, planar / n
    r_point = min(1.0, max(0.0, beta_e * r_edge + beta_p * r_planar))
    return CloudReliability(r_edge, r_planar, r_point, edge, planar)

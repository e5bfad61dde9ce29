"""Lightweight per-modality encoders mapping raw observations to [0, 1]^n.

Each encoder is split into a fixed preprocessing step (block averaging,
polar histogram, velocity normalisation) and a small trainable MLP. The
MLPs work on batches and expose analytic backward passes so they can be
trained jointly with the graph network.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import OMEGA_MAX, T_DEFAULT, V_MAX, ImageRaster, PointCloud, VelocityHistory, make_generator, sigmoid

MODALITIES = ("img", "point", "traj", "vel")     # concatenation order of f_vec
DIMS = {"img": 16, "point": 16, "traj": 8, "vel": 8}
HIDDEN = 32
POOL = 16
POLAR_BINS = 8
POLAR_RANGE = 10.0


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    modality: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.modality not in DIMS:
            raise ValueError(f"unknown modality {self.modality!r}")
        if not np.all((v >= 0.0) & (v <= 1.0)):
            raise ValueError("feature values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


def index_ranges(dims: dict = DIMS) -> dict[str, tuple[int, int]]:
    """Slice bounds of each modality inside f_vec."""
    out, start = {}, 0
    for m in MODALITIES:
        out[m] = (start, start + dims[m])
        start += dims[m]
    return out


def concat_features(f_img: FeatureVector, f_point: FeatureVector, f_vel: FeatureVector,
                    f_traj: FeatureVector) -> tuple[np.ndarray, dict[str, tuple[int, int]]]:
    """Concatenate as [img | point | traj | vel] and return the index ranges."""
    parts = {"img": f_img, "point": f_point, "traj": f_traj, "vel": f_vel}
    for m, f in parts.items():
        if f.modality != m or len(f) != DIMS[m]:
            raise ValueError(f"expected {m} features of length {DIMS[m]}, got {f.modality} of length {len(f)}")
    return np.concatenate([parts[m].values for m in MODALITIES]), index_ranges()


def split_features(f_vec: np.ndarray) -> dict[str, FeatureVector]:
    return {m: FeatureVector(f_vec[a:b], m) for m, (a, b) in index_ranges().items()}


# --------------------------------------------------------------------------
# Fixed preprocessing


def image_input(image: ImageRaster, size: int = 64, channels: int | None = None) -> np.ndarray:
    """Grey image block-averaged to 16x16 and scaled to [0, 1], flattened."""
    if image.height != size or image.width != size:
        raise ValueError(f"expected {size}x{size} image, got {image.height}x{image.width}")
    if channels is not None and image.channels != channels:
        raise ValueError(f"expected {channels} channel(s), got {image.channels}")
    b = size // POOL
    g = image.gray().reshape(POOL, b, POOL, b).mean(axis=(1, 3))
    return g.reshape(-1) / 255.0


def cloud_histogram(cloud: PointCloud) -> np.ndarray:
    """8x8 azimuth-by-range occupancy histogram normalised by the point count."""
    if len(cloud) == 0:
        return np.zeros(POLAR_BINS * POLAR_BINS)
    p = cloud.points
    az = np.arctan2(p[:, 1], p[:, 0])
    rng = np.hypot(p[:, 0], p[:, 1])
    ai = np.clip(((az + math.pi) / (2 * math.pi) * POLAR_BINS).astype(np.int64), 0, POLAR_BINS - 1)
    ri = np.clip((rng / POLAR_RANGE * POLAR_BINS).astype(np.int64), 0, POLAR_BINS - 1)
    hist = np.bincount(ai * POLAR_BINS + ri, minlength=POLAR_BINS * POLAR_BINS).astype(np.float64)
    return hist / len(cloud)


def velocity_input(hist: VelocityHistory, T: int = T_DEFAULT, v_max: float = V_MAX,
                   omega_max: float = OMEGA_MAX) -> np.ndarray:
    hist.check_length(T)
    a = hist.as_array() / np.array([v_max, omega_max])
    return a.reshape(-1)


# --------------------------------------------------------------------------
# Parameters


def init_encoder_params(seed: int = 0, T: int = T_DEFAULT) -> dict[str, np.ndarray]:
    rng = make_generator(seed, 0xE1)
    n_pix = POOL * POOL

    def dense(n_out, n_in):
        return rng.normal(0.0, 1.0 / math.sqrt(n_in), size=(n_out, n_in))

    return {
        "img_w1": dense(HIDDEN, n_pix), "img_b1": np.zeros(HIDDEN),
        "img_w2": dense(DIMS["img"], HIDDEN), "img_b2": np.zeros(DIMS["img"]),
        "traj_w1": dense(HIDDEN, n_pix), "traj_b1": np.zeros(HIDDEN),
        "traj_w2": dense(DIMS["traj"], HIDDEN), "traj_b2": np.zeros(DIMS["traj"]),
        "point_w": dense(DIMS["point"], POLAR_BINS * POLAR_BINS) * 4.0, "point_b": np.zeros(DIMS["point"]),
        "vel_w": dense(DIMS["vel"], 2 * T), "vel_b": np.zeros(DIMS["vel"]),
    }


# --------------------------------------------------------------------------
# Batched MLP pieces


def _two_layer_forward(x, w1, b1, w2, b2):
    h = np.tanh(x @ w1.T + b1)
    y = sigmoid(h @ w2.T + b2)
    return y, (x, h, y)


def _two_layer_backward(dy, cache, w1, w2):
    x, h, y = cache
    dz2 = dy * y * (1.0 - y)
    dw2 = dz2.T @ h
    db2 = dz2.sum(axis=0)
    dh = dz2 @ w2
    dz1 = dh * (1.0 - h * h)
    return dz1.T @ x, dz1.sum(axis=0), dw2, db2


def _affine_forward(x, w, b):
    y = sigmoid(x @ w.T + b)
    return y, (x, y)


def _affine_backward(dy, cache):
    x, y = cache
    dz = dy * y * (1.0 - y)
    return dz.T @ x, dz.sum(axis=0)


def encode_batch(params: dict, x_img, x_point, x_traj, x_vel):
    """Encode preprocessed batches; returns f_vec (B, N) and a cache for backprop."""
    f_img, c_img = _two_layer_forward(x_img, params["img_w1"], params["img_b1"], params["img_w2"], params["img_b2"])
    f_pt, c_pt = _affine_forward(x_point, params["point_w"], params["point_b"])
    f_tr, c_tr = _two_layer_forward(x_traj, params["traj_w1"], params["traj_b1"], params["traj_w2"], params["traj_b2"])
    f_vel, c_vel = _affine_forward(x_vel, params["vel_w"], params["vel_b"])
    f_vec = np.concatenate([f_img, f_pt, f_tr, f_vel], axis=1)
    return f_vec, (c_img, c_pt, c_tr, c_vel)


def encode_batch_backward(params: dict, df_vec: np.ndarray, cache) -> dict[str, np.ndarray]:
    c_img, c_pt, c_tr, c_vel = cache
    r = index_ranges()
    grads = {}
    grads["img_w1"], grads["img_b1"], grads["img_w2"], grads["img_b2"] = _two_layer_backward(
        df_vec[:, slice(*r["img"])], c_img, params["img_w1"], params["img_w2"])
    grads["point_w"], grads["point_b"] = _affine_backward(df_vec[:, slice(*r["point"])], c_pt)
    grads["traj_w1"], grads["traj_b1"], grads["traj_w2"], grads["traj_b2"] = _two_layer_backward(
        df_vec[:, slice(*r["traj"])], c_tr, params["traj_w1"], params["traj_w2"])
    grads["vel_w"], grads["vel_b"] = _affine_backward(df_vec[:, slice(*r["vel"])], c_vel)
    return grads


# --------------------------------------------------------------------------
# Single-observation encoders


def encode_image(image: ImageRaster, params: dict, size: int = 64) -> FeatureVector:
    x = image_input(image, size)[None, :]
    y, _ = _two_layer_forward(x, params["img_w1"], params["img_b1"], params["img_w2"], params["img_b2"])
    return FeatureVector(y[0], "img")


def encode_traj_image(traj_image: ImageRaster, params: dict, size: int = 64) -> FeatureVector:
    x = image_input(traj_image, size, channels=1)[None, :]
    y, _ = _two_layer_forward(x, params["traj_w1"], params["traj_b1"], params["traj_w2"], params["traj_b2"])
    return FeatureVector(y[0], "traj")


def encode_cloud(cloud: PointCloud, params: dict) -> FeatureVector:
    y, _ = _affine_forward(cloud_histogram(cloud)[None, :], params["point_w"], params["point_b"])
    return FeatureVector(y[0], "point")


def encode_velocity(hist: VelocityHistory, params: dict, T: int = T_DEFAULT, v_max: float = V_MAX,
                    omega_max: float = OMEGA_MAX) -> FeatureVector:
    y, _ = _affine_forward(velocity_input(hist, T, v_max, omega_max)[None, :], params["vel_w"], params["vel_b"])
    return FeatureVector(y[0], "vel")

"""Shared value types, small array helpers and the project-wide RNG protocol."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

T_DEFAULT = 10
V_MAX = 1.0
OMEGA_MAX = 1.0

_MASK64 = (1 << 64) - 1


def normalize_angle(a: float) -> float:
    """Map an angle onto its representative in (-pi, pi]."""
    a = float(a)
    if not math.isfinite(a):
        raise ValueError(f"angle must be finite, got {a}")
    r = math.fmod(a + math.pi, 2.0 * math.pi)
    if r <= 0.0:
        r += 2.0 * math.pi
    return r - math.pi


def normalize_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized :func:`normalize_angle`."""
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("angles must be finite")
    r = np.fmod(a + np.pi, 2.0 * np.pi)
    r = np.where(r <= 0.0, r + 2.0 * np.pi, r)
    return r - np.pi


# --------------------------------------------------------------------------
# RNG protocol. State is an explicit 64-bit integer that callers thread
# through; bulk draws go through numpy generators keyed by the same seeds.


def rng_next(state: int) -> tuple[float, int]:
    """Advance a splitmix64 state and return a uniform draw in [0, 1)."""
    state = (int(state) + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return (z >> 11) * (1.0 / (1 << 53)), state


def make_generator(seed: int, *keys: int) -> np.random.Generator:
    """Numpy generator deterministically derived from ``seed`` and sub-keys."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


# --------------------------------------------------------------------------
# Checked dense arithmetic.


def as_matrix(a, shape: tuple[int, ...] | None = None) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if shape is not None and m.shape != shape:
        raise ValueError(f"expected shape {shape}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch {a.shape} @ {b.shape}")
    return a @ b


def sigmoid(x):
    # split by sign to stay overflow-free for large |x|
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return z / np.sum(z, axis=axis, keepdims=True)


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# Domain types.


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def moved(self, dx: float, dy: float, dtheta: float) -> "Pose2D":
        return Pose2D(self.x + dx, self.y + dy, self.theta + dtheta)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass(frozen=True)
class VelocityCommand:
    v: float
    omega: float

    def __post_init__(self):
        object.__setattr__(self, "v", float(self.v))
        object.__setattr__(self, "omega", float(self.omega))

    def check_bounds(self, v_max: float = V_MAX, omega_max: float = OMEGA_MAX, tol: float = 1e-9):
        if abs(self.v) > v_max + tol or abs(self.omega) > omega_max + tol:
            raise ValueError(f"command {self} outside |v|<={v_max}, |omega|<={omega_max}")
        return self


@dataclass(frozen=True)
class VelocityHistory:
    commands: tuple[VelocityCommand, ...]

    def __post_init__(self):
        object.__setattr__(self, "commands", tuple(self.commands))

    @classmethod
    def zeros(cls, T: int = T_DEFAULT) -> "VelocityHistory":
        return cls(tuple(VelocityCommand(0.0, 0.0) for _ in range(T)))

    def __len__(self):
        return len(self.commands)

    def pushed(self, cmd: VelocityCommand) -> "VelocityHistory":
        """Drop the oldest command and append ``cmd``."""
        return VelocityHistory(self.commands[1:] + (cmd,))

    def as_array(self) -> np.ndarray:
        return np.array([[c.v, c.omega] for c in self.commands], dtype=np.float64).reshape(-1, 2)

    def check_length(self, T: int):
        if len(self.commands) != T:
            raise ValueError(f"velocity history has length {len(self.commands)}, expected {T}")
        return self


@dataclass(frozen=True, eq=False)
class ImageRaster:
    """Row-major uint8 raster of shape (h, w, channels)."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3 or d.shape[2] not in (1, 3) or d.shape[0] <= 0 or d.shape[1] <= 0:
            raise ValueError(f"bad raster shape {d.shape}")
        if d.dtype != np.uint8:
            if np.any(d < 0) or np.any(d > 255):
                raise ValueError("intensities must lie in [0, 255]")
            d = np.rint(d)
        object.__setattr__(self, "data", _frozen(d, np.uint8))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def gray(self) -> np.ndarray:
        """Float luma image (h, w) in [0, 255]."""
        d = self.data.astype(np.float64)
        if self.channels == 1:
            return d[:, :, 0]
        return 0.299 * d[:, :, 0] + 0.587 * d[:, :, 1] + 0.114 * d[:, :, 2]

    def __eq__(self, other):
        return isinstance(other, ImageRaster) and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    ring: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    num_rings: int = 4

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        r = np.asarray(self.ring, dtype=np.int64).reshape(-1)
        if len(p) != len(r):
            raise ValueError("points and ring ids differ in length")
        if not np.all(np.isfinite(p)):
            raise ValueError("point coordinates must be finite")
        if len(r) and (r.min() < 0 or r.max() >= self.num_rings):
            raise ValueError("ring id out of range")
        object.__setattr__(self, "points", _frozen(p, np.float64))
        object.__setattr__(self, "ring", _frozen(r, np.int64))

    def __len__(self):
        return len(self.points)

    def permuted(self, order) -> "PointCloud":
        order = np.asarray(order)
        return PointCloud(self.points[order], self.ring[order], self.num_rings)

    def __eq__(self, other):
        return (isinstance(other, PointCloud) and self.num_rings == other.num_rings
                and np.array_equal(self.points, other.points) and np.array_equal(self.ring, other.ring))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Observation:
    image: ImageRaster
    cloud: PointCloud
    vel_history: VelocityHistory
    traj_image: ImageRaster

    def __post_init__(self):
        if self.image.channels != 3 or self.traj_image.channels != 1:
            raise ValueError("observation needs a 3-channel image and a 1-channel trajectory image")
        if self.image.data.shape[:2] != self.traj_image.data.shape[:2]:
            raise ValueError("image and trajectory image sizes differ")

    def with_traj_image(self, traj_image: ImageRaster) -> "Observation":
        return Observation(self.image, self.cloud, self.vel_history, traj_image)

    def __eq__(self, other):
        return (isinstance(other, Observation) and self.image == other.image and self.cloud == other.cloud
                and self.vel_history == other.vel_history and self.traj_image == other.traj_image)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SuccessVector:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("success probabilities must lie in [0, 1]")
        object.__setattr__(self, "probs", _frozen(p, np.float64))

    def __len__(self):
        return len(self.probs)

    def __eq__(self, other):
        return isinstance(other, SuccessVector) and np.array_equal(self.probs, other.probs)

    __hash__ = None

"""Dynamic-window planning with a reliability gate and a learned veto."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import OMEGA_MAX, T_DEFAULT, V_MAX, ImageRaster, Observation, PointCloud, Pose2D, VelocityCommand
from .core import normalize_angle, normalize_angles

ARC_EPS = 1e-6


@dataclass(frozen=True)
class PlannerConfig:
    gamma: tuple = (0.8, 0.1, 0.1)        # heading, clearance, velocity weights
    r_th: float = 0.15
    e_th: float = 0.5
    v_max: float = V_MAX
    omega_max: float = OMEGA_MAX
    accel_v: float = 0.5
    accel_omega: float = 2.0
    dv: float = 0.1
    domega: float = 0.1
    dt: float = 0.4
    T: int = T_DEFAULT
    clearance: float = 0.3
    d_clip: float = 3.0
    window: float = 10.0                  # side of the top-down trajectory raster, metres
    image_size: int = 64
    chunk: int = 8                        # veto candidates evaluated per model call
    goal_radius: float = 0.5              # rollouts entering this disc count as perfectly aligned

    def __post_init__(self):
        if any(g < 0 for g in self.gamma):
            raise ValueError("objective weights must be non-negative")
        if not (0.0 <= self.r_th <= 1.0 and 0.0 <= self.e_th <= 1.0):
            raise ValueError("thresholds must lie in [0, 1]")


@dataclass(frozen=True)
class PlanResult:
    """Outcome of one planning cycle; ``recovery`` marks the rotate-in-place fallback."""

    command: VelocityCommand
    recovery: bool
    vetoes: int
    r_point: float
    admissible_gated: bool


@dataclass
class VelocitySpace:
    v: np.ndarray                          # (K,) candidate linear velocities
    omega: np.ndarray                      # (K,) candidate angular velocities
    in_dynamic: np.ndarray
    in_admissible: np.ndarray
    use_admissible: bool
    extras: dict = field(default_factory=dict)

    @property
    def restricted(self) -> np.ndarray:
        m = self.in_dynamic.copy()
        if self.use_admissible:
            m &= self.in_admissible
        return m

    def commands(self, mask=None) -> list[VelocityCommand]:
        mask = self.restricted if mask is None else mask
        return [VelocityCommand(v, w) for v, w in zip(self.v[mask], self.omega[mask])]


# --------------------------------------------------------------------------
# Rollouts


def rollout_arrays(x, y, theta, v, omega, dt: float, T: int):
    """Vectorised constant-twist rollout; returns arrays of shape (..., T)."""
    v = np.asarray(v, dtype=np.float64)[..., None]
    omega = np.asarray(omega, dtype=np.float64)[..., None]
    t = dt * np.arange(1, T + 1)
    th = theta + omega * t
    turning = np.abs(omega) > ARC_EPS
    safe_w = np.where(turning, omega, 1.0)
    xa = x + v / safe_w * (np.sin(th) - math.sin(theta))
    ya = y - v / safe_w * (np.cos(th) - math.cos(theta))
    xs = x + v * t * math.cos(theta)
    ys = y + v * t * math.sin(theta)
    return np.where(turning, xa, xs), np.where(turning, ya, ys), th


def predict_trajectory(pose: Pose2D, cmd: VelocityCommand, dt: float, T: int = T_DEFAULT) -> list[Pose2D]:
    """Constant-(v, omega) unicycle rollout of T poses, exact on arcs."""
    xs, ys, ths = rollout_arrays(pose.x, pose.y, pose.theta, cmd.v, cmd.omega, dt, T)
    return [Pose2D(a, b, c) for a, b, c in zip(xs, ys, ths)]


def rasterize_trajectory(pose: Pose2D, traj, size: int = 64, window: float = 10.0) -> ImageRaster:
    """Draw the trajectory into a robot-frame top-down raster.

    The window spans ``window`` metres ahead and ``window/2`` to either side.
    The robot sits on the bottom row at column ``size // 2`` looking up the
    image; lateral offsets round symmetrically about that column so mirrored
    paths give mirrored rasters. The path is a 1-pixel polyline (255 on 0)
    starting at the robot; only points strictly ahead of the robot are drawn,
    so a path that stays behind it (or turns in place) leaves the raster empty.
    """
    img = np.zeros((size, size), dtype=np.uint8)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    px = np.array([pose.x] + [p.x for p in traj]) - pose.x
    py = np.array([pose.y] + [p.y for p in traj]) - pose.y
    fwd = c * px + s * py
    left = -s * px + c * py
    scale = size / window
    center = size // 2
    if len(fwd) < 2:
        return ImageRaster(img[:, :, None])
    df, dl = np.diff(fwd), np.diff(left)
    # samples per segment: at least two per pixel of travel, endpoints included
    n = np.ceil(np.maximum(np.abs(df), np.abs(dl)) * scale * 2).astype(np.int64) + 1
    seg = np.repeat(np.arange(len(n)), n)
    k = np.arange(len(seg)) - np.repeat(np.cumsum(n) - n, n)
    ts = np.where(n[seg] > 1, k / np.maximum(n[seg] - 1, 1), 0.0)
    f = (fwd[seg] + ts * df[seg]) * scale
    l = (left[seg] + ts * dl[seg]) * scale
    rr = (size - 1) - np.sign(f) * np.floor(np.abs(f) + 0.5)
    cc = center - np.sign(l) * np.floor(np.abs(l) + 0.5)
    ok = (f > 0) & (rr >= 0) & (cc >= 0) & (cc < size)
    img[rr[ok].astype(np.int64), cc[ok].astype(np.int64)] = 255
    return ImageRaster(img[:, :, None])


# --------------------------------------------------------------------------
# Velocity spaces


def velocity_grid(config: PlannerConfig) -> tuple[np.ndarray, np.ndarray]:
    nv = int(round(config.v_max / config.dv))
    nw = int(round(config.omega_max / config.domega))
    vs = np.round(np.arange(nv + 1) * config.dv, 12)
    ws = np.round(np.arange(-nw, nw + 1) * config.domega, 12)
    V, Wg = np.meshgrid(vs, ws, indexing="ij")
    return V.ravel(), Wg.ravel()


def dynamic_window(current: VelocityCommand, v, omega, config: PlannerConfig) -> np.ndarray:
    tol = 1e-9
    return ((np.abs(v - current.v) <= config.accel_v * config.dt + tol)
            & (np.abs(omega - current.omega) <= config.accel_omega * config.dt + tol))


def clearance_along(pose: Pose2D, v, omega, obstacles: np.ndarray, config: PlannerConfig) -> np.ndarray:
    """Closest obstacle distance to each candidate's rollout (inf if none)."""
    if len(obstacles) == 0:
        return np.full(np.shape(v), np.inf)
    xs, ys, _ = rollout_arrays(pose.x, pose.y, pose.theta, v, omega, config.dt, config.T)
    xs = np.concatenate([np.full(xs.shape[:-1] + (1,), pose.x), xs], axis=-1)
    ys = np.concatenate([np.full(ys.shape[:-1] + (1,), pose.y), ys], axis=-1)
    # densify so fast rollouts cannot hop over a point
    sub = 4
    f = np.arange(sub) / sub
    dx = np.diff(xs, axis=-1)
    dy = np.diff(ys, axis=-1)
    px = (xs[..., :-1, None] + dx[..., None] * f).reshape(xs.shape[:-1] + (-1,))
    py = (ys[..., :-1, None] + dy[..., None] * f).reshape(ys.shape[:-1] + (-1,))
    px = np.concatenate([px, xs[..., -1:]], axis=-1)
    py = np.concatenate([py, ys[..., -1:]], axis=-1)
    dist, _ = cKDTree(obstacles).query(np.stack([px.ravel(), py.ravel()], axis=1))
    return dist.reshape(px.shape).min(axis=-1)


def cloud_obstacles(cloud: PointCloud, pose: Pose2D) -> np.ndarray:
    """Planar world-frame positions of the cloud points."""
    if len(cloud) == 0:
        return np.zeros((0, 2))
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    p = cloud.points
    return np.stack([pose.x + c * p[:, 0] - s * p[:, 1], pose.y + s * p[:, 0] + c * p[:, 1]], axis=1)


def restricted_space(current_vel: VelocityCommand, r_point: float, cloud: PointCloud, config: PlannerConfig,
                     pose: Pose2D = Pose2D(0.0, 0.0, 0.0), always_admissible: bool = False) -> VelocitySpace:
    """V_r = V_s & V_d, intersected with V_a unless the cloud is unreliable.

    The cloud is in the sensor frame of ``pose``; clearances are computed in
    the world frame along each candidate rollout.
    """
    v, w = velocity_grid(config)
    in_d = dynamic_window(current_vel, v, w, config)
    use_a = always_admissible or r_point > config.r_th
    clear = np.full(v.shape, np.inf)
    in_a = np.ones(v.shape, dtype=bool)
    if use_a:
        cand = in_d
        clear[cand] = clearance_along(pose, v[cand], w[cand], cloud_obstacles(cloud, pose), config)
        in_a = clear > config.clearance
    return VelocitySpace(v, w, in_d, in_a, use_a, {"clearance": clear})


# --------------------------------------------------------------------------
# Objective


def objective_terms(pose: Pose2D, goal, v, omega, clearance, config: PlannerConfig):
    """Normalised heading, clearance and velocity terms, each in [0, 1]."""
    xs, ys, ths = rollout_arrays(pose.x, pose.y, pose.theta, v, omega, config.dt, config.T)
    ex, ey, eth = xs[..., -1], ys[..., -1], ths[..., -1]
    bearing = np.arctan2(goal[1] - ey, goal[0] - ex)
    heading = 1.0 - np.abs(normalize_angles(bearing - eth)) / math.pi
    # a rollout that drives through the goal disc would stop there; its endpoint
    # heading is meaningless, so score it as fully aligned
    arrives = np.any(np.hypot(xs - goal[0], ys - goal[1]) <= config.goal_radius, axis=-1)
    heading = np.where(arrives, 1.0, heading)
    dist = np.minimum(1.0, np.asarray(clearance, dtype=np.float64) / config.d_clip)
    vel = np.asarray(v, dtype=np.float64) / config.v_max
    return heading, dist, vel


def objective(cmd: VelocityCommand, pose: Pose2D, goal, cloud: PointCloud | None, config: PlannerConfig,
              gated: bool = False) -> float:
    """DWA score of one command; the clearance term is 1 when V_a is gated off."""
    if gated or cloud is None:
        clear = np.inf
    else:
        clear = clearance_along(pose, np.array([cmd.v]), np.array([cmd.omega]),
                                cloud_obstacles(cloud, pose), config)[0]
    h, d, vel = objective_terms(pose, goal, np.array([cmd.v]), np.array([cmd.omega]), np.array([clear]), config)
    g1, g2, g3 = config.gamma
    return float(g1 * h[0] + g2 * d[0] + g3 * vel[0])


def rank_candidates(space: VelocitySpace, pose: Pose2D, goal, config: PlannerConfig) -> tuple[np.ndarray, np.ndarray]:
    """Indices of V_r sorted by descending score; ties prefer larger v, then smaller |omega|, then smaller omega."""
    idx = np.nonzero(space.restricted)[0]
    if len(idx) == 0:
        return idx, np.zeros(0)
    clear = space.extras["clearance"][idx] if space.use_admissible else np.full(len(idx), np.inf)
    h, d, vel = objective_terms(pose, goal, space.v[idx], space.omega[idx], clear, config)
    g1, g2, g3 = config.gamma
    q = g1 * h + g2 * d + g3 * vel
    order = np.lexsort((space.omega[idx], np.abs(space.omega[idx]), -space.v[idx], -q))
    return idx[order], q[order]


def recovery_command(pose: Pose2D, goal, config: PlannerConfig) -> VelocityCommand:
    bearing = normalize_angle(math.atan2(goal[1] - pose.y, goal[0] - pose.x) - pose.theta)
    return VelocityCommand(0.0, math.copysign(config.omega_max / 2.0, bearing if bearing != 0 else 1.0))


def plan_step(pose: Pose2D, current_vel: VelocityCommand, goal, obs: Observation, model, config: PlannerConfig,
              reliability: tuple[float, float] | None = None, always_admissible: bool = False) -> PlanResult:
    """Pick the best-scoring command whose predicted success vector passes the veto.

    Candidates are tried in descending score order; a candidate is accepted
    when both the minimum and the mean of its predicted vector reach ``e_th``.
    When every candidate is rejected the robot rotates in place toward the goal.
    """
    if reliability is None:
        reliability = model.reliability(obs) if hasattr(model, "reliability") else (1.0, 1.0)
    r_point = reliability[1]
    space = restricted_space(current_vel, r_point, obs.cloud, config, pose, always_admissible)
    order, _ = rank_candidates(space, pose, goal, config)
    evaluated = 0
    for s in range(0, len(order), config.chunk):
        chunk = order[s:s + config.chunk]
        images = []
        for k in chunk:
            traj = predict_trajectory(pose, VelocityCommand(space.v[k], space.omega[k]), config.dt, config.T)
            images.append(rasterize_trajectory(pose, traj, config.image_size, config.window))
        probs = model.predict_many(obs, images, reliability)
        for j, k in enumerate(chunk):
            evaluated += 1
            p = probs[j]
            if p.min() >= config.e_th and p.mean() >= config.e_th:
                return PlanResult(VelocityCommand(space.v[k], space.omega[k]), False, evaluated - 1, r_point,
                                  not space.use_admissible)
    return PlanResult(recovery_command(pose, goal, config), True, evaluated, r_point, not space.use_admissible)

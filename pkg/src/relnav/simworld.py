"""Desk-scale 2.5D grid worlds: generation, unicycle stepping and sensor synthesis.

World frame: x grows with column index, y with row index; cell ``(i, j)``
covers ``[j*cs, (j+1)*cs) x [i*cs, (i+1)*cs)``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .core import (OMEGA_MAX, V_MAX, ImageRaster, PointCloud, Pose2D, SuccessVector, VelocityCommand,
                   make_generator, normalize_angle)

FREE, SOLID, PLIABLE, NONTRAV = 0, 1, 2, 3
CLASS_CHARS = {FREE: ".", SOLID: "#", PLIABLE: "g", NONTRAV: "x"}
CHAR_CLASSES = {c: k for k, c in CLASS_CHARS.items()}

DIFFICULTIES = ("open", "cluttered", "dark", "occluded", "combined")

# Frozen preset table (version 1). Fractions are of interior cells; a clutter
# band spans the full map width when ``band`` is set.
PRESETS_VERSION = 1
PRESETS = {
    "open":      dict(band=False, pliable=0.00, nontrav=0.00, pillars=0, illumination=1.00, blur=0, occlusion=0.00),
    "cluttered": dict(band=True,  pliable=0.10, nontrav=0.008, pillars=3, illumination=1.00, blur=0, occlusion=0.00),
    "dark":      dict(band=False, pliable=0.06, nontrav=0.03, pillars=5, illumination=0.15, blur=0, occlusion=0.00),
    "occluded":  dict(band=False, pliable=0.06, nontrav=0.03, pillars=5, illumination=1.00, blur=0, occlusion=0.40),
    "combined":  dict(band=True,  pliable=0.08, nontrav=0.04, pillars=3, illumination=0.40, blur=1, occlusion=0.25),
}

# Object heights (m) used by the camera; clutter is shorter than the camera.
CLASS_HEIGHT = np.array([0.0, 1.5, 0.55, 0.65])
CLASS_RGB = np.array([
    [120.0, 104.0, 84.0],   # free ground
    [175.0, 175.0, 180.0],  # solid
    [96.0, 190.0, 70.0],    # pliable (grass)
    [70.0, 52.0, 30.0],     # non-traversable brush
])
SKY_RGB = np.array([200.0, 215.0, 235.0])
OCCLUSION_VALUE = 8


@dataclass(frozen=True)
class SimConfig:
    width: int = 32
    height: int = 32
    cell_size: float = 0.5
    goal_radius: float = 0.5
    stuck_steps: int = 5
    max_steps: int = 400
    nontrav_drag: float = 0.2
    v_max: float = V_MAX
    omega_max: float = OMEGA_MAX
    image_size: int = 64
    camera_height: float = 0.8
    camera_fov: float = math.radians(90.0)
    horizon_row: float = 22.0
    lidar_rings: int = 4
    lidar_azimuths: int = 180
    lidar_range: float = 10.0
    lidar_noise: float = 0.01
    lidar_elevations: tuple = (-0.06, -0.02, 0.02, 0.06)
    lidar_height: float = 0.5
    p_scatter_pliable: float = 0.6
    p_scatter_nontrav: float = 0.8
    scatter_radius: float = 0.5
    max_world_attempts: int = 200


@dataclass(frozen=True, eq=False)
class TerrainGrid:
    cells: np.ndarray
    cell_size: float = 0.5
    illumination: float = 1.0
    blur_radius: int = 0
    occlusion_patches: tuple = ()
    start: tuple = (1.0, 1.0)
    goal: tuple = (2.0, 2.0)

    def __post_init__(self):
        c = np.array(self.cells, dtype=np.int8)
        if c.ndim != 2 or c.size == 0 or c.min() < 0 or c.max() > NONTRAV:
            raise ValueError("cells must be a non-empty 2D array of class codes")
        c.setflags(write=False)
        object.__setattr__(self, "cells", c)
        if not 0.0 <= self.illumination <= 1.0:
            raise ValueError("illumination must lie in [0, 1]")
        if self.blur_radius < 0:
            raise ValueError("blur radius must be >= 0")
        object.__setattr__(self, "occlusion_patches", tuple(tuple(int(v) for v in p) for p in self.occlusion_patches))
        object.__setattr__(self, "start", (float(self.start[0]), float(self.start[1])))
        object.__setattr__(self, "goal", (float(self.goal[0]), float(self.goal[1])))

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(math.floor(y / self.cell_size)), int(math.floor(x / self.cell_size))

    def in_bounds(self, x: float, y: float) -> bool:
        i, j = self.cell_of(x, y)
        return 0 <= i < self.height and 0 <= j < self.width

    def class_at(self, x, y, outside: int = -1):
        """Cell class at world coordinates; ``outside`` where off-grid. Vectorized."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        i = np.floor(y / self.cell_size).astype(np.int64)
        j = np.floor(x / self.cell_size).astype(np.int64)
        ok = (i >= 0) & (i < self.height) & (j >= 0) & (j < self.width)
        out = np.full(np.shape(x), outside, dtype=np.int64)
        out[ok] = self.cells[i[ok], j[ok]]
        return out if out.ndim else int(out)

    def __eq__(self, other):
        return (isinstance(other, TerrainGrid) and np.array_equal(self.cells, other.cells)
                and self.cell_size == other.cell_size and self.illumination == other.illumination
                and self.blur_radius == other.blur_radius and self.occlusion_patches == other.occlusion_patches
                and self.start == other.start and self.goal == other.goal)

    __hash__ = None


RUNNING, REACHED_GOAL, COLLIDED, STUCK, TIMEOUT = "running", "reached_goal", "collided", "stuck", "timeout"


@dataclass(frozen=True)
class EpisodeState:
    pose: Pose2D
    goal: tuple
    elapsed_steps: int = 0
    status: str = RUNNING
    clutter_steps: int = 0


# --------------------------------------------------------------------------
# World generation


def traversable_path_exists(cells: np.ndarray, start: tuple[int, int], goal: tuple[int, int]) -> bool:
    """4-connected BFS over free and pliable cells."""
    ok = (cells == FREE) | (cells == PLIABLE)
    if not (ok[start] and ok[goal]):
        return False
    seen = np.zeros_like(ok)
    seen[start] = True
    queue = deque([start])
    h, w = cells.shape
    while queue:
        i, j = queue.popleft()
        if (i, j) == goal:
            return True
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a, b = i + di, j + dj
            if 0 <= a < h and 0 <= b < w and ok[a, b] and not seen[a, b]:
                seen[a, b] = True
                queue.append((a, b))
    return False


def _blobs(rng, cells, free_mask, target, cls, rows, max_size=2):
    """Stamp small rectangular blobs of ``cls`` until ``target`` cells are covered."""
    h, w = cells.shape
    placed, guard = 0, 0
    while placed < target and guard < 10 * target + 50:
        guard += 1
        bh, bw = rng.integers(1, max_size + 1, size=2)
        i = int(rng.integers(rows[0], max(rows[0] + 1, rows[1] - bh + 1)))
        j = int(rng.integers(1, w - 1 - bw + 1))
        block = (slice(i, i + bh), slice(j, j + bw))
        m = free_mask[block] & (cells[block] == FREE)
        cells[block][m] = cls
        placed += int(m.sum())


def generate_world(seed: int, difficulty: str, config: SimConfig = SimConfig()) -> TerrainGrid:
    """Rejection-sample a world of the given difficulty with a traversable start-goal path."""
    if difficulty not in PRESETS:
        raise ValueError(f"unknown difficulty {difficulty!r}")
    preset = PRESETS[difficulty]
    h, w, cs = config.height, config.width, config.cell_size
    for attempt in range(config.max_world_attempts):
        rng = make_generator(seed, DIFFICULTIES.index(difficulty), attempt)
        cells = np.zeros((h, w), dtype=np.int8)
        cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = SOLID

        # start/goal keep ~4 m of free margin to the border so rollouts stay inside
        si, sj = 3, int(rng.integers(w // 4, w - w // 4))
        gi, gj = h - 9, int(rng.integers(w // 4, w - w // 4))
        protect = np.ones((h, w), dtype=bool)
        protect[max(si - 1, 0):si + 2, max(sj - 1, 0):sj + 2] = False
        protect[max(gi - 1, 0):gi + 2, max(gj - 1, 0):gj + 2] = False
        rows = (si + 3, gi - 2)

        interior = (h - 2) * (w - 2)
        if preset["band"]:
            # full-width pliable band between start and goal rows
            b0 = int(rng.integers(si + 4, si + 7))
            b1 = min(b0 + int(rng.integers(5, 9)), gi - 2)
            band = np.zeros((h, w), dtype=bool)
            band[b0:b1, 1:w - 1] = True
            _blobs(rng, cells, protect, int(preset["nontrav"] * interior), NONTRAV, (b0, b1), max_size=2)
            cells[band & protect & (cells == FREE)] = PLIABLE
            _blobs(rng, cells, protect, int(preset["pliable"] * interior), PLIABLE, rows, max_size=3)
        else:
            _blobs(rng, cells, protect, int(preset["pliable"] * interior), PLIABLE, rows, max_size=3)
            _blobs(rng, cells, protect, int(preset["nontrav"] * interior), NONTRAV, rows, max_size=2)
        for _ in range(preset["pillars"]):
            i = int(rng.integers(*rows))
            j = int(rng.integers(2, w - 3))
            block = (slice(i, i + 2), slice(j, j + 1 + int(rng.integers(0, 2))))
            cells[block][protect[block]] = SOLID

        if not traversable_path_exists(cells, (si, sj), (gi, gj)):
            continue

        patches = []
        if preset["occlusion"] > 0:
            n = config.image_size
            side = int(round(n * math.sqrt(preset["occlusion"])))
            r0 = int(rng.integers(0, n - side + 1))
            c0 = int(rng.integers(0, n - side + 1))
            patches.append((r0, c0, r0 + side, c0 + side))
        return TerrainGrid(cells=cells, cell_size=cs, illumination=preset["illumination"],
                           blur_radius=preset["blur"], occlusion_patches=tuple(patches),
                           start=((sj + 0.5) * cs, (si + 0.5) * cs), goal=((gj + 0.5) * cs, (gi + 0.5) * cs))
    raise RuntimeError(f"no traversable {difficulty} world for seed {seed} after {config.max_world_attempts} attempts")


def initial_state(grid: TerrainGrid, heading_noise: float = 0.0) -> EpisodeState:
    sx, sy = grid.start
    gx, gy = grid.goal
    return EpisodeState(Pose2D(sx, sy, math.atan2(gy - sy, gx - sx) + heading_noise), grid.goal)


# --------------------------------------------------------------------------
# Kinematics


def step_robot(state: EpisodeState, cmd: VelocityCommand, dt: float, grid: TerrainGrid,
               config: SimConfig = SimConfig()) -> EpisodeState:
    """Advance one unicycle step and update the episode status."""
    if state.status != RUNNING:
        raise ValueError(f"episode already terminated ({state.status})")
    cmd.check_bounds(config.v_max, config.omega_max)
    p = state.pose
    v = cmd.v
    if grid.class_at(p.x, p.y) == NONTRAV:
        v *= config.nontrav_drag
    dx, dy = v * math.cos(p.theta) * dt, v * math.sin(p.theta) * dt
    new_pose = p.moved(dx, dy, cmd.omega * dt)
    steps = state.elapsed_steps + 1

    # sweep the segment so thin obstacles are not skipped
    n_sub = max(1, int(math.ceil(math.hypot(dx, dy) / 0.05)))
    f = np.arange(1, n_sub + 1) / n_sub
    cls = grid.class_at(p.x + f * dx, p.y + f * dy)
    hit = np.nonzero((cls == SOLID) | (cls < 0))[0]
    if len(hit):
        k = f[hit[0]]
        return replace(state, pose=Pose2D(p.x + k * dx, p.y + k * dy, new_pose.theta),
                       elapsed_steps=steps, status=COLLIDED)

    in_clutter = grid.class_at(new_pose.x, new_pose.y) == NONTRAV
    clutter_steps = state.clutter_steps + 1 if in_clutter else 0
    status = RUNNING
    if math.hypot(new_pose.x - state.goal[0], new_pose.y - state.goal[1]) <= config.goal_radius:
        status = REACHED_GOAL
    elif clutter_steps >= config.stuck_steps:
        status = STUCK
    elif steps >= config.max_steps:
        status = TIMEOUT
    return EpisodeState(new_pose, state.goal, steps, status, clutter_steps)


def ground_truth_labels(grid: TerrainGrid, trajectory) -> SuccessVector:
    """Binary per-pose success labels; the first failure is absorbing."""
    xs = np.array([p.x for p in trajectory], dtype=np.float64)
    ys = np.array([p.y for p in trajectory], dtype=np.float64)
    cls = grid.class_at(xs, ys)
    ok = (cls == FREE) | (cls == PLIABLE)
    return SuccessVector(np.cumprod(ok).astype(np.float64))


# --------------------------------------------------------------------------
# Camera


def _texture(cls: np.ndarray, u: np.ndarray, z: np.ndarray, wx: np.ndarray, wy: np.ndarray) -> np.ndarray:
    """Intensity offset per sample; u runs along the surface, z is height."""
    t = np.zeros(cls.shape)
    solid = cls == SOLID
    checker = (np.floor(u / 0.5) + np.floor(z / 0.5)) % 2
    t[solid] = np.where(checker[solid] > 0, 45.0, -45.0)
    pl = cls == PLIABLE
    t[pl] = np.where((np.floor(u[pl] / 0.12) % 2) > 0, 30.0, -30.0)
    nt = cls == NONTRAV
    blot = (np.floor(wx / 0.2) * 7 + np.floor(wy / 0.2) * 3) % 3
    t[nt] = (blot[nt] - 1.0) * 30.0
    return t


def render_camera(grid: TerrainGrid, pose: Pose2D, config: SimConfig = SimConfig()) -> ImageRaster:
    """Forward perspective raster of the grid seen from ``pose``, then degraded."""
    n = config.image_size
    f = (n / 2.0) / math.tan(config.camera_fov / 2.0)
    hc = config.camera_height
    cols = np.arange(n)
    rel = np.arctan((n / 2.0 - cols - 0.5) / f)           # left of image = +angle
    step = 0.04
    d = np.arange(0.2, config.lidar_range, step)
    phi = pose.theta + rel
    wx = pose.x + np.cos(phi)[:, None] * d[None, :]
    wy = pose.y + np.sin(phi)[:, None] * d[None, :]
    cls = grid.class_at(wx, wy, outside=FREE)
    depth = d[None, :] * np.cos(rel)[:, None]
    H = CLASS_HEIGHT[cls]
    y_top = config.horizon_row + f * (hc - H) / depth    # (cols, samples)

    rows = np.arange(n) + 0.5
    covers = y_top[None, :, :] <= rows[:, None, None]    # (rows, cols, samples)
    any_cov = covers.any(axis=2)
    first = covers.argmax(axis=2)
    cc = np.broadcast_to(cols[None, :], first.shape)
    sel_cls = cls[cc, first]
    sel_depth = depth[cc, first]
    sel_x, sel_y = wx[cc, first], wy[cc, first]
    # world height of the surface point imaged by this pixel
    z = np.clip(hc - (rows[:, None] - config.horizon_row) * sel_depth / f, 0.0, None)
    u = sel_x + sel_y
    tex = _texture(sel_cls, u, z, sel_x, sel_y)
    img = CLASS_RGB[sel_cls] + tex[:, :, None]
    img = np.where(any_cov[:, :, None], img, SKY_RGB[None, None, :])

    img = img * grid.illumination
    if grid.blur_radius > 0:
        k = 2 * grid.blur_radius + 1
        img = ndimage.uniform_filter(img, size=(k, k, 1), mode="nearest")
    img = np.clip(np.rint(img), 0, 255)
    for r0, c0, r1, c1 in grid.occlusion_patches:
        img[max(r0, 0):r1, max(c0, 0):c1, :] = OCCLUSION_VALUE
    return ImageRaster(img.astype(np.uint8))


# --------------------------------------------------------------------------
# LiDAR


def grid_traversal(grid: TerrainGrid, ox: float, oy: float, dx, dy, max_t: float):
    """Cells crossed by each ray, in order, by exact grid traversal.

    Returns ``(cls, t_in, t_out)`` of shape (rays, K): the class of the k-th
    cell crossed (FREE off-grid) and the ray parameters where the ray enters
    and leaves it, clipped to ``max_t``. Slots past the end of a ray have
    ``t_in >= max_t``.
    """
    cs = grid.cell_size
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    A = dx.shape[0]
    K = int(math.ceil(max_t / cs * 2.0)) + 3
    i = np.full(A, int(math.floor(oy / cs)), dtype=np.int64)
    j = np.full(A, int(math.floor(ox / cs)), dtype=np.int64)
    sx = np.where(dx > 0, 1, -1)
    sy = np.where(dy > 0, 1, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_dx = np.where(dx != 0, cs / np.abs(dx), np.inf)
        t_dy = np.where(dy != 0, cs / np.abs(dy), np.inf)
        t_mx = np.where(dx != 0, ((j + (dx > 0)) * cs - ox) / dx, np.inf)
        t_my = np.where(dy != 0, ((i + (dy > 0)) * cs - oy) / dy, np.inf)
    cls = np.zeros((A, K), dtype=np.int64)
    t_in = np.full((A, K), max_t)
    t_out = np.full((A, K), max_t)
    t = np.zeros(A)
    for k in range(K):
        live = t < max_t
        ok = live & (i >= 0) & (i < grid.height) & (j >= 0) & (j < grid.width)
        cls[ok, k] = grid.cells[i[ok], j[ok]]
        step_x = t_mx <= t_my
        t_next = np.minimum(np.where(step_x, t_mx, t_my), max_t)
        t_in[live, k] = t[live]
        t_out[live, k] = t_next[live]
        t = t_next
        j = np.where(step_x, j + sx, j)
        i = np.where(step_x, i, i + sy)
        t_mx = np.where(step_x, t_mx + t_dx, t_mx)
        t_my = np.where(step_x, t_my, t_my + t_dy)
    return cls, t_in, t_out


def render_lidar(grid: TerrainGrid, pose: Pose2D, seed: int = 0, config: SimConfig = SimConfig()) -> PointCloud:
    """Ray-cast a multi-ring scan in the sensor frame (x forward, y left, z up).

    Each ray returns the exact entry point of the first solid cell within
    range. Every clutter cell crossed before it scatters the ray with the
    class's probability, returning a point drawn uniformly along the ray's
    span inside that cell plus an isotropic jitter. Rings differ in elevation
    and in their scatter draws.
    """
    rng = make_generator(seed, 0x11DA)
    R, A = config.lidar_rings, config.lidar_azimuths
    az = -math.pi + (np.arange(A) + 0.5) * (2.0 * math.pi / A)
    ang = pose.theta + az
    cls, t_in, t_out = grid_traversal(grid, pose.x, pose.y, np.cos(ang), np.sin(ang), config.lidar_range)
    K = cls.shape[1]
    within = t_in < config.lidar_range
    is_solid = (cls == SOLID) & within
    has_solid = is_solid.any(axis=1)
    first_solid = np.where(has_solid, is_solid.argmax(axis=1), K)
    hit_t = np.where(has_solid, t_in[np.arange(A), np.minimum(first_solid, K - 1)], np.inf)

    before = np.arange(K)[None, :] < first_solid[:, None]
    events = ((cls == PLIABLE) | (cls == NONTRAV)) & within & before
    p_event = np.where(cls == NONTRAV, config.p_scatter_nontrav, config.p_scatter_pliable)

    pts, rings = [], []
    for r, elev in enumerate(config.lidar_elevations[:R]):
        fire = events & (rng.random(events.shape) < p_event)
        has_fire = fire.any(axis=1)
        k = fire.argmax(axis=1)
        along = rng.random(A)
        jitter = rng.uniform(-config.scatter_radius, config.scatter_radius, size=(A, 3))
        noise = rng.normal(0.0, config.lidar_noise, size=(A, 3)) if config.lidar_noise > 0 else np.zeros((A, 3))
        a0, a1 = t_in[np.arange(A), k], t_out[np.arange(A), k]
        t = np.where(has_fire, a0 + along * (a1 - a0), hit_t)
        keep = has_fire | has_solid
        local = np.stack([t * np.cos(az), t * np.sin(az), t * math.tan(elev)], axis=1)
        local = local + np.where(has_fire[:, None], jitter, noise)
        pts.append(local[keep])
        rings.append(np.full(int(keep.sum()), r, dtype=np.int64))
    return PointCloud(np.concatenate(pts), np.concatenate(rings), R)


def cloud_to_world(cloud: PointCloud, pose: Pose2D) -> np.ndarray:
    """Planar world coordinates (N, 2) of a sensor-frame cloud."""
    if len(cloud) == 0:
        return np.zeros((0, 2))
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    p = cloud.points
    return np.stack([pose.x + c * p[:, 0] - s * p[:, 1], pose.y + s * p[:, 0] + c * p[:, 1]], axis=1)


# --------------------------------------------------------------------------
# Plain-text world files


def world_to_text(grid: TerrainGrid) -> str:
    """Serialize a grid.

    Header ``width height cell_size illumination blur_radius``, then one line
    per cell row (row 0 first) using ``.`` free, ``#`` solid, ``g`` pliable,
    ``x`` non-traversable; trailing records ``start x y``, ``goal x y`` and
    ``occlusion r0 c0 r1 c1``.
    """
    lines = [f"{grid.width} {grid.height} {grid.cell_size!r} {grid.illumination!r} {grid.blur_radius}"]
    for row in grid.cells:
        lines.append("".join(CLASS_CHARS[int(c)] for c in row))
    lines.append(f"start {grid.start[0]!r} {grid.start[1]!r}")
    lines.append(f"goal {grid.goal[0]!r} {grid.goal[1]!r}")
    for p in grid.occlusion_patches:
        lines.append("occlusion " + " ".join(str(v) for v in p))
    return "\n".join(lines) + "\n"


def world_from_text(text: str) -> TerrainGrid:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    w, h, cs, illum, blur = lines[0].split()
    w, h = int(w), int(h)
    rows = lines[1:1 + h]
    if len(rows) != h or any(len(r) != w for r in rows):
        raise ValueError("grid rows do not match header dimensions")
    try:
        cells = np.array([[CHAR_CLASSES[ch] for ch in r] for r in rows], dtype=np.int8)
    except KeyError as e:
        raise ValueError(f"unknown cell character {e}") from None
    start, goal, patches = (0.0, 0.0), (0.0, 0.0), []
    for rec in lines[1 + h:]:
        kind, *vals = rec.split()
        if kind == "start":
            start = (float(vals[0]), float(vals[1]))
        elif kind == "goal":
            goal = (float(vals[0]), float(vals[1]))
        elif kind == "occlusion":
            patches.append(tuple(int(v) for v in vals))
        else:
            raise ValueError(f"unknown record {kind!r}")
    return TerrainGrid(cells, float(cs), float(illum), int(blur), tuple(patches), start, goal)

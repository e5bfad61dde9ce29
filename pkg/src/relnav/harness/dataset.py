"""Recorded (observation, label) samples and their binary container format.

File layout (all integers little-endian)::

    b"RNDS" | u32 version | u32 header_len | header JSON (utf-8)
    repeated: u32 record_len | zlib(record)

and each decompressed record::

    i64 world_seed | u8 difficulty | u32 episode | u32 step
    u16 h | u16 w | h*w*3 image bytes | h*w trajectory-image bytes
    u16 T | T*(v, omega) f64 | u32 n_points | n*3 f64 points | n u8 rings
    T u8 labels

The header records version, T, image size, ring count, the resolved config
hash and the record count.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from ..core import ImageRaster, Observation, PointCloud, SuccessVector, VelocityCommand, VelocityHistory
from ..core import make_generator, normalize_angle
from ..planner import PlannerConfig, predict_trajectory, rasterize_trajectory
from ..simworld import (DIFFICULTIES, RUNNING, SimConfig, generate_world, ground_truth_labels, initial_state,
                        render_camera, render_lidar, step_robot)

MAGIC = b"RNDS"
EPISODE_STRIDE = 100_000          # world seed = recording seed * stride + episode index
VERSION = 1


@dataclass(frozen=True, eq=False)
class Sample:
    observation: Observation
    label: SuccessVector
    world_seed: int
    difficulty: str
    episode: int
    step: int

    @property
    def meta(self) -> tuple:
        return (self.world_seed, self.difficulty, self.step)


def lidar_seed(world_seed: int, step: int) -> int:
    return world_seed * 1_000_003 + step


def _encode_record(s: Sample) -> bytes:
    o = s.observation
    h, w = o.image.height, o.image.width
    vel = o.vel_history.as_array()
    cloud = o.cloud
    buf = io.BytesIO()
    buf.write(struct.pack("<qBII", s.world_seed, DIFFICULTIES.index(s.difficulty), s.episode, s.step))
    buf.write(struct.pack("<HH", h, w))
    buf.write(o.image.data.tobytes())
    buf.write(o.traj_image.data.tobytes())
    buf.write(struct.pack("<H", len(vel)))
    buf.write(vel.astype("<f8").tobytes())
    buf.write(struct.pack("<I", len(cloud)))
    buf.write(cloud.points.astype("<f8").tobytes())
    buf.write(cloud.ring.astype(np.uint8).tobytes())
    buf.write(np.asarray(s.label.probs, dtype=np.uint8).tobytes())
    return buf.getvalue()


def _decode_record(raw: bytes, num_rings: int) -> Sample:
    mv = memoryview(raw)
    off = 0

    def take(n):
        nonlocal off
        out = mv[off:off + n]
        off += n
        return out

    seed, diff, episode, step = struct.unpack("<qBII", take(17))
    h, w = struct.unpack("<HH", take(4))
    image = np.frombuffer(take(h * w * 3), dtype=np.uint8).reshape(h, w, 3)
    traj = np.frombuffer(take(h * w), dtype=np.uint8).reshape(h, w, 1)
    (T,) = struct.unpack("<H", take(2))
    vel = np.frombuffer(take(16 * T), dtype="<f8").reshape(T, 2)
    (n,) = struct.unpack("<I", take(4))
    pts = np.frombuffer(take(24 * n), dtype="<f8").reshape(n, 3)
    rings = np.frombuffer(take(n), dtype=np.uint8).astype(np.int64)
    label = np.frombuffer(take(T), dtype=np.uint8).astype(np.float64)
    if off != len(raw):
        raise ValueError("trailing bytes in dataset record")
    obs = Observation(ImageRaster(image), PointCloud(pts, rings, num_rings),
                      VelocityHistory(tuple(VelocityCommand(a, b) for a, b in vel)), ImageRaster(traj))
    return Sample(obs, SuccessVector(label), seed, DIFFICULTIES[diff], episode, step)


def write_dataset(path, samples, header: dict | None = None) -> str:
    """Write samples; returns the SHA-256 of the file contents."""
    samples = list(samples)
    T = len(samples[0].label) if samples else 0
    size = samples[0].observation.image.height if samples else 0
    rings = samples[0].observation.cloud.num_rings if samples else 0
    head = {"version": VERSION, "T": T, "image_size": size, "num_rings": rings, "records": len(samples),
            **(header or {})}
    hb = json.dumps(head, sort_keys=True).encode()
    digest = hashlib.sha256()
    with open(path, "wb") as fh:
        def emit(b):
            fh.write(b)
            digest.update(b)

        emit(MAGIC + struct.pack("<II", VERSION, len(hb)) + hb)
        for s in samples:
            rec = zlib.compress(_encode_record(s), 6)
            emit(struct.pack("<I", len(rec)) + rec)
    return digest.hexdigest()


def read_dataset(path) -> tuple[dict, list[Sample]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path} is not a dataset file")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    header = json.loads(data[12:12 + hlen])
    off = 12 + hlen
    samples = []
    while off < len(data):
        (n,) = struct.unpack("<I", data[off:off + 4])
        samples.append(_decode_record(zlib.decompress(data[off + 4:off + 4 + n]), header["num_rings"]))
        off += 4 + n
    if len(samples) != header["records"]:
        raise ValueError("record count does not match header")
    return header, samples


def file_hash(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# --------------------------------------------------------------------------
# Recording


def random_walk_command(rng, prev: VelocityCommand, pose, goal, sim: SimConfig) -> VelocityCommand:
    """Goal-biased bounded random walk over (v, omega)."""
    bearing = normalize_angle(math.atan2(goal[1] - pose.y, goal[0] - pose.x) - pose.theta)
    v = float(np.clip(prev.v + rng.normal(0.0, 0.25), 0.1, sim.v_max))
    w = float(np.clip(0.5 * prev.omega + 0.3 * bearing + rng.normal(0.0, 0.5), -sim.omega_max, sim.omega_max))
    return VelocityCommand(round(v, 3), round(w, 3))


def record_episode(world_seed: int, difficulty: str, episode: int, max_steps: int, sim: SimConfig,
                   planner: PlannerConfig, policy_seed: int) -> list[Sample]:
    grid = generate_world(world_seed, difficulty, sim)
    rng = make_generator(policy_seed, episode, 0x5EC)
    state = initial_state(grid, heading_noise=float(rng.uniform(-0.6, 0.6)))
    hist = VelocityHistory.zeros(planner.T)
    cmd = VelocityCommand(0.5, 0.0)
    out = []
    for step in range(max_steps):
        if state.status != RUNNING:
            break
        pose = state.pose
        cmd = random_walk_command(rng, cmd, pose, grid.goal, sim)
        traj = predict_trajectory(pose, cmd, planner.dt, planner.T)
        obs = Observation(render_camera(grid, pose, sim), render_lidar(grid, pose, lidar_seed(world_seed, step), sim),
                          hist, rasterize_trajectory(pose, traj, planner.image_size, planner.window))
        out.append(Sample(obs, ground_truth_labels(grid, traj), world_seed, difficulty, episode, step))
        state = step_robot(state, cmd, planner.dt, grid, sim)
        hist = hist.pushed(cmd)
    return out


def record_dataset(num_episodes: int, mix, seed: int, sim: SimConfig = SimConfig(),
                   planner: PlannerConfig = PlannerConfig(), max_steps: int = 60) -> list[Sample]:
    """Drive seeded random-walk episodes over the difficulty mix and label every step."""
    mix = list(mix)
    samples = []
    for ep in range(num_episodes):
        difficulty = mix[ep % len(mix)]
        world_seed = seed * EPISODE_STRIDE + ep
        samples.extend(record_episode(world_seed, difficulty, ep, max_steps, sim, planner, seed))
    return samples


def regenerate_sample(world_seed: int, difficulty: str, step: int, sim: SimConfig = SimConfig(),
                      planner: PlannerConfig = PlannerConfig()) -> Sample:
    """Re-drive the recorded episode up to ``step`` from a sample's meta; bit-identical to the original."""
    seed, episode = divmod(world_seed, EPISODE_STRIDE)
    samples = record_episode(world_seed, difficulty, episode, step + 1, sim, planner, seed)
    if len(samples) <= step:
        raise ValueError(f"episode {world_seed} ended before step {step}")
    return samples[step]


def class_balance(samples) -> dict:
    neg = sum(1 for s in samples if s.label.probs.min() < 0.5)
    n = len(samples)
    steps = np.array([s.label.probs for s in samples]) if samples else np.zeros((0, 0))
    return {"samples": n, "positive": n - neg, "negative": neg,
            "negative_fraction": neg / n if n else math.nan,
            "step_negative_fraction": float(1.0 - steps.mean()) if n else math.nan}

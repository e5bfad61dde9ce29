"""Closed-loop evaluation episodes and the three planner suites."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import Observation, VelocityCommand, VelocityHistory
from ..fusion import ConstantPredictor, GraphConfig, Predictor, ReliabilityConfig
from ..planner import PlannerConfig, plan_step, predict_trajectory, rasterize_trajectory
from ..simworld import REACHED_GOAL, RUNNING, SimConfig, generate_world, initial_state, render_camera, \
    render_lidar, step_robot
from .dataset import lidar_seed

SUITES = ("graspe", "graspe_no_reliability", "dwa_baseline")


def eval_world_seed(seed: int, difficulty: str, episode: int) -> int:
    """World seeds for evaluation; disjoint from the recording range for small indices."""
    from ..simworld import DIFFICULTIES
    return 7_000_000_000 + seed * 1_000_000 + DIFFICULTIES.index(difficulty) * 10_000 + episode


@dataclass
class EpisodeReport:
    suite: str
    difficulty: str
    world_seed: int
    status: str
    steps: int
    path_length: float
    straight_line: float
    path: list = field(default_factory=list)
    r_img: list = field(default_factory=list)
    r_point: list = field(default_factory=list)
    vetoes: int = 0
    recoveries: int = 0

    @property
    def success(self) -> bool:
        return self.status == REACHED_GOAL

    @property
    def normalized_length(self) -> float:
        return self.path_length / self.straight_line if self.straight_line > 0 else math.nan


def make_suite(name: str, params: dict | None, graph: GraphConfig = GraphConfig(),
               rel_cfg: ReliabilityConfig = ReliabilityConfig()):
    """(model, always_admissible) for a suite name."""
    if name == "dwa_baseline":
        return ConstantPredictor(1.0), True
    if params is None:
        raise ValueError(f"suite {name!r} needs trained parameters")
    if name == "graspe":
        return Predictor(params, graph, rel_cfg), False
    if name == "graspe_no_reliability":
        return Predictor(params, graph, rel_cfg, force_reliable=True), False
    raise ValueError(f"unknown suite {name!r}")


def run_episode(world_seed: int, difficulty: str, model, always_admissible: bool, suite: str = "",
                sim: SimConfig = SimConfig(), planner: PlannerConfig = PlannerConfig()) -> EpisodeReport:
    grid = generate_world(world_seed, difficulty, sim)
    state = initial_state(grid)
    hist = VelocityHistory.zeros(planner.T)
    cmd = VelocityCommand(0.0, 0.0)
    start = (state.pose.x, state.pose.y)
    rep = EpisodeReport(suite, difficulty, world_seed, RUNNING, 0, 0.0,
                        math.hypot(grid.goal[0] - start[0], grid.goal[1] - start[1]), path=[start])
    step = 0
    while state.status == RUNNING:
        pose = state.pose
        placeholder = rasterize_trajectory(pose, predict_trajectory(pose, cmd, planner.dt, planner.T),
                                           planner.image_size, planner.window)
        obs = Observation(render_camera(grid, pose, sim), render_lidar(grid, pose, lidar_seed(world_seed, step), sim),
                          hist, placeholder)
        rel = model.reliability(obs) if hasattr(model, "reliability") else (1.0, 1.0)
        res = plan_step(pose, cmd, grid.goal, obs, model, planner, reliability=rel,
                        always_admissible=always_admissible)
        rep.r_img.append(float(rel[0]))
        rep.r_point.append(float(rel[1]))
        rep.vetoes += res.vetoes
        rep.recoveries += int(res.recovery)
        cmd = res.command
        state = step_robot(state, cmd, planner.dt, grid, sim)
        hist = hist.pushed(cmd)
        rep.path_length += math.hypot(state.pose.x - pose.x, state.pose.y - pose.y)
        rep.path.append((state.pose.x, state.pose.y))
        step += 1
    rep.status = state.status
    rep.steps = step
    return rep


def run_eval(params: dict | None, suites=SUITES, difficulties=("open", "cluttered"), episodes: int = 50,
             seed: int = 0, sim: SimConfig = SimConfig(), planner: PlannerConfig = PlannerConfig(),
             graph: GraphConfig = GraphConfig(), rel_cfg: ReliabilityConfig = ReliabilityConfig(),
             progress=None) -> list[EpisodeReport]:
    """Every suite on the same seeded worlds."""
    reports = []
    for difficulty in difficulties:
        for ep in range(episodes):
            ws = eval_world_seed(seed, difficulty, ep)
            for suite in suites:
                model, always = make_suite(suite, params, graph, rel_cfg)
                rep = run_episode(ws, difficulty, model, always, suite, sim, planner)
                reports.append(rep)
                if progress is not None:
                    progress(rep)
    return reports


SUMMARY_COLUMNS = ("suite", "difficulty", "episodes", "success_rate", "norm_len_success", "norm_len_fail",
                   "mean_vetoes")


def summarize(reports) -> list[dict]:
    """One row per (suite, difficulty) in first-seen order."""
    keys = []
    for r in reports:
        if (r.suite, r.difficulty) not in keys:
            keys.append((r.suite, r.difficulty))
    rows = []
    for suite, diff in keys:
        rs = [r for r in reports if r.suite == suite and r.difficulty == diff]
        ok = [r.normalized_length for r in rs if r.success]
        bad = [r.normalized_length for r in rs if not r.success]
        rows.append({"suite": suite, "difficulty": diff, "episodes": len(rs),
                     "success_rate": sum(r.success for r in rs) / len(rs),
                     "norm_len_success": float(np.mean(ok)) if ok else math.nan,
                     "norm_len_fail": float(np.mean(bad)) if bad else math.nan,
                     "mean_vetoes": float(np.mean([r.vetoes for r in rs]))})
    return rows


def format_table(rows) -> str:
    lines = ["  ".join(f"{c:>16}" for c in SUMMARY_COLUMNS)]
    for row in rows:
        cells = []
        for c in SUMMARY_COLUMNS:
            v = row[c]
            cells.append(f"{v:>16.3f}" if isinstance(v, float) else f"{v!s:>16}")
        lines.append("  ".join(cells))
    return "\n".join(lines)

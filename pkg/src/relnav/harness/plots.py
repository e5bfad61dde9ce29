"""Static outputs: per-episode top-down SVG overlays and the summary CSV."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from ..simworld import FREE, NONTRAV, PLIABLE, SOLID, SimConfig, TerrainGrid, generate_world
from .episodes import SUMMARY_COLUMNS, EpisodeReport, summarize

COLORS = {FREE: "#f4f1e8", SOLID: "#404040", PLIABLE: "#8fc07a", NONTRAV: "#b5651d"}
SCALE = 16  # pixels per meter


def _f(x: float) -> str:
    return f"{x:.3f}"


def trajectory_svg(grid: TerrainGrid, path, goal, title: str = "") -> str:
    """Top-down view: terrain cells, the driven polyline, start dot and goal marker (y axis up)."""
    h, w = grid.cells.shape
    cs = grid.cell_size
    W, H = w * cs * SCALE, h * cs * SCALE

    def px(x, y):
        return x * SCALE, H - y * SCALE

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(W)}" height="{_f(H)}" '
           f'viewBox="0 0 {_f(W)} {_f(H)}">']
    if title:
        out.append(f"<title>{title}</title>")
    out.append(f'<rect x="0" y="0" width="{_f(W)}" height="{_f(H)}" fill="{COLORS[FREE]}"/>')
    for r in range(h):
        for c in range(w):
            k = int(grid.cells[r, c])
            if k == FREE:
                continue
            x0, y0 = px(c * cs, (r + 1) * cs)
            out.append(f'<rect x="{_f(x0)}" y="{_f(y0)}" width="{_f(cs * SCALE)}" height="{_f(cs * SCALE)}" '
                       f'fill="{COLORS[k]}"/>')
    pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in (px(x, y) for x, y in path))
    out.append(f'<polyline id="path" points="{pts}" fill="none" stroke="#1f4fd1" stroke-width="2"/>')
    sx, sy = px(*path[0])
    out.append(f'<circle id="start" cx="{_f(sx)}" cy="{_f(sy)}" r="4" fill="#1f4fd1"/>')
    gx, gy = px(*goal)
    out.append(f'<circle id="goal" cx="{_f(gx)}" cy="{_f(gy)}" r="{_f(0.5 * SCALE)}" fill="none" '
               f'stroke="#d11f1f" stroke-width="2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def summary_csv(rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(SUMMARY_COLUMNS)
    for row in rows:
        wr.writerow([f"{row[c]:.6f}" if isinstance(row[c], float) else row[c] for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def episode_filename(rep: EpisodeReport) -> str:
    return f"{rep.suite}_{rep.difficulty}_{rep.world_seed}.svg"


def emit_plots(reports, out_dir, sim: SimConfig = SimConfig()) -> list[Path]:
    """Write one SVG per episode plus ``summary.csv``; returns the written paths."""
    reports = list(reports)
    if not reports:
        raise ValueError("no episode reports to plot")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    grids: dict = {}
    for rep in reports:
        key = (rep.world_seed, rep.difficulty)
        if key not in grids:
            grids[key] = generate_world(rep.world_seed, rep.difficulty, sim)
        grid = grids[key]
        p = out / episode_filename(rep)
        p.write_text(trajectory_svg(grid, rep.path, grid.goal, f"{rep.suite} {rep.difficulty} {rep.status}"))
        written.append(p)
    p = out / "summary.csv"
    p.write_text(summary_csv(summarize(reports)))
    written.append(p)
    return written


# --------------------------------------------------------------------------
# Report persistence (JSON lines)


def report_to_dict(rep: EpisodeReport) -> dict:
    return {"suite": rep.suite, "difficulty": rep.difficulty, "world_seed": rep.world_seed, "status": rep.status,
            "steps": rep.steps, "path_length": rep.path_length, "straight_line": rep.straight_line,
            "normalized_length": rep.normalized_length, "vetoes": rep.vetoes, "recoveries": rep.recoveries,
            "path": [list(p) for p in rep.path], "r_img": rep.r_img, "r_point": rep.r_point}


def report_from_dict(d: dict) -> EpisodeReport:
    return EpisodeReport(d["suite"], d["difficulty"], int(d["world_seed"]), d["status"], int(d["steps"]),
                         float(d["path_length"]), float(d["straight_line"]), [tuple(p) for p in d["path"]],
                         list(d["r_img"]), list(d["r_point"]), int(d["vetoes"]), int(d["recoveries"]))


def write_reports(path, reports) -> None:
    with open(path, "w") as fh:
        for r in reports:
            d = report_to_dict(r)
            if math.isnan(d["normalized_length"]):
                d["normalized_length"] = None
            fh.write(json.dumps(d, sort_keys=True) + "\n")


def read_reports(path) -> list[EpisodeReport]:
    with open(path) as fh:
        return [report_from_dict(json.loads(line)) for line in fh if line.strip()]

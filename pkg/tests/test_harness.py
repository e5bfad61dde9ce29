"""Harness: config layering, dataset container, recording, split, evaluation summary, plots and the CLI."""
from __future__ import annotations

import csv
import io
import json
import math

import numpy as np
import pytest

from relnav.core import ImageRaster, PointCloud
from relnav.harness.cli import EXIT_DATA, EXIT_DIVERGED, EXIT_OK, EXIT_USAGE, main
from relnav.harness.config import (ConfigError, config_hash, default_config, load_config, parse_override,
                                   planner_config, sim_config, train_config)
from relnav.harness.dataset import (class_balance, file_hash, read_dataset, record_dataset, regenerate_sample,
                                    write_dataset)
from relnav.harness.episodes import EpisodeReport, make_suite, run_episode, summarize
from relnav.harness.plots import emit_plots, read_reports, summary_csv, trajectory_svg, write_reports
from relnav.harness.training import split_by_episode
from relnav.reliability import cloud_reliability, image_reliability
from relnav.simworld import REACHED_GOAL, TIMEOUT, generate_world

CFG = default_config()
SIM = sim_config(CFG)
PLAN = planner_config(CFG)


def same_sample(a, b) -> bool:
    oa, ob = a.observation, b.observation
    return (a.meta == b.meta and a.episode == b.episode
            and np.array_equal(oa.image.data, ob.image.data)
            and np.array_equal(oa.traj_image.data, ob.traj_image.data)
            and np.array_equal(oa.cloud.points, ob.cloud.points)
            and np.array_equal(oa.cloud.ring, ob.cloud.ring)
            and oa.vel_history == ob.vel_history
            and np.array_equal(a.label.probs, b.label.probs))


@pytest.fixture(scope="module")
def small_dataset():
    return record_dataset(5, ["open", "cluttered", "combined"], 3, SIM, PLAN, 12)


# --------------------------------------------------------------------------
# config


def test_defaults_have_every_section():
    assert set(CFG) == {"simworld", "reliability", "encoders", "fusion", "planner", "harness"}
    assert CFG["harness"]["max_steps"] == 400
    assert sim_config(CFG).max_steps == 400
    assert train_config(CFG).epochs == 50


def test_file_and_override_layering(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"planner": {"e_th": 0.7}, "harness": {"seed": 5}}))
    cfg = load_config(str(f), ["harness.seed=9", "harness.record_mix=[\"open\"]"])
    assert cfg["planner"]["e_th"] == 0.7
    assert cfg["harness"]["seed"] == 9 and cfg["harness"]["record_mix"] == ["open"]
    assert planner_config(cfg).e_th == 0.7
    assert parse_override("fusion.optimizer=sgd") == {"fusion": {"optimizer": "sgd"}}
    assert config_hash(cfg) != config_hash(CFG) and config_hash(default_config()) == config_hash(CFG)


@pytest.mark.parametrize("bad", ["nosuch.key=1", "planner.nosuch=1", "planner=3", "no-equals-sign"])
def test_bad_overrides_are_config_errors(bad):
    with pytest.raises(ConfigError):
        load_config(None, [bad])


def test_invalid_values_are_config_errors():
    with pytest.raises(ConfigError):
        train_config(load_config(None, ["fusion.optimizer=rmsprop"]))


# --------------------------------------------------------------------------
# dataset container and recording


def test_dataset_round_trip_is_byte_identical(tmp_path, small_dataset):
    a, b = tmp_path / "a.rnds", tmp_path / "b.rnds"
    digest = write_dataset(a, small_dataset, {"note": "x"})
    assert digest == file_hash(a)
    header, back = read_dataset(a)
    assert header["records"] == len(small_dataset) and header["T"] == PLAN.T and header["note"] == "x"
    assert all(same_sample(x, y) for x, y in zip(small_dataset, back))
    write_dataset(b, back, {"note": "x"})
    assert a.read_bytes() == b.read_bytes()


def test_corrupt_dataset_is_rejected(tmp_path, small_dataset):
    p = tmp_path / "a.rnds"
    write_dataset(p, small_dataset[:3])
    raw = p.read_bytes()
    (tmp_path / "magic.rnds").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "short.rnds").write_bytes(raw[: len(raw) - 10])
    with pytest.raises(ValueError):
        read_dataset(tmp_path / "magic.rnds")
    with pytest.raises(Exception):
        read_dataset(tmp_path / "short.rnds")


def test_recording_is_deterministic(tmp_path, small_dataset):
    again = record_dataset(5, ["open", "cluttered", "combined"], 3, SIM, PLAN, 12)
    write_dataset(tmp_path / "a.rnds", small_dataset)
    write_dataset(tmp_path / "b.rnds", again)
    assert (tmp_path / "a.rnds").read_bytes() == (tmp_path / "b.rnds").read_bytes()


def test_sample_meta_regenerates_the_observation(small_dataset):
    for s in (small_dataset[0], small_dataset[7], small_dataset[-1]):
        world_seed, difficulty, step = s.meta
        assert same_sample(regenerate_sample(world_seed, difficulty, step, SIM, PLAN), s)


def test_samples_carry_labels_of_length_T(small_dataset):
    assert all(len(s.label) == PLAN.T for s in small_dataset)
    assert all(set(np.unique(s.label.probs)) <= {0.0, 1.0} for s in small_dataset)
    assert all(s.observation.traj_image.data.shape == (64, 64, 1) for s in small_dataset)


def test_open_worlds_are_almost_all_positive():
    samples = record_dataset(20, ["open"], 1, SIM, PLAN, 60)
    bal = class_balance(samples)
    assert bal["samples"] > 500
    assert bal["positive"] / bal["samples"] >= 0.99


def test_mixed_recording_class_balance(desk_dataset):
    bal = class_balance(desk_dataset["samples"])
    assert 0.15 <= bal["negative_fraction"] <= 0.45


def test_split_is_by_episode(small_dataset):
    tr, va = split_by_episode(small_dataset, 0.2, 0)
    assert sorted(tr + va) == list(range(len(small_dataset)))
    assert not {small_dataset[i].episode for i in tr} & {small_dataset[i].episode for i in va}
    assert va and tr
    assert split_by_episode(small_dataset, 0.2, 0) == (tr, va)


# --------------------------------------------------------------------------
# episodes and summary


def _report(suite, diff, status, length, straight=10.0, vetoes=0):
    return EpisodeReport(suite, diff, 1, status, 5, length, straight, [(0.0, 0.0), (1.0, 1.0)], vetoes=vetoes)


def test_summary_is_exact():
    reps = [_report("graspe", "open", REACHED_GOAL, 11.0, vetoes=2),
            _report("graspe", "open", TIMEOUT, 3.0, vetoes=1),
            _report("graspe", "open", REACHED_GOAL, 12.0),
            _report("dwa_baseline", "open", TIMEOUT, 5.0)]
    rows = summarize(reps)
    assert [(r["suite"], r["difficulty"]) for r in rows] == [("graspe", "open"), ("dwa_baseline", "open")]
    g = rows[0]
    assert g["episodes"] == 3 and g["success_rate"] == 2 / 3
    assert g["norm_len_success"] == pytest.approx(1.15, abs=1e-15)
    assert g["norm_len_fail"] == pytest.approx(0.3, abs=1e-15)
    assert g["mean_vetoes"] == 1.0
    assert rows[1]["success_rate"] == 0.0 and math.isnan(rows[1]["norm_len_success"])


def test_normalized_length_requires_positive_distance():
    assert math.isnan(_report("graspe", "open", REACHED_GOAL, 1.0, straight=0.0).normalized_length)


def test_successful_open_episodes_are_near_straight():
    model, always = make_suite("dwa_baseline", None)
    for ws in range(3):
        rep = run_episode(900 + ws, "open", model, always, "dwa_baseline", SIM, PLAN)
        assert rep.success
        assert rep.normalized_length >= 0.95
        assert len(rep.path) == rep.steps + 1 == len(rep.r_point) + 1


def test_learned_suites_need_parameters():
    with pytest.raises(ValueError):
        make_suite("graspe", None)
    with pytest.raises(ValueError):
        make_suite("nosuch", {})


# --------------------------------------------------------------------------
# plots


def test_svg_of_a_straight_episode():
    grid = generate_world(5, "open", SIM)
    start, goal = (8.0, 2.0), grid.goal
    svg = trajectory_svg(grid, [start, goal], goal, "t")
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    line = next(ln for ln in svg.splitlines() if 'id="path"' in ln)
    pts = line.split('points="')[1].split('"')[0].split()
    assert len(pts) == 2
    H = grid.cells.shape[0] * grid.cell_size * 16
    assert pts[0] == f"{8.0 * 16:.3f},{H - 2.0 * 16:.3f}"
    assert pts[1] == f"{goal[0] * 16:.3f},{H - goal[1] * 16:.3f}"
    assert f'id="goal" cx="{goal[0] * 16:.3f}" cy="{H - goal[1] * 16:.3f}"' in svg


def test_summary_csv_schema():
    text = summary_csv(summarize([_report("graspe", "open", REACHED_GOAL, 11.0)]))
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["suite", "difficulty", "episodes", "success_rate", "norm_len_success", "norm_len_fail",
                       "mean_vetoes"]
    assert rows[1][:4] == ["graspe", "open", "1", "1.000000"]


def test_plots_and_reports_are_deterministic(tmp_path):
    model, always = make_suite("dwa_baseline", None)
    reps = [run_episode(901, "open", model, always, "dwa_baseline", SIM, PLAN)]
    write_reports(tmp_path / "r.jsonl", reps)
    back = read_reports(tmp_path / "r.jsonl")
    assert back[0].path == reps[0].path and back[0].status == reps[0].status
    a = emit_plots(back, tmp_path / "a", SIM)
    b = emit_plots(reps, tmp_path / "b", SIM)
    assert [p.name for p in a] == [p.name for p in b]
    assert all(x.read_bytes() == y.read_bytes() for x, y in zip(a, b))
    with pytest.raises(ValueError):
        emit_plots([], tmp_path / "c")


# --------------------------------------------------------------------------
# CLI


@pytest.mark.parametrize("argv", [[], ["nosuch"], ["record"], ["train", "--data", "x"],
                                  ["eval", "--out-dir", "o", "--suites", "nosuch"],
                                  ["eval", "--out-dir", "o", "--suites", "graspe"],
                                  ["score", "f.npy", "--kind", "video"]])
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_USAGE


def test_data_and_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.rnds"
    bad.write_bytes(b"not a dataset")
    assert main(["train", "--data", str(bad), "--out", str(tmp_path / "m.json")]) == EXIT_DATA
    assert main(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "m.json")]) == EXIT_DATA
    assert main(["record", "--out", str(tmp_path / "d"), "--set", "nosuch.key=1"]) == EXIT_DATA
    assert main(["record", "--out", str(tmp_path / "d"), "--config", str(tmp_path / "missing.json")]) == EXIT_DATA


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exits_3(tmp_path, small_dataset):
    data = tmp_path / "d.rnds"
    write_dataset(data, small_dataset)
    argv = ["train", "--data", str(data), "--out", str(tmp_path / "m.json"),
            "--set", "fusion.optimizer=sgd", "--set", "fusion.learning_rate=1e200", "--set", "fusion.epochs=1"]
    assert main(argv) == EXIT_DIVERGED


def test_score_prints_one_json_line_per_file(tmp_path, capsys, rng):
    img = rng.integers(0, 256, (64, 64, 3)).astype(np.uint8)
    np.save(tmp_path / "img.npy", img)
    pts = rng.normal(0, 3, (300, 3))
    ring = rng.integers(0, 4, 300)
    np.savetxt(tmp_path / "cloud.txt", np.column_stack([pts, ring]))
    capsys.readouterr()
    assert main(["score", str(tmp_path / "img.npy"), str(tmp_path / "cloud.txt")]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    a, b = (json.loads(x) for x in lines)
    assert a["kind"] == "image" and b["kind"] == "cloud"
    assert a["r_img"] == image_reliability(ImageRaster(img)).r_img
    cloud = PointCloud(np.loadtxt(tmp_path / "cloud.txt")[:, :3], ring.astype(np.int64), 4)
    assert b["r_point"] == cloud_reliability(cloud).r_point
    assert b["n_points"] == 300

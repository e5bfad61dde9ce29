"""``relnav`` command line: record, train, eval, score, plot.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 training divergence.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..core import ImageRaster, PointCloud
from ..fusion import ENCODER_KEYS, GNN_KEYS, TrainingDiverged, load_checkpoint
from ..reliability import cloud_reliability, image_reliability
from .config import (ConfigError, config_hash, load_config, planner_config, reliability_config, sim_config,
                     train_config)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def write_manifest(path, command: str, cfg: dict, argv, extra: dict | None = None) -> None:
    doc = {"command": command, "version": __version__, "argv": list(argv), "config_hash": config_hash(cfg),
           "seed": cfg["harness"]["seed"], "config": cfg, **(extra or {})}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _cmd_record(args, cfg, argv) -> int:
    from .dataset import class_balance, record_dataset, write_dataset
    h = cfg["harness"]
    episodes = args.episodes if args.episodes is not None else h["record_episodes"]
    mix = args.mix.split(",") if args.mix else h["record_mix"]
    samples = record_dataset(episodes, mix, h["seed"], sim_config(cfg), planner_config(cfg), h["record_max_steps"])
    bal = class_balance(samples)
    digest = write_dataset(args.out, samples, {"config_hash": config_hash(cfg), "mix": mix, "seed": h["seed"]})
    write_manifest(f"{args.out}.manifest.json", "record", cfg, argv,
                   {"episodes": episodes, "mix": mix, "dataset_sha256": digest, "class_balance": bal})
    print(json.dumps({"dataset": str(args.out), "sha256": digest, **bal}, sort_keys=True))
    return EXIT_OK


def _cmd_train(args, cfg, argv) -> int:
    from .dataset import file_hash, read_dataset
    from .training import run_training
    _, samples = read_dataset(args.data)
    if not samples:
        raise ValueError("dataset is empty")
    tc = train_config(cfg)
    log_path = args.log or f"{args.out}.log.csv"
    dhash = file_hash(args.data)
    _, _, metrics = run_training(samples, tc, cfg["harness"]["val_fraction"], reliability_config(cfg), args.out,
                                 log_path, cfg, dhash, shuffle_control=args.shuffle_labels)
    write_manifest(f"{args.out}.manifest.json", "train", cfg, argv,
                   {"dataset": str(args.data), "dataset_sha256": dhash, "metrics": metrics})
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def _cmd_eval(args, cfg, argv) -> int:
    from .episodes import SUITES, format_table, run_eval, summarize
    from .plots import summary_csv, write_reports
    h = cfg["harness"]
    suites = args.suites.split(",") if args.suites else h["eval_suites"]
    for s in suites:
        if s not in SUITES:
            raise UsageError(f"unknown suite {s!r}; choose from {', '.join(SUITES)}")
    params = None
    if any(s != "dwa_baseline" for s in suites):
        if not args.checkpoint:
            raise UsageError("--checkpoint is required for the learned suites")
        enc, gnn, _ = load_checkpoint(args.checkpoint)
        params = {**enc, **gnn}
        if set(params) != set(ENCODER_KEYS) | set(GNN_KEYS):
            raise ValueError("checkpoint tensors do not match the model layout")
    diffs = args.difficulties.split(",") if args.difficulties else h["eval_difficulties"]
    episodes = args.episodes if args.episodes is not None else h["eval_episodes"]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = run_eval(params, suites, diffs, episodes, h["seed"], sim_config(cfg), planner_config(cfg),
                       train_config(cfg).graph(), reliability_config(cfg))
    write_reports(out / "reports.jsonl", reports)
    rows = summarize(reports)
    (out / "summary.csv").write_text(summary_csv(rows))
    write_manifest(out / "manifest.json", "eval", cfg, argv,
                   {"checkpoint": args.checkpoint, "suites": suites, "difficulties": diffs, "episodes": episodes})
    print(format_table(rows))
    return EXIT_OK


def load_score_input(path: str, kind: str | None = None):
    """An image (``.npy`` uint8 H×W[×C]) or a cloud (``.npy``/text, columns x y z [ring])."""
    p = Path(path)
    if p.suffix == ".npy":
        arr = np.load(p, allow_pickle=False)
    else:
        arr = np.loadtxt(p, delimiter="," if p.suffix == ".csv" else None, ndmin=2)
    if kind is None:
        kind = "image" if arr.dtype == np.uint8 else "cloud"
    if kind == "image":
        if arr.ndim == 2:
            arr = arr[:, :, None]
        return "image", ImageRaster(np.asarray(arr, dtype=np.uint8))
    if arr.ndim != 2 or arr.shape[1] not in (3, 4):
        raise ValueError("cloud files need 3 (x y z) or 4 (x y z ring) columns")
    pts = np.asarray(arr[:, :3], dtype=np.float64)
    ring = arr[:, 3].astype(np.int64) if arr.shape[1] == 4 else np.zeros(len(arr), dtype=np.int64)
    return "cloud", PointCloud(pts, ring, int(ring.max()) + 1 if len(ring) else 1)


def _cmd_score(args, cfg, argv) -> int:
    rc = reliability_config(cfg)
    for path in args.files:
        kind, obj = load_score_input(path, args.kind)
        if kind == "image":
            r = image_reliability(obj, rc.alpha_b, rc.alpha_c, rc.corner_norm, rc.fast_threshold, rc.fast_arc)
            rec = {"file": path, "kind": kind, "r_img": r.r_img, "r_bright": r.r_bright, "r_corners": r.r_corners,
                   "n_corners": r.n_c}
        else:
            r = cloud_reliability(obj, rc.c_max, rc.c_min, rc.beta_e, rc.beta_p, rc.neighborhood)
            rec = {"file": path, "kind": kind, "r_point": r.r_point, "r_edge": r.r_edge, "r_planar": r.r_planar,
                   "n_edge": r.edge_count, "n_planar": r.planar_count, "n_points": len(obj)}
        print(json.dumps(rec, sort_keys=True))
    return EXIT_OK


def _cmd_plot(args, cfg, argv) -> int:
    from .plots import emit_plots, read_reports
    reports = read_reports(args.reports)
    paths = emit_plots(reports, args.out_dir, sim_config(cfg))
    write_manifest(Path(args.out_dir) / "plot_manifest.json", "plot", cfg, argv, {"reports": str(args.reports)})
    print(f"wrote {len(paths)} files to {args.out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file layered over the defaults")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (JSON literal); repeatable")
    p = _Parser(prog="relnav", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("record", parents=[common], help="drive random-walk episodes and write a dataset")
    r.add_argument("--out", required=True)
    r.add_argument("--episodes", type=int)
    r.add_argument("--mix", help="comma-separated difficulty cycle")

    t = sub.add_parser("train", parents=[common], help="train the fusion model on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--log", help="per-epoch CSV (default: <out>.log.csv)")
    t.add_argument("--shuffle-labels", action="store_true", help="control run with permuted training labels")

    e = sub.add_parser("eval", parents=[common], help="closed-loop evaluation of the planner suites")
    e.add_argument("--checkpoint")
    e.add_argument("--out-dir", required=True)
    e.add_argument("--episodes", type=int)
    e.add_argument("--suites")
    e.add_argument("--difficulties")

    s = sub.add_parser("score", parents=[common], help="print reliability records as JSON lines")
    s.add_argument("files", nargs="+")
    s.add_argument("--kind", choices=("image", "cloud"))

    pl = sub.add_parser("plot", parents=[common], help="SVG overlays and summary CSV from eval reports")
    pl.add_argument("--reports", required=True)
    pl.add_argument("--out-dir", required=True)
    return p


COMMANDS = {"record": _cmd_record, "train": _cmd_train, "eval": _cmd_eval, "score": _cmd_score, "plot": _cmd_plot}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"relnav: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config, args.overrides)
        return COMMANDS[args.command](args, cfg, argv)
    except UsageError as e:
        print(f"relnav: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as e:
        print(f"relnav: training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, ValueError, KeyError, OSError) as e:
        print(f"relnav: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""The whole experiment through the library: record, train, evaluate, plot.

Defaults reproduce the reported results (about 10 minutes on one core);
``--quick`` runs a reduced version in about a minute.

    python demos/full_experiment.py [--quick] [--out experiment]
"""
import argparse
import time
from pathlib import Path

from relnav.harness.config import default_config, planner_config, reliability_config, sim_config, train_config
from relnav.harness.dataset import class_balance, record_dataset, write_dataset
from relnav.harness.episodes import format_table, run_eval, summarize
from relnav.harness.plots import emit_plots
from relnav.harness.training import run_training


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--out", default="experiment")
    args = ap.parse_args()

    cfg = default_config()
    h = cfg["harness"]
    if args.quick:
        h.update(record_episodes=13, eval_episodes=4)
        cfg["fusion"]["epochs"] = 5
    sim, planner, rc = sim_config(cfg), planner_config(cfg), reliability_config(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    samples = record_dataset(h["record_episodes"], h["record_mix"], h["seed"], sim, planner, h["record_max_steps"])
    write_dataset(out / "dataset.rnds", samples)
    print(f"recorded {class_balance(samples)} in {time.perf_counter() - t0:.0f} s")

    t0 = time.perf_counter()
    params, log, metrics = run_training(samples, train_config(cfg), h["val_fraction"], rc, out / "model.json",
                                        out / "train_log.csv", cfg)
    print(f"trained {metrics} in {time.perf_counter() - t0:.0f} s")

    t0 = time.perf_counter()
    reports = run_eval(params, h["eval_suites"], h["eval_difficulties"], h["eval_episodes"], h["seed"], sim,
                       planner, train_config(cfg).graph(), rc)
    print(f"evaluated {len(reports)} episodes in {time.perf_counter() - t0:.0f} s")
    print(format_table(summarize(reports)))
    emit_plots(reports, out / "plots", sim)
    print(f"plots and summary.csv in {out / 'plots'}")


if __name__ == "__main__":
    main()

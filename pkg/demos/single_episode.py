"""Drive one closed-loop episode and draw it.

Without a checkpoint only the DWA baseline runs; with one, the full model and
the no-reliability ablation run on the same world too. One SVG per suite is
written to the output directory.

    python demos/single_episode.py [--checkpoint model.json] [--difficulty cluttered] [--seed 3] [--out episode_svgs]
"""
import argparse
from pathlib import Path

from relnav.fusion import load_checkpoint
from relnav.harness.config import default_config, planner_config, reliability_config, sim_config, train_config
from relnav.harness.episodes import eval_world_seed, make_suite, run_episode
from relnav.harness.plots import episode_filename, trajectory_svg
from relnav.simworld import generate_world


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--checkpoint")
    ap.add_argument("--difficulty", default="cluttered")
    ap.add_argument("--seed", type=int, default=3, help="episode index in the evaluation seed set")
    ap.add_argument("--out", default="episode_svgs")
    args = ap.parse_args()

    cfg = default_config()
    sim, planner = sim_config(cfg), planner_config(cfg)
    params = None
    suites = ["dwa_baseline"]
    if args.checkpoint:
        enc, gnn, _ = load_checkpoint(args.checkpoint)
        params = {**enc, **gnn}
        suites = ["graspe", "graspe_no_reliability", "dwa_baseline"]
    world_seed = eval_world_seed(cfg["harness"]["seed"], args.difficulty, args.seed)
    grid = generate_world(world_seed, args.difficulty, sim)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for suite in suites:
        model, always = make_suite(suite, params, train_config(cfg).graph(), reliability_config(cfg))
        rep = run_episode(world_seed, args.difficulty, model, always, suite, sim, planner)
        path = out / episode_filename(rep)
        path.write_text(trajectory_svg(grid, rep.path, grid.goal, f"{suite} {rep.status}"))
        mean_rp = sum(rep.r_point) / len(rep.r_point)
        print(f"{suite:>22}: {rep.status:<12} steps {rep.steps:3d}  normalized length "
              f"{rep.normalized_length:5.2f}  vetoes {rep.vetoes:4d}  recoveries {rep.recoveries:3d}  "
              f"mean r_point {mean_rp:.2f}  -> {path}")


if __name__ == "__main__":
    main()

"""Sensor reliability across the difficulty presets.

Renders the camera and LiDAR view from the start pose and from a pose inside
the clutter band of one world per difficulty, and prints the image and point
cloud reliability scores next to their components.

    python demos/reliability_tour.py [world_seed]
"""
import sys

from relnav.core import Pose2D
from relnav.harness.config import default_config, reliability_config, sim_config
from relnav.reliability import cloud_reliability, image_reliability
from relnav.simworld import DIFFICULTIES, generate_world, initial_state, render_camera, render_lidar


def main(seed: int = 0) -> None:
    cfg = default_config()
    sim, rc = sim_config(cfg), reliability_config(cfg)
    print(f"{'difficulty':>10} {'where':>6} {'r_img':>6} {'bright':>6} {'corners':>7} "
          f"{'r_point':>7} {'edge':>6} {'planar':>6} {'points':>6}")
    for difficulty in DIFFICULTIES:
        grid = generate_world(seed, difficulty, sim)
        start = initial_state(grid).pose
        middle = Pose2D(start.x, 0.5 * (start.y + grid.goal[1]), start.theta)
        for where, pose in (("start", start), ("middle", middle)):
            ri = image_reliability(render_camera(grid, pose, sim), rc.alpha_b, rc.alpha_c, rc.corner_norm,
                                   rc.fast_threshold, rc.fast_arc)
            cloud = render_lidar(grid, pose, seed, sim)
            rp = cloud_reliability(cloud, rc.c_max, rc.c_min, rc.beta_e, rc.beta_p, rc.neighborhood)
            print(f"{difficulty:>10} {where:>6} {ri.r_img:6.3f} {ri.r_bright:6.3f} {ri.r_corners:7.3f} "
                  f"{rp.r_point:7.3f} {rp.r_edge:6.3f} {rp.r_planar:6.3f} {len(cloud):6d}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)

#!/usr/bin/env python3
"""Minimum braking time search: optimal braking trajectories of shrinking
duration are tracked closed-loop at a heading until the run fails."""

import argparse
import math

from ballbot_lab.config import load_config, platform_config
from ballbot_lab.harness import min_braking_search


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--heading-deg", type=float, default=180.0)
    ap.add_argument("--cruise", type=float, default=1.4, help="[m/s]")
    ap.add_argument("--start", type=float, default=5.0, help="[s]")
    ap.add_argument("--step", type=float, default=0.5, help="[s]")
    ap.add_argument("--floor", type=float, default=0.5, help="[s]")
    ap.add_argument("--tau-max", type=float, default=None,
                    help="optimizer torque bound [N m]")
    args = ap.parse_args()

    platform = platform_config(load_config(), "miapure")
    best, probes = min_braking_search(
        platform, heading=math.radians(args.heading_deg),
        cruise_speed=args.cruise, start_duration=args.start, step=args.step,
        floor=args.floor, brake_tau_max=args.tau_max, log_stride=40)
    print(f"{'duration':>9s} {'success':>8s} {'failure':>10s} {'v_end':>8s}")
    for p in probes:
        print(f"{p['duration_s']:9.2f} {str(p['success']):>8s} "
              f"{str(p.get('failure')):>10s} "
              f"{p.get('final_speed_mps', float('nan')):8.4f}")
    print(f"minimum successful braking duration: {best} s")


if __name__ == "__main__":
    main()

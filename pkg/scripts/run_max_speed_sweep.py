#!/usr/bin/env python3
"""Slow-ramp maximum-speed benchmark per translation heading, with
friction-cone slip detection at the omniwheel contacts."""

import argparse
import math

from ballbot_lab.config import load_config, platform_config
from ballbot_lab.harness import max_speed_ramp


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--headings-deg", type=float, nargs="+",
                    default=[0.0, 90.0, 180.0])
    ap.add_argument("--mu", type=float, default=0.8)
    ap.add_argument("--ramp", type=float, default=0.1, help="[m/s^2]")
    ap.add_argument("--ceiling", type=float, default=2.5, help="[m/s]")
    args = ap.parse_args()

    platform = platform_config(load_config(), "miapure")
    print(f"{'heading':>8s} {'v_fail':>8s} {'outcome':>12s}")
    for hdeg in args.headings_deg:
        speed, failed, result = max_speed_ramp(
            platform, heading=math.radians(hdeg), mu=args.mu,
            ramp_accel=args.ramp, v_ceiling=args.ceiling, log_stride=40)
        outcome = result.failure if failed else "no failure"
        print(f"{hdeg:8.1f} {speed:8.3f} {outcome:>12s}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Reproduce the testbed controller comparison: ramp to 1 m/s in 2 s, hold
2 s, brake within 1.4 s along the optimal trajectory; report braking effort
per controller."""

import argparse

from ballbot_lab.config import load_config, platform_config
from ballbot_lab.harness import compare_controllers, prepare_scenario, scenario_from_config


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--imu-noise", type=float, default=0.0,
                    help="IMU noise sigma [rad]; nonzero makes trials differ")
    args = ap.parse_args()

    cfg = load_config()
    if args.imu_noise:
        cfg["scenario"]["piptb-braking"]["imu_noise_std"] = args.imu_noise
    piptb = platform_config(cfg, "piptb")
    spec = prepare_scenario(scenario_from_config(cfg, "piptb-braking", piptb))
    table = compare_controllers(spec, ["lqr", "pi-pd", "lqr-pi"],
                                trials=args.trials, seed=args.seed)
    print(f"braking window: {table['window']}")
    print(f"{'controller':>10s} {'J mean':>10s} {'J sd':>10s} {'stopped':>8s}")
    for row in table["rows"]:
        print(f"{row['controller']:>10s} {row['braking_effort_mean']:10.4f} "
              f"{row['braking_effort_sd']:10.2e} {str(row['success']):>8s}")


if __name__ == "__main__":
    main()

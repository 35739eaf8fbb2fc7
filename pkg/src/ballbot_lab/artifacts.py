"""Run artifacts: CSV time series, JSON metrics, and quick-look SVG plots.

Artifacts are byte-reproducible for identical runs: CSV floats use repr,
JSON keys are sorted, and SVGs are rendered with a fixed hash salt and no
date metadata.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import RunResult  # noqa: E402

__all__ = ["write_run_csv", "write_metrics_json", "write_quicklook_svg",
           "write_manifest"]

plt.rcParams["svg.hashsalt"] = "ballbot-lab"


def write_run_csv(result: RunResult, path: str | Path) -> Path:
    path = Path(path)
    keys = sorted(result.series)
    lines = [",".join(["t"] + keys)]
    for i, t in enumerate(result.time):
        lines.append(",".join([repr(float(t))]
                              + [repr(float(result.series[k][i])) for k in keys]))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_metrics_json(result: RunResult, path: str | Path) -> Path:
    path = Path(path)
    payload = {"metrics": result.metrics, "events": result.events}
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def write_manifest(config: dict, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(config, sort_keys=True, indent=2,
                               default=str) + "\n")
    return path


def write_quicklook_svg(result: RunResult, path: str | Path,
                        title: str = "") -> Path:
    """Three stacked traces: speed vs command, tilt, and input torque."""
    path = Path(path)
    t = result.time
    fig, axes = plt.subplots(3, 1, figsize=(8, 7), sharex=True)
    s = result.series
    axes[0].plot(t, s["v"], label="v")
    if "v_cmd" in s:
        axes[0].plot(t, s["v_cmd"], "--", label="v cmd")
    axes[0].set_ylabel("speed [m/s]")
    axes[0].legend(loc="best")
    if "theta" in s:
        axes[1].plot(t, s["theta"], label="theta")
    else:
        axes[1].plot(t, s["theta_x"], label="theta_x")
        axes[1].plot(t, s["theta_y"], label="theta_y")
    axes[1].set_ylabel("tilt [rad]")
    axes[1].legend(loc="best")
    if "tau" in s:
        axes[2].plot(t, s["tau"], label="tau")
    else:
        for k in ("u1", "u2", "u3"):
            axes[2].plot(t, s[k], label=k)
    axes[2].set_ylabel("torque [N m]")
    axes[2].set_xlabel("time [s]")
    axes[2].legend(loc="best")
    for e in result.events:
        if e["kind"] != "phase":
            for ax in axes:
                ax.axvline(e["t"], color="r", alpha=0.4, linewidth=0.8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path

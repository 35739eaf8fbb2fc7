"""Config document handling and the CLI contract."""

import json
import math
import socket
import subprocess
import sys
from pathlib import Path

import pytest

from ballbot_lab.config import (
    ConfigError,
    apply_overrides,
    load_config,
    platform_config,
    resolve_units,
)
from ballbot_lab.cli import main


class TestConfig:
    def test_defaults_load_and_build(self):
        cfg = load_config()
        for name in ("miapure", "piptb"):
            plat = platform_config(cfg, name)
            assert plat.wip.m_b > 0
            assert plat.controller.kind == "lqr-pi"
        assert platform_config(cfg, "miapure").geometry.alpha == \
            pytest.approx(math.pi / 4)

    def test_degree_suffix_resolution(self):
        node = resolve_units({"alpha_deg": 45.0, "gamma_deg": [0.0, 120.0],
                              "nested": {"heading_deg": 180.0}})
        assert node["alpha"] == pytest.approx(math.pi / 4)
        assert node["gamma"][1] == pytest.approx(2 * math.pi / 3)
        assert node["nested"]["heading"] == pytest.approx(math.pi)

    def test_user_file_merges_over_defaults(self, tmp_path):
        user = tmp_path / "user.toml"
        user.write_text("[platform.miapure.body]\nm_b = 80.0\n")
        cfg = load_config(user)
        assert platform_config(cfg, "miapure").wip.m_b == 80.0
        assert platform_config(cfg, "piptb").wip.m_b == 14.6

    def test_overrides_apply_and_validate(self):
        cfg = load_config()
        cfg = apply_overrides(cfg, ["platform.piptb.body.m_b=15.5",
                                    "service.port=9000"])
        assert platform_config(cfg, "piptb").wip.m_b == 15.5
        assert cfg["service"]["port"] == 9000
        with pytest.raises(ConfigError, match="unknown key"):
            apply_overrides(cfg, ["platform.piptb.body.bogus=1"])
        with pytest.raises(ConfigError, match="key=value"):
            apply_overrides(cfg, ["oops"])

    def test_unknown_platform(self):
        with pytest.raises(ConfigError, match="unknown platform"):
            platform_config(load_config(), "unicycle")

    def test_missing_config_file(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("/nonexistent/path.toml")


class TestCliExitCodes:
    def test_simulate_rest_ok(self, tmp_path):
        assert main(["--out", str(tmp_path), "simulate",
                     "--scenario", "rest"]) == 0
        base = tmp_path / "simulate" / "rest" / "run"
        for f in ("run.csv", "metrics.json", "quicklook.svg", "manifest.json"):
            assert (base / f).exists()

    def test_unknown_scenario_usage_error(self, tmp_path, capsys):
        assert main(["--out", str(tmp_path), "simulate",
                     "--scenario", "nope"]) == 2
        err = capsys.readouterr().err
        assert "rest" in err  # lists the known scenarios

    def test_balance_failure_exit_code(self, tmp_path):
        # A tilted start with the controller disabled topples the testbed.
        user = tmp_path / "user.toml"
        user.write_text(
            "[scenario.topple]\nplatform = \"piptb\"\nmode = \"planar\"\n"
            "controller = \"none\"\ninitial_tilt = 0.2\ntail_s = 3.0\n"
            "phases = []\n")
        code = main(["--config", str(user), "--out", str(tmp_path),
                     "simulate", "--scenario", "topple"])
        assert code == 5

    def test_optimize_ok_and_nonconvergence(self, tmp_path):
        assert main(["--out", str(tmp_path), "optimize",
                     "--task", "piptb-brake-1p0"]) == 0
        report = json.loads((tmp_path / "optimize" / "piptb-brake-1p0" /
                             "run" / "report.json").read_text())
        assert report["solver"]["converged"]
        assert report["tilt_back"] and report["speed_overshoot"]
        assert report["negative_power_spans"]
        assert main(["--out", str(tmp_path), "optimize",
                     "--task", "brake-1p4", "--max-iter", "1"]) == 3
        bad = json.loads((tmp_path / "optimize" / "brake-1p4" /
                          "run" / "report.json").read_text())
        assert not bad["solver"]["converged"]
        assert (tmp_path / "optimize" / "brake-1p4" / "run"
                / "trajectory.csv").exists()

    def test_degenerate_task_zero_objective(self, tmp_path):
        code = main(["--out", str(tmp_path),
                     "--set", "task.piptb-brake-1p0.v0=0.0",
                     "optimize", "--task", "piptb-brake-1p0"])
        assert code == 0
        report = json.loads((tmp_path / "optimize" / "piptb-brake-1p0" /
                             "run" / "report.json").read_text())
        assert report["objective"] == pytest.approx(0.0, abs=1e-12)

    def test_artifacts_reproducible(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            assert main(["--out", str(out), "--seed", "3", "simulate",
                         "--scenario", "piptb-braking"]) == 0
        for f in ("run.csv", "metrics.json", "quicklook.svg", "manifest.json"):
            fa = (a / "simulate" / "piptb-braking" / "run" / f).read_bytes()
            fb = (b / "simulate" / "piptb-braking" / "run" / f).read_bytes()
            assert fa == fb, f

    def test_benchmark_compare_controllers(self, tmp_path):
        code = main(["--out", str(tmp_path),
                     "--set", "benchmark.compare-controllers.trials=1",
                     "benchmark", "--name", "compare-controllers"])
        assert code == 0
        table = json.loads((tmp_path / "benchmark" / "compare-controllers" /
                            "run" / "table.json").read_text())
        rows = {r["controller"]: r for r in table["rows"]}
        assert rows["lqr-pi"]["braking_effort_mean"] < \
            rows["pi-pd"]["braking_effort_mean"]
        assert (tmp_path / "benchmark" / "compare-controllers" / "run"
                / "table.csv").exists()

    def test_benchmark_empty_headings_usage_error(self, tmp_path):
        code = main(["--out", str(tmp_path),
                     "--set", "benchmark.max-speed.headings_deg=[]",
                     "benchmark", "--name", "max-speed"])
        assert code == 2

    def test_serve_bind_failure_exit_code(self, tmp_path):
        blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        blocker.bind(("127.0.0.1", 0))
        port = blocker.getsockname()[1]
        try:
            code = main(["serve", "--bind", f"127.0.0.1:{port}"])
            assert code == 4
        finally:
            blocker.close()

    def test_console_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "ballbot_lab.cli",
                              "--help"], capture_output=True, text=True)
        assert out.returncode == 0
        assert "simulate" in out.stdout and "serve" in out.stdout

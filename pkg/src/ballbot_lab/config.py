"""Configuration loading: TOML documents, unit suffixes, dotted overrides.

One structured document configures platforms, scenarios, optimization tasks,
benchmarks, and the teleop service.  A packaged default ships the
`miapure` and `piptb` platform presets; user documents are deep-merged on
top, and `--set dotted.key=value` overrides are applied last.  Keys ending
in `_deg` are interpreted as degrees and resolved to a radian twin without
the suffix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .dynamics import FrictionParams, SpinParams, WipParams
from .kinematics import DrivetrainGeometry

__all__ = [
    "ConfigError",
    "load_config",
    "apply_overrides",
    "resolve_units",
    "PlatformConfig",
    "ControllerConfig",
    "platform_config",
]


class ConfigError(ValueError):
    """Malformed configuration document or override."""


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def resolve_units(node: Any) -> Any:
    """Convert `*_deg` keys (scalar or list) to radian twins, recursively."""
    if isinstance(node, dict):
        out: dict[str, Any] = {}
        for key, value in node.items():
            if key.endswith("_deg"):
                bare = key[:-4]
                if isinstance(value, list):
                    out[bare] = [math.radians(float(v)) for v in value]
                else:
                    out[bare] = math.radians(float(value))
                out[key] = value
            else:
                out[key] = resolve_units(value)
        return out
    if isinstance(node, list):
        return [resolve_units(v) for v in node]
    return node


def load_config(path: str | Path | None = None) -> dict:
    """Load the packaged defaults, deep-merged with an optional user file."""
    text = resources.files("ballbot_lab").joinpath("presets/default.toml").read_text()
    cfg = tomllib.loads(text)
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            user = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {p}: {exc}") from exc
        cfg = _deep_merge(cfg, user)
    return resolve_units(cfg)


def _parse_literal(text: str) -> Any:
    """Parse an override value as a TOML literal, falling back to a string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """Apply `dotted.key=value` overrides; keys must already exist."""
    out = cfg
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value: {item!r}")
        dotted, raw = item.split("=", 1)
        keys = dotted.strip().split(".")
        node = out
        for k in keys[:-1]:
            if not isinstance(node, dict) or k not in node:
                raise ConfigError(f"override references unknown key: {dotted}")
            node = node[k]
        leaf = keys[-1]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(f"override references unknown key: {dotted}")
        node[leaf] = _parse_literal(raw.strip())
    return resolve_units(out)


@dataclass(frozen=True)
class ControllerConfig:
    """Controller selection and gains for one platform."""

    kind: str                 # "lqr" | "pi-pd" | "lqr-pi"
    outer_rate_hz: float
    inner_rate_hz: float
    lqr_q: tuple[float, float, float, float]
    lqr_r: float
    pi_k_p: float
    pi_k_i: float
    pi_integrator_limit: float
    pd_k_p_outer: float
    pd_k_i_outer: float
    pd_k_p_tilt: float
    pd_k_d_tilt: float
    pd_tilt_limit: float
    yaw_q: tuple[float, float]
    yaw_r: float

    def __post_init__(self) -> None:
        if self.kind not in ("lqr", "pi-pd", "lqr-pi"):
            raise ConfigError(f"unknown controller kind: {self.kind!r}")
        ratio = self.inner_rate_hz / self.outer_rate_hz
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("inner/outer rate ratio must be an integer")


@dataclass(frozen=True)
class PlatformConfig:
    """Resolved plant + controller configuration for one platform."""

    name: str
    wip: WipParams
    spin: SpinParams
    friction: FrictionParams
    geometry: DrivetrainGeometry
    tau_motor_max: float
    v_cmd_max: float
    controller: ControllerConfig


def _controller_config(node: dict) -> ControllerConfig:
    lqr = node.get("lqr", {})
    pi = node.get("pi", {})
    pd = node.get("pd", {})
    yaw = node.get("yaw", {})
    return ControllerConfig(
        kind=node.get("kind", "lqr-pi"),
        outer_rate_hz=float(node.get("outer_rate_hz", 400)),
        inner_rate_hz=float(node.get("inner_rate_hz", 8000)),
        lqr_q=tuple(float(v) for v in lqr.get("q", (100.0, 0.0, 10.0, 1.0))),
        lqr_r=float(lqr.get("r", 1.0)),
        pi_k_p=float(pi.get("k_p", 1.0)),
        pi_k_i=float(pi.get("k_i", 10.0)),
        pi_integrator_limit=float(pi.get("integrator_limit", 4.0)),
        pd_k_p_outer=float(pd.get("k_p_outer", 0.05)),
        pd_k_i_outer=float(pd.get("k_i_outer", 0.02)),
        pd_k_p_tilt=float(pd.get("k_p_tilt", 100.0)),
        pd_k_d_tilt=float(pd.get("k_d_tilt", 10.0)),
        pd_tilt_limit=float(pd.get("tilt_limit", 0.25)),
        yaw_q=tuple(float(v) for v in yaw.get("q", (10.0, 1.0))),
        yaw_r=float(yaw.get("r", 1.0)),
    )


def platform_config(cfg: dict, name: str) -> PlatformConfig:
    """Build the resolved PlatformConfig for a named platform."""
    platforms = cfg.get("platform", {})
    if name not in platforms:
        known = ", ".join(sorted(platforms)) or "(none)"
        raise ConfigError(f"unknown platform {name!r}; known: {known}")
    node = platforms[name]
    body = node["body"]
    spin = node["spin"]
    fric = node["friction"]
    geo = node["geometry"]
    limits = node.get("limits", {})
    return PlatformConfig(
        name=name,
        wip=WipParams(m_b=body["m_b"], m_w=body["m_w"], I_b=body["I_b"],
                      I_w=body["I_w"], l=body["l"], r=body["r"],
                      g=body.get("g", 9.81)),
        spin=SpinParams(I_z=spin["I_z"], c_v=spin["c_v"], c_c=spin["c_c"]),
        friction=FrictionParams(
            tau_stiction=fric["tau_stiction"], tau_coulomb=fric["tau_coulomb"],
            b_v=fric["b_v"], omega_stribeck=fric.get("omega_stribeck", 1.0),
            omega_eps=fric.get("omega_eps", 1e-3)),
        geometry=DrivetrainGeometry(
            r_s=geo["r_s"], r_o=geo["r_o"], alpha=geo["alpha"],
            gamma=tuple(geo["gamma"]), gear_ratio=geo["gear_ratio"]),
        tau_motor_max=float(limits.get("tau_motor_max", 43.2)),
        v_cmd_max=float(limits.get("v_cmd_max", 2.0)),
        controller=_controller_config(node.get("controller", {})),
    )

"""Closed-loop scenario execution and benchmark protocols.

Scenarios run a fixed-step simulation (RK4 at the inner control period) of
either the single-plane testbed (planar mode) or the full three-plane
ballbot (3d mode), with the selected controller interleaved on the
outer/inner multi-rate grid.  Benchmarks reproduce the controller
comparison protocol (accelerate 2 s to the cruise speed, hold 2 s, brake
along an optimal trajectory), the slow-ramp maximum-speed test per heading
with friction-cone slip detection, and the shrinking-duration minimum
braking-time search.

Determinism: identical spec + seed yields identical results; sensor noise
is the only consumer of randomness and noiseless runs never touch the RNG.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import PlatformConfig
from .controllers import (
    BallbotCommand,
    BallbotController,
    BallbotMeasurement,
    CommandState,
    LqrWeights,
    PdGains,
    PiGains,
    make_planar_controller,
    solve_lqr,
    solve_yaw_lqr,
)
from .dynamics import (
    TILT_FAILURE_RAD,
    FrictionParams,
    PlanarState,
    SpinParams,
    friction_torque,
    linearize,
    spin_accel,
    total_energy,
)
from .dynamics import _accel  # shared scalar EOM core for the hot loop
from .kinematics import (
    ContactSeparationError,
    contact_forces,
    motor_speeds_from_planar,
    planar_torques_from_motor,
    PlanarRates,
)
from .trajopt import BrakingTask, TrajOptError, Trajectory, solve, transcribe

__all__ = [
    "Phase",
    "SensorModel",
    "ScenarioSpec",
    "RunResult",
    "scenario_from_config",
    "prepare_scenario",
    "run_scenario",
    "braking_effort",
    "max_speed_ramp",
    "min_braking_search",
    "compare_controllers",
    "metrics_json",
]


@dataclass(frozen=True)
class Phase:
    """One command phase: analytic ramp, constant speed, or a braking
    trajectory tracked as the command state."""

    kind: str                # "ramp" | "hold" | "brake"
    duration: float
    v_from: float = 0.0      # ramp start speed [m/s]
    v_to: float = 0.0        # ramp end speed [m/s]
    v: float = 0.0           # hold speed / brake entry speed [m/s]
    trajectory: Trajectory | None = None
    n_knots: int = 50        # knots used when the brake trajectory is solved

    def __post_init__(self) -> None:
        if self.kind not in ("ramp", "hold", "brake"):
            raise ValueError(f"unknown phase kind: {self.kind!r}")
        if not self.duration > 0.0:
            raise ValueError("phase duration must be positive")


@dataclass(frozen=True)
class SensorModel:
    """Noiseless by default; optional IMU noise (redrawn at the outer rate)
    and encoder speed quantization."""

    imu_noise_std: float = 0.0      # additive, on tilt and tilt rate
    encoder_quantum: float = 0.0    # motor-speed rounding step [rad/s]

    @property
    def noiseless(self) -> bool:
        return self.imu_noise_std == 0.0


@dataclass(frozen=True)
class ScenarioSpec:
    """Full description of one closed-loop run."""

    platform: PlatformConfig
    mode: str = "planar"             # "planar" | "3d"
    controller: str | None = None    # default: platform's configured kind
    phases: tuple[Phase, ...] = ()
    heading: float = 0.0             # 3d translation direction [rad]
    mu: float = 0.8                  # OW-SW friction coefficient
    dt: float = 1.0 / 8000.0
    log_stride: int = 1
    tail: float = 0.0                # extra time with the final command held
    initial_tilt: float = 0.0        # planar initial theta [rad]
    slip_aborts: bool = True
    separation_aborts: bool = False  # idle-OW preload loss is survivable
    friction_enabled: bool = True
    sensors: SensorModel = field(default_factory=SensorModel)
    brake_tau_max: float | None = None  # optimizer torque bound [N m]

    def __post_init__(self) -> None:
        if self.mode not in ("planar", "3d"):
            raise ValueError(f"unknown mode: {self.mode!r}")
        ratio = 1.0 / (self.dt * self.platform.controller.outer_rate_hz)
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("integration step must divide the outer period")

    @property
    def controller_kind(self) -> str:
        return self.controller or self.platform.controller.kind

    @property
    def total_duration(self) -> float:
        return sum(p.duration for p in self.phases) + self.tail


@dataclass
class RunResult:
    """Aligned time series, timestamped events, and scalar metrics."""

    time: np.ndarray
    series: dict[str, np.ndarray]
    events: list[dict]
    metrics: dict
    completed: bool
    failure: str | None


def metrics_json(result: RunResult) -> str:
    payload = {"metrics": result.metrics, "events": result.events}
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def scenario_from_config(cfg: dict, name: str, platform: PlatformConfig,
                         sim_cfg: dict | None = None) -> ScenarioSpec:
    """Build a ScenarioSpec from a named [scenario.*] config section."""
    scenarios = cfg.get("scenario", {})
    if name not in scenarios:
        known = ", ".join(sorted(scenarios)) or "(none)"
        raise KeyError(f"unknown scenario {name!r}; known: {known}")
    node = scenarios[name]
    phases = []
    for ph in node.get("phases", []):
        kind = ph["kind"]
        phases.append(Phase(
            kind=kind, duration=float(ph["duration"]),
            v_from=float(ph.get("v_from", 0.0)), v_to=float(ph.get("v_to", 0.0)),
            v=float(ph.get("v", 0.0)), n_knots=int(ph.get("n_knots", 50))))
    sim = sim_cfg or cfg.get("sim", {})
    sensors = SensorModel(
        imu_noise_std=float(node.get("imu_noise_std", 0.0)),
        encoder_quantum=float(node.get("encoder_quantum", 0.0)))
    return ScenarioSpec(
        platform=platform,
        mode=node.get("mode", "planar"),
        controller=node.get("controller"),
        phases=tuple(phases),
        heading=float(node.get("heading", 0.0)),
        mu=float(node.get("mu", 0.8)),
        dt=float(sim.get("dt", 1.0 / 8000.0)),
        log_stride=int(sim.get("log_stride", 1)),
        tail=float(node.get("tail_s", 0.0)),
        initial_tilt=float(node.get("initial_tilt", 0.0)),
        slip_aborts=bool(node.get("slip_aborts", True)),
        sensors=sensors,
    )


def prepare_scenario(spec: ScenarioSpec) -> ScenarioSpec:
    """Solve any brake-phase trajectories the spec does not yet carry."""
    phases = []
    for ph in spec.phases:
        if ph.kind == "brake" and ph.trajectory is None:
            task = BrakingTask(v0=ph.v, t_dur=ph.duration,
                               tau_max=spec.brake_tau_max)
            traj, _ = solve(transcribe(spec.platform.wip, task, ph.n_knots))
            ph = replace(ph, trajectory=traj)
        phases.append(ph)
    return replace(spec, phases=tuple(phases))


def _command_profile(spec: ScenarioSpec):
    """Map run time to (theta_c, theta_dot_c, v_c) along the phase list."""
    r = spec.platform.wip.r
    boundaries = []
    t0 = 0.0
    for ph in spec.phases:
        boundaries.append((t0, t0 + ph.duration, ph))
        t0 += ph.duration
    end_command = (0.0, 0.0, 0.0)
    if spec.phases:
        last = spec.phases[-1]
        if last.kind == "hold":
            end_command = (0.0, 0.0, last.v)
        elif last.kind == "ramp":
            end_command = (0.0, 0.0, last.v_to)
        # brake trajectories end at rest, matching (0, 0, 0)

    def at(t: float) -> tuple[float, float, float]:
        for start, stop, ph in boundaries:
            if start <= t < stop:
                local = t - start
                if ph.kind == "ramp":
                    v = ph.v_from + (ph.v_to - ph.v_from) * local / ph.duration
                    return (0.0, 0.0, v)
                if ph.kind == "hold":
                    return (0.0, 0.0, ph.v)
                s_c, _ = ph.trajectory.sample(local)
                return (s_c.theta, s_c.theta_dot, s_c.phi_dot * r)
        return end_command

    return at


def _phase_events(spec: ScenarioSpec) -> list[dict]:
    events = []
    t0 = 0.0
    for ph in spec.phases:
        events.append({"t": t0, "kind": "phase", "name": ph.kind})
        t0 += ph.duration
    events.append({"t": t0, "kind": "phase", "name": "end"})
    return events


def _build_planar_controller(spec: ScenarioSpec):
    plat = spec.platform
    cc = plat.controller
    kind = spec.controller_kind
    ratio = int(round(cc.inner_rate_hz / cc.outer_rate_hz))
    outer_dt = 1.0 / cc.outer_rate_hz
    inner_dt = 1.0 / cc.inner_rate_hz
    if kind == "none":
        class _Zero:
            def step(self, tick, s, cmd):
                return 0.0

            def reset(self):
                pass

            state = None

        return _Zero(), ratio
    gains = solve_lqr(linearize(plat.wip), LqrWeights(Q=np.array(cc.lqr_q),
                                                      R=cc.lqr_r))
    pi = PiGains(cc.pi_k_p, cc.pi_k_i, cc.pi_integrator_limit)
    pd = PdGains(cc.pd_k_p_outer, cc.pd_k_i_outer, cc.pd_k_p_tilt,
                 cc.pd_k_d_tilt, cc.pd_tilt_limit)
    return make_planar_controller(kind, plat.wip, gains, pi, pd, ratio,
                                  outer_dt, inner_dt), ratio


def _run_planar(spec: ScenarioSpec, seed: int) -> RunResult:
    plat = spec.platform
    p = plat.wip
    fric = plat.friction if spec.friction_enabled else FrictionParams.frictionless()
    a = p._a  # type: ignore[attr-defined]
    controller, ratio = _build_planar_controller(spec)
    command_at = _command_profile(spec)
    dt = spec.dt
    n_ticks = int(round(spec.total_duration / dt))
    stride = spec.log_stride
    tau_max = plat.tau_motor_max
    rng = np.random.default_rng(seed)
    noisy = not spec.sensors.noiseless
    quantum = spec.sensors.encoder_quantum

    theta, phi, theta_dot, phi_dot = spec.initial_tilt, 0.0, 0.0, 0.0
    meas_theta, meas_theta_dot = theta, theta_dot

    n_log = n_ticks // stride + 2
    log_t = np.empty(n_log)
    log = {k: np.empty(n_log) for k in
           ("theta", "phi", "theta_dot", "phi_dot", "tau", "v_cmd",
            "tau_r", "phi_dot_r")}
    events = _phase_events(spec)
    failure = None
    outer_updates = 0
    row = 0
    tick = 0

    for tick in range(n_ticks):
        t = tick * dt
        if tick % ratio == 0:
            outer_updates += 1
            meas_theta, meas_theta_dot = theta, theta_dot
            if noisy:
                meas_theta += rng.normal(0.0, spec.sensors.imu_noise_std)
                meas_theta_dot += rng.normal(0.0, spec.sensors.imu_noise_std)
        meas_phi_dot = phi_dot
        if quantum > 0.0:
            meas_phi_dot = round(phi_dot / quantum) * quantum
        theta_c, theta_dot_c, v_c = command_at(t)
        cmd = CommandState(theta_c=theta_c, theta_dot_c=theta_dot_c,
                           phi_dot_c=v_c / p.r)
        s_meas = PlanarState(meas_theta, phi, meas_theta_dot, meas_phi_dot)
        tau = controller.step(tick, s_meas, cmd)
        if tau > tau_max:
            tau = tau_max
        elif tau < -tau_max:
            tau = -tau_max

        if tick % stride == 0:
            log_t[row] = t
            log["theta"][row] = theta
            log["phi"][row] = phi
            log["theta_dot"][row] = theta_dot
            log["phi_dot"][row] = phi_dot
            log["tau"][row] = tau
            log["v_cmd"][row] = v_c
            cs = getattr(controller, "state", None)
            log["tau_r"][row] = cs.tau_r if cs is not None else 0.0
            log["phi_dot_r"][row] = cs.phi_dot_r if cs is not None else 0.0
            row += 1

        if abs(theta) > TILT_FAILURE_RAD:
            failure = "balance"
            events.append({"t": t, "kind": "balance_failure"})
            break

        # RK4 with the torque held over the step.
        def deriv(ss):
            th, _, td, pd = ss
            tau_eff = tau - friction_torque(fric, pd, tau)
            tdd, pdd = _accel(p, th, td, pd, tau_eff)
            return (td, pd, tdd, pdd)

        s = (theta, phi, theta_dot, phi_dot)
        k1 = deriv(s)
        h2 = 0.5 * dt
        k2 = deriv((theta + h2 * k1[0], phi + h2 * k1[1],
                    theta_dot + h2 * k1[2], phi_dot + h2 * k1[3]))
        k3 = deriv((theta + h2 * k2[0], phi + h2 * k2[1],
                    theta_dot + h2 * k2[2], phi_dot + h2 * k2[3]))
        k4 = deriv((theta + dt * k3[0], phi + dt * k3[1],
                    theta_dot + dt * k3[2], phi_dot + dt * k3[3]))
        h6 = dt / 6.0
        theta += h6 * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0])
        phi += h6 * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1])
        theta_dot += h6 * (k1[2] + 2.0 * (k2[2] + k3[2]) + k4[2])
        phi_dot += h6 * (k1[3] + 2.0 * (k2[3] + k3[3]) + k4[3])

    completed = failure is None
    if completed and n_ticks:
        log_t[row] = n_ticks * dt
        for key, value in (("theta", theta), ("phi", phi),
                           ("theta_dot", theta_dot), ("phi_dot", phi_dot)):
            log[key][row] = value
        for key in ("tau", "v_cmd", "tau_r", "phi_dot_r"):
            log[key][row] = log[key][row - 1] if row else 0.0
        row += 1
    log_t = log_t[:row]
    series = {k: v[:row] for k, v in log.items()}
    series["v"] = series["phi_dot"] * p.r
    metrics = {
        "mode": "planar",
        "controller": spec.controller_kind,
        "seed": seed,
        "ticks": tick + 1 if n_ticks else 0,
        "outer_updates": outer_updates,
        "duration_s": spec.total_duration,
        "completed": completed,
        "failure": failure,
        "final_speed_mps": float(phi_dot * p.r),
        "final_tilt_rad": float(theta),
        "max_abs_tilt_rad": float(np.max(np.abs(series["theta"]))) if row else 0.0,
        "energy_final_J": total_energy(p, PlanarState(theta, phi, theta_dot,
                                                      phi_dot)),
    }
    _add_brake_metrics(spec, log_t, series, metrics)
    return RunResult(time=log_t, series=series, events=events,
                     metrics=metrics, completed=completed, failure=failure)


def _add_brake_metrics(spec: ScenarioSpec, log_t, series, metrics) -> None:
    t0 = 0.0
    for ph in spec.phases:
        if ph.kind == "brake":
            metrics["brake_window"] = [t0, t0 + ph.duration]
            key = "tau" if "tau" in series else "tau_y"
            mask = (log_t >= t0) & (log_t <= t0 + ph.duration)
            if np.count_nonzero(mask) > 1:
                metrics["braking_effort"] = float(
                    np.trapezoid(series[key][mask] ** 2, log_t[mask]))
            return
        t0 += ph.duration


def _run_3d(spec: ScenarioSpec, seed: int) -> RunResult:
    plat = spec.platform
    p = plat.wip
    g = plat.geometry
    cc = plat.controller
    fric = plat.friction if spec.friction_enabled else FrictionParams.frictionless()
    spin = plat.spin if spec.friction_enabled else SpinParams(
        I_z=plat.spin.I_z, c_v=0.0, c_c=0.0)
    kind = spec.controller_kind
    if kind not in ("lqr", "lqr-pi", "none"):
        raise ValueError(f"3d mode supports lqr / lqr-pi / none, got {kind!r}")
    ratio = int(round(cc.inner_rate_hz / cc.outer_rate_hz))
    gains = solve_lqr(linearize(p), LqrWeights(Q=np.array(cc.lqr_q), R=cc.lqr_r))
    yaw = solve_yaw_lqr(plat.spin, cc.yaw_q, cc.yaw_r)
    pi = PiGains(cc.pi_k_p, cc.pi_k_i, cc.pi_integrator_limit)
    controller = BallbotController(
        p, plat.spin, g, gains, yaw, pi, ratio=ratio,
        outer_dt=1.0 / cc.outer_rate_hz, inner_dt=1.0 / cc.inner_rate_hz,
        tau_max=plat.tau_motor_max, inner_pi_enabled=(kind == "lqr-pi"))
    zero_torque = kind == "none"

    command_at = _command_profile(spec)
    sin_h, cos_h = math.sin(spec.heading), math.cos(spec.heading)
    dt = spec.dt
    n_ticks = int(round(spec.total_duration / dt))
    stride = spec.log_stride
    rng = np.random.default_rng(seed)
    noisy = not spec.sensors.noiseless
    quantum = spec.sensors.encoder_quantum

    # Plant truth state per plane; the ball has no vertical spin.
    sx = [0.0, 0.0, 0.0, 0.0]
    sy = [0.0, 0.0, 0.0, 0.0]
    theta_z, omega_z = 0.0, 0.0
    meas_tilt = (0.0, 0.0, 0.0, 0.0)

    K = g._K  # type: ignore[attr-defined]
    n_log = n_ticks // stride + 2
    log_t = np.empty(n_log)
    keys = ("theta_x", "theta_y", "phi_dot_x", "phi_dot_y", "theta_z",
            "omega_z", "tau_x", "tau_y", "tau_z", "u1", "u2", "u3",
            "v", "v_cmd", "min_margin")
    log = {k: np.empty(n_log) for k in keys}
    events = _phase_events(spec)
    failure = None
    outer_updates = 0
    slipping = False
    separated = False
    min_margin_run = math.inf
    last_margin = math.nan
    row = 0
    tick = 0
    u = (0.0, 0.0, 0.0)

    for tick in range(n_ticks):
        t = tick * dt
        # Encoders: motor speeds from the true relative rates.
        w_rel = (sx[2] - sx[3], sy[3] - sy[2], -omega_z)
        psi = (
            K[0, 0] * w_rel[0] + K[0, 1] * w_rel[1] + K[0, 2] * w_rel[2],
            K[1, 0] * w_rel[0] + K[1, 1] * w_rel[1] + K[1, 2] * w_rel[2],
            K[2, 0] * w_rel[0] + K[2, 1] * w_rel[1] + K[2, 2] * w_rel[2],
        )
        if quantum > 0.0:
            psi = tuple(round(v / quantum) * quantum for v in psi)
        if tick % ratio == 0:
            meas_tilt = (sx[0], sy[0], sx[2], sy[2])
            if noisy:
                meas_tilt = tuple(
                    v + rng.normal(0.0, spec.sensors.imu_noise_std)
                    for v in meas_tilt)
        theta_c, theta_dot_c, v_c = command_at(t)
        cmd = BallbotCommand(
            x=CommandState(theta_c=theta_c * sin_h,
                           theta_dot_c=theta_dot_c * sin_h,
                           phi_dot_c=v_c * sin_h / g.r_s),
            y=CommandState(theta_c=theta_c * cos_h,
                           theta_dot_c=theta_dot_c * cos_h,
                           phi_dot_c=v_c * cos_h / g.r_s),
            yaw_rate_c=0.0)
        meas = BallbotMeasurement(theta_x=meas_tilt[0], theta_y=meas_tilt[1],
                                  theta_dot_x=meas_tilt[2],
                                  theta_dot_y=meas_tilt[3], psi_dot=psi)
        u = controller.step(tick, meas, cmd)
        if zero_torque:
            u = (0.0, 0.0, 0.0)
        tau_x, tau_y, tau_z = planar_torques_from_motor(g, u)

        if tick % ratio == 0:
            outer_updates += 1
            try:
                report = contact_forces(g, p.m_b, (sx[0], sy[0]), u, spec.mu,
                                        grav=p.g)
                last_margin = report.min_margin
                min_margin_run = min(min_margin_run, last_margin)
                if report.any_slip and not slipping:
                    slipping = True
                    events.append({"t": t, "kind": "slip",
                                   "margin": report.min_margin})
                    if spec.slip_aborts:
                        failure = "slip"
                elif not report.any_slip:
                    slipping = False
            except ContactSeparationError:
                last_margin = math.nan
                if not separated:
                    separated = True
                    events.append({"t": t, "kind": "contact_separation"})
                    if spec.separation_aborts:
                        failure = "separation"
            else:
                separated = False

        if tick % stride == 0:
            log_t[row] = t
            log["theta_x"][row] = sx[0]
            log["theta_y"][row] = sy[0]
            log["phi_dot_x"][row] = sx[3]
            log["phi_dot_y"][row] = sy[3]
            log["theta_z"][row] = theta_z
            log["omega_z"][row] = omega_z
            log["tau_x"][row] = tau_x
            log["tau_y"][row] = tau_y
            log["tau_z"][row] = tau_z
            log["u1"][row], log["u2"][row], log["u3"][row] = u
            log["v"][row] = g.r_s * math.hypot(sx[3], sy[3])
            log["v_cmd"][row] = v_c
            log["min_margin"][row] = last_margin
            row += 1

        if abs(sx[0]) > TILT_FAILURE_RAD or abs(sy[0]) > TILT_FAILURE_RAD:
            failure = "balance"
            events.append({"t": t, "kind": "balance_failure"})
            break
        if failure is not None:
            break

        for s, tau in ((sx, tau_x), (sy, tau_y)):
            th, ph_, td, pd = s
            k1 = _plane_deriv(p, fric, th, td, pd, tau)
            h2 = 0.5 * dt
            k2 = _plane_deriv(p, fric, th + h2 * k1[0], td + h2 * k1[2],
                              pd + h2 * k1[3], tau)
            k3 = _plane_deriv(p, fric, th + h2 * k2[0], td + h2 * k2[2],
                              pd + h2 * k2[3], tau)
            k4 = _plane_deriv(p, fric, th + dt * k3[0], td + dt * k3[2],
                              pd + dt * k3[3], tau)
            h6 = dt / 6.0
            s[0] = th + h6 * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0])
            s[1] = ph_ + h6 * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1])
            s[2] = td + h6 * (k1[2] + 2.0 * (k2[2] + k3[2]) + k4[2])
            s[3] = pd + h6 * (k1[3] + 2.0 * (k2[3] + k3[3]) + k4[3])
        # Spin plane (RK4 on the 2-state model).
        w1 = spin_accel(spin, omega_z, tau_z)
        w2 = spin_accel(spin, omega_z + 0.5 * dt * w1, tau_z)
        w3 = spin_accel(spin, omega_z + 0.5 * dt * w2, tau_z)
        w4 = spin_accel(spin, omega_z + dt * w3, tau_z)
        theta_z += dt * omega_z + dt * dt / 6.0 * (w1 + w2 + w3)
        omega_z += dt / 6.0 * (w1 + 2.0 * (w2 + w3) + w4)

    completed = failure is None
    if completed and n_ticks:
        log_t[row] = n_ticks * dt
        for key, value in (("theta_x", sx[0]), ("theta_y", sy[0]),
                           ("phi_dot_x", sx[3]), ("phi_dot_y", sy[3]),
                           ("theta_z", theta_z), ("omega_z", omega_z),
                           ("v", g.r_s * math.hypot(sx[3], sy[3]))):
            log[key][row] = value
        for key in ("tau_x", "tau_y", "tau_z", "u1", "u2", "u3", "v_cmd",
                    "min_margin"):
            log[key][row] = log[key][row - 1] if row else 0.0
        row += 1
    log_t = log_t[:row]
    series = {k: v[:row] for k, v in log.items()}
    v_final = g.r_s * math.hypot(sx[3], sy[3])
    metrics = {
        "mode": "3d",
        "controller": kind,
        "seed": seed,
        "heading_rad": spec.heading,
        "ticks": tick + 1 if n_ticks else 0,
        "outer_updates": outer_updates,
        "duration_s": spec.total_duration,
        "completed": completed,
        "failure": failure,
        "failure_time_s": events[-1]["t"] if failure else None,
        "final_speed_mps": v_final,
        "final_tilt_rad": float(math.hypot(sx[0], sy[0])),
        "max_abs_tilt_rad": float(max(np.max(np.abs(series["theta_x"]), initial=0.0),
                                      np.max(np.abs(series["theta_y"]), initial=0.0))),
        "min_margin_N": None if math.isinf(min_margin_run) else float(min_margin_run),
    }
    _add_brake_metrics(spec, log_t, series, metrics)
    return RunResult(time=log_t, series=series, events=events,
                     metrics=metrics, completed=completed, failure=failure)


def _plane_deriv(p, fric, th, td, pd, tau):
    tau_eff = tau - friction_torque(fric, pd, tau)
    tdd, pdd = _accel(p, th, td, pd, tau_eff)
    return (td, pd, tdd, pdd)


def run_scenario(spec: ScenarioSpec, seed: int = 0) -> RunResult:
    """Deterministic fixed-step closed-loop simulation of one scenario."""
    spec = prepare_scenario(spec)
    if spec.mode == "planar":
        return _run_planar(spec, seed)
    return _run_3d(spec, seed)


def braking_effort(result: RunResult, t2: float, t3: float,
                   key: str | None = None) -> float:
    """Trapezoidal quadrature of tau^2 over [t2, t3] from the logged torque."""
    if t3 <= t2:
        raise ValueError("need t2 < t3")
    t = result.time
    if t2 < t[0] - 1e-9 or t3 > t[-1] + 1e-9:
        raise ValueError(f"[{t2}, {t3}] outside run span [{t[0]}, {t[-1]}]")
    if key is None:
        key = "tau" if "tau" in result.series else "tau_y"
    mask = (t >= t2) & (t <= t3)
    return float(np.trapezoid(result.series[key][mask] ** 2, t[mask]))


def max_speed_ramp(platform: PlatformConfig, heading: float, mu: float = 0.8,
                   ramp_accel: float = 0.1, v_ceiling: float = 2.5,
                   seed: int = 0, dt: float = 1.0 / 8000.0,
                   log_stride: int = 20) -> tuple[float, bool, RunResult]:
    """Slow speed ramp at a heading until slip or balance failure.

    Returns (speed at failure, failed flag, run result); no-failure runs
    return the ramp ceiling with failed=False.
    """
    duration = v_ceiling / ramp_accel
    spec = ScenarioSpec(
        platform=platform, mode="3d", controller="lqr-pi",
        phases=(Phase(kind="ramp", duration=duration, v_from=0.0,
                      v_to=v_ceiling),),
        heading=heading, mu=mu, dt=dt, log_stride=log_stride,
        slip_aborts=True)
    result = run_scenario(spec, seed)
    if result.failure is None:
        return v_ceiling, False, result
    speed = float(result.series["v"][-1]) if len(result.time) else 0.0
    return speed, True, result


def min_braking_search(platform: PlatformConfig, heading: float = math.pi,
                       cruise_speed: float = 1.4, start_duration: float = 5.0,
                       step: float = 0.5, floor: float = 0.5,
                       ramp_accel: float = 0.25, hold_s: float = 2.5,
                       mu: float = 0.8, seed: int = 0,
                       dt: float = 1.0 / 8000.0, log_stride: int = 20,
                       brake_tau_max: float | None = None,
                       tail: float = 1.0) -> tuple[float, list[dict]]:
    """Shrink the braking duration by `step` until the run fails.

    A probe solves the optimal braking trajectory for the duration (with an
    optional torque bound), runs the ramp/hold/brake scenario, and succeeds
    when the run finishes with no slip or balance failure, stopped
    (|v| <= 0.05 m/s) and upright (|tilt| <= 1 deg); an infeasible
    trajectory optimization also fails the probe.  Returns the last
    successful duration and the per-probe table.
    """
    ramp_time = cruise_speed / ramp_accel
    probes: list[dict] = []
    best = None
    duration = start_duration
    while duration >= floor - 1e-9:
        spec = ScenarioSpec(
            platform=platform, mode="3d", controller="lqr-pi",
            phases=(
                Phase(kind="ramp", duration=ramp_time, v_from=0.0,
                      v_to=cruise_speed),
                Phase(kind="hold", duration=hold_s, v=cruise_speed),
                Phase(kind="brake", duration=duration, v=cruise_speed),
            ),
            heading=heading, mu=mu, dt=dt, log_stride=log_stride, tail=tail,
            brake_tau_max=brake_tau_max)
        try:
            result = run_scenario(spec, seed)
        except TrajOptError as exc:
            probes.append({"duration_s": duration, "success": False,
                           "failure": f"trajopt: {exc.report.message}"})
            break
        ok = (result.completed
              and abs(result.metrics["final_speed_mps"]) <= 0.05
              and result.metrics["final_tilt_rad"] <= math.radians(1.0))
        probes.append({"duration_s": duration, "success": ok,
                       "failure": result.failure,
                       "final_speed_mps": result.metrics["final_speed_mps"],
                       "final_tilt_rad": result.metrics["final_tilt_rad"]})
        if not ok:
            break
        best = duration
        duration = round(duration - step, 9)
    if best is None:
        raise RuntimeError(
            f"no feasible braking time in range: first probe at "
            f"{start_duration} s failed")
    return best, probes


def compare_controllers(spec: ScenarioSpec, controllers: list[str],
                        trials: int = 3, seed: int = 0) -> dict:
    """Braking-effort table across controllers on the identical protocol.

    Trials differ only by the sensor-noise seed; noiseless runs therefore
    report zero variance.  Per-cell errors are recorded without aborting
    the rest of the table.
    """
    spec = prepare_scenario(spec)
    window = None
    t0 = 0.0
    for ph in spec.phases:
        if ph.kind == "brake":
            window = (t0, t0 + ph.duration)
        t0 += ph.duration
    rows = []
    for kind in controllers:
        efforts = []
        successes = []
        error = None
        for trial in range(trials):
            try:
                result = run_scenario(replace(spec, controller=kind),
                                      seed=seed + trial)
                if window is not None:
                    t3 = min(window[1], float(result.time[-1]))
                    efforts.append(braking_effort(result, window[0], t3))
                successes.append(result.completed
                                 and abs(result.metrics["final_speed_mps"]) <= 0.05)
            except Exception as exc:  # noqa: BLE001 - table must survive cells
                error = f"{type(exc).__name__}: {exc}"
                successes.append(False)
        mean = float(np.mean(efforts)) if efforts else None
        if not efforts:
            sd = None
        elif min(efforts) == max(efforts):
            sd = 0.0  # identical trials report exactly zero variance
        else:
            sd = float(np.std(efforts))
        rows.append({"controller": kind, "trials": trials,
                     "braking_effort_mean": mean, "braking_effort_sd": sd,
                     "success": all(successes) if successes else False,
                     "error": error})
    return {"rows": rows, "window": window}

"""Real-time interactive simulation service with teleoperation.

A session owns one plant + controller, advanced in fixed 8 kHz steps.  The
pure engine (SimSession) is deterministic and wall-clock-free; the service
wraps it with real-time pacing (sim advances in bounded batches to chase
the wall clock), a websocket message channel, and telemetry fan-out with
drop-oldest backpressure.  Replaying a session's recorded command log
through a fresh engine reproduces its telemetry exactly.

Wire protocol (proto_version 1): JSON messages with a `type` field:
  client -> server:  {"type": "command", "v": .., "heading": ..,
                      "yaw_rate": ..}
                     {"type": "control", "action": "start" | "pause" |
                      "reset" | "set_param", ...}
                     {"type": "push", "force": .., "heading": ..,
                      "duration": ..}            (demonstrative only)
  server -> client:  {"type": "ack", ...}, {"type": "error", ...},
                     {"type": "telemetry", "frame": {...}, "drops": n}

HTTP: POST /sessions, GET /sessions, GET /sessions/{id},
GET /sessions/{id}/log, DELETE /sessions/{id}; websocket at /session/{id}.
"""

from __future__ import annotations

import asyncio
import hashlib
import itertools
import logging
import math
import socket
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from .config import PlatformConfig, platform_config
from .controllers import (
    BallbotCommand,
    BallbotController,
    BallbotMeasurement,
    CommandState,
    LqrPiController,
    LqrWeights,
    PiGains,
    solve_lqr,
    solve_yaw_lqr,
)
from .dynamics import (
    TILT_FAILURE_RAD,
    PlanarState,
    friction_torque,
    linearize,
    spin_accel,
)
from .dynamics import _accel  # scalar EOM core
from .harness import _plane_deriv
from .kinematics import ContactSeparationError, contact_forces, planar_torques_from_motor

log = logging.getLogger("ballbot_lab.service")

PROTO_VERSION = 1
SIM_RATE_HZ = 8000.0
PUSH_WHITELIST = {"pi.k_p", "pi.k_i"}


def fanout_frames(entry: dict, frames: list[dict]) -> None:
    """Deliver frames to every subscriber queue, dropping oldest on overflow
    and counting the drops per subscriber (reported with the next send)."""
    for frame in frames:
        for q in list(entry["subscribers"]):
            if q.full():
                try:
                    q.get_nowait()
                    entry["drops"][id(q)] = entry["drops"].get(id(q), 0) + 1
                except asyncio.QueueEmpty:
                    pass
            q.put_nowait(frame)

__all__ = ["SimSession", "TeleopCommand", "replay_command_log", "create_app",
           "serve", "PROTO_VERSION"]


@dataclass(frozen=True)
class TeleopCommand:
    v: float = 0.0         # translation speed [m/s]
    heading: float = 0.0   # translation direction [rad], 0 toward OW1
    yaw_rate: float = 0.0  # [rad/s]


@dataclass
class _Push:
    force: float
    heading: float
    until_tick: int


class SimSession:
    """Deterministic fixed-step ballbot session (no wall-clock coupling).

    Commands are slew-rate limited before reaching the balancing
    controller; balance failure freezes the session with motor torques
    forced to zero.  Every applied command is recorded with its tick so a
    log replay reproduces the run bit for bit.
    """

    def __init__(self, platform: PlatformConfig, mu: float = 0.8,
                 command_slew: float = 1.5, stream_hz: float = 50.0,
                 seed: int = 0):
        self.platform = platform
        self.mu = mu
        self.command_slew = command_slew
        self.dt = 1.0 / SIM_RATE_HZ
        self.frame_stride = max(1, int(round(SIM_RATE_HZ / stream_hz)))
        self.seed = seed
        self.mode = "planar" if platform.name == "piptb" else "3d"
        cc = platform.controller
        self.ratio = int(round(cc.inner_rate_hz / cc.outer_rate_hz))
        self._gains = solve_lqr(linearize(platform.wip),
                                LqrWeights(Q=np.array(cc.lqr_q), R=cc.lqr_r))
        self._pi = PiGains(cc.pi_k_p, cc.pi_k_i, cc.pi_integrator_limit)
        self._yaw = solve_yaw_lqr(platform.spin, cc.yaw_q, cc.yaw_r)
        self.command_log: list[dict] = []
        self._schedule: list[tuple[int, TeleopCommand]] = []
        self.reset()

    # -- lifecycle ---------------------------------------------------------

    def reset(self) -> None:
        plat = self.platform
        cc = plat.controller
        self.tick = 0
        self.status = "paused"
        self.sx = [0.0, 0.0, 0.0, 0.0]
        self.sy = [0.0, 0.0, 0.0, 0.0]
        self.theta_z = 0.0
        self.omega_z = 0.0
        self.pos = [0.0, 0.0]
        self.target = TeleopCommand()
        self.active = [0.0, 0.0, 0.0]   # slewed (vx, vy, yaw_rate)
        self.push: _Push | None = None
        self.u = (0.0, 0.0, 0.0)
        self.tau_planar = (0.0, 0.0, 0.0)
        self.margins: tuple[float, float, float] | None = (
            None if self.mode == "planar" else self._margins())
        self.slip = False
        self.command_log = []
        self._schedule = []
        if self.mode == "3d":
            self.controller = BallbotController(
                plat.wip, plat.spin, plat.geometry, self._gains, self._yaw,
                self._pi, ratio=self.ratio, outer_dt=1.0 / cc.outer_rate_hz,
                inner_dt=1.0 / cc.inner_rate_hz, tau_max=plat.tau_motor_max,
                inner_pi_enabled=(cc.kind != "lqr"))
        else:
            self.controller = LqrPiController(
                plat.wip, self._gains, self._pi, ratio=self.ratio,
                outer_dt=1.0 / cc.outer_rate_hz,
                inner_dt=1.0 / cc.inner_rate_hz)

    @property
    def sim_time(self) -> float:
        return self.tick * self.dt

    def start(self) -> None:
        if self.status == "failed":
            raise ValueError("failed session must be reset before start")
        self.status = "running"

    def pause(self) -> None:
        if self.status == "running":
            self.status = "paused"

    def set_param(self, name: str, value: float) -> None:
        if name not in PUSH_WHITELIST:
            raise ValueError(f"parameter {name!r} is not hot-swappable")
        k_p = self._pi.k_p
        k_i = self._pi.k_i
        if name == "pi.k_p":
            k_p = float(value)
        else:
            k_i = float(value)
        self._pi = PiGains(k_p, k_i, self._pi.integrator_limit)
        self.controller.pi = self._pi

    # -- commands ----------------------------------------------------------

    def apply_command(self, cmd: TeleopCommand, record: bool = True) -> dict:
        limit = self.platform.v_cmd_max
        clamped = abs(cmd.v) > limit
        v = max(-limit, min(limit, cmd.v))
        applied = TeleopCommand(v=v, heading=cmd.heading, yaw_rate=cmd.yaw_rate)
        self.target = applied
        if record:
            self.command_log.append({"tick": self.tick, "kind": "command",
                                     "v": applied.v, "heading": applied.heading,
                                     "yaw_rate": applied.yaw_rate})
        return {"clamped": clamped, "applied_v": v}

    def apply_push(self, force: float, heading: float, duration: float,
                   record: bool = True) -> dict:
        until = self.tick + int(round(duration / self.dt))
        self.push = _Push(force=force, heading=heading, until_tick=until)
        if record:
            self.command_log.append({"tick": self.tick, "kind": "push",
                                     "force": force, "heading": heading,
                                     "duration": duration})
        return {"until_tick": until}

    # -- stepping ----------------------------------------------------------

    def schedule_commands(self, timed: list[tuple[float, TeleopCommand]]) -> int:
        """Queue commands to fire at delays [s] from now (a server-side
        command source, e.g. a stored braking profile).  Fired commands are
        recorded in the command log exactly like live ones."""
        for delay, cmd in timed:
            tick = self.tick + max(0, int(round(delay / self.dt)))
            self._schedule.append((tick, cmd))
        self._schedule.sort(key=lambda item: item[0])
        return len(timed)

    def step(self, n_ticks: int) -> list[dict]:
        """Advance the simulation; returns telemetry frames due in the span."""
        frames = []
        for _ in range(n_ticks):
            if self.status != "running":
                break
            while self._schedule and self._schedule[0][0] <= self.tick:
                _, cmd = self._schedule.pop(0)
                self.apply_command(cmd)
            self._step_once()
            if self.tick % self.frame_stride == 0:
                frames.append(self.frame())
        return frames

    def _slew(self) -> None:
        t = self.target
        want = [t.v * math.sin(t.heading), t.v * math.cos(t.heading),
                t.yaw_rate]
        dv = self.command_slew * self.dt
        dw = 4.0 * self.command_slew * self.dt
        for i, rate in enumerate((dv, dv, dw)):
            delta = want[i] - self.active[i]
            if delta > rate:
                delta = rate
            elif delta < -rate:
                delta = -rate
            self.active[i] += delta

    def _push_torque(self) -> tuple[float, float]:
        """Generalized tilt forces (x-plane, y-plane) of an active push."""
        if self.push is None:
            return (0.0, 0.0)
        if self.tick >= self.push.until_tick:
            self.push = None
            return (0.0, 0.0)
        f = self.push.force
        lever = self.platform.wip.l
        return (f * math.sin(self.push.heading) * lever,
                f * math.cos(self.push.heading) * lever)

    def _step_once(self) -> None:
        plat = self.platform
        p = plat.wip
        dt = self.dt
        self._slew()
        qx, qy = self._push_torque()
        if self.mode == "3d":
            g = plat.geometry
            K = g._K  # type: ignore[attr-defined]
            sx, sy = self.sx, self.sy
            w_rel = (sx[2] - sx[3], sy[3] - sy[2], -self.omega_z)
            psi = (
                K[0, 0] * w_rel[0] + K[0, 1] * w_rel[1] + K[0, 2] * w_rel[2],
                K[1, 0] * w_rel[0] + K[1, 1] * w_rel[1] + K[1, 2] * w_rel[2],
                K[2, 0] * w_rel[0] + K[2, 1] * w_rel[1] + K[2, 2] * w_rel[2],
            )
            meas = BallbotMeasurement(theta_x=sx[0], theta_y=sy[0],
                                      theta_dot_x=sx[2], theta_dot_y=sy[2],
                                      psi_dot=psi)
            cmd = BallbotCommand(
                x=CommandState(phi_dot_c=self.active[0] / g.r_s),
                y=CommandState(phi_dot_c=self.active[1] / g.r_s),
                yaw_rate_c=self.active[2])
            u = self.controller.step(self.tick, meas, cmd)
            self.u = u
            tau_x, tau_y, tau_z = planar_torques_from_motor(g, u)
            self.tau_planar = (tau_x, tau_y, tau_z)
            if self.tick % self.ratio == 0:
                self.margins = self._margins()
            self._integrate_plane(sx, tau_x, qx)
            self._integrate_plane(sy, tau_y, qy)
            spin = plat.spin
            w1 = spin_accel(spin, self.omega_z, tau_z)
            w2 = spin_accel(spin, self.omega_z + 0.5 * dt * w1, tau_z)
            w3 = spin_accel(spin, self.omega_z + 0.5 * dt * w2, tau_z)
            w4 = spin_accel(spin, self.omega_z + dt * w3, tau_z)
            self.theta_z += dt * self.omega_z + dt * dt / 6.0 * (w1 + w2 + w3)
            self.omega_z += dt / 6.0 * (w1 + 2.0 * (w2 + w3) + w4)
            self.pos[0] += g.r_s * sx[3] * dt
            self.pos[1] += g.r_s * sy[3] * dt
            failed = (abs(sx[0]) > TILT_FAILURE_RAD
                      or abs(sy[0]) > TILT_FAILURE_RAD)
        else:
            s = self.sy
            cmd = CommandState(phi_dot_c=self.active[1] / p.r)
            tau = self.controller.step(
                self.tick, PlanarState(s[0], s[1], s[2], s[3]), cmd)
            tau = max(-plat.tau_motor_max, min(plat.tau_motor_max, tau))
            self.u = (tau, 0.0, 0.0)
            self.tau_planar = (0.0, tau, 0.0)
            self._integrate_plane(s, tau, qy)
            self.pos[1] += p.r * s[3] * dt
            failed = abs(s[0]) > TILT_FAILURE_RAD
        self.tick += 1
        if failed:
            self.status = "failed"
            self.u = (0.0, 0.0, 0.0)
            self.tau_planar = (0.0, 0.0, 0.0)

    def _integrate_plane(self, s: list, tau: float, q_theta: float) -> None:
        p = self.platform.wip
        fric = self.platform.friction
        dt = self.dt

        def deriv(th, td, pd):
            tau_eff = tau - friction_torque(fric, pd, tau)
            tdd, pdd = _accel(p, th, td, pd, tau_eff, q_theta)
            return (td, pd, tdd, pdd)

        th, ph, td, pd = s
        k1 = deriv(th, td, pd)
        h2 = 0.5 * dt
        k2 = deriv(th + h2 * k1[0], td + h2 * k1[2], pd + h2 * k1[3])
        k3 = deriv(th + h2 * k2[0], td + h2 * k2[2], pd + h2 * k2[3])
        k4 = deriv(th + dt * k3[0], td + dt * k3[2], pd + dt * k3[3])
        h6 = dt / 6.0
        s[0] = th + h6 * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0])
        s[1] = ph + h6 * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1])
        s[2] = td + h6 * (k1[2] + 2.0 * (k2[2] + k3[2]) + k4[2])
        s[3] = pd + h6 * (k1[3] + 2.0 * (k2[3] + k3[3]) + k4[3])

    def _margins(self):
        plat = self.platform
        try:
            report = contact_forces(plat.geometry, plat.wip.m_b,
                                    (self.sx[0], self.sy[0]), self.u, self.mu,
                                    grav=plat.wip.g)
        except ContactSeparationError:
            self.slip = False
            return None
        self.slip = report.any_slip
        return report.margin

    # -- introspection -----------------------------------------------------

    def frame(self) -> dict:
        """Telemetry frame; contains sim-time only (no wall-clock fields)."""
        plat = self.platform
        frame = {
            "t": round(self.sim_time, 9),
            "tick": self.tick,
            "status": self.status,
            "command": {"v": self.target.v, "heading": self.target.heading,
                        "yaw_rate": self.target.yaw_rate},
            "active": list(self.active),
            "motors": {"u": list(self.u)},
            "flags": {"failed": self.status == "failed", "slip": self.slip},
        }
        if self.mode == "3d":
            frame["planes"] = {
                "x": {"theta": self.sx[0], "theta_dot": self.sx[2],
                      "phi_dot": self.sx[3]},
                "y": {"theta": self.sy[0], "theta_dot": self.sy[2],
                      "phi_dot": self.sy[3]},
                "z": {"theta": self.theta_z, "omega": self.omega_z},
            }
            frame["position"] = {"x": self.pos[0], "y": self.pos[1]}
            frame["margins"] = (list(self.margins)
                                if self.margins is not None else None)
            frame["speed"] = plat.geometry.r_s * math.hypot(self.sx[3],
                                                            self.sy[3])
        else:
            frame["plane"] = {"theta": self.sy[0], "phi": self.sy[1],
                              "theta_dot": self.sy[2], "phi_dot": self.sy[3]}
            frame["position"] = {"y": self.pos[1]}
            frame["speed"] = plat.wip.r * abs(self.sy[3])
        return frame

    def state_hash(self) -> str:
        parts = [self.tick, tuple(self.sx), tuple(self.sy), self.theta_z,
                 self.omega_z, tuple(self.active), tuple(self.u)]
        c = self.controller
        if self.mode == "3d":
            parts += [c.plane_x.phi_dot_r, c.plane_y.phi_dot_r,
                      c.theta_dot_rz,
                      tuple(s.integrator for s in c.pi_states),
                      c.u_r, c.psi_dot_r]
        else:
            parts += [c.state.integrator, c.state.phi_dot_r, c.state.tau_r]
        return hashlib.sha256(repr(parts).encode()).hexdigest()


def replay_command_log(platform: PlatformConfig, command_log: list[dict],
                       n_ticks: int, mu: float = 0.8,
                       command_slew: float = 1.5, stream_hz: float = 50.0,
                       seed: int = 0) -> list[dict]:
    """Re-run a recorded command log; returns the full telemetry sequence."""
    session = SimSession(platform, mu=mu, command_slew=command_slew,
                         stream_hz=stream_hz, seed=seed)
    session.start()
    frames: list[dict] = []
    pending = sorted(command_log, key=lambda c: c["tick"])
    i = 0
    while session.tick < n_ticks:
        while i < len(pending) and pending[i]["tick"] <= session.tick:
            c = pending[i]
            if c["kind"] == "command":
                session.apply_command(TeleopCommand(c["v"], c["heading"],
                                                    c["yaw_rate"]),
                                      record=False)
            else:
                session.apply_push(c["force"], c["heading"], c["duration"],
                                   record=False)
            i += 1
        next_stop = n_ticks
        if i < len(pending):
            next_stop = min(next_stop, pending[i]["tick"])
        span = max(1, next_stop - session.tick)
        frames.extend(session.step(span))
        if session.status != "running":
            break
    return frames


# --------------------------------------------------------------------------
# Web service


_BRAKE_PROFILES: dict[str, list[tuple[float, float]]] = {}


def _braking_profile(platform: PlatformConfig) -> list[tuple[float, float]]:
    """Cached (t, speed) pairs of the optimal braking command profile."""
    if platform.name not in _BRAKE_PROFILES:
        from .trajopt import BrakingTask, solve, transcribe

        v0 = 1.4 if platform.name != "piptb" else 1.0
        dur = 2.0 if platform.name != "piptb" else 1.4
        traj, _ = solve(transcribe(platform.wip, BrakingTask(v0=v0, t_dur=dur),
                                   n_knots=50))
        wheel_r = platform.wip.r
        pairs = [(float(t), float(s[3] * wheel_r))
                 for t, s in zip(traj.times, traj.states)]
        _BRAKE_PROFILES[platform.name] = pairs
    return _BRAKE_PROFILES[platform.name]


def _scenario_schedule(session: SimSession, name: str) -> dict:
    """Build and queue the command schedule of a named scenario trigger."""
    if name == "brake-now":
        if session.mode == "3d":
            vx = session.platform.geometry.r_s * session.sx[3]
            vy = session.platform.geometry.r_s * session.sy[3]
            speed = math.hypot(vx, vy)
            heading = math.atan2(vx, vy)
        else:
            speed = session.platform.wip.r * session.sy[3]
            heading = 0.0 if speed >= 0 else math.pi
            speed = abs(speed)
        if speed < 0.05:
            return {"noop": True, "reason": "already stopped"}
        profile = _braking_profile(session.platform)
        scale = speed / max(profile[0][1], 1e-9)
        timed = [(t, TeleopCommand(v=scale * v, heading=heading))
                 for t, v in profile]
        timed.append((profile[-1][0] + 0.05, TeleopCommand()))
        n = session.schedule_commands(timed)
        return {"scheduled": n, "duration": profile[-1][0]}
    if name == "ramp-test":
        heading = math.pi
        timed = [(0.1 * i, TeleopCommand(v=0.05 * i, heading=heading))
                 for i in range(21)]
        n = session.schedule_commands(timed)
        return {"scheduled": n, "duration": 2.0}
    raise ValueError(f"unknown scenario {name!r}")


def create_app(cfg: dict, svc: dict) -> FastAPI:
    app = FastAPI(title="ballbot-lab teleop service")
    sessions: dict[str, dict] = {}
    counter = itertools.count(1)
    default_platform = svc.get("platform", "miapure")
    stream_hz = float(svc.get("stream_hz", 50.0))
    mu = float(svc.get("mu", 0.8))
    slew = float(svc.get("command_slew", 1.5))
    factor_default = float(svc.get("real_time_factor", 1.0))
    queue_depth = int(svc.get("queue_depth", 256))

    def _get(sid: str) -> dict:
        if sid not in sessions:
            raise HTTPException(status_code=404, detail="no such session")
        return sessions[sid]

    async def _pacing_loop(entry: dict) -> None:
        session: SimSession = entry["session"]
        period = 0.005
        max_batch = int(SIM_RATE_HZ)  # at most one sim-second per wakeup
        while not entry["closed"]:
            await asyncio.sleep(period)
            if session.status != "running":
                entry["active_anchor"] = None
                continue
            now = time.monotonic()
            if entry["active_anchor"] is None:
                entry["active_anchor"] = (now, session.tick)
            anchor_wall, anchor_tick = entry["active_anchor"]
            target = anchor_tick + int(
                (now - anchor_wall) * entry["factor"] * SIM_RATE_HZ)
            due = target - session.tick
            if due <= 0:
                continue
            lag = due > max_batch
            frames = session.step(min(due, max_batch))
            entry["lagging"] = lag
            fanout_frames(entry, frames)

    @app.post("/sessions")
    async def create_session(body: dict | None = None):
        body = body or {}
        name = body.get("platform", default_platform)
        try:
            platform = platform_config(cfg, name)
            session = SimSession(platform, mu=mu, command_slew=slew,
                                 stream_hz=stream_hz,
                                 seed=int(body.get("seed", 0)))
        except Exception as exc:  # invalid config: no session allocated
            return JSONResponse(status_code=400,
                                content={"type": "error", "detail": str(exc)})
        sid = f"s{next(counter)}"
        entry = {"session": session, "subscribers": set(), "drops": {},
                 "closed": False, "factor": factor_default,
                 "active_anchor": None, "lagging": False, "task": None}
        entry["task"] = asyncio.create_task(_pacing_loop(entry))
        sessions[sid] = entry
        return {"session_id": sid, "platform": name, "mode": session.mode,
                "proto_version": PROTO_VERSION}

    @app.get("/sessions")
    async def list_sessions():
        return {sid: {"status": e["session"].status,
                      "t": e["session"].sim_time,
                      "platform": e["session"].platform.name}
                for sid, e in sessions.items()}

    @app.get("/sessions/{sid}")
    async def session_info(sid: str):
        e = _get(sid)
        s = e["session"]
        return {"session_id": sid, "status": s.status, "t": s.sim_time,
                "tick": s.tick, "state_hash": s.state_hash(),
                "lagging": e["lagging"], "frame": s.frame()}

    @app.get("/sessions/{sid}/log")
    async def session_log(sid: str):
        s = _get(sid)["session"]
        return {"session_id": sid, "tick": s.tick,
                "command_log": s.command_log}

    @app.delete("/sessions/{sid}")
    async def delete_session(sid: str):
        entry = _get(sid)
        entry["closed"] = True
        entry["task"].cancel()
        del sessions[sid]
        return {"deleted": sid}

    async def _handle_message(entry: dict, msg: dict) -> dict:
        session: SimSession = entry["session"]
        kind = msg.get("type")
        if kind == "command":
            ack = session.apply_command(TeleopCommand(
                v=float(msg.get("v", 0.0)),
                heading=float(msg.get("heading", 0.0)),
                yaw_rate=float(msg.get("yaw_rate", 0.0))))
            return {"type": "ack", "of": "command", **ack}
        if kind == "push":
            ack = session.apply_push(float(msg.get("force", 0.0)),
                                     float(msg.get("heading", 0.0)),
                                     float(msg.get("duration", 0.2)))
            return {"type": "ack", "of": "push", **ack}
        if kind == "control":
            action = msg.get("action")
            if action == "start":
                session.start()
            elif action == "pause":
                session.pause()
            elif action == "reset":
                session.reset()
                entry["active_anchor"] = None
            elif action == "set_param":
                session.set_param(str(msg.get("name")),
                                  float(msg.get("value")))
            elif action == "set_factor":
                entry["factor"] = max(0.01, float(msg.get("value", 1.0)))
                entry["active_anchor"] = None
            elif action == "scenario":
                detail = await asyncio.to_thread(
                    _scenario_schedule, session, str(msg.get("name")))
                return {"type": "ack", "of": "control:scenario", **detail}
            else:
                raise ValueError(f"unknown control action {action!r}")
            return {"type": "ack", "of": f"control:{action}",
                    "status": session.status}
        raise ValueError(f"unknown message type {kind!r}")

    @app.websocket("/session/{sid}")
    async def session_socket(ws: WebSocket, sid: str):
        if sid not in sessions:
            await ws.close(code=4404)
            return
        entry = sessions[sid]
        await ws.accept()
        queue: asyncio.Queue = asyncio.Queue(maxsize=queue_depth)
        entry["subscribers"].add(queue)

        async def sender():
            while True:
                frame = await queue.get()
                drops = entry["drops"].pop(id(queue), 0)
                await ws.send_json({"type": "telemetry",
                                    "proto_version": PROTO_VERSION,
                                    "frame": frame, "drops": drops})

        send_task = asyncio.create_task(sender())
        try:
            while True:
                msg = await ws.receive_json()
                try:
                    reply = await _handle_message(entry, msg)
                except Exception as exc:  # protocol-level error reply
                    reply = {"type": "error", "detail": str(exc)}
                reply["proto_version"] = PROTO_VERSION
                await ws.send_json(reply)
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            entry["subscribers"].discard(queue)
            entry["drops"].pop(id(queue), None)

    ui_dir = svc.get("ui_dir")
    if ui_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app


def serve(cfg: dict, svc: dict) -> None:
    """Run the service until interrupted; raises OSError if the bind fails."""
    import uvicorn

    host = svc.get("host", "127.0.0.1")
    port = int(svc.get("port", 8765))
    # Probe the bind first so occupied ports fail fast with a clean error.
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    finally:
        probe.close()
    from pathlib import Path

    ui = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui.is_dir() and "ui_dir" not in svc:
        svc = dict(svc, ui_dir=str(ui))
    app = create_app(cfg, svc)
    log.info("serving on %s:%d (platform=%s)", host, port,
             svc.get("platform", "miapure"))
    uvicorn.run(app, host=host, port=port, log_level="warning")

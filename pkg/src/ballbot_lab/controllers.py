"""Balancing controllers: LQR torque, cascaded PI-PD, cascaded LQR-PI.

The cascaded LQR-PI controller runs an optimal-gain outer loop at 400 Hz
that also forward-simulates a frictionless reference model for one step,
producing a feedforward torque and a reference wheel speed; a fast inner PI
loop (8 kHz) tracks the reference speed and thereby compensates drivetrain
stiction.  A full three-plane pipeline converts motor measurements to planar
states, applies per-plane regulators, and converts the references back to
per-motor feedforward torque and speed commands.

Gains come from the continuous-time algebraic Riccati equation solved by
Newton-Kleinman iteration, seeded with a stabilizing pole-placement gain;
the wheel-position state is structurally uncontrolled (its gain is exactly
zero), so the design runs on the 3-state reduced model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    LinearModel,
    PlanarState,
    SpinParams,
    WipParams,
    spin_accel,
    wip_accel,
)
from .kinematics import (
    DrivetrainGeometry,
    MotorVector,
    PlanarRates,
    motor_speeds_from_planar,
    motor_torques_from_planar,
    planar_speeds_from_motor,
)

__all__ = [
    "LqrWeights",
    "LqrGains",
    "YawGains",
    "CommandState",
    "PiGains",
    "PdGains",
    "ControllerState",
    "RiccatiError",
    "solve_care",
    "are_residual",
    "solve_lqr",
    "solve_yaw_lqr",
    "lqr_torque",
    "reference_model_step",
    "pi_step",
    "LqrTorqueController",
    "PiPdController",
    "LqrPiController",
    "BallbotController",
    "BallbotMeasurement",
    "BallbotCommand",
    "make_planar_controller",
]


class RiccatiError(RuntimeError):
    """Riccati solve failed (non-stabilizable pair or non-convergence)."""


@dataclass(frozen=True)
class LqrWeights:
    """State weight Q (4x4 PSD, diagonal accepted as a 4-vector) and input
    weight R > 0."""

    Q: np.ndarray
    R: float

    def __post_init__(self) -> None:
        q = np.asarray(self.Q, dtype=float)
        if q.ndim == 1:
            q = np.diag(q)
        if q.shape != (4, 4):
            raise ValueError("Q must be 4x4 (or a length-4 diagonal)")
        if not np.allclose(q, q.T):
            raise ValueError("Q must be symmetric")
        if np.any(np.linalg.eigvalsh(q) < -1e-12):
            raise ValueError("Q must be positive semidefinite")
        if not self.R > 0.0:
            raise ValueError("R must be positive")
        object.__setattr__(self, "Q", q)


@dataclass(frozen=True)
class LqrGains:
    """Gains on tilt, tilt-rate, and wheel-speed errors; the wheel-position
    gain is structurally zero."""

    k1: float  # tilt error
    k2: float  # tilt-rate error
    k3: float  # wheel-speed error

    def full_gain(self) -> np.ndarray:
        return np.array([self.k1, 0.0, self.k2, self.k3])


@dataclass(frozen=True)
class YawGains:
    k_theta: float
    k_omega: float


@dataclass(frozen=True)
class CommandState:
    """Commanded tilt, tilt rate, and wheel speed (wheel position unused)."""

    theta_c: float = 0.0
    theta_dot_c: float = 0.0
    phi_dot_c: float = 0.0


@dataclass(frozen=True)
class PiGains:
    k_p: float
    k_i: float
    integrator_limit: float

    def __post_init__(self) -> None:
        if self.k_p < 0.0 or self.k_i < 0.0:
            raise ValueError("PI gains must be >= 0")
        if not self.integrator_limit > 0.0:
            raise ValueError("integrator limit must be > 0")


@dataclass(frozen=True)
class PdGains:
    k_p_outer: float
    k_i_outer: float
    k_p_tilt: float
    k_d_tilt: float
    tilt_limit: float

    def __post_init__(self) -> None:
        if min(self.k_p_outer, self.k_i_outer, self.k_p_tilt, self.k_d_tilt) < 0.0:
            raise ValueError("PD gains must be >= 0")
        if not self.tilt_limit > 0.0:
            raise ValueError("tilt limit must be > 0")


@dataclass
class ControllerState:
    """Mutable cascade state: integrators, reference speed, held outputs."""

    integrator: float = 0.0
    phi_dot_r: float = 0.0
    tau_r: float = 0.0
    initialized: bool = False


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


# --------------------------------------------------------------------------
# Riccati machinery


def _lyapunov_solve(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve A^T P + P A + Q = 0 by the Kronecker vectorization."""
    n = A.shape[0]
    eye = np.eye(n)
    lhs = np.kron(eye, A.T) + np.kron(A.T, eye)
    p = np.linalg.solve(lhs, -Q.reshape(-1))
    P = p.reshape(n, n)
    return 0.5 * (P + P.T)


def _ackermann_gain(A: np.ndarray, B: np.ndarray, poles: np.ndarray) -> np.ndarray:
    """Single-input pole placement via Ackermann's formula."""
    n = A.shape[0]
    ctrl = np.hstack([np.linalg.matrix_power(A, i) @ B for i in range(n)])
    if np.linalg.cond(ctrl) > 1e12:
        raise RiccatiError("pair (A, B) is not controllable/stabilizable")
    coeffs = np.real(np.poly(poles))
    chi = np.zeros_like(A)
    for c in coeffs:
        chi = chi @ A + c * np.eye(n)
    e_last = np.zeros(n)
    e_last[-1] = 1.0
    return e_last @ np.linalg.inv(ctrl) @ chi


def are_residual(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: float,
                 P: np.ndarray) -> float:
    """Frobenius norm of A^T P + P A - P B R^-1 B^T P + Q."""
    res = A.T @ P + P @ A - (P @ B) @ (B.T @ P) / R + Q
    return float(np.linalg.norm(res))


def solve_care(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: float,
               tol: float = 1e-12, max_iter: int = 60) -> np.ndarray:
    """Continuous-time ARE by Newton-Kleinman iteration.

    Seeded with a pole-placement gain; each iteration solves a Lyapunov
    equation for the current closed loop and refreshes the gain.  Returns P;
    raises RiccatiError with the residual when the iteration fails.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], 1)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    spread = max(1.0, float(np.max(np.abs(np.linalg.eigvals(A).real))))
    poles = -spread * (1.0 + 0.5 * np.arange(n))
    K = _ackermann_gain(A, B, poles).reshape(1, n)
    q_scale = max(1.0, float(np.linalg.norm(Q)))
    P = np.zeros((n, n))
    for _ in range(max_iter):
        A_cl = A - B @ K
        if np.any(np.linalg.eigvals(A_cl).real >= 0.0):
            raise RiccatiError("Newton-Kleinman iterate lost stability")
        P = _lyapunov_solve(A_cl, Q + K.T * R @ K)
        K_next = (B.T @ P) / R
        residual = are_residual(A, B, Q, R, P)
        if residual <= tol * q_scale:
            return P
        K = K_next
    raise RiccatiError(
        f"Riccati iteration did not converge: residual={residual:.3e}")


_REDUCED = (0, 2, 3)  # keep theta, theta_dot, phi_dot


def solve_lqr(model: LinearModel, w: LqrWeights) -> LqrGains:
    """LQR gains on the 3-state reduced model (wheel position deleted)."""
    idx = np.array(_REDUCED)
    A_r = model.A[np.ix_(idx, idx)]
    B_r = model.B[idx, :]
    Q_r = w.Q[np.ix_(idx, idx)]
    P = solve_care(A_r, B_r, Q_r, w.R)
    k = (B_r.T @ P).ravel() / w.R
    return LqrGains(k1=float(k[0]), k2=float(k[1]), k3=float(k[2]))


def solve_yaw_lqr(sp: SpinParams, q: tuple[float, float], r: float) -> YawGains:
    """LQR on the damped-double-integrator spin model."""
    A = np.array([[0.0, 1.0], [0.0, -sp.c_v / sp.I_z]])
    B = np.array([[0.0], [1.0 / sp.I_z]])
    P = solve_care(A, B, np.diag(q), r)
    k = (B.T @ P).ravel() / r
    return YawGains(k_theta=float(k[0]), k_omega=float(k[1]))


# --------------------------------------------------------------------------
# Elementary control laws


def lqr_torque(k: LqrGains, s_c: CommandState, s: PlanarState) -> float:
    """Feedforward torque from the gain structure with zero wheel-position
    gain: k1 (theta_c - theta) + k2 (theta_dot_c - theta_dot)
    + k3 (phi_dot_c - phi_dot)."""
    return (k.k1 * (s_c.theta_c - s.theta)
            + k.k2 * (s_c.theta_dot_c - s.theta_dot)
            + k.k3 * (s_c.phi_dot_c - s.phi_dot))


def reference_model_step(p: WipParams, s: PlanarState, tau_r: float,
                         dt: float, cs: ControllerState) -> float:
    """Advance the reference wheel speed by one outer period.

    Single-step forward simulation of the frictionless model at the measured
    state: phi_ddot_r = f(s, tau_r), integrated into cs.phi_dot_r.
    """
    _, phi_dd = wip_accel(p, s, tau_r)
    cs.phi_dot_r += phi_dd * dt
    return cs.phi_dot_r


def pi_step(cs: ControllerState, g: PiGains, phi_dot_ref: float,
            phi_dot_meas: float, dt: float) -> float:
    """Tracking torque from the inner speed PI with integrator clamping."""
    e = phi_dot_ref - phi_dot_meas
    cs.integrator = _clamp(cs.integrator + e * dt,
                           -g.integrator_limit, g.integrator_limit)
    return g.k_p * e + g.k_i * cs.integrator


# --------------------------------------------------------------------------
# Planar controllers (PIPTB and single-plane use)
#
# Shared convention: a tick's output uses the zero-order-held products of
# the previous outer tick; outer-tick processing refreshes the holds after
# this tick's output is formed.  This mirrors the one-message transport
# delay of the physical stack (the outer loop sends references to the motor
# driver) and makes a perfectly tracking plant produce an exactly zero
# inner-loop error.


class LqrTorqueController:
    """Open-loop torque LQR, updated at the outer rate with ZOH between."""

    def __init__(self, gains: LqrGains, ratio: int):
        self.gains = gains
        self.ratio = ratio
        self.state = ControllerState()

    def reset(self) -> None:
        self.state = ControllerState()

    def step(self, tick: int, s: PlanarState, cmd: CommandState) -> float:
        tau = self.state.tau_r
        if tick % self.ratio == 0:
            self.state.tau_r = lqr_torque(self.gains, cmd, s)
        return tau


class PiPdController:
    """Cascaded PI-PD: outer speed PI produces a reference tilt for an inner
    PD tilt loop; runs entirely at the outer rate with ZOH between.

    The inner PD is phased for this plant's joint-torque convention (+tau
    on the wheel, -tau on the body): tau = k_p (theta - theta_r)
    + k_d theta_dot, which is the stabilizing sign here (driving the wheel
    toward the fall).  Tracking a positive reference tilt therefore starts
    with a reverse wheel push, the non-minimum-phase move.
    """

    def __init__(self, gains: PdGains, ratio: int, outer_dt: float):
        self.gains = gains
        self.ratio = ratio
        self.outer_dt = outer_dt
        self.state = ControllerState()
        self.theta_r = 0.0

    def reset(self) -> None:
        self.state = ControllerState()
        self.theta_r = 0.0

    def step(self, tick: int, s: PlanarState, cmd: CommandState) -> float:
        g = self.gains
        tau = self.state.tau_r
        if tick % self.ratio == 0:
            e_v = cmd.phi_dot_c - s.phi_dot
            self.state.integrator += e_v * self.outer_dt
            raw = g.k_p_outer * e_v + g.k_i_outer * self.state.integrator
            self.theta_r = _clamp(raw, -g.tilt_limit, g.tilt_limit)
            self.state.tau_r = (g.k_p_tilt * (s.theta - self.theta_r)
                                + g.k_d_tilt * s.theta_dot)
        return tau


class LqrPiController:
    """Cascaded LQR-PI for one plane.

    Outer tick: feedforward torque tau_r via LQR and reference wheel speed
    via the frictionless reference model, both zero-order-held.  Every inner
    tick: tau = tau_r + PI(phi_dot_r - phi_dot).  The reference speed starts
    from the first measured wheel speed so activation is bumpless.
    """

    def __init__(self, p: WipParams, gains: LqrGains, pi: PiGains,
                 ratio: int, outer_dt: float, inner_dt: float):
        self.p = p
        self.gains = gains
        self.pi = pi
        self.ratio = ratio
        self.outer_dt = outer_dt
        self.inner_dt = inner_dt
        self.state = ControllerState()

    def reset(self) -> None:
        self.state = ControllerState()

    def step(self, tick: int, s: PlanarState, cmd: CommandState) -> float:
        cs = self.state
        if not cs.initialized:
            cs.phi_dot_r = s.phi_dot
            cs.initialized = True
        tau_e = pi_step(cs, self.pi, cs.phi_dot_r, s.phi_dot, self.inner_dt)
        tau = cs.tau_r + tau_e
        if tick % self.ratio == 0:
            cs.tau_r = lqr_torque(self.gains, cmd, s)
            reference_model_step(self.p, s, cs.tau_r, self.outer_dt, cs)
        return tau


def make_planar_controller(kind: str, p: WipParams, gains: LqrGains,
                           pi: PiGains, pd: PdGains, ratio: int,
                           outer_dt: float, inner_dt: float):
    if kind == "lqr":
        return LqrTorqueController(gains, ratio)
    if kind == "pi-pd":
        return PiPdController(pd, ratio, outer_dt)
    if kind == "lqr-pi":
        return LqrPiController(p, gains, pi, ratio, outer_dt, inner_dt)
    raise ValueError(f"unknown controller kind: {kind!r}")


# --------------------------------------------------------------------------
# Full three-plane pipeline


@dataclass(frozen=True)
class BallbotMeasurement:
    """Sensor set of the pipeline: IMU tilt and per-motor encoder speeds."""

    theta_x: float
    theta_y: float
    theta_dot_x: float
    theta_dot_y: float
    psi_dot: MotorVector


@dataclass(frozen=True)
class BallbotCommand:
    x: CommandState = field(default_factory=CommandState)
    y: CommandState = field(default_factory=CommandState)
    yaw_rate_c: float = 0.0


class BallbotController:
    """Three-plane cascade: motor measurements -> planar states -> per-plane
    regulators and reference models -> per-motor feedforward torque and
    speed references -> per-motor inner PI (for the lqr-pi kind).

    Yaw angle is reconstructed by integrating the motor-derived yaw rate at
    the outer rate; the yaw command angle integrates the commanded rate.
    """

    def __init__(self, p: WipParams, sp: SpinParams, geometry: DrivetrainGeometry,
                 gains: LqrGains, yaw_gains: YawGains, pi: PiGains,
                 ratio: int, outer_dt: float, inner_dt: float,
                 tau_max: float, inner_pi_enabled: bool = True):
        self.p = p
        self.sp = sp
        self.geometry = geometry
        self.gains = gains
        self.yaw_gains = yaw_gains
        self.pi = pi
        self.ratio = ratio
        self.outer_dt = outer_dt
        self.inner_dt = inner_dt
        self.tau_max = tau_max
        self.inner_pi_enabled = inner_pi_enabled
        self.reset()

    def reset(self) -> None:
        self.plane_x = ControllerState()
        self.plane_y = ControllerState()
        self.pi_states = (ControllerState(), ControllerState(), ControllerState())
        self.theta_dot_rz = 0.0
        self.theta_z = 0.0
        self.theta_z_c = 0.0
        self.phi_x = 0.0
        self.phi_y = 0.0
        self.u_r: MotorVector = (0.0, 0.0, 0.0)
        self.psi_dot_r: MotorVector = (0.0, 0.0, 0.0)
        self.tau_planar_r = (0.0, 0.0, 0.0)
        self._initialized = False

    def step(self, tick: int, meas: BallbotMeasurement,
             cmd: BallbotCommand) -> MotorVector:
        g = self.geometry
        if not self._initialized:
            rates, _ = planar_speeds_from_motor(
                g, meas.psi_dot, tilt_rates=(meas.theta_dot_x, meas.theta_dot_y))
            self.plane_x.phi_dot_r = rates.phi_dot_x
            self.plane_y.phi_dot_r = rates.phi_dot_y
            self.theta_dot_rz = rates.theta_dot_z
            self.psi_dot_r = meas.psi_dot
            self._initialized = True
        out = []
        for i in range(3):
            u = self.u_r[i]
            if self.inner_pi_enabled:
                u += pi_step(self.pi_states[i], self.pi,
                             self.psi_dot_r[i], meas.psi_dot[i], self.inner_dt)
            out.append(_clamp(u, -self.tau_max, self.tau_max))
        if tick % self.ratio == 0:
            rates, _ = planar_speeds_from_motor(
                g, meas.psi_dot, tilt_rates=(meas.theta_dot_x, meas.theta_dot_y))
            self.phi_x += rates.phi_dot_x * self.outer_dt
            self.phi_y += rates.phi_dot_y * self.outer_dt
            self.theta_z += rates.theta_dot_z * self.outer_dt
            self.theta_z_c += cmd.yaw_rate_c * self.outer_dt
            s_x = PlanarState(meas.theta_x, self.phi_x, meas.theta_dot_x,
                              rates.phi_dot_x)
            s_y = PlanarState(meas.theta_y, self.phi_y, meas.theta_dot_y,
                              rates.phi_dot_y)
            tau_rx = lqr_torque(self.gains, cmd.x, s_x)
            tau_ry = lqr_torque(self.gains, cmd.y, s_y)
            tau_rz = (self.yaw_gains.k_theta * (self.theta_z_c - self.theta_z)
                      + self.yaw_gains.k_omega * (cmd.yaw_rate_c - rates.theta_dot_z))
            reference_model_step(self.p, s_x, tau_rx, self.outer_dt, self.plane_x)
            reference_model_step(self.p, s_y, tau_ry, self.outer_dt, self.plane_y)
            self.theta_dot_rz += spin_accel(self.sp, rates.theta_dot_z,
                                            tau_rz) * self.outer_dt
            self.tau_planar_r = (tau_rx, tau_ry, tau_rz)
            self.u_r = motor_torques_from_planar(g, tau_rx, tau_ry, tau_rz)
            self.psi_dot_r = motor_speeds_from_planar(g, PlanarRates(
                phi_dot_x=self.plane_x.phi_dot_r,
                phi_dot_y=self.plane_y.phi_dot_r,
                theta_dot_x=meas.theta_dot_x,
                theta_dot_y=meas.theta_dot_y,
                theta_dot_z=self.theta_dot_rz))
        return (out[0], out[1], out[2])

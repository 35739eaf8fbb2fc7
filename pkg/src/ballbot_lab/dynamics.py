"""Planar dynamics of a ballbot drivetrain.

The 3D ballbot is decomposed into two translation planes, each modelled as a
wheeled inverted pendulum (WIP), plus a yaw spin model.  Per plane, the drive
acts as a torque on a virtual revolute joint at the wheel centre: +tau on the
wheel, -tau on the body.  Generalized coordinates are theta (body tilt from
vertical) and phi (wheel rotation, rolling without slip so x = r * phi).
Positive theta leans toward the plane's forward direction; positive phi_dot
travels the same way.

Equations of motion (from the Euler-Lagrange derivation, validated in the
test suite against a numeric Lagrangian oracle):

    [(m_b + m_w) r^2 + I_w] phi_dd + m_b r l cos(theta) theta_dd
        = tau + m_b r l sin(theta) theta_dot^2
    m_b r l cos(theta) phi_dd + (I_b + m_b l^2) theta_dd
        = -tau + m_b g l sin(theta)

Drivetrain friction is modelled as breakaway stiction plus a
Stribeck/Coulomb/viscous sliding law acting on the wheel joint.
All quantities SI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "WipParams",
    "PlanarState",
    "SpinParams",
    "FrictionParams",
    "LinearModel",
    "IntegrationError",
    "OMEGA_EPS_DEFAULT",
    "wip_accel",
    "wip_accel_frictional",
    "friction_torque",
    "spin_accel",
    "linearize",
    "step_rk4",
    "total_energy",
    "TILT_FAILURE_RAD",
]

# Zero-speed detection band for banded sign functions [rad/s].
OMEGA_EPS_DEFAULT = 1e-3

# Balance-failure envelope: beyond this tilt the planar model (and any
# linearization of it) is meaningless, so simulations declare failure.
TILT_FAILURE_RAD = 0.5


class IntegrationError(RuntimeError):
    """Raised when an integration step encounters a non-finite state."""


@dataclass(frozen=True)
class WipParams:
    """Physical parameters of one planar wheeled-inverted-pendulum."""

    m_b: float  # body (upper body + payload) mass [kg]
    m_w: float  # spherical-wheel mass [kg]
    I_b: float  # body inertia about its COM [kg m^2]
    I_w: float  # wheel inertia about its centre [kg m^2]
    l: float    # wheel centre to body COM distance [m]
    r: float    # wheel radius [m]
    g: float = 9.81  # gravitational acceleration [m/s^2]

    def __post_init__(self) -> None:
        for name in ("m_b", "m_w", "I_b", "I_w", "l", "r", "g"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"WipParams.{name} must be strictly positive")
        # Precomputed EOM coefficients (hot path).
        object.__setattr__(self, "_a", (self.m_b + self.m_w) * self.r**2 + self.I_w)
        object.__setattr__(self, "_b", self.m_b * self.r * self.l)
        object.__setattr__(self, "_c", self.I_b + self.m_b * self.l**2)
        object.__setattr__(self, "_d", self.m_b * self.g * self.l)


@dataclass(frozen=True)
class PlanarState:
    """State s = [theta, phi, theta_dot, phi_dot] of one plane."""

    theta: float      # body tilt from vertical [rad]
    phi: float        # wheel angular position [rad]
    theta_dot: float  # [rad/s]
    phi_dot: float    # [rad/s]

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.theta, self.phi, self.theta_dot, self.phi_dot)

    @staticmethod
    def from_tuple(s: tuple[float, float, float, float]) -> "PlanarState":
        return PlanarState(s[0], s[1], s[2], s[3])


@dataclass(frozen=True)
class SpinParams:
    """Yaw (transverse plane) spin model parameters."""

    I_z: float  # lumped yaw inertia of upper body + omniwheels [kg m^2]
    c_v: float  # viscous yaw friction coefficient [N m s/rad]
    c_c: float  # Coulomb yaw friction magnitude [N m]

    def __post_init__(self) -> None:
        if not self.I_z > 0.0:
            raise ValueError("SpinParams.I_z must be strictly positive")
        if self.c_v < 0.0 or self.c_c < 0.0:
            raise ValueError("SpinParams friction coefficients must be >= 0")


@dataclass(frozen=True)
class FrictionParams:
    """Breakaway stiction + Stribeck/Coulomb/viscous sliding friction."""

    tau_stiction: float       # breakaway torque [N m]
    tau_coulomb: float        # sliding Coulomb torque [N m]
    b_v: float                # viscous coefficient [N m s/rad]
    omega_stribeck: float = 1.0        # Stribeck reference speed [rad/s]
    omega_eps: float = OMEGA_EPS_DEFAULT  # zero-speed detection band [rad/s]

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau_coulomb <= self.tau_stiction:
            raise ValueError("need 0 <= tau_coulomb <= tau_stiction")
        if self.b_v < 0.0:
            raise ValueError("FrictionParams.b_v must be >= 0")
        if not self.omega_stribeck > 0.0:
            raise ValueError("FrictionParams.omega_stribeck must be > 0")
        if not self.omega_eps > 0.0:
            raise ValueError("FrictionParams.omega_eps must be > 0")

    @staticmethod
    def frictionless() -> "FrictionParams":
        return FrictionParams(tau_stiction=0.0, tau_coulomb=0.0, b_v=0.0)


@dataclass(frozen=True)
class LinearModel:
    """Jacobians (A, B) of the WIP dynamics at the upright fixed point."""

    A: np.ndarray  # 4x4, state order [theta, phi, theta_dot, phi_dot]
    B: np.ndarray  # 4x1


def _accel(p: WipParams, theta: float, theta_dot: float, phi_dot: float,
           tau: float, q_theta: float = 0.0) -> tuple[float, float]:
    """Scalar-core EOM solve shared by the public API and hot loops.

    q_theta is an optional extra generalized force on the tilt coordinate
    (e.g. a horizontal push on the body resolved about the wheel centre).
    """
    a = p._a  # type: ignore[attr-defined]
    b = p._b  # type: ignore[attr-defined]
    c = p._c  # type: ignore[attr-defined]
    d = p._d  # type: ignore[attr-defined]
    ct = math.cos(theta)
    st = math.sin(theta)
    det_mass = a * c - (b * ct) ** 2
    assert det_mass > 0.0, "singular WIP mass matrix"
    r1 = tau + b * st * theta_dot * theta_dot        # wheel equation RHS
    r2 = -tau + d * st + q_theta                     # body equation RHS
    # Solve [[b ct, a], [c, b ct]] @ [theta_dd, phi_dd] = [r1, r2].
    det = -det_mass
    theta_dd = (b * ct * r1 - a * r2) / det
    phi_dd = (-c * r1 + b * ct * r2) / det
    return theta_dd, phi_dd


def wip_accel(p: WipParams, s: PlanarState, tau: float) -> tuple[float, float]:
    """Accelerations (theta_dd, phi_dd) for joint torque tau [N m]."""
    return _accel(p, s.theta, s.theta_dot, s.phi_dot, tau)


def friction_torque(f: FrictionParams, omega: float, tau_applied: float) -> float:
    """Joint friction torque opposing the wheel's motion.

    Static regime (|omega| inside the detection band and the applied torque
    below breakaway): friction exactly cancels the applied torque.  Sliding
    regime: Coulomb + Stribeck decay + viscous drag, signed with the motion.
    """
    if abs(omega) < f.omega_eps and abs(tau_applied) <= f.tau_stiction:
        return tau_applied
    sgn = math.copysign(1.0, omega) if omega != 0.0 else 0.0
    level = f.tau_coulomb + (f.tau_stiction - f.tau_coulomb) * math.exp(
        -abs(omega) / f.omega_stribeck)
    return sgn * level + f.b_v * omega


def wip_accel_frictional(p: WipParams, f: FrictionParams, s: PlanarState,
                         tau: float) -> tuple[float, float]:
    """wip_accel with the joint torque reduced by drivetrain friction."""
    tau_eff = tau - friction_torque(f, s.phi_dot, tau)
    return _accel(p, s.theta, s.theta_dot, s.phi_dot, tau_eff)


def spin_accel(sp: SpinParams, omega_z: float, tau_z: float,
               omega_eps: float = OMEGA_EPS_DEFAULT) -> float:
    """Yaw angular acceleration: (tau_z - c_v w - c_c sgn_band(w)) / I_z."""
    sgn = 0.0 if abs(omega_z) < omega_eps else math.copysign(1.0, omega_z)
    return (tau_z - sp.c_v * omega_z - sp.c_c * sgn) / sp.I_z


def linearize(p: WipParams) -> LinearModel:
    """Analytic Jacobians of the frictionless dynamics at upright rest.

    The wheel position phi does not enter the dynamics, so its column of A
    is structurally zero (translation invariance).
    """
    a = p._a  # type: ignore[attr-defined]
    b = p._b  # type: ignore[attr-defined]
    c = p._c  # type: ignore[attr-defined]
    d = p._d  # type: ignore[attr-defined]
    det = a * c - b * b
    A = np.zeros((4, 4))
    A[0, 2] = 1.0
    A[1, 3] = 1.0
    A[2, 0] = a * d / det
    A[3, 0] = -b * d / det
    B = np.zeros((4, 1))
    B[2, 0] = -(a + b) / det
    B[3, 0] = (b + c) / det
    return LinearModel(A=A, B=B)


def step_rk4(deriv, s, dt: float):
    """Classical fixed-step RK4 over a tuple-of-floats state."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    k1 = deriv(s)
    h2 = 0.5 * dt
    k2 = deriv(tuple(x + h2 * dx for x, dx in zip(s, k1)))
    k3 = deriv(tuple(x + h2 * dx for x, dx in zip(s, k2)))
    k4 = deriv(tuple(x + dt * dx for x, dx in zip(s, k3)))
    h6 = dt / 6.0
    out = tuple(x + h6 * (a + 2.0 * (b + c) + d)
                for x, a, b, c, d in zip(s, k1, k2, k3, k4))
    if not all(math.isfinite(x) for x in out):
        raise IntegrationError(f"non-finite state after RK4 step: {out}")
    return out


def total_energy(p: WipParams, s: PlanarState) -> float:
    """Kinetic + potential energy of the two-body system, zero at upright rest."""
    ct = math.cos(s.theta)
    st = math.sin(s.theta)
    # Wheel centre velocity r*phi_dot; body COM rides the wheel centre.
    vx = p.r * s.phi_dot + p.l * ct * s.theta_dot
    vy = -p.l * st * s.theta_dot
    t_wheel = 0.5 * (p.m_w * (p.r * s.phi_dot) ** 2 + p.I_w * s.phi_dot**2)
    t_body = 0.5 * (p.m_b * (vx * vx + vy * vy) + p.I_b * s.theta_dot**2)
    v_pot = p.m_b * p.g * p.l * (ct - 1.0)
    return t_wheel + t_body + v_pot

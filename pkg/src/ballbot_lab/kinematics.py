"""Omniwheel drivetrain kinematics and contact-force analysis.

Three omniwheels (OWs) press on the upper hemisphere of the spherical wheel
(SW) at colatitude alpha and azimuths gamma_i (OW1 at azimuth 0, which also
defines the 0 deg heading).  Each OW drives the SW surface along the
azimuthal tangent at its contact point; its free rollers release the
meridional component.  Motor speed/torque vectors are rotor-side, i.e. the
gear ratio is folded into the maps.

The speed map is built from explicit 3D contact geometry: the SW surface
velocity at contact i, relative to the (tilting) body that carries the OWs,
is projected onto the drive tangent.  Tilt rates therefore feed through to
motor speeds.  The torque map is the power conjugate of the speed map
restricted to ball coordinates.

Plane conventions (shared with the dynamics module): plane "y" is the
sagittal plane, forward along +x (heading 0 deg, toward OW1); plane "x" is
the frontal plane, forward along +y (heading 90 deg).  Positive phi_dot /
theta_dot in a plane move/lean toward that plane's forward direction.
The SW is assumed not to spin about the vertical axis (no SW-ground spin).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DrivetrainGeometry",
    "PlanarRates",
    "MotorVector",
    "ContactReport",
    "SingularGeometryError",
    "ContactSeparationError",
    "motor_speeds_from_planar",
    "motor_torques_from_planar",
    "planar_speeds_from_motor",
    "planar_torques_from_motor",
    "contact_forces",
]

MotorVector = tuple[float, float, float]
"""Per-motor values (speed [rad/s] or torque [N m]), indexed OW1..OW3."""


class SingularGeometryError(ValueError):
    """Drivetrain geometry whose speed map is (near-)singular."""


class ContactSeparationError(RuntimeError):
    """A contact normal force came out negative: outside model validity."""


@dataclass(frozen=True)
class PlanarRates:
    """Planar-model rates entering the motor speed map."""

    phi_dot_x: float = 0.0    # SW rotation rate, frontal plane [rad/s]
    phi_dot_y: float = 0.0    # SW rotation rate, sagittal plane [rad/s]
    theta_dot_x: float = 0.0  # body tilt rate, frontal plane [rad/s]
    theta_dot_y: float = 0.0  # body tilt rate, sagittal plane [rad/s]
    theta_dot_z: float = 0.0  # yaw rate [rad/s]


@dataclass(frozen=True)
class DrivetrainGeometry:
    """OW/SW geometry for the planar <-> motor conversions."""

    r_s: float = 0.1145   # spherical wheel radius [m]
    r_o: float = 0.0625   # omniwheel radius [m]
    alpha: float = math.pi / 4.0  # contact angle from vertical [rad]
    gamma: tuple[float, float, float] = (0.0, 2.0 * math.pi / 3.0,
                                         4.0 * math.pi / 3.0)
    gear_ratio: float = 7.5  # motor-to-omniwheel reduction

    def __post_init__(self) -> None:
        if not (self.r_s > 0.0 and self.r_o > 0.0 and self.gear_ratio > 0.0):
            raise ValueError("radii and gear ratio must be strictly positive")
        if not 0.0 < self.alpha < math.pi / 2.0:
            raise ValueError("contact angle must lie in (0, pi/2)")
        for i in range(3):
            for j in range(i + 1, 3):
                if math.isclose(self.gamma[i] % (2 * math.pi),
                                self.gamma[j] % (2 * math.pi),
                                abs_tol=1e-9):
                    raise ValueError("omniwheel azimuths must be distinct")
        sa, ca = math.sin(self.alpha), math.cos(self.alpha)
        normals = []
        tangents = []
        rows = []
        scale = self.gear_ratio * self.r_s / self.r_o
        for g in self.gamma:
            cg, sg = math.cos(g), math.sin(g)
            n = np.array([sa * cg, sa * sg, ca])          # outward normal
            d = np.array([sg, -cg, 0.0])                  # drive tangent
            normals.append(n)
            tangents.append(d)
            rows.append(scale * np.cross(n, d))
        K = np.array(rows)  # psi_dot = K @ omega_rel
        if np.linalg.cond(K) > 1e6:
            raise SingularGeometryError(
                "contact tangents are (near-)coplanar; speed map singular")
        # Ball-coordinate map: omega_rel = S @ (phi_dot_x, phi_dot_y, theta_dot_z).
        S = np.diag([-1.0, 1.0, -1.0])
        M_v = K @ S
        object.__setattr__(self, "_normals", np.array(normals))
        object.__setattr__(self, "_tangents", np.array(tangents))
        object.__setattr__(self, "_K", K)
        object.__setattr__(self, "_K_inv", np.linalg.inv(K))
        object.__setattr__(self, "_M_v", M_v)
        object.__setattr__(self, "_torque_map", np.linalg.inv(M_v).T)
        object.__setattr__(self, "_torque_map_inv", M_v.T)


def _omega_rel(pr: PlanarRates) -> np.ndarray:
    """SW angular velocity relative to the body, in body axes (upright)."""
    return np.array([
        pr.theta_dot_x - pr.phi_dot_x,
        pr.phi_dot_y - pr.theta_dot_y,
        -pr.theta_dot_z,
    ])


def motor_speeds_from_planar(g: DrivetrainGeometry, pr: PlanarRates) -> MotorVector:
    """Rotor-side motor speeds realizing the given planar rates."""
    psi = g._K @ _omega_rel(pr)  # type: ignore[attr-defined]
    return (float(psi[0]), float(psi[1]), float(psi[2]))


def motor_torques_from_planar(g: DrivetrainGeometry, tau_x: float, tau_y: float,
                              tau_z: float) -> MotorVector:
    """Rotor-side motor torques realizing the given planar torques.

    Power conjugate of the speed map on ball coordinates: total power is
    conserved, tau . v_planar == u . psi_dot for consistent speed fields.
    """
    u = g._torque_map @ np.array([tau_x, tau_y, tau_z])  # type: ignore[attr-defined]
    return (float(u[0]), float(u[1]), float(u[2]))


def planar_torques_from_motor(g: DrivetrainGeometry,
                              mv: MotorVector) -> tuple[float, float, float]:
    """Planar torques (tau_x, tau_y, tau_z): exact inverse of the torque map."""
    tau = g._torque_map_inv @ np.asarray(mv, dtype=float)  # type: ignore[attr-defined]
    return (float(tau[0]), float(tau[1]), float(tau[2]))


def planar_speeds_from_motor(
    g: DrivetrainGeometry,
    mv: MotorVector,
    tilt_rates: tuple[float, float] = (0.0, 0.0),
    yaw_rate: float | None = None,
) -> tuple[PlanarRates, float]:
    """Recover planar rates from motor speeds and measured tilt rates.

    With tilt rates only, the 3x3 speed map is inverted exactly for
    (phi_dot_x, phi_dot_y, theta_dot_z) and the residual is zero.  If an
    independently measured yaw rate is supplied as well, the system is
    overdetermined; the remaining rates are fit by least squares and a
    nonzero residual signals sensor inconsistency.
    """
    psi = np.asarray(mv, dtype=float)
    tdx, tdy = tilt_rates
    if yaw_rate is None:
        w = g._K_inv @ psi  # type: ignore[attr-defined]
        rates = PlanarRates(phi_dot_x=tdx - w[0], phi_dot_y=w[1] + tdy,
                            theta_dot_x=tdx, theta_dot_y=tdy,
                            theta_dot_z=-w[2])
        return rates, 0.0
    K = g._K  # type: ignore[attr-defined]
    # Unknowns (phi_dot_x, phi_dot_y); yaw and tilt channels are data.
    rhs = psi - K @ np.array([tdx, -tdy, -yaw_rate])
    A = np.column_stack([-K[:, 0], K[:, 1]])
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    residual = float(np.linalg.norm(A @ sol - rhs))
    rates = PlanarRates(phi_dot_x=float(sol[0]), phi_dot_y=float(sol[1]),
                        theta_dot_x=tdx, theta_dot_y=tdy, theta_dot_z=yaw_rate)
    return rates, residual


@dataclass(frozen=True)
class ContactReport:
    """Quasi-static per-OW contact loads and friction-cone margins."""

    normal: tuple[float, float, float]      # normal force [N]
    tangential: tuple[float, float, float]  # required drive traction [N]
    margin: tuple[float, float, float]      # mu*N - |F_t| [N]
    slip: tuple[bool, bool, bool]

    @property
    def min_margin(self) -> float:
        return min(self.margin)

    @property
    def any_slip(self) -> bool:
        return any(self.slip)


def contact_forces(g: DrivetrainGeometry, supported_mass: float,
                   tilt: tuple[float, float], motor_torques: MotorVector,
                   mu: float, grav: float = 9.81) -> ContactReport:
    """Quasi-static contact normal forces and friction-cone margins.

    The supported weight acts through the geometric centre, tipped by the
    body lean (contacts are body-fixed); the OW drive reactions enter the
    balance as tangential loads at the contacts.  Normal forces solve the
    3-contact force balance; slip is flagged where the required traction
    leaves the friction cone.
    """
    if supported_mass <= 0.0:
        raise ValueError("supported_mass must be positive")
    theta_x, theta_y = tilt
    lx = math.sin(theta_y)          # sagittal lean -> toward +x (OW1)
    ly = math.sin(theta_x)          # frontal lean -> toward +y
    lz = -math.sqrt(max(0.0, 1.0 - lx * lx - ly * ly))
    weight = supported_mass * grav * np.array([lx, ly, lz])

    tangents = g._tangents  # type: ignore[attr-defined]
    normals = g._normals    # type: ignore[attr-defined]
    f_drive = np.array([g.gear_ratio * u / g.r_o for u in motor_torques])
    drive_sum = tangents.T @ f_drive

    # Body balance: sum(N_i n_i) - sum(F_i d_i) + W = 0.
    N = np.linalg.solve(normals.T, drive_sum - weight)
    if np.any(N < 0.0):
        raise ContactSeparationError(
            f"negative contact normal force: {tuple(N)}")
    margin = mu * N - np.abs(f_drive)
    return ContactReport(
        normal=tuple(float(x) for x in N),
        tangential=tuple(float(abs(x)) for x in f_drive),
        margin=tuple(float(x) for x in margin),
        slip=tuple(bool(m < 0.0) for m in margin),
    )

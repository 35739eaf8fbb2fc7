"""Planar <-> motor conversions and contact-force analysis."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballbot_lab.config import load_config, platform_config
from ballbot_lab.kinematics import (
    ContactSeparationError,
    DrivetrainGeometry,
    PlanarRates,
    contact_forces,
    motor_speeds_from_planar,
    motor_torques_from_planar,
    planar_speeds_from_motor,
    planar_torques_from_motor,
)

from oracles import surface_speed_oracle

GEO = DrivetrainGeometry()
MIA_MASS = 74.3

rates_st = st.builds(
    PlanarRates,
    phi_dot_x=st.floats(-20, 20), phi_dot_y=st.floats(-20, 20),
    theta_dot_x=st.floats(-3, 3), theta_dot_y=st.floats(-3, 3),
    theta_dot_z=st.floats(-5, 5),
)


class TestSpeedMap:
    def test_zero_rates_zero_speeds(self):
        assert motor_speeds_from_planar(GEO, PlanarRates()) == (0.0, 0.0, 0.0)

    def test_pure_yaw_equal_speeds(self):
        psi = motor_speeds_from_planar(GEO, PlanarRates(theta_dot_z=1.0))
        expected = GEO.gear_ratio * GEO.r_s * math.sin(GEO.alpha) / GEO.r_o
        for v in psi:
            assert v == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(9.715, abs=2e-3)

    def test_pure_translation_heading0_pattern(self):
        psi = motor_speeds_from_planar(GEO, PlanarRates(phi_dot_y=1.0))
        assert psi[0] == pytest.approx(0.0, abs=1e-12)   # OW1 idles
        assert psi[1] == pytest.approx(-psi[2], rel=1e-12)
        assert abs(psi[1]) > 1.0

    @settings(max_examples=300, deadline=None)
    @given(pr=rates_st)
    def test_matches_point_velocity_oracle(self, pr):
        got = motor_speeds_from_planar(GEO, pr)
        want = surface_speed_oracle(GEO, pr)
        for a, b in zip(got, want):
            assert a == pytest.approx(b, rel=1e-9, abs=1e-9)

    def test_tilt_feedthrough_nonzero(self):
        psi = motor_speeds_from_planar(GEO, PlanarRates(theta_dot_y=1.0))
        assert any(abs(v) > 0.1 for v in psi)


class TestTorqueMap:
    def test_zero(self):
        assert motor_torques_from_planar(GEO, 0.0, 0.0, 0.0) == (0.0, 0.0, 0.0)

    def test_pure_yaw_equal_torques(self):
        u = motor_torques_from_planar(GEO, 0.0, 0.0, 1.0)
        expected = GEO.r_o / (3 * GEO.gear_ratio * GEO.r_s * math.sin(GEO.alpha))
        for v in u:
            assert v == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.0343, abs=1e-4)

    def test_power_conservation_random(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            tau = rng.uniform(-30, 30, size=3)
            ball = rng.uniform(-20, 20, size=3)  # (phi_dot_x, phi_dot_y, theta_dot_z)
            u = motor_torques_from_planar(GEO, *tau)
            psi = motor_speeds_from_planar(GEO, PlanarRates(
                phi_dot_x=ball[0], phi_dot_y=ball[1], theta_dot_z=ball[2]))
            p_planar = float(tau @ ball)
            p_motor = sum(ui * pi for ui, pi in zip(u, psi))
            assert p_motor == pytest.approx(p_planar, rel=1e-9, abs=1e-9)


class TestInverseMaps:
    @settings(max_examples=300, deadline=None)
    @given(pr=rates_st)
    def test_speed_round_trip_identity(self, pr):
        psi = motor_speeds_from_planar(GEO, pr)
        back, residual = planar_speeds_from_motor(
            GEO, psi, tilt_rates=(pr.theta_dot_x, pr.theta_dot_y))
        assert residual == 0.0
        assert back.phi_dot_x == pytest.approx(pr.phi_dot_x, rel=1e-12, abs=1e-12)
        assert back.phi_dot_y == pytest.approx(pr.phi_dot_y, rel=1e-12, abs=1e-12)
        assert back.theta_dot_z == pytest.approx(pr.theta_dot_z, rel=1e-12, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(tau=st.tuples(st.floats(-30, 30), st.floats(-30, 30), st.floats(-30, 30)))
    def test_torque_round_trip_identity(self, tau):
        u = motor_torques_from_planar(GEO, *tau)
        back = planar_torques_from_motor(GEO, u)
        for a, b in zip(back, tau):
            assert a == pytest.approx(b, rel=1e-12, abs=1e-12)

    def test_equal_motor_speeds_is_pure_yaw(self):
        k = 3.7
        rates, residual = planar_speeds_from_motor(GEO, (k, k, k))
        assert residual == 0.0
        assert rates.phi_dot_x == pytest.approx(0.0, abs=1e-12)
        assert rates.phi_dot_y == pytest.approx(0.0, abs=1e-12)
        assert rates.theta_dot_z > 0.0

    def test_inconsistent_motor_vector_reports_residual(self):
        pr = PlanarRates(phi_dot_y=5.0, theta_dot_z=1.0)
        psi = list(motor_speeds_from_planar(GEO, pr))
        psi[1] += 0.25  # injected encoder noise
        _, residual = planar_speeds_from_motor(
            GEO, tuple(psi), tilt_rates=(0.0, 0.0), yaw_rate=1.0)
        assert residual > 1e-3

    def test_consistent_overdetermined_has_tiny_residual(self):
        pr = PlanarRates(phi_dot_x=2.0, phi_dot_y=-4.0, theta_dot_z=0.7)
        psi = motor_speeds_from_planar(GEO, pr)
        rates, residual = planar_speeds_from_motor(
            GEO, psi, tilt_rates=(0.0, 0.0), yaw_rate=0.7)
        assert residual == pytest.approx(0.0, abs=1e-9)
        assert rates.phi_dot_x == pytest.approx(2.0, rel=1e-9)
        assert rates.phi_dot_y == pytest.approx(-4.0, rel=1e-9)


class TestSymmetry:
    def test_cyclic_permutation_under_120deg_rotation(self):
        # Rotating the commanded translation by 120 deg permutes motors.
        v = 1.3
        for h in (0.0, 0.9, 2.2):
            a = motor_speeds_from_planar(GEO, PlanarRates(
                phi_dot_x=v * math.sin(h), phi_dot_y=v * math.cos(h)))
            b = motor_speeds_from_planar(GEO, PlanarRates(
                phi_dot_x=v * math.sin(h + 2 * math.pi / 3),
                phi_dot_y=v * math.cos(h + 2 * math.pi / 3)))
            rotated = (a[2], a[0], a[1])
            for x, y in zip(b, rotated):
                assert x == pytest.approx(y, rel=1e-12, abs=1e-12)


class TestContactForces:
    def test_upright_share(self):
        rep = contact_forces(GEO, MIA_MASS, (0.0, 0.0), (0.0, 0.0, 0.0), 0.8)
        expected = MIA_MASS * 9.81 / (3 * math.cos(GEO.alpha))
        for n in rep.normal:
            assert n == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(343.6, abs=0.1)
        assert not rep.any_slip

    def test_vertical_balance_at_upright(self):
        rep = contact_forces(GEO, 50.0, (0.0, 0.0), (0.1, -0.2, 0.05), 0.8)
        total = sum(rep.normal) * math.cos(GEO.alpha)
        assert total == pytest.approx(50.0 * 9.81, rel=1e-9)

    def test_static_load_capacity(self):
        # Each OW rated 60 kgf: the total supported load works out to 127 kg.
        per_ow = 60.0 * 9.81
        mass = 3 * math.cos(GEO.alpha) * 60.0
        rep = contact_forces(GEO, mass, (0.0, 0.0), (0.0, 0.0, 0.0), 0.8)
        assert mass == pytest.approx(127.0, abs=0.5)
        for n in rep.normal:
            assert n == pytest.approx(per_ow, rel=1e-9)

    def test_heading_asymmetry_fixed_torque(self):
        # Same drive magnitude at mirrored leans: driving-OW margin is
        # strictly worse when translating toward OW1.  Leans are paired with
        # the drive torque that sustains them (a statically unsustainable
        # lean with near-zero drive is outside the quasi-static model).
        p = platform_config(load_config(), "miapure").wip
        for lean in (0.005, 0.02, 0.1, 0.3, 0.49):
            accel = p.g * math.tan(lean)
            tau_y = ((p.m_b + p.m_w) * p.r**2 + p.I_w) * accel / p.r + 3.0
            u_fwd = motor_torques_from_planar(GEO, 0.0, tau_y, 0.0)
            u_bwd = motor_torques_from_planar(GEO, 0.0, -tau_y, 0.0)
            fwd = contact_forces(GEO, MIA_MASS, (0.0, lean), u_fwd, 0.8)
            bwd = contact_forces(GEO, MIA_MASS, (0.0, -lean), u_bwd, 0.8)
            fwd_driving = min(fwd.margin[1], fwd.margin[2])
            bwd_driving = min(bwd.margin[1], bwd.margin[2])
            assert fwd_driving < bwd_driving

    def test_margin_decreases_with_forward_lean(self, subtests=None):
        # Along the quasi-static heading-0 operating curve (lean implies the
        # matching drive torque), the worst margin shrinks monotonically.
        p = platform_config(load_config(), "miapure").wip
        margins = []
        for lean in np.linspace(0.01, 0.3, 12):
            accel = p.g * math.tan(lean)
            tau_y = ((p.m_b + p.m_w) * p.r**2 + p.I_w) * accel / p.r + 4.0
            u = motor_torques_from_planar(GEO, 0.0, tau_y, 0.0)
            rep = contact_forces(GEO, MIA_MASS, (0.0, lean), u, 0.8)
            margins.append(min(rep.margin[1], rep.margin[2]))
        assert all(b < a for a, b in zip(margins, margins[1:]))

    def test_contact_separation_raises(self):
        huge = motor_torques_from_planar(GEO, 0.0, 600.0, 0.0)
        with pytest.raises(ContactSeparationError):
            contact_forces(GEO, 20.0, (0.0, 0.4), huge, 0.8)

    def test_slip_flag_matches_margin(self):
        u = motor_torques_from_planar(GEO, 0.0, 25.0, 0.0)
        rep = contact_forces(GEO, MIA_MASS, (0.0, 0.1), u, 0.3)
        for m, s in zip(rep.margin, rep.slip):
            assert s == (m < 0.0)
        assert rep.any_slip


class TestGeometryValidation:
    def test_rejects_flat_contact_angle(self):
        with pytest.raises(ValueError):
            DrivetrainGeometry(alpha=0.0)

    def test_rejects_duplicate_azimuths(self):
        with pytest.raises(ValueError):
            DrivetrainGeometry(gamma=(0.0, 0.0, 2.0))

"""Riccati solver, control laws, cascades, and the three-plane pipeline."""

import numpy as np
import pytest

from ballbot_lab.config import load_config, platform_config
from ballbot_lab.controllers import (
    BallbotCommand,
    BallbotController,
    BallbotMeasurement,
    CommandState,
    ControllerState,
    LqrGains,
    LqrPiController,
    LqrTorqueController,
    LqrWeights,
    PdGains,
    PiGains,
    RiccatiError,
    are_residual,
    lqr_torque,
    pi_step,
    reference_model_step,
    solve_care,
    solve_lqr,
    solve_yaw_lqr,
)
from ballbot_lab.dynamics import PlanarState, linearize, wip_accel
from ballbot_lab.kinematics import planar_torques_from_motor

REST = PlanarState(0.0, 0.0, 0.0, 0.0)


@pytest.fixture(scope="module")
def cfg():
    return load_config()


@pytest.fixture(scope="module", params=["miapure", "piptb"])
def plat(request, cfg):
    return platform_config(cfg, request.param)


class TestRiccati:
    def test_scalar_closed_form(self):
        P = solve_care(np.array([[0.0]]), np.array([[1.0]]),
                       np.array([[1.0]]), 1.0)
        assert P[0, 0] == pytest.approx(1.0, rel=1e-12)

    def test_residual_and_stability(self, plat):
        model = linearize(plat.wip)
        w = LqrWeights(Q=np.array(plat.controller.lqr_q), R=plat.controller.lqr_r)
        gains = solve_lqr(model, w)
        idx = np.array([0, 2, 3])
        A_r = model.A[np.ix_(idx, idx)]
        B_r = model.B[idx, :]
        Q_r = w.Q[np.ix_(idx, idx)]
        P = solve_care(A_r, B_r, Q_r, w.R)
        assert are_residual(A_r, B_r, Q_r, w.R, P) <= 1e-8 * np.linalg.norm(Q_r)
        eigs = np.linalg.eigvals(A_r - B_r @ ((B_r.T @ P) / w.R))
        assert np.all(eigs.real < 0.0)
        # Full 4-state loop: the uncontrolled wheel position contributes one
        # structurally zero eigenvalue; every other mode is stable.
        k_full = gains.full_gain().reshape(1, 4)
        eigs4 = np.linalg.eigvals(model.A - model.B @ k_full)
        order = np.argsort(np.abs(eigs4))
        assert abs(eigs4[order[0]]) < 1e-9
        assert np.all(eigs4[order[1:]].real < 0.0)

    def test_not_stabilizable_raises(self):
        A = np.array([[1.0, 0.0], [0.0, 2.0]])
        B = np.array([[0.0], [0.0]])
        with pytest.raises(RiccatiError):
            solve_care(A, B, np.eye(2), 1.0)

    def test_yaw_gains_positive(self, plat):
        g = solve_yaw_lqr(plat.spin, plat.controller.yaw_q, plat.controller.yaw_r)
        assert g.k_theta > 0.0 and g.k_omega > 0.0

    def test_weights_validation(self):
        with pytest.raises(ValueError):
            LqrWeights(Q=np.diag([1.0, 1.0, 1.0, -1.0]), R=1.0)
        with pytest.raises(ValueError):
            LqrWeights(Q=np.eye(4), R=0.0)


class TestLqrTorque:
    def test_zero_error_zero_torque(self):
        k = LqrGains(10.0, 2.0, 1.0)
        s = PlanarState(0.02, 7.0, -0.1, 3.0)
        cmd = CommandState(theta_c=0.02, theta_dot_c=-0.1, phi_dot_c=3.0)
        assert lqr_torque(k, cmd, s) == 0.0

    def test_wheel_position_invariance(self):
        k = LqrGains(10.0, 2.0, 1.0)
        cmd = CommandState(phi_dot_c=5.0)
        a = lqr_torque(k, cmd, PlanarState(0.1, 3.0, 0.2, 4.0))
        b = lqr_torque(k, cmd, PlanarState(0.1, -123.4, 0.2, 4.0))
        assert a == b

    def test_arithmetic(self):
        k = LqrGains(10.0, 2.0, 1.0)
        cmd = CommandState(theta_c=0.0, theta_dot_c=0.0, phi_dot_c=5.0)
        tau = lqr_torque(k, cmd, PlanarState(0.1, 3.0, 0.2, 4.0))
        assert tau == pytest.approx(-0.4, abs=1e-12)


class TestReferenceModel:
    def test_rest_zero_torque_holds(self, plat):
        cs = ControllerState(phi_dot_r=0.0)
        out = reference_model_step(plat.wip, REST, 0.0, 1 / 400, cs)
        assert out == 0.0

    def test_positive_torque_accelerates(self, plat):
        cs = ControllerState(phi_dot_r=0.0)
        dt = 1 / 400
        out = reference_model_step(plat.wip, REST, 2.0, dt, cs)
        _, phi_dd = wip_accel(plat.wip, REST, 2.0)
        assert out == pytest.approx(phi_dd * dt, rel=1e-12)
        assert out > 0.0

    def test_constant_torque_accumulates_linearly(self, plat):
        dt = 1 / 400
        cs = ControllerState(phi_dot_r=0.0)
        one = reference_model_step(plat.wip, REST, 1.5, dt, cs)
        two = reference_model_step(plat.wip, REST, 1.5, dt, cs)
        assert two == pytest.approx(2.0 * one, rel=1e-12)


class TestPiStep:
    def test_zero_error(self):
        g = PiGains(k_p=2.0, k_i=1.0, integrator_limit=10.0)
        assert pi_step(ControllerState(), g, 3.0, 3.0, 0.1) == 0.0

    def test_one_step_arithmetic(self):
        g = PiGains(k_p=2.0, k_i=1.0, integrator_limit=10.0)
        assert pi_step(ControllerState(), g, 1.0, 0.0, 0.1) == pytest.approx(2.1)

    def test_integrator_clamps(self):
        g = PiGains(k_p=0.0, k_i=1.0, integrator_limit=0.5)
        cs = ControllerState()
        for _ in range(100):
            tau = pi_step(cs, g, 1.0, 0.0, 0.1)
        assert cs.integrator == pytest.approx(0.5)
        assert tau == pytest.approx(0.5)


class TestCascades:
    def test_lqr_pi_reduces_to_feedforward_without_pi(self, plat):
        c = LqrPiController(plat.wip, LqrGains(30.0, 5.0, 2.0),
                            PiGains(0.0, 0.0, 1.0), ratio=20,
                            outer_dt=1 / 400, inner_dt=1 / 8000)
        ref = LqrTorqueController(LqrGains(30.0, 5.0, 2.0), ratio=20)
        cmd = CommandState(phi_dot_c=2.0)
        for tick in range(60):
            s = PlanarState(0.01, 0.0, 0.0, 1.0 + 0.001 * tick)
            assert c.step(tick, s, cmd) == ref.step(tick, s, cmd)

    def test_lqr_pi_perfect_tracking_outputs_feedforward(self, plat):
        # A plant that exactly tracks the reference speed sees e == 0, so
        # the output is the held feedforward torque at every inner tick.
        c = LqrPiController(plat.wip, LqrGains(30.0, 5.0, 2.0),
                            PiGains(1.5, 20.0, 4.0), ratio=20,
                            outer_dt=1 / 400, inner_dt=1 / 8000)
        cmd = CommandState(phi_dot_c=1.0)
        for tick in range(100):
            held_tau_r = c.state.tau_r
            s = PlanarState(0.003, 0.0, 0.0, c.state.phi_dot_r)
            tau = c.step(tick, s, cmd)
            assert tau == held_tau_r
            assert c.state.integrator == 0.0
        assert c.state.tau_r != 0.0

    def test_zero_gains_zero_torque(self, plat):
        c = LqrPiController(plat.wip, LqrGains(0.0, 0.0, 0.0),
                            PiGains(0.0, 0.0, 1.0), ratio=20,
                            outer_dt=1 / 400, inner_dt=1 / 8000)
        for tick in range(40):
            s = PlanarState(0.05, 1.0, 0.1, 0.5)
            assert c.step(tick, s, CommandState(phi_dot_c=3.0)) == 0.0

    def test_lqr_zoh_updates_only_on_outer_ticks(self):
        # Holds refresh at outer ticks and apply from the following tick.
        c = LqrTorqueController(LqrGains(10.0, 1.0, 1.0), ratio=20)
        cmd = CommandState(phi_dot_c=1.0)
        outputs = []
        for tick in range(42):
            s = PlanarState(0.001 * tick, 0.0, 0.0, 0.0)
            outputs.append(c.step(tick, s, cmd))
        assert outputs[0] == 0.0
        assert len(set(outputs[1:21])) == 1
        assert len(set(outputs[21:41])) == 1
        assert outputs[21] != outputs[1]

    def test_pi_pd_arithmetic(self):
        # e_v = 1 with k_p_outer = 0.05 commands theta_r = 0.05; the inner
        # tilt loop reacts with |tau| = k_p_tilt * 0.05 = 5.0, negative in
        # this plant's joint-torque convention (reverse wheel push to lean
        # into the commanded direction).
        g = PdGains(k_p_outer=0.05, k_i_outer=0.0, k_p_tilt=100.0,
                    k_d_tilt=0.0, tilt_limit=1.0)
        from ballbot_lab.controllers import PiPdController
        c = PiPdController(g, ratio=1, outer_dt=1 / 400)
        c.step(0, REST, CommandState(phi_dot_c=1.0))
        tau = c.step(1, REST, CommandState(phi_dot_c=1.0))
        assert abs(tau) == pytest.approx(5.0, rel=1e-6)
        assert tau == pytest.approx(-5.0, rel=1e-6)

    def test_pi_pd_tilt_reference_clamps(self):
        g = PdGains(k_p_outer=10.0, k_i_outer=0.0, k_p_tilt=1.0,
                    k_d_tilt=0.0, tilt_limit=0.2)
        from ballbot_lab.controllers import PiPdController
        c = PiPdController(g, ratio=1, outer_dt=1 / 400)
        c.step(0, REST, CommandState(phi_dot_c=100.0))
        assert c.theta_r == pytest.approx(0.2)


def _pipeline(plat, kind="lqr-pi"):
    model = linearize(plat.wip)
    gains = solve_lqr(model, LqrWeights(Q=np.array(plat.controller.lqr_q),
                                        R=plat.controller.lqr_r))
    yaw = solve_yaw_lqr(plat.spin, plat.controller.yaw_q, plat.controller.yaw_r)
    pi = PiGains(plat.controller.pi_k_p, plat.controller.pi_k_i,
                 plat.controller.pi_integrator_limit)
    return BallbotController(
        plat.wip, plat.spin, plat.geometry, gains, yaw, pi,
        ratio=20, outer_dt=1 / 400, inner_dt=1 / 8000,
        tau_max=plat.tau_motor_max, inner_pi_enabled=(kind == "lqr-pi"))


AT_REST = BallbotMeasurement(0.0, 0.0, 0.0, 0.0, (0.0, 0.0, 0.0))


class TestBallbotPipeline:
    def test_equilibrium_zero_output(self, plat):
        c = _pipeline(plat)
        for tick in range(60):
            u = c.step(tick, AT_REST, BallbotCommand())
            assert u == (0.0, 0.0, 0.0)

    def test_pure_yaw_equal_motor_commands(self, plat):
        c = _pipeline(plat)
        cmd = BallbotCommand(yaw_rate_c=0.5)
        for tick in range(40):
            u = c.step(tick, AT_REST, cmd)
            assert u[0] == pytest.approx(u[1], rel=1e-9, abs=1e-12)
            assert u[1] == pytest.approx(u[2], rel=1e-9, abs=1e-12)
        assert abs(u[0]) > 0.0
        for a, b in zip(c.psi_dot_r[:-1], c.psi_dot_r[1:]):
            assert a == pytest.approx(b, rel=1e-9, abs=1e-12)

    def test_heading_rotation_maps_planar_torques(self, plat):
        v = 4.0  # commanded wheel speed [rad/s]
        c0 = _pipeline(plat, kind="lqr")
        c90 = _pipeline(plat, kind="lqr")
        cmd0 = BallbotCommand(y=CommandState(phi_dot_c=v))
        cmd90 = BallbotCommand(x=CommandState(phi_dot_c=v))
        c0.step(0, AT_REST, cmd0)
        c90.step(0, AT_REST, cmd90)
        u0 = c0.step(1, AT_REST, cmd0)
        u90 = c90.step(1, AT_REST, cmd90)
        t0 = planar_torques_from_motor(plat.geometry, u0)
        t90 = planar_torques_from_motor(plat.geometry, u90)
        assert t0[0] == pytest.approx(0.0, abs=1e-9)
        assert t90[1] == pytest.approx(0.0, abs=1e-9)
        assert t90[0] == pytest.approx(t0[1], rel=1e-9)
        assert abs(t0[1]) > 0.0
        assert sorted(np.round(u0, 10)) != sorted(np.round(u90, 10))

    def test_saturation(self, plat):
        c = _pipeline(plat)
        cmd = BallbotCommand(y=CommandState(phi_dot_c=1e6))
        c.step(0, AT_REST, cmd)
        u = c.step(1, AT_REST, cmd)
        assert max(abs(x) for x in u) == plat.tau_motor_max

    def test_determinism(self, plat):
        def run():
            c = _pipeline(plat)
            seq = []
            for tick in range(200):
                meas = BallbotMeasurement(1e-4 * tick, -2e-4 * tick, 1e-3,
                                          2e-3, (0.01 * tick, 0.0, -0.01 * tick))
                seq.append(c.step(tick, meas, BallbotCommand(yaw_rate_c=0.2)))
            return seq
        assert run() == run()

"""Trapezoidal collocation transcription and the braking-task solver."""

import math

import numpy as np
import pytest

from ballbot_lab.config import load_config, platform_config
from ballbot_lab.dynamics import PlanarState, step_rk4, wip_accel
from ballbot_lab.trajopt import (
    BrakingTask,
    TrajOptError,
    Trajectory,
    negative_power_span,
    objective_value,
    solve,
    trajectory_from_csv,
    trajectory_to_csv,
    transcribe,
)


@pytest.fixture(scope="module")
def miapure():
    return platform_config(load_config(), "miapure").wip


@pytest.fixture(scope="module")
def braking_solution(miapure):
    nlp = transcribe(miapure, BrakingTask(v0=1.4, t_dur=2.0), n_knots=50)
    traj, report = solve(nlp)
    return nlp, traj, report


class TestTranscription:
    def test_defect_vector_shape(self, miapure):
        for n in (10, 33, 60):
            nlp = transcribe(miapure, BrakingTask(v0=1.0, t_dur=1.5), n_knots=n)
            z = nlp.join(nlp.default_guess().states, nlp.default_guess().tau)
            assert nlp.defects(z).shape == (4 * (n - 1),)
            assert nlp.n_vars == 5 * n

    def test_rejects_few_knots(self, miapure):
        with pytest.raises(ValueError):
            transcribe(miapure, BrakingTask(v0=1.0, t_dur=1.0), n_knots=5)

    def test_rejects_infeasible_initial_state(self, miapure):
        with pytest.raises(ValueError, match="path bounds"):
            transcribe(miapure, BrakingTask(v0=5.0, t_dur=1.0, v_max=3.0))

    def test_rollout_defects_vanish_quadratically(self, miapure):
        # One dense RK4 rollout of the frictionless plant is dynamically
        # feasible; subsampling its knots isolates the transcription error,
        # whose per-unit-time defect shrinks as O(h^2).  (The open-loop WIP
        # is unstable, so per-grid rollouts would diverge from each other.)
        p = miapure
        t_dur = 0.4
        omega0 = 1.0 / p.r
        dense_n = 3201

        def torque(t):
            return 20.0 * math.sin(2.0 * math.pi * t / t_dur)

        times = np.linspace(0.0, t_dur, dense_n)
        hh = times[1] - times[0]
        s = (0.0, 0.0, 0.0, omega0)
        states = [s]
        for k in range(dense_n - 1):
            t = times[k]

            def deriv(ss, t=t):
                tdd, pdd = wip_accel(p, PlanarState.from_tuple(ss),
                                     torque(t + 0.5 * hh))
                return (ss[2], ss[3], tdd, pdd)

            s = step_rk4(deriv, s, hh)
            states.append(s)
        states = np.array(states)

        norms = []
        for n in (21, 41, 81):
            stride = (dense_n - 1) // (n - 1)
            idx = np.arange(0, dense_n, stride)
            task = BrakingTask(v0=1.0, t_dur=t_dur, v_max=10.0, theta_max=3.0)
            nlp = transcribe(p, task, n_knots=n)
            z = nlp.join(states[idx], np.array([torque(t) for t in times[idx]]))
            norms.append(np.max(np.abs(nlp.defects(z))) / nlp.h)
        r1 = norms[0] / norms[1]
        r2 = norms[1] / norms[2]
        assert 3.4 < r1 < 4.6
        assert 3.4 < r2 < 4.6


class TestObjective:
    def test_zero_torque_zero_cost(self):
        t = np.linspace(0.0, 1.0, 11)
        traj = Trajectory(t, np.zeros((11, 4)), np.zeros(11))
        assert objective_value(traj) == 0.0

    def test_constant_torque(self):
        t = np.linspace(0.0, 3.0, 31)
        traj = Trajectory(t, np.zeros((31, 4)), np.full(31, 2.0))
        assert objective_value(traj) == pytest.approx(12.0, rel=1e-12)

    def test_matches_fine_grid_quadrature(self):
        # Braking-pulse-shaped torque on a fine knot grid: the knot-level
        # trapezoid agrees with the exact integral to refinement accuracy.
        t_dur = 2.0
        tt = np.linspace(0.0, t_dur, 5001)
        tau = 30.0 * np.sin(2.0 * np.pi * tt / t_dur) * np.exp(-tt)
        traj = Trajectory(tt, np.zeros((len(tt), 4)), tau)
        from scipy.integrate import quad
        exact, _ = quad(
            lambda t: (30.0 * math.sin(2.0 * math.pi * t / t_dur)
                       * math.exp(-t)) ** 2, 0.0, t_dur, limit=200)
        assert objective_value(traj) == pytest.approx(exact, rel=1e-6)


class TestSolve:
    def test_degenerate_rest_task(self, miapure):
        nlp = transcribe(miapure, BrakingTask(v0=0.0, t_dur=1.0), n_knots=30)
        traj, report = solve(nlp)
        assert report.converged
        assert objective_value(traj) == pytest.approx(0.0, abs=1e-12)
        assert np.max(np.abs(traj.states)) <= 1e-9
        assert np.max(np.abs(traj.tau)) <= 1e-9

    def test_braking_feasibility_and_signatures(self, miapure, braking_solution):
        nlp, traj, report = braking_solution
        assert report.converged
        assert report.max_violation <= 1e-6
        assert report.stationarity <= 1e-4
        # Boundary conditions are pinned exactly.
        omega0 = 1.4 / miapure.r
        assert traj.states[0].tolist() == [0.0, 0.0, 0.0, omega0]
        assert traj.states[-1][0] == 0.0
        assert traj.states[-1][2] == 0.0
        assert traj.states[-1][3] == 0.0
        # Non-minimum-phase signatures: backward tilt and speed overshoot.
        assert traj.states[:, 0].min() < -0.005
        assert (traj.states[:, 3] * miapure.r).max() > 1.4
        assert negative_power_span(traj)

    def test_local_minimum_perturbation_proxy(self, miapure, braking_solution):
        nlp, traj, _ = braking_solution
        z_star = nlp.join(traj.states, traj.tau)
        j_star = nlp.objective(z_star)

        # Equality Jacobian (defects + pinned variables) by finite differences.
        pins = np.where(nlp.upper - nlp.lower < 1e-15)[0]
        m = nlp.n_defects
        E = np.zeros((m + len(pins), nlp.n_vars))
        h = 1e-6
        for j in range(nlp.n_vars):
            e = np.zeros(nlp.n_vars)
            e[j] = h
            E[:m, j] = (nlp.defects(z_star + e) - nlp.defects(z_star - e)) / (2 * h)
        for row, j in enumerate(pins):
            E[m + row, j] = 1.0

        def restore(z):
            for _ in range(6):
                c = np.concatenate([nlp.defects(z), z[pins] - z_star[pins]])
                if np.max(np.abs(c)) <= 1e-8:
                    break
                z = z - E.T @ np.linalg.solve(E @ E.T, c)
            return z

        _, _, v = np.linalg.svd(E)
        null = v[m + len(pins):].T
        tau_idx = slice(4 * nlp.n_knots, None)
        rng = np.random.default_rng(3)
        tau_scale = np.max(np.abs(traj.tau))
        for _ in range(8):
            d = null @ rng.normal(size=null.shape[1])
            d = d / max(1e-12, np.max(np.abs(d[tau_idx]))) * 0.01 * tau_scale
            z_p = restore(np.clip(z_star + d, nlp.lower, nlp.upper))
            assert np.max(np.abs(nlp.defects(z_p))) <= 1e-6
            assert nlp.objective(z_p) >= j_star * (1.0 - 1e-3)

    def test_nonconvergence_carries_best_iterate(self, miapure):
        nlp = transcribe(miapure, BrakingTask(v0=1.4, t_dur=2.0), n_knots=40)
        with pytest.raises(TrajOptError) as exc:
            solve(nlp, max_iter=1)
        assert exc.value.report.iterations == 1
        assert exc.value.trajectory.states.shape == (40, 4)
        assert exc.value.report.max_violation > 1e-6


class TestNegativePower:
    def test_zero_torque_empty(self):
        t = np.linspace(0.0, 1.0, 5)
        traj = Trajectory(t, np.ones((5, 4)), np.zeros(5))
        assert negative_power_span(traj) == []

    def test_toy_sign_flip(self):
        t = np.array([0.0, 0.5, 1.0])
        states = np.zeros((3, 4))
        states[:, 3] = 1.0
        traj = Trajectory(t, states, np.full(3, -1.0))
        assert negative_power_span(traj) == [(0.0, 1.0)]


class TestCsv:
    def test_round_trip_exact(self, braking_solution):
        _, traj, _ = braking_solution
        text = trajectory_to_csv(traj)
        back = trajectory_from_csv(text)
        assert np.array_equal(back.times, traj.times)
        assert np.array_equal(back.states, traj.states)
        assert np.array_equal(back.tau, traj.tau)

    def test_rejects_bad_header(self):
        with pytest.raises(ValueError, match="header"):
            trajectory_from_csv("a,b,c\n1,2,3\n")

    def test_sample_interpolates(self):
        t = np.array([0.0, 1.0])
        states = np.array([[0.0, 0.0, 0.0, 2.0], [1.0, 0.5, -1.0, 0.0]])
        traj = Trajectory(t, states, np.array([0.0, 4.0]))
        s, tau = traj.sample(0.5)
        assert s.theta == pytest.approx(0.5)
        assert s.phi_dot == pytest.approx(1.0)
        assert tau == pytest.approx(2.0)

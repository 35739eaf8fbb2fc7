"""Direct-collocation braking trajectories for the planar WIP model.

Minimum-torque braking: decelerate from an initial translation speed to
upright rest in a fixed duration, minimizing the integral of squared wheel
torque.  Transcription is trapezoidal collocation on the frictionless
dynamics (friction is compensated at execution time by the inner control
loop); states and inputs live on a uniform knot grid.

The NLP is solved by augmented-Lagrangian iteration over an L-BFGS-B inner
minimizer: collocation defects are the equality constraints, while path and
boundary constraints are simple variable bounds handled exactly by the
inner solver.  Gradients are analytic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .dynamics import PlanarState, WipParams

__all__ = [
    "BrakingTask",
    "Trajectory",
    "NlpProblem",
    "SolveReport",
    "TrajOptError",
    "transcribe",
    "solve",
    "objective_value",
    "negative_power_span",
    "trajectory_to_csv",
    "trajectory_from_csv",
]

CSV_HEADER = "t,theta,phi,theta_dot,phi_dot,tau"


class TrajOptError(RuntimeError):
    """Solver non-convergence; carries the best iterate and its report."""

    def __init__(self, message: str, trajectory: "Trajectory", report: "SolveReport"):
        super().__init__(message)
        self.trajectory = trajectory
        self.report = report


@dataclass(frozen=True)
class BrakingTask:
    """Boundary and path data of one braking problem."""

    v0: float                 # initial translation speed [m/s]
    t_dur: float              # braking duration [s]
    theta0: float = 0.0       # initial tilt [rad]
    theta_dot0: float = 0.0   # initial tilt rate [rad/s]
    theta_f: float = 0.0      # final tilt [rad]
    theta_max: float = 0.35   # path bound on |theta| [rad]
    v_max: float = 3.0        # path bound on |speed| [m/s]
    tau_max: float | None = None  # optional torque bound [N m]

    def __post_init__(self) -> None:
        if self.v0 < 0.0:
            raise ValueError("v0 must be >= 0")
        if not self.t_dur > 0.0:
            raise ValueError("t_dur must be positive")
        if not (self.theta_max > 0.0 and self.v_max > 0.0):
            raise ValueError("path bounds must be positive")


@dataclass(frozen=True)
class Trajectory:
    """Knot trajectory on a uniform time grid.

    Interpolation follows the trapezoidal transcription: piecewise-linear
    input, piecewise-linear state sampling (the collocation polynomial is
    quadratic; linear sampling is within its O(h^2) accuracy).
    """

    times: np.ndarray    # (N,)
    states: np.ndarray   # (N, 4): theta, phi, theta_dot, phi_dot
    tau: np.ndarray      # (N,)
    interpolation: str = "trapezoidal-linear"

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=float)
        u = np.asarray(self.tau, dtype=float)
        if not (len(t) == len(s) == len(u)):
            raise ValueError("times, states, tau must have equal length")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("knot times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "tau", u)

    def sample(self, t: float) -> tuple[PlanarState, float]:
        tt = min(max(t, self.times[0]), self.times[-1])
        cols = [float(np.interp(tt, self.times, self.states[:, j]))
                for j in range(4)]
        tau = float(np.interp(tt, self.times, self.tau))
        return PlanarState(*cols), tau

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])


@dataclass
class SolveReport:
    iterations: int = 0
    inner_iterations: int = 0
    max_violation: float = math.inf
    stationarity: float = math.inf
    objective: float = math.nan
    converged: bool = False
    message: str = ""

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "inner_iterations": self.inner_iterations,
            "max_violation": self.max_violation,
            "stationarity": self.stationarity,
            "objective": self.objective,
            "converged": self.converged,
            "message": self.message,
        }


def _accel_and_partials(p: WipParams, theta, theta_dot, tau):
    """Vectorized accelerations and their partials in (theta, theta_dot, tau).

    Returns (theta_dd, phi_dd, dtheta_dd, dphi_dd) where the d* entries are
    (d/dtheta, d/dtheta_dot, d/dtau) triples of arrays.
    """
    a = p._a  # type: ignore[attr-defined]
    b = p._b  # type: ignore[attr-defined]
    c = p._c  # type: ignore[attr-defined]
    d = p._d  # type: ignore[attr-defined]
    ct = np.cos(theta)
    st = np.sin(theta)
    bct = b * ct
    D = bct * bct - a * c
    r1 = tau + b * st * theta_dot**2
    r2 = -tau + d * st
    num_t = bct * r1 - a * r2
    num_p = -c * r1 + bct * r2
    theta_dd = num_t / D
    phi_dd = num_p / D

    dr1_th = b * ct * theta_dot**2
    dr1_td = 2.0 * b * st * theta_dot
    dr2_th = d * ct
    dD_th = -2.0 * b * b * ct * st

    dnum_t_th = -b * st * r1 + bct * dr1_th - a * dr2_th
    dnum_t_td = bct * dr1_td
    dnum_t_tau = bct + a
    dnum_p_th = -c * dr1_th - b * st * r2 + bct * dr2_th
    dnum_p_td = -c * dr1_td
    dnum_p_tau = -(c + bct)

    dtheta_dd = ((dnum_t_th * D - num_t * dD_th) / D**2,
                 dnum_t_td / D,
                 dnum_t_tau / D)
    dphi_dd = ((dnum_p_th * D - num_p * dD_th) / D**2,
               dnum_p_td / D,
               dnum_p_tau / D)
    return theta_dd, phi_dd, dtheta_dd, dphi_dd


@dataclass
class NlpProblem:
    """Transcribed collocation problem.

    Decision vector layout: all knot states row-major (theta, phi,
    theta_dot, phi_dot per knot), then all knot torques; defect count is
    4 (n_knots - 1).
    """

    p: WipParams
    task: BrakingTask
    n_knots: int
    h: float
    lower: np.ndarray
    upper: np.ndarray
    times: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.times = self.h * np.arange(self.n_knots)

    @property
    def n_vars(self) -> int:
        return 5 * self.n_knots

    @property
    def n_defects(self) -> int:
        return 4 * (self.n_knots - 1)

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_knots
        return z[: 4 * n].reshape(n, 4), z[4 * n:]

    def join(self, states: np.ndarray, tau: np.ndarray) -> np.ndarray:
        return np.concatenate([states.reshape(-1), tau])

    def objective(self, z: np.ndarray) -> float:
        _, tau = self.split(z)
        return float(np.trapezoid(tau * tau, dx=self.h))

    def objective_grad_tau(self, tau: np.ndarray) -> np.ndarray:
        w = np.ones_like(tau)
        w[0] = w[-1] = 0.5
        return 2.0 * self.h * w * tau

    def dynamics_terms(self, states: np.ndarray, tau: np.ndarray):
        theta = states[:, 0]
        theta_dot = states[:, 2]
        phi_dot = states[:, 3]
        tdd, pdd, dtdd, dpdd = _accel_and_partials(self.p, theta, theta_dot, tau)
        f = np.column_stack([theta_dot, phi_dot, tdd, pdd])
        return f, dtdd, dpdd

    def defects(self, z: np.ndarray) -> np.ndarray:
        states, tau = self.split(z)
        f, _, _ = self.dynamics_terms(states, tau)
        c = states[1:] - states[:-1] - 0.5 * self.h * (f[1:] + f[:-1])
        return c.reshape(-1)

    def augmented(self, z: np.ndarray, lam: np.ndarray, rho: float,
                  defect_scale: np.ndarray | None = None):
        """Value and gradient of the augmented Lagrangian.

        With defect_scale the constraints are the row-normalized defects
        c / defect_scale (lam lives on the normalized constraints).
        """
        states, tau = self.split(z)
        f, dtdd, dpdd = self.dynamics_terms(states, tau)
        c = states[1:] - states[:-1] - 0.5 * self.h * (f[1:] + f[:-1])
        cv = c.reshape(-1)
        if defect_scale is not None:
            cv = cv / defect_scale
        obj = float(np.trapezoid(tau * tau, dx=self.h))
        value = obj + float(lam @ cv) + 0.5 * rho * float(cv @ cv)

        y = lam + rho * cv                           # per-defect multipliers
        if defect_scale is not None:
            y = y / defect_scale
        y = y.reshape(-1, 4)
        n = self.n_knots
        grad_s = np.zeros((n, 4))
        grad_s[1:] += y
        grad_s[:-1] -= y
        ysum = np.zeros((n, 4))
        ysum[:-1] += y
        ysum[1:] += y        # F_k^T (y_k + y_{k-1}) shared by both defects
        half_h = 0.5 * self.h
        # F^T columns: theta row gets accel partials, rate rows get identity.
        grad_s[:, 0] -= half_h * (dtdd[0] * ysum[:, 2] + dpdd[0] * ysum[:, 3])
        grad_s[:, 2] -= half_h * (ysum[:, 0] + dtdd[1] * ysum[:, 2]
                                  + dpdd[1] * ysum[:, 3])
        grad_s[:, 3] -= half_h * ysum[:, 1]
        grad_tau = (self.objective_grad_tau(tau)
                    - half_h * (dtdd[2] * ysum[:, 2] + dpdd[2] * ysum[:, 3]))
        return value, self.join(grad_s, grad_tau)

    def default_guess(self) -> "Trajectory":
        """Linear state interpolation between the boundary states, zero torque."""
        n = self.n_knots
        omega0 = self.task.v0 / self.p.r
        phi_dot = np.linspace(omega0, 0.0, n)
        phi = np.concatenate([[0.0], np.cumsum(
            0.5 * (phi_dot[1:] + phi_dot[:-1]) * self.h)])
        states = np.column_stack([
            np.linspace(self.task.theta0, self.task.theta_f, n),
            phi,
            np.linspace(self.task.theta_dot0, 0.0, n),
            phi_dot,
        ])
        return Trajectory(self.times.copy(), states, np.zeros(n))


def transcribe(p: WipParams, task: BrakingTask, n_knots: int = 60) -> NlpProblem:
    """Trapezoidal transcription of the braking task."""
    if n_knots < 10:
        raise ValueError("need at least 10 knots")
    omega_max = task.v_max / p.r
    omega0 = task.v0 / p.r
    if abs(omega0) > omega_max or abs(task.theta0) > task.theta_max:
        raise ValueError("initial state violates the path bounds")
    h = task.t_dur / (n_knots - 1)
    n = n_knots
    lower = np.empty(5 * n)
    upper = np.empty(5 * n)
    s_lo = np.tile([-task.theta_max, -np.inf, -np.inf, -omega_max], n)
    s_hi = np.tile([task.theta_max, np.inf, np.inf, omega_max], n)
    lower[: 4 * n] = s_lo
    upper[: 4 * n] = s_hi
    bound = np.inf if task.tau_max is None else task.tau_max
    lower[4 * n:] = -bound
    upper[4 * n:] = bound

    def pin(knot: int, comp: int, value: float) -> None:
        lower[4 * knot + comp] = upper[4 * knot + comp] = value

    pin(0, 0, task.theta0)
    pin(0, 1, 0.0)                 # wheel-position gauge
    pin(0, 2, task.theta_dot0)
    pin(0, 3, omega0)
    pin(n - 1, 0, task.theta_f)
    pin(n - 1, 2, 0.0)
    pin(n - 1, 3, 0.0)
    return NlpProblem(p=p, task=task, n_knots=n, h=h, lower=lower, upper=upper)


def _projected_gradient_norm(z, grad, lower, upper) -> float:
    g = np.where((z <= lower + 1e-12) & (grad > 0.0), 0.0, grad)
    g = np.where((z >= upper - 1e-12) & (g < 0.0), 0.0, g)
    g = np.where(upper - lower < 1e-15, 0.0, g)
    return float(np.max(np.abs(g)))


def solve(nlp: NlpProblem, init: Trajectory | None = None, tol: float = 1e-6,
          max_iter: int = 40, stat_tol: float = 1e-4) -> tuple[Trajectory, SolveReport]:
    """Augmented-Lagrangian solve of the transcribed problem.

    Variables are scaled to characteristic magnitudes and the defects are
    row-normalized by the constraint-Jacobian row norms at the initial
    guess, so one penalty schedule works across platforms.  Each outer
    iteration minimizes the AL with L-BFGS-B (bounds handled exactly) and
    refreshes the multipliers; the penalty escalates only when feasibility
    stagnates.  Converged when every collocation defect is within tol and
    the projected Lagrangian gradient is within stat_tol relative to the
    objective scale.  Raises TrajOptError (carrying the best iterate)
    otherwise.
    """
    guess = init if init is not None else nlp.default_guess()
    z = np.clip(nlp.join(np.asarray(guess.states, dtype=float),
                         np.asarray(guess.tau, dtype=float)),
                nlp.lower, nlp.upper)
    n = nlp.n_knots
    omega_scale = max(1.0, nlp.task.v0 / nlp.p.r, 0.3 * nlp.task.v_max / nlp.p.r)
    tau_scale = max(1.0, 0.1 * nlp.p._d)  # type: ignore[attr-defined]
    scale = np.concatenate([
        np.tile([0.3, omega_scale * nlp.task.t_dur, 2.0, omega_scale], n),
        np.full(n, tau_scale),
    ])

    # Row norms of the scaled constraint Jacobian at the guess.
    row_sq = np.zeros(nlp.n_defects)
    fd = 1e-6
    for j in range(nlp.n_vars):
        e = np.zeros(nlp.n_vars)
        e[j] = fd
        col = (nlp.defects(z + e) - nlp.defects(z - e)) / (2 * fd) * scale[j]
        row_sq += col * col
    ds = np.sqrt(row_sq)
    ds = np.clip(ds, 1e-2 * np.median(ds), 1e2 * np.median(ds))

    w = z / scale
    lam = np.zeros(nlp.n_defects)
    rho = 1e3
    lb = nlp.lower / scale
    ub = nlp.upper / scale
    bounds = list(zip(lb, ub))
    report = SolveReport()
    prev_violation = math.inf

    for outer in range(1, max_iter + 1):
        def fg(ww, lam=lam, rho=rho):
            value, grad = nlp.augmented(ww * scale, lam, rho, defect_scale=ds)
            return value, grad * scale

        res = minimize(fg, w, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": 3000, "maxfun": 12000,
                                "ftol": 1e-17, "gtol": 1e-12, "maxcor": 40})
        w = res.x
        z = w * scale
        cv = nlp.defects(z)
        violation = float(np.max(np.abs(cv))) if cv.size else 0.0
        lam = lam + rho * (cv / ds)
        _, grad_lagrangian = nlp.augmented(z, lam / ds, 0.0)
        obj = nlp.objective(z)
        stationarity = (_projected_gradient_norm(z, grad_lagrangian,
                                                 nlp.lower, nlp.upper)
                        / max(1.0, abs(obj)))
        report.iterations = outer
        report.inner_iterations += int(res.nit)
        report.max_violation = violation
        report.stationarity = stationarity
        report.objective = obj
        if violation <= tol and stationarity <= stat_tol:
            report.converged = True
            report.message = "converged"
            break
        if violation > 0.3 * prev_violation and violation > tol:
            rho = min(rho * 10.0, 1e9)
        prev_violation = violation

    states, tau = nlp.split(z)
    traj = Trajectory(nlp.times.copy(), states.copy(), tau.copy())
    if not report.converged:
        report.message = (f"no convergence in {max_iter} outer iterations: "
                          f"violation={report.max_violation:.3e}, "
                          f"stationarity={report.stationarity:.3e}")
        raise TrajOptError(report.message, traj, report)
    return traj, report


def objective_value(traj: Trajectory) -> float:
    """Trapezoidal quadrature of squared torque over the trajectory."""
    return float(np.trapezoid(traj.tau**2, traj.times))


def negative_power_span(traj: Trajectory) -> list[tuple[float, float]]:
    """Time intervals where input torque opposes wheel speed (back-driving)."""
    power = traj.tau * traj.states[:, 3]
    spans: list[tuple[float, float]] = []
    start = None
    for t, neg in zip(traj.times, power < 0.0):
        if neg and start is None:
            start = float(t)
        elif not neg and start is not None:
            spans.append((start, float(t)))
            start = None
    if start is not None:
        spans.append((start, float(traj.times[-1])))
    return spans


def trajectory_to_csv(traj: Trajectory) -> str:
    lines = [CSV_HEADER]
    for t, s, u in zip(traj.times, traj.states, traj.tau):
        lines.append(",".join(repr(float(v)) for v in (t, *s, u)))
    return "\n".join(lines) + "\n"


def trajectory_from_csv(text: str) -> Trajectory:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != CSV_HEADER:
        raise ValueError(f"trajectory CSV must start with header {CSV_HEADER!r}")
    rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 6:
        raise ValueError("trajectory CSV rows must have 6 columns")
    return Trajectory(arr[:, 0], arr[:, 1:5], arr[:, 5])

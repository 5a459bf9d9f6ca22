"""Multiple-shooting nonlinear MPC for a differential-drive (unicycle) robot.

The decision vector stacks the ``N`` controls and the ``N + 1`` predicted states.
States are tied together by RK4 defect constraints and the first state is pinned
to the measured one. The NLP is solved by a small dense SQP: exact Hessian of the
Lagrangian (constraint curvature by central differences of the analytic
Jacobian), condensing onto the controls, a box-QP for the control bounds and an
l1 merit line search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .planner import PosePath, fix_yaw, nearest_index, wrap_to_pi
from .qp import solve_box_qp

__all__ = [
    "RobotState",
    "ControlAction",
    "WheelCommand",
    "WeightProfile",
    "SolverOptions",
    "MpcConfig",
    "MpcProblem",
    "MpcSolution",
    "MpcController",
    "ConfigurationError",
    "ddmr_derivative",
    "rk4_step",
    "rk4_batch",
    "rk4_jacobians",
    "rollout_single_shooting",
    "trajectory_cost",
    "nearest_reference",
    "select_weight_profile",
    "solve_mpc",
    "solve_single_shooting",
    "to_wheel_command",
    "objective_and_gradient",
    "defects",
]


class ConfigurationError(ValueError):
    pass


class RobotState(NamedTuple):
    x: float
    y: float
    yaw: float


class ControlAction(NamedTuple):
    v: float
    omega: float


class WheelCommand(NamedTuple):
    v_left: float
    v_right: float


@dataclass(frozen=True)
class WeightProfile:
    q: tuple = (5.0, 5.0, 0.5)
    r: tuple = (0.05, 0.5)
    label: str = "STRAIGHT"

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))
        object.__setattr__(self, "r", tuple(float(v) for v in self.r))
        if len(self.q) != 3 or len(self.r) != 2:
            raise ConfigurationError("q needs 3 weights and r needs 2")
        if min(self.q + self.r) <= 0:
            raise ConfigurationError("all weights must be positive")


def _default_profiles():
    return {
        "STRAIGHT": WeightProfile((5.0, 5.0, 0.5), (0.5, 0.5), "STRAIGHT"),
        "TURN": WeightProfile((5.0, 5.0, 3.0), (2.0, 0.05), "TURN"),
    }


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 50
    stationarity_tol: float = 1e-6
    constraint_tol: float = 1e-8
    # soft state-bound penalty weight and the merit-function penalty floor
    bound_penalty: float = 50.0
    merit_penalty: float = 1.0

    def __post_init__(self):
        if self.max_iterations < 1 or self.stationarity_tol <= 0 or self.constraint_tol <= 0:
            raise ConfigurationError("solver iterations and tolerances must be positive")


@dataclass(frozen=True)
class MpcConfig:
    N: int = 10
    h: float = 0.2
    v_min: float = -0.3
    v_max: float = 1.0
    omega_max: float = 1.5
    v_ref: float = 0.5
    d_base: float = 0.25
    r_wheel: float = 0.1
    profiles: dict = field(default_factory=_default_profiles)
    turn_lookahead: int = 5
    turn_angle_threshold: float = math.pi / 6
    heading_aware_turns: bool = True
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.N < 1 or not self.h > 0:
            raise ConfigurationError("need N >= 1 and h > 0")
        if not self.v_min < self.v_max or not self.omega_max > 0:
            raise ConfigurationError("bad control bounds")
        if not self.r_wheel > 0:
            raise ConfigurationError("r_wheel must be positive")
        if set(self.profiles) != {"STRAIGHT", "TURN"}:
            raise ConfigurationError("profiles must define STRAIGHT and TURN")

    @property
    def u_lower(self) -> np.ndarray:
        return np.array([self.v_min, -self.omega_max])

    @property
    def u_upper(self) -> np.ndarray:
        return np.array([self.v_max, self.omega_max])


@dataclass(frozen=True)
class MpcProblem:
    """One receding-horizon instance.

    ``ref_states`` is ``(N + 1, 3)``, ``ref_controls`` is ``(N, 2)``.
    ``state_bounds`` is ``((x_lo, y_lo), (x_hi, y_hi))`` for the soft position
    penalty, or None.
    """

    x0: RobotState
    ref_states: np.ndarray
    ref_controls: np.ndarray
    profile: WeightProfile
    state_bounds: Optional[tuple] = None


@dataclass
class MpcSolution:
    states: np.ndarray
    controls: np.ndarray
    cost: float
    iterations: int
    converged: bool
    defect_norm: float
    stationarity: float = 0.0
    profile: str = ""

    @property
    def first_control(self) -> ControlAction:
        return ControlAction(float(self.controls[0, 0]), float(self.controls[0, 1]))


# --------------------------------------------------------------------------- model


def ddmr_derivative(state, control) -> np.ndarray:
    th = state[2]
    v, w = control[0], control[1]
    return np.array([v * math.cos(th), v * math.sin(th), w])


def _f(s, u):
    th = s[..., 2]
    v = u[..., 0]
    return np.stack([v * np.cos(th), v * np.sin(th), u[..., 1]], axis=-1)


def rk4_batch(s, u, h):
    """RK4 with zero-order-hold control, vectorized over leading axes."""
    k1 = _f(s, u)
    k2 = _f(s + 0.5 * h * k1, u)
    k3 = _f(s + 0.5 * h * k2, u)
    k4 = _f(s + h * k3, u)
    return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(state, control, h: float) -> RobotState:
    if not h > 0:
        raise ValueError("step must be positive")
    out = rk4_batch(np.asarray(state, dtype=float), np.asarray(control, dtype=float), h)
    return RobotState(*map(float, out))


def _jac_f(s, u):
    """df/ds (..., 3, 3) and df/du (..., 3, 2)."""
    th = s[..., 2]
    v = u[..., 0]
    c, sn = np.cos(th), np.sin(th)
    shape = th.shape
    A = np.zeros(shape + (3, 3))
    A[..., 0, 2] = -v * sn
    A[..., 1, 2] = v * c
    B = np.zeros(shape + (3, 2))
    B[..., 0, 0] = c
    B[..., 1, 0] = sn
    B[..., 2, 1] = 1.0
    return A, B


def rk4_jacobians(s, u, h):
    """Next state and its Jacobians w.r.t. state and control, batched over stages."""
    eye = np.broadcast_to(np.eye(3), s.shape[:-1] + (3, 3))
    k1 = _f(s, u)
    A1, B1 = _jac_f(s, u)
    dk1s, dk1u = A1, B1
    s2 = s + 0.5 * h * k1
    k2 = _f(s2, u)
    A2, B2 = _jac_f(s2, u)
    dk2s = A2 @ (eye + 0.5 * h * dk1s)
    dk2u = A2 @ (0.5 * h * dk1u) + B2
    s3 = s + 0.5 * h * k2
    k3 = _f(s3, u)
    A3, B3 = _jac_f(s3, u)
    dk3s = A3 @ (eye + 0.5 * h * dk2s)
    dk3u = A3 @ (0.5 * h * dk2u) + B3
    s4 = s + h * k3
    k4 = _f(s4, u)
    A4, B4 = _jac_f(s4, u)
    dk4s = A4 @ (eye + h * dk3s)
    dk4u = A4 @ (h * dk3u) + B4
    nxt = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    Js = eye + (h / 6.0) * (dk1s + 2.0 * dk2s + 2.0 * dk3s + dk4s)
    Ju = (h / 6.0) * (dk1u + 2.0 * dk2u + 2.0 * dk3u + dk4u)
    return nxt, Js, Ju


def rollout_single_shooting(x0, controls, h: float) -> np.ndarray:
    """States ``(N + 1, 3)`` from recursively stepping ``x0`` through ``controls``."""
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    out = np.empty((len(controls) + 1, 3))
    out[0] = np.asarray(x0, dtype=float)
    for i, u in enumerate(controls):
        out[i + 1] = rk4_batch(out[i], u, h)
    return out


def to_wheel_command(control, config: MpcConfig) -> WheelCommand:
    v, w = control[0], control[1]
    return WheelCommand(
        (v - w * config.d_base) / config.r_wheel,
        (v + w * config.d_base) / config.r_wheel,
    )


# ---------------------------------------------------------------------------- cost


def trajectory_cost(states, controls, ref_states, ref_controls, profile: WeightProfile) -> float:
    """Quadratic tracking cost over stages ``0 .. N-1``.

    Yaw residuals are taken after aligning each (state, reference) pair across
    the +-pi seam.
    """
    states = np.asarray(states, dtype=float)
    controls = np.asarray(controls, dtype=float)
    ref_states = np.asarray(ref_states, dtype=float)
    ref_controls = np.asarray(ref_controls, dtype=float)
    q = np.asarray(profile.q)
    r = np.asarray(profile.r)
    total = 0.0
    for i in range(len(controls)):
        dx = states[i] - ref_states[i]
        cur, ref = fix_yaw(float(wrap_to_pi(states[i, 2])), float(wrap_to_pi(ref_states[i, 2])))
        dx[2] = cur - ref
        du = controls[i] - ref_controls[i]
        total += float(dx @ (q * dx) + du @ (r * du))
    return total


def _align_reference_yaw(yaw0: float, ref_yaw: np.ndarray) -> np.ndarray:
    """Unwrap reference yaws into one continuous sequence near the robot's yaw."""
    out = np.empty_like(ref_yaw)
    prev = yaw0
    for i, a in enumerate(ref_yaw):
        prev = prev + float(wrap_to_pi(a - prev))
        out[i] = prev
    return out


class _Stage(NamedTuple):
    xr: np.ndarray     # (N+1, 3) aligned reference states
    ur: np.ndarray     # (N, 2)
    q: np.ndarray
    r: np.ndarray
    lo: Optional[np.ndarray]
    hi: Optional[np.ndarray]
    rho: float


def _prepare(problem: MpcProblem, config: MpcConfig) -> _Stage:
    N = config.N
    xr = np.array(problem.ref_states, dtype=float)
    ur = np.array(problem.ref_controls, dtype=float)
    if xr.shape != (N + 1, 3) or ur.shape != (N, 2):
        raise ConfigurationError(
            f"references must be ({N + 1}, 3) and ({N}, 2), got {xr.shape} and {ur.shape}"
        )
    xr[:, 2] = _align_reference_yaw(float(problem.x0[2]), xr[:, 2])
    lo = hi = None
    if problem.state_bounds is not None:
        lo = np.asarray(problem.state_bounds[0], dtype=float)
        hi = np.asarray(problem.state_bounds[1], dtype=float)
    return _Stage(xr, ur, np.asarray(problem.profile.q), np.asarray(problem.profile.r),
                  lo, hi, config.solver.bound_penalty)


def objective_and_gradient(U, X, st: _Stage):
    """Tracking cost plus soft position bounds, and its gradient w.r.t. (U, X)."""
    N = len(U)
    dx = X[:N] - st.xr[:N]
    du = U - st.ur
    f = float(np.sum(dx * dx * st.q) + np.sum(du * du * st.r))
    gX = np.zeros_like(X)
    gX[:N] = 2.0 * dx * st.q
    gU = 2.0 * du * st.r
    if st.lo is not None:
        pos = X[1:, :2]
        below = np.minimum(pos - st.lo, 0.0)
        above = np.maximum(pos - st.hi, 0.0)
        f += st.rho * float(np.sum(below**2) + np.sum(above**2))
        gX[1:, :2] += 2.0 * st.rho * (below + above)
    return f, gU, gX


def _objective_hessian_diag(X, st: _Stage, N: int):
    hU = np.broadcast_to(2.0 * st.r, (N, 2)).copy()
    hX = np.zeros((N + 1, 3))
    hX[:N] = 2.0 * st.q
    if st.lo is not None:
        pos = X[1:, :2]
        outside = (pos < st.lo) | (pos > st.hi)
        hX[1:, :2] += 2.0 * st.rho * outside
    return hU, hX


def defects(U, X, x0, h):
    """Stacked constraint residuals: ``X0 - x0`` then ``F(X_i, U_i) - X_{i+1}``."""
    return np.concatenate([X[0] - x0, (rk4_batch(X[:-1], U, h) - X[1:]).ravel()])


def _adjoint(gU, gX, Js, Ju):
    """Multipliers making the state-gradient of the Lagrangian vanish."""
    N = len(gU)
    lam = np.zeros((N + 1, 3))
    lam[N] = gX[N]
    for i in range(N - 1, 0, -1):
        lam[i] = gX[i] + Js[i].T @ lam[i + 1]
    lam[0] = -(gX[0] + Js[0].T @ lam[1])
    gradU = gU + np.einsum("nij,ni->nj", Ju, lam[1:])
    return lam, gradU


def _constraint_curvature(X, U, lam_next, h, eps=1e-5):
    """Per-stage 5x5 Hessian of ``lam' F(x, u)`` by central differences of the Jacobian."""
    z = np.concatenate([X, U], axis=1)
    N = len(U)
    Hc = np.zeros((N, 5, 5))
    for j in range(5):
        zp, zm = z.copy(), z.copy()
        zp[:, j] += eps
        zm[:, j] -= eps
        _, Jsp, Jup = rk4_jacobians(zp[:, :3], zp[:, 3:], h)
        _, Jsm, Jum = rk4_jacobians(zm[:, :3], zm[:, 3:], h)
        Jp = np.concatenate([Jsp, Jup], axis=2)
        Jm = np.concatenate([Jsm, Jum], axis=2)
        Hc[:, :, j] = np.einsum("ni,nij->nj", lam_next, (Jp - Jm) / (2.0 * eps))
    return 0.5 * (Hc + Hc.transpose(0, 2, 1))


def _projected_stationarity(U, gradU, lo, hi) -> float:
    return float(np.max(np.abs(U - np.clip(U - gradU, lo, hi)), initial=0.0))


def _initial_guess(problem: MpcProblem, st: _Stage, config: MpcConfig, warm_start):
    N = config.N
    x0 = np.asarray(problem.x0, dtype=float)
    if warm_start is not None and warm_start.controls.shape == (N, 2):
        U = np.vstack([warm_start.controls[1:], warm_start.controls[-1:]])
        X = np.vstack([warm_start.states[1:], warm_start.states[-1:]])
        # the shifted states keep their own yaw branch; move it next to the robot's
        X[:, 2] += 2.0 * math.pi * round((x0[2] - X[0, 2]) / (2.0 * math.pi))
    else:
        U = st.ur.copy()
        X = st.xr.copy()
    X[0] = x0
    U = np.clip(U, config.u_lower, config.u_upper)
    return U, X


def solve_mpc(problem: MpcProblem, config: MpcConfig, warm_start: Optional[MpcSolution] = None
              ) -> MpcSolution:
    """SQP on the multiple-shooting transcription.

    Converged means max defect ``<= constraint_tol`` and projected gradient of the
    Lagrangian w.r.t. the controls ``<= stationarity_tol``. On failure the best
    iterate is returned with ``converged=False``.
    """
    N, h = config.N, config.h
    opts = config.solver
    st = _prepare(problem, config)
    x0 = np.asarray(problem.x0, dtype=float)
    ulo = np.broadcast_to(config.u_lower, (N, 2))
    uhi = np.broadcast_to(config.u_upper, (N, 2))
    U, X = _initial_guess(problem, st, config, warm_start)
    mu = opts.merit_penalty
    nU, nX = 2 * N, 3 * (N + 1)

    def merit(U, X, mu):
        f, _, _ = objective_and_gradient(U, X, st)
        return f + mu * np.abs(defects(U, X, x0, h)).sum()

    iterations = 0
    converged = False
    stat = math.inf
    cnorm = math.inf
    while True:
        f, gU, gX = objective_and_gradient(U, X, st)
        F, Js, Ju = rk4_jacobians(X[:-1], U, h)
        c = np.concatenate([X[0] - x0, (F - X[1:]).ravel()])
        cnorm = float(np.max(np.abs(c)))
        lam, gradU = _adjoint(gU, gX, Js, Ju)
        stat = _projected_stationarity(U, gradU, ulo, uhi)
        if cnorm <= opts.constraint_tol and stat <= opts.stationarity_tol:
            converged = True
            break
        if iterations >= opts.max_iterations:
            break
        iterations += 1

        # Hessian of the Lagrangian in (U, X) ordering
        hU, hX = _objective_hessian_diag(X, st, N)
        H = np.zeros((nU + nX, nU + nX))
        H[np.arange(nU), np.arange(nU)] = hU.ravel()
        H[nU + np.arange(nX), nU + np.arange(nX)] = hX.ravel()
        Hc = _constraint_curvature(X[:-1], U, lam[1:], h)
        for i in range(N):
            xi = nU + 3 * i + np.arange(3)
            ui = 2 * i + np.arange(2)
            idx = np.concatenate([xi, ui])
            H[np.ix_(idx, idx)] += Hc[i]

        # condense: dX = S dU + s from the linearized dynamics
        S = np.zeros((N + 1, 3, nU))
        s = np.zeros((N + 1, 3))
        s[0] = x0 - X[0]
        cd = (F - X[1:])
        for i in range(N):
            s[i + 1] = cd[i] + Js[i] @ s[i]
            S[i + 1] = Js[i] @ S[i]
            S[i + 1][:, 2 * i: 2 * i + 2] += Ju[i]
        T = np.vstack([np.eye(nU), S.reshape(nX, nU)])
        t = np.concatenate([np.zeros(nU), s.ravel()])
        g = np.concatenate([gU.ravel(), gX.ravel()])
        Hr = T.T @ H @ T
        gr = T.T @ (g + H @ t)
        Hr = 0.5 * (Hr + Hr.T)
        tau = 0.0
        while True:
            try:
                cho_factor(Hr + tau * np.eye(nU))
                break
            except LinAlgError:
                tau = max(2.0 * tau, 1e-6 * max(1.0, np.abs(Hr).max()))
        Hr = Hr + tau * np.eye(nU)
        dU, _ = solve_box_qp(Hr, gr, (ulo - U).ravel(), (uhi - U).ravel())
        d = T @ dU + t
        dUm = dU.reshape(N, 2)
        dXm = d[nU:].reshape(N + 1, 3)

        # QP multipliers for the merit penalty
        r_qp = H @ d + g
        lam_qp, _ = _adjoint(r_qp[:nU].reshape(N, 2), r_qp[nU:].reshape(N + 1, 3), Js, Ju)
        mu = max(mu, 1.1 * float(np.abs(lam_qp).max()) + 1e-3)
        c1 = float(np.abs(c).sum())
        phi0 = f + mu * c1
        dphi = float(g @ d) - mu * c1
        alpha = 1.0
        for _ in range(40):
            Un, Xn = U + alpha * dUm, X + alpha * dXm
            if merit(Un, Xn, mu) <= phi0 + 1e-4 * alpha * min(dphi, 0.0):
                break
            alpha *= 0.5
        U = np.clip(Un, ulo, uhi)
        X = Xn

    cost, _, _ = objective_and_gradient(U, X, st)
    return MpcSolution(
        states=X, controls=U, cost=cost, iterations=iterations, converged=converged,
        defect_norm=cnorm, stationarity=stat, profile=problem.profile.label,
    )


def solve_single_shooting(problem: MpcProblem, config: MpcConfig):
    """Controls-only transcription solved by L-BFGS-B; states come from rollout.

    Cross-check for :func:`solve_mpc`. Returns ``(controls, states, cost)``.
    """
    from scipy.optimize import minimize

    N, h = config.N, config.h
    st = _prepare(problem, config)
    x0 = np.asarray(problem.x0, dtype=float)

    def fun(z):
        U = z.reshape(N, 2)
        X = rollout_single_shooting(x0, U, h)
        return objective_and_gradient(U, X, st)[0]

    bounds = [(config.v_min, config.v_max), (-config.omega_max, config.omega_max)] * N
    z0 = np.clip(st.ur, config.u_lower, config.u_upper).ravel()
    res = minimize(fun, z0, method="L-BFGS-B", jac="3-point", bounds=bounds,
                   options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 5000})
    U = res.x.reshape(N, 2)
    X = rollout_single_shooting(x0, U, h)
    return U, X, float(res.fun)


# ---------------------------------------------------------------------- references


def nearest_reference(path: PosePath, state, N: int, v_ref: float = 0.5):
    """Reference window starting at the path point nearest the robot.

    Returns ``(ref_states (N+1, 3), ref_controls (N, 2), start_index)``. Past the
    end of the path the last point is repeated with zero reference speed.
    """
    if len(path) == 0:
        raise ValueError("empty path")
    pts = path.points
    last = len(pts) - 1
    k = nearest_index(path.xy, state[0], state[1])
    idx = np.minimum(np.arange(k, k + N + 1), last)
    ref_states = pts[idx].copy()
    ref_controls = np.zeros((N, 2))
    ref_controls[:, 0] = np.where(idx[:N] < last, v_ref, 0.0)
    return ref_states, ref_controls, k


def select_weight_profile(ref_states, config: MpcConfig, previous: str = "STRAIGHT",
                          current_yaw: Optional[float] = None) -> WeightProfile:
    """TURN if the reference heading swings by more than the threshold within the lookahead.

    With ``current_yaw`` the robot's own heading is checked against the first
    reference heading as well.
    """
    yaw = np.asarray(ref_states, dtype=float)[: config.turn_lookahead, 2]
    if current_yaw is not None:
        yaw = np.concatenate([[current_yaw], yaw])
    turn = False
    for a, b in zip(yaw[:-1], yaw[1:]):
        cur, ref = fix_yaw(float(wrap_to_pi(a)), float(wrap_to_pi(b)))
        if abs(ref - cur) > config.turn_angle_threshold:
            turn = True
            break
    return config.profiles["TURN" if turn else "STRAIGHT"]


class MpcController:
    """Receding-horizon wrapper that owns warm-start state for one robot.

    The shifted previous solution seeds every solve, including the first one
    after a weight-profile switch; ``reset`` drops it.
    """

    def __init__(self, config: MpcConfig, adaptive_weights: bool = True):
        self.config = config
        self.adaptive_weights = adaptive_weights
        self.previous: Optional[MpcSolution] = None
        self.profile_label = "STRAIGHT"

    def reset(self):
        self.previous = None

    def step(self, state, path: PosePath, state_bounds=None) -> tuple:
        """Solve for ``state`` tracking ``path``; returns ``(solution, ref_states)``."""
        cfg = self.config
        ref_states, ref_controls, _ = nearest_reference(path, state, cfg.N, cfg.v_ref)
        if self.adaptive_weights:
            yaw = float(state[2]) if cfg.heading_aware_turns else None
            profile = select_weight_profile(ref_states, cfg, self.profile_label, yaw)
        else:
            profile = cfg.profiles["STRAIGHT"]
        warm = self.previous
        self.profile_label = profile.label
        problem = MpcProblem(RobotState(*map(float, state)), ref_states, ref_controls, profile,
                             state_bounds)
        sol = solve_mpc(problem, cfg, warm)
        self.previous = sol
        return sol, ref_states

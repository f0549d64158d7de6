"""Regularized data-enabled predictive control.

Each step solves a convex QP whose prediction constraint is the stacked
mosaic Hankel matrix of the current dataset: the decision variables are the
future inputs, future outputs, the combination coefficients alpha, and a
slack mu on the past-output block that keeps the problem feasible under
noise and nonlinearity.  Only the first optimal input is applied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qp
from .behavior import DataMatrix, Dataset, build_mosaic_hankel

__all__ = [
    "ControllerConfig",
    "ControlStep",
    "SolverFailure",
    "stage_cost",
    "truncate_data_matrix",
    "build_ocp",
    "compute_control",
]


def _weight(mat, size, name) -> np.ndarray:
    W = np.atleast_2d(np.array(mat, dtype=float))
    if W.shape != (size, size):
        raise ValueError(f"{name} must be {size}x{size}, got {W.shape}")
    if np.linalg.norm(W - W.T) > 1e-12 * max(1.0, np.linalg.norm(W)):
        raise ValueError(f"{name} must be symmetric")
    if np.any(np.linalg.eigvalsh(W) < -1e-12 * max(1.0, np.linalg.norm(W))):
        raise ValueError(f"{name} must be positive semidefinite")
    W.setflags(write=False)
    return W


@dataclass(frozen=True)
class ControllerConfig:
    """Horizons, weights, regularization, and input bounds of the predictive controller."""

    past_horizon: int
    future_horizon: int
    q_weight: np.ndarray
    r_weight: np.ndarray
    r_delta_weight: np.ndarray
    lambda_alpha: float
    lambda_mu: float
    u_max: float
    du_max: float
    svd_truncation: int = None
    qp_tol: float = 1e-8
    qp_max_iter: int = 500

    def __post_init__(self):
        if self.past_horizon < 1 or self.future_horizon < 1:
            raise ValueError("horizons must be at least 1")
        p = np.atleast_2d(np.asarray(self.q_weight)).shape[0]
        m = np.atleast_2d(np.asarray(self.r_weight)).shape[0]
        object.__setattr__(self, "q_weight", _weight(self.q_weight, p, "q_weight"))
        object.__setattr__(self, "r_weight", _weight(self.r_weight, m, "r_weight"))
        object.__setattr__(self, "r_delta_weight", _weight(self.r_delta_weight, m, "r_delta_weight"))
        if self.lambda_alpha <= 0 or self.lambda_mu <= 0:
            raise ValueError("regularization weights must be positive")
        if self.u_max <= 0 or self.du_max <= 0:
            raise ValueError("input bounds must be positive")
        if self.svd_truncation is not None and self.svd_truncation < 1:
            raise ValueError("svd_truncation must be positive when set")

    @property
    def depth(self) -> int:
        return self.past_horizon + self.future_horizon

    @property
    def m(self) -> int:
        return self.r_weight.shape[0]

    @property
    def p(self) -> int:
        return self.q_weight.shape[0]


@dataclass(frozen=True)
class ControlStep:
    """Result of one receding-horizon solve; only `u_applied` reaches the plant."""

    u_applied: np.ndarray
    predicted_inputs: np.ndarray
    predicted_outputs: np.ndarray
    alpha_norm: float
    mu_norm: float
    ocp_objective: float
    solver_status: qp.QpStatus
    solver_iterations: int
    kkt_residual: float

    def __post_init__(self):
        if not np.array_equal(self.u_applied, self.predicted_inputs[0]):
            raise ValueError("u_applied must equal the first predicted input")


class SolverFailure(RuntimeError):
    """The OCP solver did not return an optimal certificate."""

    def __init__(self, solution: qp.QpSolution):
        super().__init__(f"QP solver returned {solution.status.value} "
                         f"(kkt residual {solution.kkt_residual:.3e})")
        self.solution = solution

    @property
    def status(self) -> qp.QpStatus:
        return self.solution.status


def stage_cost(u, y, ref, du, cfg: ControllerConfig) -> float:
    """Quadratic stage cost: output tracking + input magnitude + input rate."""
    u = np.asarray(u, dtype=float)
    e = np.asarray(y, dtype=float) - np.asarray(ref, dtype=float)
    du = np.asarray(du, dtype=float)
    return float(e @ cfg.q_weight @ e + u @ cfg.r_weight @ u + du @ cfg.r_delta_weight @ du)


def truncate_data_matrix(dm: DataMatrix, rank: int) -> DataMatrix:
    """Best rank-`rank` approximation of the data matrix (same shape)."""
    if not 1 <= rank <= min(dm.entries.shape):
        raise ValueError(f"rank {rank} out of range for shape {dm.entries.shape}")
    U, s, Vt = np.linalg.svd(dm.entries, full_matrices=False)
    truncated = (U[:, :rank] * s[:rank]) @ Vt[:rank]
    return DataMatrix(truncated, m=dm.m, p=dm.p, depth=dm.depth)


def build_ocp(
    dm: DataMatrix,
    past_inputs,
    past_outputs,
    prev_input,
    reference,
    cfg: ControllerConfig,
) -> qp.QpProblem:
    """Assemble the per-step QP.

    Decision vector z = (u_f, y_f, alpha, mu) with u_f the m*T_f future
    inputs, y_f the p*T_f future outputs, alpha one coefficient per data
    matrix column, and mu a slack on the past-output rows only.  Equalities
    stack [u_p; u_f; y_p + mu; y_f] = dm @ alpha; inequalities bound each
    future input and each input increment (relative to prev_input for the
    first one) componentwise by u_max and du_max.
    """
    T_p, T_f, m, p = cfg.past_horizon, cfg.future_horizon, cfg.m, cfg.p
    if dm.depth != cfg.depth:
        raise ValueError(f"data matrix depth {dm.depth} != T_p + T_f = {cfg.depth}")
    if dm.m != m or dm.p != p:
        raise ValueError("data matrix dimensions do not match the controller config")
    u_p = np.asarray(past_inputs, dtype=float).reshape(T_p, m)
    y_p = np.asarray(past_outputs, dtype=float).reshape(T_p, p)
    u_prev = np.asarray(prev_input, dtype=float).reshape(m)
    ref = np.asarray(reference, dtype=float).reshape(T_f, p)

    nu, ny, na, nmu = m * T_f, p * T_f, dm.n_columns, p * T_p
    d = nu + ny + na + nmu
    s_u, s_y = slice(0, nu), slice(nu, nu + ny)
    s_a, s_mu = slice(nu + ny, nu + ny + na), slice(nu + ny + na, d)

    H = np.zeros((d, d))
    f = np.zeros(d)
    H[s_y, s_y] = np.kron(np.eye(T_f), 2.0 * cfg.q_weight)
    f[s_y] = (-2.0 * ref @ cfg.q_weight).ravel()
    # Input magnitude plus the anchored first-difference chain.
    chain = np.zeros((T_f, T_f))
    for i in range(T_f):
        chain[i, i] = 2.0 if i < T_f - 1 else 1.0
        if i + 1 < T_f:
            chain[i, i + 1] = chain[i + 1, i] = -1.0
    H[s_u, s_u] = np.kron(np.eye(T_f), 2.0 * cfg.r_weight) + np.kron(chain, 2.0 * cfg.r_delta_weight)
    f[s_u][:m] = -2.0 * cfg.r_delta_weight @ u_prev
    H[s_a, s_a] = 2.0 * cfg.lambda_alpha * np.eye(na)
    H[s_mu, s_mu] = 2.0 * cfg.lambda_mu * np.eye(nmu)

    U_blk, Y_blk = dm.input_block, dm.output_block
    U_past, U_fut = U_blk[: m * T_p], U_blk[m * T_p :]
    Y_past, Y_fut = Y_blk[: p * T_p], Y_blk[p * T_p :]
    e = (m + p) * cfg.depth
    A_eq = np.zeros((e, d))
    b_eq = np.zeros(e)
    row = 0
    A_eq[row : row + m * T_p, s_a] = U_past
    b_eq[row : row + m * T_p] = u_p.ravel()
    row += m * T_p
    A_eq[row : row + nu, s_u] = -np.eye(nu)
    A_eq[row : row + nu, s_a] = U_fut
    row += nu
    A_eq[row : row + nmu, s_a] = Y_past
    A_eq[row : row + nmu, s_mu] = -np.eye(nmu)
    b_eq[row : row + nmu] = y_p.ravel()
    row += nmu
    A_eq[row : row + ny, s_y] = -np.eye(ny)
    A_eq[row : row + ny, s_a] = Y_fut

    # Componentwise |u| <= u_max and |u_i - u_{i-1}| <= du_max (u_{-1} = prev_input).
    eye_u = np.eye(nu)
    diff = np.eye(nu)
    for i in range(1, T_f):
        diff[i * m : (i + 1) * m, (i - 1) * m : i * m] = -np.eye(m)
    du_shift = np.zeros(nu)
    du_shift[:m] = u_prev
    A_in = np.zeros((4 * nu, d))
    b_in = np.zeros(4 * nu)
    A_in[0:nu, s_u] = eye_u
    b_in[0:nu] = cfg.u_max
    A_in[nu : 2 * nu, s_u] = -eye_u
    b_in[nu : 2 * nu] = cfg.u_max
    A_in[2 * nu : 3 * nu, s_u] = diff
    b_in[2 * nu : 3 * nu] = cfg.du_max + du_shift
    A_in[3 * nu : 4 * nu, s_u] = -diff
    b_in[3 * nu : 4 * nu] = cfg.du_max - du_shift
    return qp.QpProblem(H, f, A_eq, b_eq, A_in, b_in)


def _feasible_start(dm, u_p, y_p, u_prev, reference, cfg, previous):
    """Construct a feasible full-space iterate for warm starting the QP.

    Shifts the previous predicted input plan (or holds prev_input), projects
    it into the box/rate-feasible set, then solves the input-block equations
    exactly for alpha so the equality constraints hold by construction.
    Returns None when the input block cannot reproduce the plan.
    """
    T_p, T_f, m = cfg.past_horizon, cfg.future_horizon, cfg.m
    if previous is not None:
        target = np.vstack([previous.predicted_inputs[1:], previous.predicted_inputs[-1:]])
    else:
        target = np.tile(np.clip(u_prev, -cfg.u_max, cfg.u_max), (T_f, 1))
    plan = np.empty_like(target)
    last = u_prev
    for i in range(T_f):
        lo = np.maximum(-cfg.u_max, last - cfg.du_max)
        hi = np.minimum(cfg.u_max, last + cfg.du_max)
        if np.any(lo > hi):
            return None
        plan[i] = np.clip(target[i], lo, hi)
        last = plan[i]
    rhs = np.concatenate([u_p.ravel(), plan.ravel()])
    alpha, *_ = np.linalg.lstsq(dm.input_block, rhs, rcond=None)
    if float(np.linalg.norm(dm.input_block @ alpha - rhs, np.inf)) > 1e-9 * (1.0 + float(np.linalg.norm(rhs, np.inf))):
        return None
    y_all = dm.output_block @ alpha
    mu = y_all[: cfg.p * T_p] - y_p.ravel()
    y_f = y_all[cfg.p * T_p :]
    return np.concatenate([plan.ravel(), y_f, alpha, mu])


def compute_control(
    dataset: Dataset,
    past_inputs,
    past_outputs,
    prev_input,
    reference,
    cfg: ControllerConfig,
    previous: ControlStep = None,
    qp_dump_path=None,
) -> ControlStep:
    """Solve the receding-horizon problem for the current dataset and history.

    `previous` enables warm starting from the last step's plan.  Raises
    SolverFailure when the QP cannot be certified optimal; the caller decides
    the fallback.
    """
    if dataset.window_depth != cfg.depth:
        raise ValueError(f"dataset depth {dataset.window_depth} != T_p + T_f = {cfg.depth}")
    dm = build_mosaic_hankel(dataset)
    if cfg.svd_truncation is not None:
        dm = truncate_data_matrix(dm, cfg.svd_truncation)
    T_p, T_f, m, p = cfg.past_horizon, cfg.future_horizon, cfg.m, cfg.p
    u_p = np.asarray(past_inputs, dtype=float).reshape(T_p, m)
    y_p = np.asarray(past_outputs, dtype=float).reshape(T_p, p)
    u_prev = np.asarray(prev_input, dtype=float).reshape(m)
    ref = np.asarray(reference, dtype=float).reshape(T_f, p)

    problem = build_ocp(dm, u_p, y_p, u_prev, ref, cfg)
    warm = _feasible_start(dm, u_p, y_p, u_prev, ref, cfg, previous)
    solution = qp.solve(problem, tol=cfg.qp_tol, max_iter=cfg.qp_max_iter, warm_start=warm, dump_path=qp_dump_path)
    if solution.status is not qp.QpStatus.OPTIMAL:
        raise SolverFailure(solution)

    nu, ny, na = m * T_f, p * T_f, dm.n_columns
    z = solution.z_star
    u_f = z[:nu].reshape(T_f, m)
    y_f = z[nu : nu + ny].reshape(T_f, p)
    alpha = z[nu + ny : nu + ny + na]
    mu = z[nu + ny + na :]

    objective = cfg.lambda_alpha * float(alpha @ alpha) + cfg.lambda_mu * float(mu @ mu)
    last = u_prev
    for i in range(T_f):
        objective += stage_cost(u_f[i], y_f[i], ref[i], u_f[i] - last, cfg)
        last = u_f[i]
    return ControlStep(
        u_applied=u_f[0].copy(),
        predicted_inputs=u_f,
        predicted_outputs=y_f,
        alpha_norm=float(np.linalg.norm(alpha)),
        mu_norm=float(np.linalg.norm(mu)),
        ocp_objective=objective,
        solver_status=solution.status,
        solver_iterations=solution.iterations,
        kkt_residual=solution.kkt_residual,
    )

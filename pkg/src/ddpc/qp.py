"""Dense convex quadratic programming with KKT-certified solutions.

    minimize   0.5 z' H z + f' z
    subject to A_eq z = b_eq,  A_in z <= b_in

Equality constraints are eliminated through an orthonormal null-space basis
(SVD), then a primal active-set method runs on the reduced inequality-only
problem.  A phase-1 LP finds a feasible start when neither the warm start nor
the minimum-norm point qualifies.  A result is reported Optimal only when the
independent KKT checker (`kkt_residual`) certifies it at the requested
tolerance, so a broken solve can never masquerade as a solution.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg
from scipy.optimize import linprog, lsq_linear

__all__ = ["QpStatus", "QpProblem", "QpSolution", "solve", "kkt_residual", "dump_problem"]

_EPS = np.finfo(float).eps


class QpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max_iterations"


def _matrix(arr, name, d):
    if arr is None:
        return np.zeros((0, d))
    out = np.atleast_2d(np.array(arr, dtype=float))
    if out.size == 0:
        return np.zeros((0, d))
    if out.shape[1] != d:
        raise ValueError(f"{name} must have {d} columns, got shape {out.shape}")
    return out


@dataclass(frozen=True)
class QpProblem:
    """Dense convex QP data; H must be symmetric (checked to 1e-12 relative)."""

    H: np.ndarray
    f: np.ndarray
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    A_in: np.ndarray = None
    b_in: np.ndarray = None

    def __post_init__(self):
        H = np.atleast_2d(np.array(self.H, dtype=float))
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError(f"H must be square, got shape {H.shape}")
        d = H.shape[0]
        asym = np.linalg.norm(H - H.T)
        if asym > 1e-12 * max(1.0, np.linalg.norm(H)):
            raise ValueError(f"H is not symmetric (asymmetry {asym:.3e})")
        f = np.array(self.f, dtype=float).reshape(d)
        A_eq = _matrix(self.A_eq, "A_eq", d)
        b_eq = (
            np.array(self.b_eq, dtype=float).reshape(A_eq.shape[0])
            if self.b_eq is not None
            else np.zeros(A_eq.shape[0])
        )
        A_in = _matrix(self.A_in, "A_in", d)
        b_in = (
            np.array(self.b_in, dtype=float).reshape(A_in.shape[0])
            if self.b_in is not None
            else np.zeros(A_in.shape[0])
        )
        for name, arr in (("H", H), ("f", f), ("A_eq", A_eq), ("b_eq", b_eq), ("A_in", A_in), ("b_in", b_in)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def n_eq(self) -> int:
        return self.A_eq.shape[0]

    @property
    def n_in(self) -> int:
        return self.A_in.shape[0]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.f @ z)


@dataclass
class QpSolution:
    z_star: np.ndarray
    objective: float
    status: QpStatus
    kkt_residual: float
    iterations: int
    eq_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    in_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))


def kkt_residual(problem: QpProblem, z, eq_duals, in_duals) -> float:
    """Worst normalized KKT violation of a candidate primal-dual point.

    Deliberately independent of the solver internals: stationarity, primal
    feasibility (scaled by 1 + ||b||), dual feasibility, and complementary
    slackness are each evaluated from the problem data alone.
    """
    z = np.asarray(z, dtype=float).reshape(problem.dim)
    nu = np.asarray(eq_duals, dtype=float).reshape(problem.n_eq)
    lam = np.asarray(in_duals, dtype=float).reshape(problem.n_in)
    grad = problem.H @ z + problem.f + problem.A_eq.T @ nu + problem.A_in.T @ lam
    parts = [float(np.linalg.norm(grad, np.inf)) / (1.0 + float(np.linalg.norm(problem.f, np.inf)))]
    if problem.n_eq:
        parts.append(
            float(np.linalg.norm(problem.A_eq @ z - problem.b_eq, np.inf))
            / (1.0 + float(np.linalg.norm(problem.b_eq, np.inf)))
        )
    if problem.n_in:
        slack = problem.A_in @ z - problem.b_in
        b_scale = 1.0 + float(np.linalg.norm(problem.b_in, np.inf))
        parts.append(max(0.0, float(slack.max())) / b_scale)
        parts.append(max(0.0, -float(lam.min())))
        parts.append(float(np.max(np.abs(lam * slack))) / b_scale)
    return max(parts)


def dump_problem(problem: QpProblem, path) -> None:
    """Write all problem matrices to one text file in MatrixMarket array format."""
    with open(path, "w") as fh:
        for name in ("H", "f", "A_eq", "b_eq", "A_in", "b_in"):
            arr = np.atleast_2d(getattr(problem, name))
            if name in ("f", "b_eq", "b_in"):
                arr = arr.reshape(-1, 1)
            fh.write("%%MatrixMarket matrix array real general\n")
            fh.write(f"% {name}\n")
            fh.write(f"{arr.shape[0]} {arr.shape[1]}\n")
            for col in range(arr.shape[1]):
                for row in range(arr.shape[0]):
                    fh.write(f"{arr[row, col]!r}\n")


def _phase1(A, b, feas_tol):
    """LP feasibility: minimize the worst violation t over A w <= b + t, t >= 0."""
    q, nz = A.shape
    c = np.zeros(nz + 1)
    c[-1] = 1.0
    A_ub = np.hstack([A, -np.ones((q, 1))])
    bounds = [(None, None)] * nz + [(0.0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b, bounds=bounds, method="highs")
    if not res.success:
        return None, QpStatus.MAX_ITERATIONS
    scale = 1.0 + float(np.linalg.norm(b, np.inf)) if b.size else 1.0
    if res.x[-1] > feas_tol * scale:
        return None, QpStatus.INFEASIBLE
    return res.x[:nz], None


def _kkt_step(Hr, A_act, g):
    """Solve the equality-constrained subproblem for step p and working-set duals."""
    na = A_act.shape[0]
    nz = Hr.shape[0]
    if na == 0:
        try:
            p = scipy.linalg.solve(Hr, -g, assume_a="sym")
            if not np.all(np.isfinite(p)):
                raise ValueError
        except (np.linalg.LinAlgError, ValueError):
            p = np.linalg.lstsq(Hr, -g, rcond=None)[0]
        return p, np.zeros(0)
    K = np.zeros((nz + na, nz + na))
    K[:nz, :nz] = Hr
    K[:nz, nz:] = A_act.T
    K[nz:, :nz] = A_act
    rhs = np.concatenate([-g, np.zeros(na)])
    try:
        sol = scipy.linalg.solve(K, rhs)
        if not np.all(np.isfinite(sol)):
            raise ValueError
    except (np.linalg.LinAlgError, ValueError):
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:nz], sol[nz:]


def _ratio_test(A_r, b_r, row_norms, working, w, p):
    """Largest feasible step along p and the index of the blocking constraint."""
    q = A_r.shape[0]
    alpha, blocker = 1.0, -1
    if q == 0:
        return alpha, blocker
    mask = np.ones(q, dtype=bool)
    if working:
        mask[working] = False
    idx = np.where(mask)[0]
    if idx.size == 0:
        return alpha, blocker
    denom = A_r[idx] @ p
    thresh = 1e-12 * (1.0 + row_norms[idx]) * (1.0 + float(np.linalg.norm(p)))
    pos = denom > thresh
    if not np.any(pos):
        return alpha, blocker
    cand = idx[pos]
    slack = np.maximum(b_r[cand] - A_r[cand] @ w, 0.0)
    ratios = slack / denom[pos]
    j = int(np.argmin(ratios))
    if ratios[j] < alpha:
        alpha = float(ratios[j])
        blocker = int(cand[j])
    return alpha, blocker


def _pinned_solution(problem, z, tol, iterations):
    """Corner case: the equality constraints determine z completely."""
    if problem.n_in:
        viol = problem.A_in @ z - problem.b_in
        if float(viol.max()) > tol * (1.0 + float(np.linalg.norm(problem.b_in, np.inf))):
            return QpSolution(z, problem.objective(z), QpStatus.INFEASIBLE, np.inf, iterations)
    rhs = -(problem.H @ z + problem.f)
    active = (
        np.where(np.abs(problem.A_in @ z - problem.b_in) <= tol * (1.0 + np.abs(problem.b_in)))[0]
        if problem.n_in
        else np.array([], dtype=int)
    )
    nu = np.zeros(problem.n_eq)
    lam = np.zeros(problem.n_in)
    n_cols = problem.n_eq + active.size
    if n_cols:
        stacked = np.hstack([problem.A_eq.T, problem.A_in[active].T])
        lower = np.concatenate([np.full(problem.n_eq, -np.inf), np.zeros(active.size)])
        upper = np.full(n_cols, np.inf)
        fit = lsq_linear(stacked, rhs, bounds=(lower, upper))
        nu = fit.x[: problem.n_eq]
        lam[active] = fit.x[problem.n_eq :]
    resid = kkt_residual(problem, z, nu, lam)
    status = QpStatus.OPTIMAL if resid <= tol else QpStatus.MAX_ITERATIONS
    return QpSolution(z, problem.objective(z), status, resid, iterations, nu, lam)


def solve(problem: QpProblem, tol: float = 1e-8, max_iter: int = 500, warm_start=None, dump_path=None) -> QpSolution:
    """Solve a dense convex QP by a null-space active-set method.

    `warm_start` is an optional initial iterate in the full decision space; it
    is projected onto the equality manifold and used when feasible.  With
    `dump_path` set, the problem is written out before solving for offline
    cross-checking.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be positive")
    if dump_path is not None:
        dump_problem(problem, dump_path)

    d = problem.dim
    H = 0.5 * (problem.H + problem.H.T)
    f = problem.f

    # Eliminate equalities via an orthonormal null-space basis.
    if problem.n_eq:
        U, s, Vt = np.linalg.svd(problem.A_eq, full_matrices=True)
        cut = max(problem.A_eq.shape) * _EPS * (float(s[0]) if s.size else 0.0)
        r = int(np.count_nonzero(s > cut))
        z_part = Vt[:r].T @ ((U[:, :r].T @ problem.b_eq) / s[:r]) if r else np.zeros(d)
        eq_gap = float(np.linalg.norm(problem.A_eq @ z_part - problem.b_eq, np.inf))
        if eq_gap > tol * (1.0 + float(np.linalg.norm(problem.b_eq, np.inf))):
            return QpSolution(z_part, problem.objective(z_part), QpStatus.INFEASIBLE, np.inf, 0)
        Z = Vt[r:].T
    else:
        z_part = np.zeros(d)
        Z = np.eye(d)

    nz = Z.shape[1]
    if nz == 0:
        return _pinned_solution(problem, z_part, tol, 0)

    Hr = Z.T @ H @ Z
    Hr = 0.5 * (Hr + Hr.T)
    fr = Z.T @ (H @ z_part + f)
    A_r = problem.A_in @ Z
    b_r = problem.b_in - problem.A_in @ z_part
    q = A_r.shape[0]
    b_scale = 1.0 + (float(np.linalg.norm(problem.b_in, np.inf)) if q else 0.0)
    row_norms = np.linalg.norm(A_r, axis=1) if q else np.zeros(0)

    # Starting point: projected warm start, then the minimum-norm point, then phase 1.
    w = None
    if warm_start is not None:
        w0 = Z.T @ (np.asarray(warm_start, dtype=float).reshape(d) - z_part)
        if q == 0 or float((A_r @ w0 - b_r).max()) <= tol * b_scale:
            w = w0
    if w is None:
        w0 = np.zeros(nz)
        if q == 0 or float((A_r @ w0 - b_r).max()) <= tol * b_scale:
            w = w0
    if w is None:
        w, fail = _phase1(A_r, b_r, tol)
        if w is None:
            return QpSolution(z_part, problem.objective(z_part), fail, np.inf, 0)

    working: list = []
    iterations = 0
    obj_prev = np.inf
    dual_tol = max(tol, 1e2 * _EPS)
    lam_w = np.zeros(0)
    while iterations < max_iter:
        iterations += 1
        g = Hr @ w + fr
        A_act = A_r[working] if working else np.zeros((0, nz))
        p, lam_w = _kkt_step(Hr, A_act, g)
        at_minimizer = float(np.linalg.norm(p, np.inf)) <= 1e2 * _EPS * (1.0 + float(np.linalg.norm(w, np.inf)))
        if not at_minimizer:
            alpha, blocker = _ratio_test(A_r, b_r, row_norms, working, w, p)
            w = w + alpha * p
            obj_now = 0.5 * w @ Hr @ w + fr @ w
            assert obj_now <= obj_prev + 1e-7 * (1.0 + abs(obj_prev)), "objective increased"
            obj_prev = obj_now
            if blocker >= 0:
                working.append(blocker)
                continue
            # Full step: w is the working-set minimizer; refresh the duals.
            A_act = A_r[working] if working else np.zeros((0, nz))
            _, lam_w = _kkt_step(Hr, A_act, Hr @ w + fr)
        if lam_w.size == 0 or float(lam_w.min()) >= -dual_tol:
            break
        working.pop(int(np.argmin(lam_w)))
    else:
        # Iteration budget exhausted: harvest duals for the final working set.
        A_act = A_r[working] if working else np.zeros((0, nz))
        _, lam_w = _kkt_step(Hr, A_act, Hr @ w + fr)

    z = z_part + Z @ w
    lam = np.zeros(q)
    if working:
        lam[np.array(working, dtype=int)] = np.maximum(lam_w, 0.0)
    if problem.n_eq:
        nu = np.linalg.lstsq(problem.A_eq.T, -(H @ z + f + problem.A_in.T @ lam), rcond=None)[0]
    else:
        nu = np.zeros(0)
    resid = kkt_residual(problem, z, nu, lam)
    status = QpStatus.OPTIMAL if resid <= tol else QpStatus.MAX_ITERATIONS
    return QpSolution(z, problem.objective(z), status, resid, iterations, nu, lam)

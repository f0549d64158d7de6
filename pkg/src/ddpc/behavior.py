"""Hankel-matrix trajectory representations of dynamical systems.

The data structures here implement the behavioral view of an unknown
system: a (mosaic) Hankel matrix built from measured input-output data
serves as a non-parametric predictor, valid whenever the data satisfy a
rank condition (generalized persistency of excitation).  Exact LTI
simulation is included so that tests can generate ground-truth data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Trajectory",
    "Dataset",
    "DataMatrix",
    "LtiSystem",
    "build_hankel",
    "build_mosaic_hankel",
    "is_persistently_exciting",
    "generalized_pe_rank",
    "check_generalized_pe",
    "stack_window",
    "trajectory_membership",
    "simulate_lti",
    "lag",
]


def _as_samples(seq, name: str) -> np.ndarray:
    """Coerce a sequence of s-dimensional vectors to a read-only (T, s) float array."""
    arr = np.array(seq, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a sequence of vectors, got ndim={arr.ndim}")
    if arr.shape[0] < 1:
        raise ValueError(f"{name} must contain at least one sample")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Trajectory:
    """One experiment: paired input and output samples of equal length."""

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        u = _as_samples(self.inputs, "inputs")
        y = _as_samples(self.outputs, "outputs")
        if u.shape[0] != y.shape[0]:
            raise ValueError(
                f"inputs and outputs must have equal length, got {u.shape[0]} != {y.shape[0]}"
            )
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "outputs", y)

    @property
    def length(self) -> int:
        return self.inputs.shape[0]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def p(self) -> int:
        return self.outputs.shape[1]

    def window(self, start: int, length: int) -> "Trajectory":
        """Contiguous sub-trajectory of `length` samples starting at `start`."""
        if start < 0 or start + length > self.length:
            raise ValueError(f"window [{start}, {start + length}) out of range")
        return Trajectory(self.inputs[start : start + length], self.outputs[start : start + length])


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of trajectories plus the window depth used to stack them."""

    trajectories: tuple
    window_depth: int

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        if not trajs:
            raise ValueError("dataset must contain at least one trajectory")
        if self.window_depth < 1:
            raise ValueError("window depth must be positive")
        m, p = trajs[0].m, trajs[0].p
        for i, traj in enumerate(trajs):
            if traj.m != m or traj.p != p:
                raise ValueError(
                    f"trajectory {i} has dimensions (m={traj.m}, p={traj.p}), expected ({m}, {p})"
                )
            if traj.length < self.window_depth:
                raise ValueError(
                    f"trajectory {i} has length {traj.length} < window depth {self.window_depth}"
                )
        object.__setattr__(self, "trajectories", trajs)

    @property
    def n_trajectories(self) -> int:
        return len(self.trajectories)

    @property
    def m(self) -> int:
        return self.trajectories[0].m

    @property
    def p(self) -> int:
        return self.trajectories[0].p

    @property
    def hankel_columns(self) -> int:
        """Total column count of the mosaic Hankel matrix: sum of T_i - L + 1."""
        L = self.window_depth
        return sum(t.length - L + 1 for t in self.trajectories)


@dataclass(frozen=True)
class DataMatrix:
    """Mosaic Hankel matrix with the input block rows stacked above the output block."""

    entries: np.ndarray
    m: int
    p: int
    depth: int

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        expected_rows = (self.m + self.p) * self.depth
        if arr.ndim != 2 or arr.shape[0] != expected_rows:
            raise ValueError(
                f"entries must have {(self.m + self.p) * self.depth} rows, got shape {arr.shape}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def n_columns(self) -> int:
        return self.entries.shape[1]

    @property
    def input_block(self) -> np.ndarray:
        return self.entries[: self.m * self.depth]

    @property
    def output_block(self) -> np.ndarray:
        return self.entries[self.m * self.depth :]


def build_hankel(seq, depth: int) -> np.ndarray:
    """Hankel matrix of a vector sequence.

    Block row i (1-based) of column j holds sample i+j-1, so each column is
    one contiguous depth-long window of the sequence, flattened sample-major.

    Returns an (s*depth) x (T-depth+1) array.
    """
    samples = _as_samples(seq, "seq")
    T, s = samples.shape
    if depth < 1:
        raise ValueError("depth must be positive")
    if depth > T:
        raise ValueError(f"depth {depth} exceeds sequence length {T}")
    cols = T - depth + 1
    out = np.empty((s * depth, cols))
    for i in range(depth):
        out[i * s : (i + 1) * s, :] = samples[i : i + cols].T
    return out


def build_mosaic_hankel(dataset: Dataset) -> DataMatrix:
    """Stack per-trajectory Hankel matrices side by side, inputs over outputs."""
    L = dataset.window_depth
    input_blocks = [build_hankel(t.inputs, L) for t in dataset.trajectories]
    output_blocks = [build_hankel(t.outputs, L) for t in dataset.trajectories]
    entries = np.vstack([np.hstack(input_blocks), np.hstack(output_blocks)])
    return DataMatrix(entries, m=dataset.m, p=dataset.p, depth=L)


def is_persistently_exciting(inputs, order: int) -> bool:
    """True iff the depth-`order` input Hankel matrix has full row rank m*order."""
    H = build_hankel(inputs, order)
    m = _as_samples(inputs, "inputs").shape[1]
    return int(np.linalg.matrix_rank(H)) == m * order


def generalized_pe_rank(dm: DataMatrix) -> int:
    """Numeric rank of the stacked input-output data matrix."""
    return int(np.linalg.matrix_rank(dm.entries))


def check_generalized_pe(dm: DataMatrix, n: int, m: int) -> bool:
    """True iff the stacked data matrix has rank exactly n + m*L.

    `n` is the (estimated) order of the data-generating system; `m` must match
    the input dimension the matrix was built with.
    """
    if m != dm.m:
        raise ValueError(f"input dimension {m} does not match data matrix (m={dm.m})")
    return generalized_pe_rank(dm) == n + m * dm.depth


def stack_window(window: Trajectory) -> np.ndarray:
    """Flatten an L-long window into col(u_1..u_L, y_1..y_L)."""
    return np.concatenate([window.inputs.ravel(), window.outputs.ravel()])


def trajectory_membership(dm: DataMatrix, window: Trajectory, tolerance: float):
    """Test whether a window lies in the column span of the data matrix.

    Solves the minimum-norm least-squares problem dm @ alpha = stacked window
    (the data matrix is rank-deficient by design, so an SVD-based solve is
    used rather than normal equations).  Membership holds when the residual
    is at most tolerance * (1 + ||window||).

    Returns (member, residual, alpha).
    """
    if window.length != dm.depth:
        raise ValueError(f"window length {window.length} != data matrix depth {dm.depth}")
    if window.m != dm.m or window.p != dm.p:
        raise ValueError("window dimensions do not match data matrix")
    if tolerance < 0:
        raise ValueError("tolerance must be nonnegative")
    w = stack_window(window)
    alpha, *_ = np.linalg.lstsq(dm.entries, w, rcond=None)
    residual = float(np.linalg.norm(dm.entries @ alpha - w))
    member = residual <= tolerance * (1.0 + float(np.linalg.norm(w)))
    return member, residual, alpha


@dataclass(frozen=True)
class LtiSystem:
    """Discrete-time state-space system x+ = Ax + Bu, y = Cx + Du."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        B = np.atleast_2d(np.array(self.B, dtype=float))
        C = np.atleast_2d(np.array(self.C, dtype=float))
        D = np.atleast_2d(np.array(self.D, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got {C.shape}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValueError(f"D must have shape {(C.shape[0], B.shape[1])}, got {D.shape}")
        for name, mat in (("A", A), ("B", B), ("C", C), ("D", D)):
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


def simulate_lti(sys: LtiSystem, x0, inputs) -> np.ndarray:
    """Exact recursion y_k = C x_k + D u_k, x_{k+1} = A x_k + B u_k."""
    u = _as_samples(inputs, "inputs")
    if u.shape[1] != sys.m:
        raise ValueError(f"inputs have dimension {u.shape[1]}, system expects {sys.m}")
    x = np.array(x0, dtype=float).reshape(sys.n)
    ys = np.empty((u.shape[0], sys.p))
    for k in range(u.shape[0]):
        ys[k] = sys.C @ x + sys.D @ u[k]
        x = sys.A @ x + sys.B @ u[k]
    return ys


def lag(sys: LtiSystem) -> int:
    """Smallest j <= n for which the j-block observability matrix has rank n."""
    blocks = []
    Ck = sys.C
    for j in range(1, sys.n + 1):
        blocks.append(Ck)
        if int(np.linalg.matrix_rank(np.vstack(blocks))) == sys.n:
            return j
        Ck = Ck @ sys.A
    raise ValueError("(C, A) is not observable: no lag <= n exists")

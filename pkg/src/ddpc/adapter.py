"""Online adaptation of the trajectory dataset behind a data-driven predictor.

The adapter watches the closed-loop input-output stream, forms a candidate
dataset each step by discarding the oldest stored trajectory and appending
the most recent L-long window, and accepts the candidate only when its
stacked mosaic Hankel matrix passes the robustified rank test.  Uninformative
data (e.g. while holding a setpoint) is thereby rejected and the previous
dataset stays in force.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .behavior import Dataset, Trajectory, build_mosaic_hankel
from .rank import singular_spectrum

__all__ = [
    "FromDataTail",
    "ArtificialSteadyState",
    "ConstantFill",
    "UpdateDecision",
    "AdapterState",
    "init_adapter",
    "export_decisions",
]


class InitPolicy:
    """Marker base class for recent-window initialization policies."""


@dataclass(frozen=True)
class FromDataTail(InitPolicy):
    """Seed the recent window with the last L samples of the final stored trajectory.

    Use when the control phase starts immediately after data collection, so
    the stream continues the recorded data.
    """


@dataclass(frozen=True)
class ArtificialSteadyState(InitPolicy):
    """Seed the window with L copies of a known steady-state input-output pair."""

    u0: np.ndarray
    y0: np.ndarray


@dataclass(frozen=True)
class ConstantFill(InitPolicy):
    """Seed the window with arbitrary constant values.

    Predictions disagree with reality for the first L steps; the discrepancy
    vanishes once L real samples have been recorded.
    """

    u0: np.ndarray
    y0: np.ndarray


@dataclass(frozen=True)
class UpdateDecision:
    """Outcome of one candidate evaluation."""

    step: int
    accepted: bool
    robust_rank: int
    required_rank: int
    sigma_at_required: float = math.nan
    sigma_after_required: float = math.nan
    reason: str = "rank"

    def __post_init__(self):
        if self.accepted != (self.robust_rank >= self.required_rank):
            raise ValueError("accepted must equal (robust_rank >= required_rank)")


class AdapterState:
    """Rolling dataset plus the ring buffer of the most recent L samples.

    Single-writer: exactly one control loop should mutate an instance.
    `current_dataset` snapshots are immutable and safe to share.
    """

    def __init__(self, initial_dataset: Dataset, init_policy: InitPolicy, rho: float, n_estimate: int):
        L = initial_dataset.window_depth
        for i, traj in enumerate(initial_dataset.trajectories):
            if traj.length != L:
                raise ValueError(
                    f"trajectory {i} has length {traj.length}; the adapter requires exact length {L}"
                )
        if rho < 0:
            raise ValueError("rho must be nonnegative")
        if n_estimate < 1:
            raise ValueError("n_estimate must be positive")
        required = n_estimate + initial_dataset.m * L
        if initial_dataset.n_trajectories < required:
            raise ValueError(
                f"dataset has {initial_dataset.n_trajectories} trajectories but at least "
                f"n + m*L = {required} are needed for the rank condition to be satisfiable"
            )
        self._dataset = initial_dataset
        self.rho = float(rho)
        self.n_estimate = int(n_estimate)
        self.step_count = 0
        self._window: deque = deque(maxlen=L)
        self._seed_window(init_policy)

    def _seed_window(self, policy: InitPolicy) -> None:
        L = self.depth
        if isinstance(policy, FromDataTail):
            tail = self._dataset.trajectories[-1]
            for k in range(tail.length - L, tail.length):
                self._window.append((tail.inputs[k].copy(), tail.outputs[k].copy()))
        elif isinstance(policy, (ArtificialSteadyState, ConstantFill)):
            u0 = np.array(policy.u0, dtype=float).reshape(self.m)
            y0 = np.array(policy.y0, dtype=float).reshape(self.p)
            for _ in range(L):
                self._window.append((u0.copy(), y0.copy()))
        else:
            raise TypeError(f"unknown init policy {policy!r}")

    @property
    def current_dataset(self) -> Dataset:
        return self._dataset

    @property
    def depth(self) -> int:
        return self._dataset.window_depth

    @property
    def m(self) -> int:
        return self._dataset.m

    @property
    def p(self) -> int:
        return self._dataset.p

    @property
    def n_trajectories(self) -> int:
        return self._dataset.n_trajectories

    @property
    def required_rank(self) -> int:
        return self.n_estimate + self.m * self.depth

    @property
    def window_full(self) -> bool:
        return len(self._window) == self.depth

    @property
    def recent_window(self) -> Trajectory:
        """The buffered samples as a trajectory (length <= L during warm-up)."""
        if not self._window:
            raise ValueError("recent window is empty")
        us, ys = zip(*self._window)
        return Trajectory(np.vstack(us), np.vstack(ys))

    def record_step(self, u, y) -> None:
        """Append one input-output sample; the oldest sample drops out when full."""
        u = np.asarray(u, dtype=float).reshape(self.m)
        y = np.asarray(y, dtype=float).reshape(self.p)
        self._window.append((u.copy(), y.copy()))
        self.step_count += 1

    def propose_candidate(self) -> Dataset:
        """Candidate dataset: drop the oldest trajectory, append the recent window.

        Pure with respect to the adapter state; raises during warm-up.
        """
        if not self.window_full:
            raise ValueError(
                f"recent window holds {len(self._window)} of {self.depth} samples; "
                "candidates are undefined during warm-up"
            )
        new_trajs = self._dataset.trajectories[1:] + (self.recent_window,)
        return Dataset(new_trajs, self.depth)

    def decide_and_update(self) -> UpdateDecision:
        """Evaluate the candidate's robustified rank and adopt it if sufficient.

        During warm-up (window not yet full) the decision is a suppressed
        rejection and the dataset is left untouched.
        """
        if not self.window_full:
            return UpdateDecision(
                step=self.step_count,
                accepted=False,
                robust_rank=0,
                required_rank=self.required_rank,
                reason="warmup",
            )
        candidate = self.propose_candidate()
        spectrum = singular_spectrum(build_mosaic_hankel(candidate).entries)
        robust = spectrum.count_above(self.rho)
        required = self.required_rank
        values = spectrum.values
        sigma_at = float(values[required - 1]) if required <= values.size else math.nan
        sigma_after = float(values[required]) if required < values.size else math.nan
        accepted = robust >= required
        if accepted:
            self._dataset = candidate
        return UpdateDecision(
            step=self.step_count,
            accepted=accepted,
            robust_rank=robust,
            required_rank=required,
            sigma_at_required=sigma_at,
            sigma_after_required=sigma_after,
        )

    def update_unconditionally(self) -> None:
        """Adopt the candidate without the rank test (always-update strategies)."""
        self._dataset = self.propose_candidate()


def init_adapter(initial_dataset: Dataset, init_policy: InitPolicy, rho: float, n_estimate: int) -> AdapterState:
    """Construct an adapter; see AdapterState for the stored invariants."""
    return AdapterState(initial_dataset, init_policy, rho, n_estimate)


def export_decisions(decisions, path) -> None:
    """Write a decision trace as CSV for plotting mean update behavior."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "step",
                "accepted",
                "robust_rank",
                "required_rank",
                "sigma_at_required",
                "sigma_after_required",
            ]
        )
        for dec in decisions:
            writer.writerow(
                [
                    dec.step,
                    int(dec.accepted),
                    dec.robust_rank,
                    dec.required_rank,
                    repr(dec.sigma_at_required),
                    repr(dec.sigma_after_required),
                ]
            )

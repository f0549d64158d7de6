"""Closed-loop episodes, strategy comparison, statistics, and result export.

Per-run seeding spawns three independent streams (collection inputs, plant
measurement noise, excitation) from one per-run seed, so the three update
strategies see identical noise realizations at equal run indices and compare
paired.  Episodes are embarrassingly parallel; aggregation happens after all
runs complete.
"""
from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .adapter import FromDataTail, init_adapter, export_decisions, UpdateDecision
from .behavior import Dataset, Trajectory
from .config import ConfigError, ScenarioConfig, Strategy, config_to_dict
from .controller import SolverFailure, compute_control, stage_cost
from .robot import NoiseModel, PlantState, RobotParams, lower_equilibrium, measure, step

__all__ = [
    "build_reference",
    "reference_segment",
    "CollectionResult",
    "collect_initial_data",
    "EpisodeLog",
    "EpisodeResult",
    "run_episode",
    "derive_run_seeds",
    "StrategySummary",
    "summarize",
    "run_monte_carlo",
    "StudyResult",
    "run_study",
    "export_results",
    "hold_intervals",
    "steady_state_error",
    "acceptance_rate",
]


def build_reference(schedule, episode_length: int, dt: float) -> np.ndarray:
    """Sample the piecewise schedule at t = k*dt for k = 0..episode_length-1.

    Ramps interpolate linearly from the previous value to the segment target;
    holds repeat the value reached so far.  Time beyond the last segment holds
    the final value.
    """
    if schedule.total_duration > episode_length * dt + 1e-9:
        raise ConfigError("reference schedule does not fit in the episode")
    p = schedule.start.size
    out = np.empty((episode_length, p))
    bounds = []
    t0 = 0.0
    value = schedule.start.copy()
    for seg in schedule.segments:
        bounds.append((t0, t0 + seg.duration, value.copy(), seg))
        if seg.kind == "ramp":
            value = seg.target.copy()
        t0 += seg.duration
    for k in range(episode_length):
        t = k * dt
        sample = value
        for start, end, begin_value, seg in bounds:
            if t < end - 1e-12:
                if seg.kind == "hold":
                    sample = begin_value
                else:
                    frac = (t - start) / seg.duration
                    sample = begin_value + frac * (seg.target - begin_value)
                break
        out[k] = sample
    return out


def reference_segment(reference: np.ndarray, k: int, horizon: int) -> np.ndarray:
    """Horizon-long slice starting at step k, clamped to the final value."""
    end = min(k + horizon, reference.shape[0])
    seg = reference[k:end]
    if seg.shape[0] < horizon:
        pad = np.tile(reference[-1], (horizon - seg.shape[0], 1))
        seg = np.vstack([seg, pad])
    return seg


@dataclass
class CollectionResult:
    """Raw data-collection run plus the dataset sliced into Hankel-window form."""

    dataset: Dataset
    inputs: np.ndarray
    outputs: np.ndarray
    final_state: PlantState


def collect_initial_data(
    plant: RobotParams,
    noise: NoiseModel,
    dt: float,
    steps: int,
    input_bound: float,
    depth: int,
    rng: np.random.Generator,
    substeps: int = 10,
    initial_state: PlantState = None,
) -> CollectionResult:
    """Excite the plant with bounded uniform random torques from rest.

    The single T-step run is sliced into the N = T - depth + 1 overlapping
    depth-long windows, so the resulting mosaic Hankel matrix coincides with
    the classical Hankel matrix of the full run.
    """
    if steps < depth:
        raise ValueError(f"need at least {depth} collection steps, got {steps}")
    state = initial_state if initial_state is not None else lower_equilibrium()
    inputs = rng.uniform(-input_bound, input_bound, size=(steps, 2))
    outputs = np.empty((steps, 2))
    for k in range(steps):
        outputs[k] = measure(state, noise)
        state = step(plant, state, inputs[k], dt, substeps)
    run = Trajectory(inputs, outputs)
    windows = tuple(run.window(j, depth) for j in range(steps - depth + 1))
    return CollectionResult(Dataset(windows, depth), inputs, outputs, state)


@dataclass
class EpisodeLog:
    """Per-step arrays of one closed-loop run (length = executed steps)."""

    u: np.ndarray
    u_command: np.ndarray
    y: np.ndarray
    ref: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    stage_cost: np.ndarray
    objective: np.ndarray
    alpha_norm: np.ndarray
    mu_norm: np.ndarray
    solver_iterations: np.ndarray
    kkt_residual: np.ndarray
    fallback: np.ndarray
    updated: np.ndarray
    accepted: np.ndarray
    robust_rank: np.ndarray
    required_rank: np.ndarray
    sigma_at_required: np.ndarray
    sigma_after_required: np.ndarray
    prev_input_initial: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.u.shape[0]


@dataclass
class EpisodeResult:
    strategy: Strategy
    seed: int
    j_tot: float
    failed: bool
    failure_reason: str
    n_fallbacks: int
    log: EpisodeLog
    decisions: list = field(default_factory=list)


def derive_run_seeds(master_seed: int, runs: int) -> list:
    """Deterministic per-run seeds; equal run indices pair across strategies."""
    state = np.random.SeedSequence(master_seed).generate_state(runs, dtype=np.uint64)
    return [int(v) for v in state]


def run_episode(config: ScenarioConfig, seed: int) -> EpisodeResult:
    """Execute one closed-loop episode under the configured update strategy."""
    ctrl = config.controller
    T_p, T_f = ctrl.past_horizon, ctrl.future_horizon
    depth = ctrl.depth
    ss = np.random.SeedSequence(seed)
    collect_ss, noise_ss, excite_ss = ss.spawn(3)
    collect_rng = np.random.default_rng(collect_ss)
    excite_rng = np.random.default_rng(excite_ss)
    noise = NoiseModel(config.noise_bound, noise_ss)

    collection = collect_initial_data(
        config.plant,
        noise,
        config.dt,
        config.data_collection.steps,
        config.data_collection.input_bound,
        depth,
        collect_rng,
        config.substeps,
    )
    initial_dataset = collection.dataset
    adapter = init_adapter(
        initial_dataset, FromDataTail(), config.adaptation.rho, config.adaptation.n_estimate
    )

    reference = build_reference(config.reference, config.episode_length, config.dt)
    state = collection.final_state
    past_u = collection.inputs[-T_p:].copy()
    past_y = collection.outputs[-T_p:].copy()
    prev_u = collection.inputs[-1].copy()
    prev_input_initial = prev_u.copy()

    K = config.episode_length
    m, p = 2, 2
    log = EpisodeLog(
        u=np.zeros((K, m)),
        u_command=np.zeros((K, m)),
        y=np.zeros((K, p)),
        ref=reference.copy(),
        theta=np.zeros((K, 2)),
        theta_dot=np.zeros((K, 2)),
        stage_cost=np.zeros(K),
        objective=np.full(K, math.nan),
        alpha_norm=np.full(K, math.nan),
        mu_norm=np.full(K, math.nan),
        solver_iterations=np.zeros(K, dtype=int),
        kkt_residual=np.full(K, math.nan),
        fallback=np.zeros(K, dtype=bool),
        updated=np.zeros(K, dtype=bool),
        accepted=np.zeros(K, dtype=bool),
        robust_rank=np.full(K, -1, dtype=int),
        required_rank=np.full(K, adapter.required_rank, dtype=int),
        sigma_at_required=np.full(K, math.nan),
        sigma_after_required=np.full(K, math.nan),
        prev_input_initial=prev_input_initial,
    )
    decisions: list = []
    failed = False
    failure_reason = ""
    n_fallbacks = 0
    consecutive_fallbacks = 0
    previous_step = None
    executed = 0

    for k in range(K):
        dataset = initial_dataset if config.strategy is Strategy.NEVER_UPDATE else adapter.current_dataset
        ref_seg = reference_segment(reference, k, T_f)
        try:
            ctrl_step = compute_control(dataset, past_u, past_y, prev_u, ref_seg, ctrl, previous=previous_step)
            u_cmd = ctrl_step.u_applied
            previous_step = ctrl_step
            consecutive_fallbacks = 0
            log.objective[k] = ctrl_step.ocp_objective
            log.alpha_norm[k] = ctrl_step.alpha_norm
            log.mu_norm[k] = ctrl_step.mu_norm
            log.solver_iterations[k] = ctrl_step.solver_iterations
            log.kkt_residual[k] = ctrl_step.kkt_residual
        except SolverFailure:
            u_cmd = prev_u.copy()
            log.fallback[k] = True
            n_fallbacks += 1
            consecutive_fallbacks += 1
            if consecutive_fallbacks > config.solver_failure_budget:
                failed = True
                failure_reason = f"solver failed {consecutive_fallbacks} consecutive steps"
                executed = k
                break

        if config.strategy is Strategy.ALWAYS_UPDATE:
            excitation = excite_rng.uniform(-config.excitation_bound, config.excitation_bound, size=m)
            u_applied = np.clip(u_cmd + excitation, -ctrl.u_max, ctrl.u_max)
        else:
            u_applied = u_cmd.copy()

        y_k = measure(state, noise)
        adapter.record_step(u_applied, y_k)
        if config.strategy is Strategy.PROPOSED:
            decision = adapter.decide_and_update()
            decisions.append(decision)
            log.updated[k] = decision.accepted
            log.accepted[k] = decision.accepted
            log.robust_rank[k] = decision.robust_rank
            log.sigma_at_required[k] = decision.sigma_at_required
            log.sigma_after_required[k] = decision.sigma_after_required
        elif config.strategy is Strategy.ALWAYS_UPDATE:
            adapter.update_unconditionally()
            log.updated[k] = True

        log.u[k] = u_applied
        log.u_command[k] = u_cmd
        log.y[k] = y_k
        log.theta[k] = state.theta
        log.theta_dot[k] = state.theta_dot
        log.stage_cost[k] = stage_cost(u_applied, y_k, reference[k], u_applied - prev_u, ctrl)

        try:
            state = step(config.plant, state, u_applied, config.dt, config.substeps)
        except RuntimeError as exc:
            failed = True
            failure_reason = str(exc)
            executed = k + 1
            break

        past_u = np.vstack([past_u[1:], u_applied])
        past_y = np.vstack([past_y[1:], y_k])
        prev_u = u_applied
        executed = k + 1

    if executed < K:
        for name in (
            "u", "u_command", "y", "ref", "theta", "theta_dot", "stage_cost",
            "objective", "alpha_norm", "mu_norm", "solver_iterations",
            "kkt_residual", "fallback", "updated", "accepted", "robust_rank",
            "required_rank", "sigma_at_required", "sigma_after_required",
        ):
            setattr(log, name, getattr(log, name)[:executed])
    j_tot = float(np.sum(log.stage_cost))
    return EpisodeResult(
        strategy=config.strategy,
        seed=seed,
        j_tot=j_tot,
        failed=failed,
        failure_reason=failure_reason,
        n_fallbacks=n_fallbacks,
        log=log,
        decisions=decisions,
    )


@dataclass
class StrategySummary:
    strategy: Strategy
    costs: list
    failed_runs: list
    median: float
    q1: float
    q3: float
    minimum: float
    maximum: float

    @property
    def n_runs(self) -> int:
        return len(self.costs) + len(self.failed_runs)


def summarize(strategy: Strategy, results) -> StrategySummary:
    """Aggregate per-run costs; failed runs are counted but excluded from quantiles."""
    costs = [r.j_tot for r in results if not r.failed]
    failed = [i for i, r in enumerate(results) if r.failed]
    if failed:
        warnings.warn(
            f"{strategy.value}: {len(failed)} of {len(results)} runs failed and are "
            "excluded from the quantiles",
            stacklevel=2,
        )
    if costs:
        arr = np.array(costs)
        median, q1, q3 = (float(np.percentile(arr, q)) for q in (50, 25, 75))
        lo, hi = float(arr.min()), float(arr.max())
    else:
        median = q1 = q3 = lo = hi = math.nan
    return StrategySummary(strategy, costs, failed, median, q1, q3, lo, hi)


def _episode_job(args):
    config, seed = args
    return run_episode(config, seed)


def run_monte_carlo(config: ScenarioConfig, workers: int = 1):
    """Run `config.runs` paired-seed episodes; returns (summary, episodes)."""
    seeds = derive_run_seeds(config.master_seed, config.runs)
    jobs = [(config, s) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            episodes = list(pool.map(_episode_job, jobs))
    else:
        episodes = [run_episode(config, s) for s in seeds]
    return summarize(config.strategy, episodes), episodes


@dataclass
class StudyResult:
    config: ScenarioConfig
    summaries: dict
    episodes: dict
    seeds: list


def run_study(config: ScenarioConfig, strategies=None, workers: int = 1) -> StudyResult:
    """Run one or more strategies with paired per-run seeds."""
    if strategies is None:
        strategies = [config.strategy]
    strategies = [Strategy.parse(s) for s in strategies]
    summaries: dict = {}
    episodes: dict = {}
    for strat in strategies:
        cfg = config.with_strategy(strat)
        summary, eps = run_monte_carlo(cfg, workers=workers)
        summaries[strat.value] = summary
        episodes[strat.value] = eps
    return StudyResult(config, summaries, episodes, derive_run_seeds(config.master_seed, config.runs))


def _json_scalar(value):
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return None if math.isnan(v) else v
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    return value


def _episode_records(result: EpisodeResult):
    log = result.log
    for k in range(log.n_steps):
        rec = {
            "step": k,
            "u": [float(v) for v in log.u[k]],
            "u_command": [float(v) for v in log.u_command[k]],
            "y": [float(v) for v in log.y[k]],
            "ref": [float(v) for v in log.ref[k]],
            "theta": [float(v) for v in log.theta[k]],
            "theta_dot": [float(v) for v in log.theta_dot[k]],
            "stage_cost": float(log.stage_cost[k]),
            "objective": _json_scalar(log.objective[k]),
            "alpha_norm": _json_scalar(log.alpha_norm[k]),
            "mu_norm": _json_scalar(log.mu_norm[k]),
            "solver_iterations": int(log.solver_iterations[k]),
            "kkt_residual": _json_scalar(log.kkt_residual[k]),
            "fallback": bool(log.fallback[k]),
            "updated": bool(log.updated[k]),
            "accepted": bool(log.accepted[k]) if result.strategy is Strategy.PROPOSED else None,
            "robust_rank": int(log.robust_rank[k]) if log.robust_rank[k] >= 0 else None,
            "required_rank": int(log.required_rank[k]),
            "sigma_at_required": _json_scalar(log.sigma_at_required[k]),
            "sigma_after_required": _json_scalar(log.sigma_after_required[k]),
        }
        yield rec


def export_results(study: StudyResult, out_dir) -> list:
    """Write boxplot-ready costs, per-episode JSON-lines, decision traces, manifest.

    Output is deterministic: rerunning the same study writes byte-identical
    CSV and JSON-lines bodies.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    costs_path = out / "costs.csv"
    with open(costs_path, "w", newline="") as fh:
        fh.write("strategy,run,J_tot\n")
        for strat in sorted(study.summaries):
            for run, episode in enumerate(study.episodes[strat]):
                if not episode.failed:
                    fh.write(f"{strat},{run},{episode.j_tot!r}\n")
    written.append(costs_path)

    episodes_dir = out / "episodes"
    decisions_dir = out / "decisions"
    episodes_dir.mkdir(exist_ok=True)
    for strat in sorted(study.episodes):
        for run, episode in enumerate(study.episodes[strat]):
            ep_path = episodes_dir / f"{strat}_run{run:03d}.jsonl"
            with open(ep_path, "w") as fh:
                for rec in _episode_records(episode):
                    fh.write(json.dumps(rec, sort_keys=True))
                    fh.write("\n")
            written.append(ep_path)
            if episode.decisions:
                decisions_dir.mkdir(exist_ok=True)
                dec_path = decisions_dir / f"{strat}_run{run:03d}.csv"
                export_decisions(episode.decisions, dec_path)
                written.append(dec_path)

    manifest = {
        "version": __version__,
        "config": config_to_dict(study.config),
        "strategies": sorted(study.summaries),
        "run_seeds": study.seeds,
        "failures": {
            strat: [i for i, ep in enumerate(study.episodes[strat]) if ep.failed]
            for strat in sorted(study.episodes)
        },
        "summaries": {
            strat: {
                "median": _json_scalar(s.median),
                "q1": _json_scalar(s.q1),
                "q3": _json_scalar(s.q3),
                "min": _json_scalar(s.minimum),
                "max": _json_scalar(s.maximum),
                "n_runs": s.n_runs,
            }
            for strat, s in sorted(study.summaries.items())
        },
    }
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    written.append(manifest_path)
    return written


def hold_intervals(schedule, dt: float, episode_length: int) -> list:
    """Step-index intervals [start, end) during which the reference holds a setpoint."""
    intervals = []
    t0 = 0.0
    for seg in schedule.segments:
        if seg.kind == "hold":
            start = int(round(t0 / dt))
            end = min(int(round((t0 + seg.duration) / dt)), episode_length)
            if start < end:
                intervals.append((start, end))
        t0 += seg.duration
    tail = int(round(t0 / dt))
    if tail < episode_length:
        intervals.append((tail, episode_length))
    return intervals


def steady_state_error(log: EpisodeLog, interval, tail_fraction: float = 0.4) -> float:
    """Inf-norm of the mean tracking error over the tail of a hold interval."""
    start, end = interval
    tail_start = max(start, end - max(1, int((end - start) * tail_fraction)))
    err = log.y[tail_start:end] - log.ref[tail_start:end]
    return float(np.linalg.norm(err.mean(axis=0), np.inf))


def acceptance_rate(log: EpisodeLog, interval) -> float:
    """Fraction of accepted dataset updates over a step interval."""
    start, end = interval
    window = log.accepted[start:end]
    return float(window.mean()) if window.size else math.nan


def ramp_intervals(schedule, dt: float, episode_length: int) -> list:
    """Step-index intervals [start, end) during which the reference ramps."""
    intervals = []
    t0 = 0.0
    for seg in schedule.segments:
        if seg.kind == "ramp":
            start = int(round(t0 / dt))
            end = min(int(round((t0 + seg.duration) / dt)), episode_length)
            if start < end:
                intervals.append((start, end))
        t0 += seg.duration
    return intervals

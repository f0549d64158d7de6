"""Scenario configuration: schema, defaults, and YAML loading.

A scenario fully determines a closed-loop study: plant and noise, the data
collection protocol, controller weights and horizons, the adaptation
threshold, the reference schedule, and run bookkeeping (count and master
seed).  `default_config` reproduces the two-link tracking scenario; YAML
files override any subset of it (see `configs/` and the README for the
schema).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
import yaml

from .controller import ControllerConfig
from .robot import RobotParams

__all__ = [
    "ConfigError",
    "Strategy",
    "Segment",
    "ReferenceSchedule",
    "DataCollectionConfig",
    "AdaptationConfig",
    "ScenarioConfig",
    "DEFAULT_EXCITATION_BOUND",
    "default_config",
    "load_config",
    "config_to_dict",
]

DEFAULT_EXCITATION_BOUND = 0.25


class ConfigError(ValueError):
    """Invalid scenario configuration (CLI exit code 1)."""


class Strategy(Enum):
    PROPOSED = "pm"
    ALWAYS_UPDATE = "au"
    NEVER_UPDATE = "nu"

    @classmethod
    def parse(cls, text) -> "Strategy":
        if isinstance(text, Strategy):
            return text
        try:
            return cls(str(text).lower())
        except ValueError:
            raise ConfigError(f"unknown strategy {text!r}; expected one of pm, au, nu") from None


@dataclass(frozen=True)
class Segment:
    """One reference segment: a linear ramp to `target` or a hold at the current value."""

    kind: str
    duration: float
    target: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("ramp", "hold"):
            raise ConfigError(f"segment kind must be 'ramp' or 'hold', got {self.kind!r}")
        if self.duration <= 0:
            raise ConfigError("segment duration must be positive")
        if self.kind == "ramp":
            if self.target is None:
                raise ConfigError("ramp segments need a target")
            tgt = np.array(self.target, dtype=float).ravel()
            tgt.setflags(write=False)
            object.__setattr__(self, "target", tgt)
        elif self.target is not None:
            raise ConfigError("hold segments take no target")


@dataclass(frozen=True)
class ReferenceSchedule:
    """Piecewise reference path: a start value followed by ramp/hold segments."""

    start: np.ndarray
    segments: tuple

    def __post_init__(self):
        start = np.array(self.start, dtype=float).ravel()
        start.setflags(write=False)
        object.__setattr__(self, "start", start)
        segments = tuple(self.segments)
        for seg in segments:
            if seg.kind == "ramp" and seg.target.size != start.size:
                raise ConfigError("ramp target dimension does not match the start value")
        object.__setattr__(self, "segments", segments)

    @property
    def total_duration(self) -> float:
        return sum(seg.duration for seg in self.segments)


@dataclass(frozen=True)
class DataCollectionConfig:
    steps: int
    input_bound: float

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("data collection steps must be positive")
        if self.input_bound <= 0:
            raise ConfigError("data collection input bound must be positive")


@dataclass(frozen=True)
class AdaptationConfig:
    rho: float
    n_estimate: int

    def __post_init__(self):
        if self.rho < 0:
            raise ConfigError("rho must be nonnegative")
        if self.n_estimate < 1:
            raise ConfigError("n_estimate must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    strategy: Strategy
    episode_length: int
    dt: float
    runs: int
    master_seed: int
    controller: ControllerConfig
    plant: RobotParams
    noise_bound: float
    data_collection: DataCollectionConfig
    adaptation: AdaptationConfig
    reference: ReferenceSchedule
    excitation_bound: float = None
    substeps: int = 10
    solver_failure_budget: int = 25

    def __post_init__(self):
        if self.episode_length < 1:
            raise ConfigError("episode_length must be positive")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.runs < 1:
            raise ConfigError("runs must be positive")
        if self.noise_bound < 0:
            raise ConfigError("noise bound must be nonnegative")
        if self.substeps < 1:
            raise ConfigError("substeps must be positive")
        if self.solver_failure_budget < 1:
            raise ConfigError("solver_failure_budget must be positive")
        if self.data_collection.steps < self.controller.depth:
            raise ConfigError(
                f"data collection needs at least T_p + T_f = {self.controller.depth} steps"
            )
        if self.strategy is Strategy.ALWAYS_UPDATE:
            if self.excitation_bound is None or self.excitation_bound <= 0:
                raise ConfigError("the always-update strategy requires a positive excitation_bound")
        elif self.excitation_bound is not None:
            raise ConfigError(
                f"excitation_bound applies only to the always-update strategy, not {self.strategy.value}"
            )
        if self.reference.total_duration > self.episode_length * self.dt + 1e-9:
            raise ConfigError(
                f"reference schedule lasts {self.reference.total_duration:.3f} s but the episode "
                f"is only {self.episode_length * self.dt:.3f} s"
            )

    def with_strategy(self, strategy, excitation_bound: float = None) -> "ScenarioConfig":
        """Copy of this config under another update strategy (seeds unchanged)."""
        strategy = Strategy.parse(strategy)
        if strategy is Strategy.ALWAYS_UPDATE:
            bound = excitation_bound if excitation_bound is not None else (
                self.excitation_bound if self.excitation_bound is not None else DEFAULT_EXCITATION_BOUND
            )
        else:
            bound = None
        return replace(self, strategy=strategy, excitation_bound=bound)


def default_reference_schedule() -> ReferenceSchedule:
    """Hanging start, ramp up to the elbowed mid pose, 3.5 s hold, ramp to upright, short final hold."""
    return ReferenceSchedule(
        start=np.array([-math.pi, 0.0]),
        segments=(
            Segment("ramp", 3.0, np.array([-math.pi / 2.0, math.pi / 2.0])),
            Segment("hold", 3.5),
            Segment("ramp", 3.0, np.array([0.0, 0.0])),
            Segment("hold", 0.5),
        ),
    )


def default_controller_config(**overrides) -> ControllerConfig:
    base = dict(
        past_horizon=4,
        future_horizon=10,
        q_weight=np.diag([1.0, 1.0]),
        r_weight=1e-5 * np.diag([1.0, 2.0]),
        r_delta_weight=1e-4 * np.diag([2.0, 4.0]),
        lambda_alpha=5e-5,
        lambda_mu=1e3,
        u_max=5.0,
        du_max=1.0,
        svd_truncation=None,
        qp_tol=1e-6,
        qp_max_iter=500,
    )
    base.update(overrides)
    return ControllerConfig(**base)


def default_config(strategy=Strategy.PROPOSED, runs: int = 10, master_seed: int = 2024, **overrides) -> ScenarioConfig:
    """The two-link reference-tracking scenario at desk scale (10 runs)."""
    strategy = Strategy.parse(strategy)
    base = dict(
        strategy=strategy,
        episode_length=1000,
        dt=0.01,
        runs=runs,
        master_seed=master_seed,
        controller=default_controller_config(),
        plant=RobotParams(),
        noise_bound=1e-3,
        data_collection=DataCollectionConfig(steps=55, input_bound=0.25),
        adaptation=AdaptationConfig(rho=0.005, n_estimate=4),
        reference=default_reference_schedule(),
        excitation_bound=DEFAULT_EXCITATION_BOUND if strategy is Strategy.ALWAYS_UPDATE else None,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


_TOP_KEYS = {
    "strategy",
    "episode_length",
    "dt",
    "runs",
    "master_seed",
    "controller",
    "plant",
    "noise_bound",
    "data_collection",
    "adaptation",
    "reference",
    "excitation_bound",
    "substeps",
    "solver_failure_budget",
}


def _build_reference(raw) -> ReferenceSchedule:
    if "start" not in raw or "segments" not in raw:
        raise ConfigError("reference needs 'start' and 'segments'")
    segments = []
    for item in raw["segments"]:
        if not isinstance(item, dict):
            raise ConfigError(f"bad reference segment {item!r}")
        if "ramp" in item:
            segments.append(Segment("ramp", float(item["ramp"]), np.array(item["to"], dtype=float)))
        elif "hold" in item:
            segments.append(Segment("hold", float(item["hold"])))
        else:
            raise ConfigError(f"bad reference segment {item!r}")
    return ReferenceSchedule(np.array(raw["start"], dtype=float), tuple(segments))


def load_config(path, strategy=None, runs: int = None, master_seed: int = None) -> ScenarioConfig:
    """Load a scenario from YAML, with optional CLI-level overrides.

    The top-level `excitation_bound` key is consumed only when the effective
    strategy is always-update; for the other strategies it supplies the value
    used if the scenario is later rebound with `with_strategy('au')`.
    """
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")

    effective_strategy = Strategy.parse(strategy if strategy is not None else raw.get("strategy", "pm"))
    kwargs: dict = {"strategy": effective_strategy}
    for key in ("episode_length", "runs", "master_seed", "substeps", "solver_failure_budget"):
        if key in raw:
            kwargs[key] = int(raw[key])
    for key in ("dt", "noise_bound"):
        if key in raw:
            kwargs[key] = float(raw[key])
    if runs is not None:
        kwargs["runs"] = int(runs)
    if master_seed is not None:
        kwargs["master_seed"] = int(master_seed)

    try:
        if "controller" in raw:
            c = dict(raw["controller"])
            for key in ("q_weight", "r_weight", "r_delta_weight"):
                if key in c:
                    val = np.array(c[key], dtype=float)
                    c[key] = np.diag(val) if val.ndim == 1 else val
            kwargs["controller"] = default_controller_config(**c)
        if "plant" in raw:
            kwargs["plant"] = RobotParams(**raw["plant"])
        if "data_collection" in raw:
            kwargs["data_collection"] = DataCollectionConfig(**raw["data_collection"])
        if "adaptation" in raw:
            kwargs["adaptation"] = AdaptationConfig(**raw["adaptation"])
        if "reference" in raw:
            kwargs["reference"] = _build_reference(raw["reference"])
        if effective_strategy is Strategy.ALWAYS_UPDATE:
            kwargs["excitation_bound"] = float(raw.get("excitation_bound", DEFAULT_EXCITATION_BOUND))
        cfg = default_config(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cfg


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Plain-type snapshot of a scenario for the reproducibility manifest."""
    ctrl = cfg.controller
    return {
        "strategy": cfg.strategy.value,
        "episode_length": cfg.episode_length,
        "dt": cfg.dt,
        "runs": cfg.runs,
        "master_seed": cfg.master_seed,
        "substeps": cfg.substeps,
        "solver_failure_budget": cfg.solver_failure_budget,
        "noise_bound": cfg.noise_bound,
        "excitation_bound": cfg.excitation_bound,
        "controller": {
            "past_horizon": ctrl.past_horizon,
            "future_horizon": ctrl.future_horizon,
            "q_weight": ctrl.q_weight.tolist(),
            "r_weight": ctrl.r_weight.tolist(),
            "r_delta_weight": ctrl.r_delta_weight.tolist(),
            "lambda_alpha": ctrl.lambda_alpha,
            "lambda_mu": ctrl.lambda_mu,
            "u_max": ctrl.u_max,
            "du_max": ctrl.du_max,
            "svd_truncation": ctrl.svd_truncation,
            "qp_tol": ctrl.qp_tol,
            "qp_max_iter": ctrl.qp_max_iter,
        },
        "plant": {
            "m1": cfg.plant.m1,
            "m2": cfg.plant.m2,
            "l1": cfg.plant.l1,
            "l2": cfg.plant.l2,
            "d1": cfg.plant.d1,
            "d2": cfg.plant.d2,
            "gravity": cfg.plant.gravity,
        },
        "data_collection": {
            "steps": cfg.data_collection.steps,
            "input_bound": cfg.data_collection.input_bound,
        },
        "adaptation": {"rho": cfg.adaptation.rho, "n_estimate": cfg.adaptation.n_estimate},
        "reference": {
            "start": cfg.reference.start.tolist(),
            "segments": [
                {"kind": seg.kind, "duration": seg.duration,
                 "target": None if seg.target is None else seg.target.tolist()}
                for seg in cfg.reference.segments
            ],
        },
    }

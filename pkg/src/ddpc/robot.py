"""Two-link planar robot arm: continuous dynamics, RK4 stepping, noisy measurement.

Joint angles are measured from the upright position, so theta = (-pi, 0) is
the hanging (lower) equilibrium.  Angles live on the real line; no wrapping
is applied, because the tracking error computation must see a continuous
path.  Torques are held constant over each sampling interval (zero-order
hold) and the state is advanced with fixed-substep classical Runge-Kutta.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RobotParams",
    "PlantState",
    "NoiseModel",
    "lower_equilibrium",
    "mass_matrix",
    "coriolis_damping",
    "gravity_torque",
    "acceleration",
    "step",
    "measure",
    "mechanical_energy",
]


@dataclass(frozen=True)
class RobotParams:
    """Masses (kg), link lengths (m), viscous joint damping, gravity accel."""

    m1: float = 0.3
    m2: float = 0.1
    l1: float = 0.4
    l2: float = 0.2
    d1: float = 0.001
    d2: float = 0.001
    gravity: float = 9.81

    def __post_init__(self):
        if min(self.m1, self.m2, self.l1, self.l2, self.gravity) <= 0:
            raise ValueError("masses, lengths, and gravity must be strictly positive")
        if self.d1 < 0 or self.d2 < 0:
            raise ValueError("damping must be nonnegative")


@dataclass(frozen=True)
class PlantState:
    """Joint angles (rad) and angular velocities (rad/s)."""

    theta: np.ndarray
    theta_dot: np.ndarray

    def __post_init__(self):
        th = np.array(self.theta, dtype=float).reshape(2)
        om = np.array(self.theta_dot, dtype=float).reshape(2)
        if not (np.all(np.isfinite(th)) and np.all(np.isfinite(om))):
            raise ValueError("plant state must be finite")
        th.setflags(write=False)
        om.setflags(write=False)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "theta_dot", om)


@dataclass(eq=False)
class NoiseModel:
    """Uniform measurement noise on the inf-ball of radius `bound`, seeded."""

    bound: float
    seed: object = 0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.bound < 0:
            raise ValueError("noise bound must be nonnegative")
        self._rng = np.random.default_rng(self.seed)

    def sample(self) -> np.ndarray:
        return self._rng.uniform(-self.bound, self.bound, size=2)


def lower_equilibrium() -> PlantState:
    """Hanging rest configuration theta = (-pi, 0), zero velocity."""
    return PlantState(np.array([-np.pi, 0.0]), np.zeros(2))


def mass_matrix(params: RobotParams, theta) -> np.ndarray:
    t2 = float(theta[1])
    mt = params.m1 + params.m2
    a = params.m2 * params.l1 * params.l2
    m11 = mt * params.l1**2 + params.m2 * params.l2**2 + 2.0 * a * np.cos(t2)
    m12 = params.m2 * params.l2**2 + a * np.cos(t2)
    m22 = params.m2 * params.l2**2
    return np.array([[m11, m12], [m12, m22]])


def coriolis_damping(params: RobotParams, theta, theta_dot) -> np.ndarray:
    """Coriolis/centrifugal torques plus viscous damping."""
    s2 = np.sin(float(theta[1]))
    w1, w2 = float(theta_dot[0]), float(theta_dot[1])
    a = params.m2 * params.l1 * params.l2
    return np.array(
        [
            -a * (2.0 * w1 * w2 + w2 * w2) * s2 + params.d1 * w1,
            a * w1 * w1 * s2 + params.d2 * w2,
        ]
    )


def gravity_torque(params: RobotParams, theta) -> np.ndarray:
    t1, t2 = float(theta[0]), float(theta[1])
    mt = params.m1 + params.m2
    g = params.gravity
    shoulder = -mt * g * params.l1 * np.sin(t1) - params.m2 * g * params.l2 * np.sin(t1 + t2)
    elbow = -params.m2 * g * params.l2 * np.sin(t1 + t2)
    return np.array([shoulder, elbow])


def acceleration(params: RobotParams, theta, theta_dot, tau) -> np.ndarray:
    """Joint accelerations from M(theta) thetadd + C(theta, thetad) + G(theta) = tau."""
    theta = np.asarray(theta, dtype=float).reshape(2)
    theta_dot = np.asarray(theta_dot, dtype=float).reshape(2)
    tau = np.asarray(tau, dtype=float).reshape(2)
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(theta_dot)) and np.all(np.isfinite(tau))):
        raise ValueError("acceleration inputs must be finite")
    rhs = tau - coriolis_damping(params, theta, theta_dot) - gravity_torque(params, theta)
    return np.linalg.solve(mass_matrix(params, theta), rhs)


def step(params: RobotParams, state: PlantState, tau, dt: float, substeps: int = 10) -> PlantState:
    """Integrate one sampling interval with constant torque (classical RK4)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if substeps < 1:
        raise ValueError("substeps must be at least 1")
    tau = np.asarray(tau, dtype=float).reshape(2)
    h = dt / substeps
    th = state.theta.copy()
    om = state.theta_dot.copy()
    for _ in range(substeps):
        k1t, k1w = om, acceleration(params, th, om, tau)
        k2t = om + 0.5 * h * k1w
        k2w = acceleration(params, th + 0.5 * h * k1t, k2t, tau)
        k3t = om + 0.5 * h * k2w
        k3w = acceleration(params, th + 0.5 * h * k2t, k3t, tau)
        k4t = om + h * k3w
        k4w = acceleration(params, th + h * k3t, k4t, tau)
        th = th + (h / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        om = om + (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    if not (np.all(np.isfinite(th)) and np.all(np.isfinite(om))):
        raise RuntimeError("plant state diverged during integration")
    return PlantState(th, om)


def measure(state: PlantState, noise: NoiseModel) -> np.ndarray:
    """Measured joint angles: theta plus one bounded noise sample."""
    return state.theta + noise.sample()


def mechanical_energy(params: RobotParams, state: PlantState) -> float:
    """Kinetic plus gravitational potential energy (zero level at the pivot)."""
    om = state.theta_dot
    kinetic = 0.5 * float(om @ mass_matrix(params, state.theta) @ om)
    t1, t2 = float(state.theta[0]), float(state.theta[1])
    mt = params.m1 + params.m2
    potential = mt * params.gravity * params.l1 * np.cos(t1) + params.m2 * params.gravity * params.l2 * np.cos(t1 + t2)
    return kinetic + float(potential)

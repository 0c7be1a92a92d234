"""Ground-truth POMDP: unit box with an internal wall, fixed-length steps,
Gaussian observation noise, and an indicator-ball reward field.

Wall semantics: outer walls clamp each coordinate into [0, 1]; a proposed
move whose path would cross the internal wall is rejected outright (the
agent stays put), so the barrier can never be clamped through. The random
walk direction is a uniform angle, which is exactly a normalized isotropic
Gaussian displacement of fixed length.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class EnvironmentSpec:
    internal_wall: Optional[np.ndarray] = field(default=None)  # (4,) = x0, y0, x1, y1
    step_length: float = 0.06
    obs_noise_sigma: float = 0.1
    direction_noise_sigma: float = 1.0  # scale of the pre-normalization direction draw

    def __post_init__(self):
        if not self.step_length > 0.0:
            raise ValueError("step_length must be positive")
        if self.obs_noise_sigma < 0.0:
            raise ValueError("obs_noise_sigma must be non-negative")
        if self.internal_wall is not None:
            wall = np.ascontiguousarray(np.asarray(self.internal_wall, dtype=np.float64))
            if wall.shape != (4,):
                raise ValueError("internal_wall must be [x0, y0, x1, y1]")
            if np.any(wall < 0.0) or np.any(wall > 1.0):
                raise ValueError("internal_wall endpoints must lie inside the closed unit box")
            object.__setattr__(self, "internal_wall", wall)

    @staticmethod
    def default() -> "EnvironmentSpec":
        """Unit box with a vertical wall from (0.5, 0.0) to (0.5, 0.6)."""
        return EnvironmentSpec(internal_wall=np.array([0.5, 0.0, 0.5, 0.6]))

    def wall_array(self) -> tuple[np.ndarray, bool]:
        if self.internal_wall is None:
            return np.zeros(4), False
        return self.internal_wall, True


@dataclass(frozen=True)
class RewardField:
    goal_center: np.ndarray = field(default_factory=lambda: np.array([0.25, 0.3]))
    goal_radius: float = 0.1
    magnitude: float = 1.0

    def __post_init__(self):
        center = np.ascontiguousarray(np.asarray(self.goal_center, dtype=np.float64))
        object.__setattr__(self, "goal_center", center)
        if not np.isfinite(self.magnitude):
            raise ValueError("reward magnitude must be finite")
        if self.goal_radius < 0.0:
            raise ValueError("goal_radius must be non-negative")


@dataclass
class Trajectory:
    latent: np.ndarray  # (n, 2)
    observed: np.ndarray  # (n, 2)
    actions: Optional[np.ndarray] = None  # (n - 1,)
    rewards: Optional[np.ndarray] = None  # (n,)

    def __post_init__(self):
        n = self.latent.shape[0]
        if self.observed.shape[0] != n:
            raise ValueError("latent and observed sequences must have equal length")
        if self.actions is not None and self.actions.shape[0] not in (n, n - 1):
            raise ValueError("actions must have length n or n - 1")
        if self.rewards is not None and self.rewards.shape[0] != n:
            raise ValueError("rewards must have length n")

    def __len__(self) -> int:
        return self.latent.shape[0]


def step(
    s,
    direction: Union[float, str],
    spec: EnvironmentSpec,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """One move of fixed length; clamped at outer walls, rejected at the
    internal wall. ``direction`` is an angle or "random"."""
    s = np.asarray(s, dtype=np.float64)
    if isinstance(direction, str):
        if direction != "random":
            raise ValueError(f"unknown direction {direction!r}")
        theta = float(rng.uniform(0.0, 2.0 * np.pi))
    else:
        theta = float(direction)
    wall, active = spec.wall_array()
    nx, ny = _kernels._step_from(s[0], s[1], theta, spec.step_length, wall, active)
    return np.array([nx, ny])


def observe(s, spec: EnvironmentSpec, rng: np.random.Generator) -> np.ndarray:
    """o = s + xi with isotropic Gaussian xi; not clamped to the box."""
    s = np.asarray(s, dtype=np.float64)
    return s + spec.obs_noise_sigma * rng.standard_normal(2)


def reward(s, fieldspec: RewardField) -> float:
    """Indicator-ball reward: magnitude inside the goal radius, else 0."""
    s = np.asarray(s, dtype=np.float64)
    d = np.hypot(s[0] - fieldspec.goal_center[0], s[1] - fieldspec.goal_center[1])
    return float(fieldspec.magnitude) if d <= fieldspec.goal_radius else 0.0


def rewards_batch(states: np.ndarray, fieldspec: RewardField) -> np.ndarray:
    d = np.hypot(states[:, 0] - fieldspec.goal_center[0], states[:, 1] - fieldspec.goal_center[1])
    return np.where(d <= fieldspec.goal_radius, float(fieldspec.magnitude), 0.0)


def _on_wall(point: np.ndarray, wall: np.ndarray) -> bool:
    ax, ay, bx, by = wall
    cross = (bx - ax) * (point[1] - ay) - (by - ay) * (point[0] - ax)
    if cross != 0.0:
        return False
    return (
        min(ax, bx) <= point[0] <= max(ax, bx)
        and min(ay, by) <= point[1] <= max(ay, by)
    )


def draw_start(spec: EnvironmentSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniform start inside the box, rejecting points exactly on the wall."""
    wall, active = spec.wall_array()
    while True:
        point = rng.uniform(0.0, 1.0, 2)
        if not active or not _on_wall(point, wall):
            return point


def rollout(
    policy: Union[str, Callable[[np.ndarray], float]],
    n_steps: int,
    spec: EnvironmentSpec,
    fieldspec: Optional[RewardField],
    rng: np.random.Generator,
    start: Optional[np.ndarray] = None,
) -> Trajectory:
    """Run ``n_steps`` states of the POMDP from a uniform random start.

    ``policy`` is "random" (fresh uniform direction each step) or a callable
    mapping the latent state to a direction angle. Randomness is consumed in
    a fixed order: start, then all directions, then all observation noise.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    wall, active = spec.wall_array()
    s0 = draw_start(spec, rng) if start is None else np.asarray(start, dtype=np.float64)
    if policy == "random":
        angles = rng.uniform(0.0, 2.0 * np.pi, max(n_steps - 1, 0))
        states = _kernels.random_walk_states(s0, angles, spec.step_length, wall, active)
        actions = angles
    elif callable(policy):
        states = np.empty((n_steps, 2))
        actions = np.empty(max(n_steps - 1, 0))
        states[0] = s0
        current = s0
        for t in range(n_steps - 1):
            theta = float(policy(current))
            nx, ny = _kernels._step_from(current[0], current[1], theta, spec.step_length, wall, active)
            current = np.array([nx, ny])
            states[t + 1] = current
            actions[t] = theta
    else:
        raise ValueError("policy must be 'random' or a callable")
    noise = spec.obs_noise_sigma * rng.standard_normal((n_steps, 2))
    observed = states + noise
    rewards = rewards_batch(states, fieldspec) if fieldspec is not None else None
    return Trajectory(latent=states, observed=observed, actions=actions, rewards=rewards)

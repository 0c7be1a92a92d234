"""Experiment configuration: JSON file with a versioned schema, strict
key checking, and lossless round-trips. CLI flags override file values."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .environment import EnvironmentSpec, RewardField
from .errors import ConfigError
from .features import ActionFeatureBasis, StateFeatureBasis
from .policy import GpiConfig
from .wakesleep import WakeSleepConfig

CONFIG_SCHEMA = "ddcsf-config/1"
SF_METHODS = ("analytic", "fixed-point", "td-sleep", "td-wake")
CONDITIONS = ("latent", "inferred", "observed")
OUTPUT_DIR_ENV = "DDCSF_OUTDIR"


@dataclass(frozen=True)
class BasisConfig:
    nx: int = 10
    ny: int = 10
    width: float = 0.3
    trunc_factor: float = 2.0

    def build(self, env: EnvironmentSpec) -> StateFeatureBasis:
        return StateFeatureBasis.lattice(
            self.nx, self.ny, self.width, wall=env.internal_wall, trunc_factor=self.trunc_factor
        )


@dataclass(frozen=True)
class ActionBasisConfig:
    n: int = 10
    concentration: float = 2.0

    def build(self) -> ActionFeatureBasis:
        return ActionFeatureBasis.ring(self.n, self.concentration)


@dataclass(frozen=True)
class ValueGridConfig:
    resolution: int = 25
    rollout_steps: int = 20_000
    burn_in: int = 10
    gamma: float = 0.99
    td_passes: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int = 0
    output_dir: str | None = None
    environment: EnvironmentSpec = field(default_factory=EnvironmentSpec.default)
    reward: RewardField = field(default_factory=RewardField)
    basis: BasisConfig = field(default_factory=BasisConfig)
    action_basis: ActionBasisConfig = field(default_factory=ActionBasisConfig)
    wake_sleep: WakeSleepConfig = field(default_factory=WakeSleepConfig)
    gpi: GpiConfig = field(default_factory=GpiConfig)
    sf_method: str = "analytic"
    conditions: tuple = CONDITIONS
    value_grid: ValueGridConfig = field(default_factory=ValueGridConfig)

    def __post_init__(self):
        if self.sf_method not in SF_METHODS:
            raise ConfigError(f"sf_method must be one of {SF_METHODS}")
        for cond in self.conditions:
            if cond not in CONDITIONS:
                raise ConfigError(f"unknown condition {cond!r}")

    def resolve_output_dir(self) -> Path:
        if self.output_dir is not None:
            return Path(self.output_dir)
        return Path(os.environ.get(OUTPUT_DIR_ENV, "out"))


def _merge(payload: dict, defaults: dict, where: str) -> dict:
    unknown = sorted(set(payload) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")
    merged = dict(defaults)
    merged.update(payload)
    return merged


def _environment_from(payload: dict) -> EnvironmentSpec:
    defaults = {
        "internal_wall": [0.5, 0.0, 0.5, 0.6],
        "step_length": 0.06,
        "obs_noise_sigma": 0.1,
        "direction_noise_sigma": 1.0,
    }
    merged = _merge(payload, defaults, "environment")
    wall = merged["internal_wall"]
    try:
        return EnvironmentSpec(
            internal_wall=None if wall is None else np.array(wall, dtype=np.float64),
            step_length=merged["step_length"],
            obs_noise_sigma=merged["obs_noise_sigma"],
            direction_noise_sigma=merged["direction_noise_sigma"],
        )
    except ValueError as exc:
        raise ConfigError(f"environment: {exc}") from exc


def _reward_from(payload: dict) -> RewardField:
    defaults = {"goal_center": [0.25, 0.3], "goal_radius": 0.1, "magnitude": 1.0}
    merged = _merge(payload, defaults, "reward")
    try:
        return RewardField(
            goal_center=np.array(merged["goal_center"], dtype=np.float64),
            goal_radius=merged["goal_radius"],
            magnitude=merged["magnitude"],
        )
    except ValueError as exc:
        raise ConfigError(f"reward: {exc}") from exc


def _dataclass_from(cls, payload: dict, where: str, seed: int | None = None):
    defaults = {f.name: getattr(cls(), f.name) for f in cls.__dataclass_fields__.values()}
    defaults.pop("seed", None)
    merged = _merge(payload, defaults, where)
    if seed is not None:
        merged["seed"] = seed
    try:
        return cls(**merged)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(payload: dict) -> ExperimentConfig:
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    top_defaults = {
        "schema": CONFIG_SCHEMA,
        "master_seed": 0,
        "output_dir": None,
        "environment": {},
        "reward": {},
        "basis": {},
        "action_basis": {},
        "wake_sleep": {},
        "gpi": {},
        "sf_method": "analytic",
        "conditions": list(CONDITIONS),
        "value_grid": {},
    }
    merged = _merge(payload, top_defaults, "config")
    if merged["schema"] != CONFIG_SCHEMA:
        raise ConfigError(f"expected schema {CONFIG_SCHEMA!r}, found {merged['schema']!r}")
    seed = int(merged["master_seed"])
    return ExperimentConfig(
        master_seed=seed,
        output_dir=merged["output_dir"],
        environment=_environment_from(merged["environment"]),
        reward=_reward_from(merged["reward"]),
        basis=_dataclass_from(BasisConfig, merged["basis"], "basis"),
        action_basis=_dataclass_from(ActionBasisConfig, merged["action_basis"], "action_basis"),
        wake_sleep=_dataclass_from(WakeSleepConfig, merged["wake_sleep"], "wake_sleep", seed=seed),
        gpi=_dataclass_from(GpiConfig, merged["gpi"], "gpi", seed=seed),
        sf_method=merged["sf_method"],
        conditions=tuple(merged["conditions"]),
        value_grid=_dataclass_from(ValueGridConfig, merged["value_grid"], "value_grid"),
    )


def config_to_dict(config: ExperimentConfig) -> dict:
    env = config.environment
    return {
        "schema": CONFIG_SCHEMA,
        "master_seed": config.master_seed,
        "output_dir": config.output_dir,
        "environment": {
            "internal_wall": None if env.internal_wall is None else env.internal_wall.tolist(),
            "step_length": env.step_length,
            "obs_noise_sigma": env.obs_noise_sigma,
            "direction_noise_sigma": env.direction_noise_sigma,
        },
        "reward": {
            "goal_center": config.reward.goal_center.tolist(),
            "goal_radius": config.reward.goal_radius,
            "magnitude": config.reward.magnitude,
        },
        "basis": {
            "nx": config.basis.nx,
            "ny": config.basis.ny,
            "width": config.basis.width,
            "trunc_factor": config.basis.trunc_factor,
        },
        "action_basis": {"n": config.action_basis.n, "concentration": config.action_basis.concentration},
        "wake_sleep": {
            "n_cycles": config.wake_sleep.n_cycles,
            "sleep_samples_per_cycle": config.wake_sleep.sleep_samples_per_cycle,
            "wake_observations_per_cycle": config.wake_sleep.wake_observations_per_cycle,
            "lr_w": config.wake_sleep.lr_w,
            "lr_t": config.wake_sleep.lr_t,
            "lr_decay": config.wake_sleep.lr_decay,
            "batch_size": config.wake_sleep.batch_size,
            "passes_per_cycle": config.wake_sleep.passes_per_cycle,
            "update_mode": config.wake_sleep.update_mode,
            "ridge_rel": config.wake_sleep.ridge_rel,
            "closed_form_damping": config.wake_sleep.closed_form_damping,
            "sleep_noise_sigma": config.wake_sleep.sleep_noise_sigma,
            "holdout_steps": config.wake_sleep.holdout_steps,
            "early_stop_rel_improvement": config.wake_sleep.early_stop_rel_improvement,
        },
        "gpi": {
            "gamma": config.gpi.gamma,
            "n_cycles": config.gpi.n_cycles,
            "steps_per_episode": config.gpi.steps_per_episode,
            "action_candidates": config.gpi.action_candidates,
            "positive_return_filter": config.gpi.positive_return_filter,
            "eval_episodes": config.gpi.eval_episodes,
            "epsilon0": config.gpi.epsilon0,
            "explore_transitions": config.gpi.explore_transitions,
            "sf_lr0": config.gpi.sf_lr0,
            "sf_k0": config.gpi.sf_k0,
            "t_lr": config.gpi.t_lr,
            "ridge": config.gpi.ridge,
        },
        "sf_method": config.sf_method,
        "conditions": list(config.conditions),
        "value_grid": {
            "resolution": config.value_grid.resolution,
            "rollout_steps": config.value_grid.rollout_steps,
            "burn_in": config.value_grid.burn_in,
            "gamma": config.value_grid.gamma,
            "td_passes": config.value_grid.td_passes,
        },
    }


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(payload)


def override(config: ExperimentConfig, **kwargs) -> ExperimentConfig:
    """Replace top-level fields, dropping None values (unset flags)."""
    updates = {k: v for k, v in kwargs.items() if v is not None}
    return replace(config, **updates) if updates else config

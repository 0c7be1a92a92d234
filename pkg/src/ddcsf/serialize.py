"""Checkpoint files for trained models and agents.

Everything is a single JSON document. Matrices are stored as
``{"shape": [r, c], "data": [...]}`` with ``data`` flattened in row-major
(C) order; vectors are plain lists. Floats use Python's shortest
round-trip representation, so load(save(x)) is bit-exact and repeated
saves of the same object are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .environment import EnvironmentSpec
from .errors import ConfigError
from .features import ActionFeatureBasis, MeanDecoder, StateFeatureBasis
from .policy import Agent, BilinearActionModel, Condition
from .ssm import ObservationModel, StateSpaceModel

CHECKPOINT_SCHEMA = "ddcsf-checkpoint/1"
AGENT_SCHEMA = "ddcsf-agent/1"


def _mat(arr: np.ndarray) -> dict:
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape), "data": arr.ravel(order="C").tolist()}


def _unmat(payload: dict) -> np.ndarray:
    return np.array(payload["data"], dtype=np.float64).reshape(payload["shape"], order="C")


def _basis_payload(basis: StateFeatureBasis) -> dict:
    return {
        "centers": _mat(basis.centers),
        "width": basis.width,
        "trunc_side": basis.trunc_side.tolist(),
        "wall_normal": basis.wall_normal.tolist(),
        "wall_offset": basis.wall_offset,
    }


def _basis_from(payload: dict) -> StateFeatureBasis:
    return StateFeatureBasis(
        centers=_unmat(payload["centers"]),
        width=payload["width"],
        trunc_side=np.array(payload["trunc_side"]),
        wall_normal=np.array(payload["wall_normal"]),
        wall_offset=payload["wall_offset"],
    )


def _env_payload(spec: EnvironmentSpec) -> dict:
    return {
        "internal_wall": None if spec.internal_wall is None else spec.internal_wall.tolist(),
        "step_length": spec.step_length,
        "obs_noise_sigma": spec.obs_noise_sigma,
        "direction_noise_sigma": spec.direction_noise_sigma,
    }


def _env_from(payload: dict) -> EnvironmentSpec:
    wall = payload["internal_wall"]
    return EnvironmentSpec(
        internal_wall=None if wall is None else np.array(wall),
        step_length=payload["step_length"],
        obs_noise_sigma=payload["obs_noise_sigma"],
        direction_noise_sigma=payload["direction_noise_sigma"],
    )


def _write_json(path: Path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def _read_json(path: Path, expected_schema: str) -> dict:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if payload.get("schema") != expected_schema:
        raise ConfigError(f"{path}: expected schema {expected_schema!r}, found {payload.get('schema')!r}")
    return payload


def save_checkpoint(model: StateSpaceModel, env: EnvironmentSpec, path) -> None:
    payload = {
        "schema": CHECKPOINT_SCHEMA,
        "k": model.basis.size,
        "basis": _basis_payload(model.basis),
        "environment": _env_payload(env),
        "T": _mat(model.T),
        "W": _mat(model.W),
        "C": _mat(model.obs_model.C),
        "obs_noise_sigma": model.obs_model.noise_sigma,
        "decoder": _mat(model.decoder.readout),
        "mu_prior": model.mu_prior.tolist(),
    }
    _write_json(Path(path), payload)


def load_checkpoint(path) -> tuple[StateSpaceModel, EnvironmentSpec]:
    payload = _read_json(Path(path), CHECKPOINT_SCHEMA)
    model = StateSpaceModel(
        basis=_basis_from(payload["basis"]),
        T=_unmat(payload["T"]),
        W=_unmat(payload["W"]),
        obs_model=ObservationModel(C=_unmat(payload["C"]), noise_sigma=payload["obs_noise_sigma"]),
        decoder=MeanDecoder(readout=_unmat(payload["decoder"])),
        mu_prior=np.array(payload["mu_prior"]),
    )
    return model, _env_from(payload["environment"])


def save_agent(agent: Agent, env: EnvironmentSpec, path) -> None:
    payload = {
        "schema": AGENT_SCHEMA,
        "condition": agent.condition.value,
        "gamma": agent.gamma,
        "basis": _basis_payload(agent.basis),
        "environment": _env_payload(env),
        "action_basis": {
            "preferred_angles": agent.action_basis.preferred_angles.tolist(),
            "concentration": agent.action_basis.concentration,
        },
        "candidates": agent.candidates.tolist(),
        "U": _mat(agent.U),
        "w_rew": agent.w_rew.tolist(),
        "P": _mat(agent.bilinear.P),
        "T_pi": None if agent.T_pi is None else _mat(agent.T_pi),
        "sf_steps": agent.sf_steps,
        "ssm": None
        if agent.model is None
        else {
            "T": _mat(agent.model.T),
            "W": _mat(agent.model.W),
            "C": _mat(agent.model.obs_model.C),
            "obs_noise_sigma": agent.model.obs_model.noise_sigma,
            "decoder": _mat(agent.model.decoder.readout),
            "mu_prior": agent.model.mu_prior.tolist(),
        },
    }
    _write_json(Path(path), payload)


def load_agent(path) -> tuple[Agent, EnvironmentSpec]:
    payload = _read_json(Path(path), AGENT_SCHEMA)
    basis = _basis_from(payload["basis"])
    action_basis = ActionFeatureBasis(
        preferred_angles=np.array(payload["action_basis"]["preferred_angles"]),
        concentration=payload["action_basis"]["concentration"],
    )
    model = None
    if payload["ssm"] is not None:
        sub = payload["ssm"]
        model = StateSpaceModel(
            basis=basis,
            T=_unmat(sub["T"]),
            W=_unmat(sub["W"]),
            obs_model=ObservationModel(C=_unmat(sub["C"]), noise_sigma=sub["obs_noise_sigma"]),
            decoder=MeanDecoder(readout=_unmat(sub["decoder"])),
            mu_prior=np.array(sub["mu_prior"]),
        )
    agent = Agent(
        condition=Condition(payload["condition"]),
        gamma=payload["gamma"],
        basis=basis,
        action_basis=action_basis,
        candidates=np.array(payload["candidates"]),
        U=_unmat(payload["U"]),
        w_rew=np.array(payload["w_rew"]),
        bilinear=BilinearActionModel(P=_unmat(payload["P"]), action_basis=action_basis),
        T_pi=None if payload["T_pi"] is None else _unmat(payload["T_pi"]),
        model=model,
        sf_steps=payload["sf_steps"],
    )
    return agent, _env_from(payload["environment"])

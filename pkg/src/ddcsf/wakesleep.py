"""Alternating sleep/wake training of the recognition and generative models.

Each cycle: (sleep) simulate latent/observed sequences from the current
generative model and train the recognition filter to reproduce the latent
features; (wake) collect environment observations under the behavior
policy, infer posteriors with the current filter, and update the latent
dynamics and observation readout from them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, ssm
from .environment import EnvironmentSpec, rollout
from .errors import NumericError
from .features import DEFAULT_RIDGE, StateFeatureBasis, scaled_ridge_lstsq, state_features_batch
from .ssm import StateSpaceModel
from .streams import derive_rng

UPDATE_MODES = ("minibatch", "online", "closed_form")


@dataclass(frozen=True)
class WakeSleepConfig:
    n_cycles: int = 50
    sleep_samples_per_cycle: int = 30_000
    wake_observations_per_cycle: int = 50_000
    lr_w: float = 1e-2
    lr_t: float = 1e-2
    lr_decay: float = 0.1  # per-cycle harmonic decay of both rates
    batch_size: int = 256
    passes_per_cycle: int = 8  # minibatch-mode epochs over each cycle's data
    update_mode: str = "closed_form"
    ridge_rel: float = 1e-3  # closed-form penalty relative to the data scale
    closed_form_damping: float = 0.2  # relaxation toward each cycle's argmin
    sleep_noise_sigma: float = 0.06  # matches the environment step length
    holdout_steps: int = 5_000
    early_stop_rel_improvement: float = 0.0  # 0 disables cycle-level early stopping
    seed: int = 0

    def __post_init__(self):
        if self.n_cycles < 0:
            raise ValueError("n_cycles must be >= 0")
        if self.sleep_samples_per_cycle < 1 or self.wake_observations_per_cycle < 1:
            raise ValueError("per-cycle sample counts must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.update_mode not in UPDATE_MODES:
            raise ValueError(f"update_mode must be one of {UPDATE_MODES}")


@dataclass
class WakeSleepResult:
    model: StateSpaceModel
    sleep_residual: np.ndarray  # (n_cycles,) mean ||psi(s) - f_W||^2 per cycle
    wake_pred_error: np.ndarray  # (n_cycles,) held-out mean ||mu_{t+1} - T mu_t||
    initial_wake_pred_error: float

    @property
    def n_cycles(self) -> int:
        return self.sleep_residual.shape[0]


def _check_finite(cycle: int, **arrays) -> None:
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"{name} became non-finite during cycle {cycle}; aborting")


def _sleep_phase(model: StateSpaceModel, traj, config: WakeSleepConfig, lr: float) -> tuple[np.ndarray, float]:
    """Train W on one sleep trajectory; returns (new W, mean squared residual).

    The belief recursion always consumes the filter's own outputs. In
    minibatch mode W is frozen within each chunk (fixed pass order), in
    online mode it updates per sample, and closed_form refits W once from
    beliefs filtered with the incoming W.
    """
    basis = model.basis
    obs_feats = state_features_batch(traj.observed, basis)
    targets = state_features_batch(traj.latent, basis)
    k = basis.size
    W = model.W.copy()
    mu_prior = np.ascontiguousarray(model.mu_prior)

    if config.update_mode == "online":
        w1 = np.ascontiguousarray(W[:, :k])
        w2 = np.ascontiguousarray(W[:, k:])
        mean_sq = _kernels.recognition_sgd_sweep(w1, w2, model.T, obs_feats, targets, mu_prior, lr)
        return np.concatenate([w1, w2], axis=1), float(mean_sq)

    if config.update_mode == "closed_form":
        mus = _kernels.filter_sequence(model.T, *model.w_blocks(), obs_feats, mu_prior)
        mu_prev = np.vstack([mu_prior, mus[:-1]])
        x = np.concatenate([mu_prev @ model.T.T, obs_feats], axis=1)
        resid = targets - x @ W.T
        fit = scaled_ridge_lstsq(x, targets, config.ridge_rel).T
        # damped move toward the argmin: the beliefs feeding the fit come
        # from the previous W, so a full jump can destabilize the recursion
        W = W + config.closed_form_damping * (fit - W)
        return W, float(np.mean(np.sum(resid**2, axis=1)))

    # minibatch: several passes over the cycle's sequence in a fixed order,
    # W frozen within each chunk, the belief recursion carried across chunks
    n = obs_feats.shape[0]
    sq_sum = 0.0
    for p in range(config.passes_per_cycle):
        mu_carry = mu_prior
        pass_sq = 0.0
        for lo in range(0, n, config.batch_size):
            hi = min(lo + config.batch_size, n)
            w1 = np.ascontiguousarray(W[:, :k])
            w2 = np.ascontiguousarray(W[:, k:])
            mus = _kernels.filter_sequence(model.T, w1, w2, obs_feats[lo:hi], mu_carry)
            mu_prev = np.vstack([mu_carry, mus[:-1]])
            x = np.concatenate([mu_prev @ model.T.T, obs_feats[lo:hi]], axis=1)
            resid = targets[lo:hi] - x @ W.T
            pass_sq += float(np.sum(resid**2))
            W = W + lr * (resid.T @ x) / x.shape[0]
            mu_carry = np.ascontiguousarray(mus[-1])
        sq_sum = pass_sq  # residual of the latest pass
    return W, sq_sum / n


def _wake_phase(
    model: StateSpaceModel, mus: np.ndarray, config: WakeSleepConfig, lr: float
) -> np.ndarray:
    """Update T from an inferred posterior sequence; returns the new T."""
    T = model.T.copy()
    if config.update_mode == "online":
        _kernels.transition_sgd_sweep(T, np.ascontiguousarray(mus), lr)
        return T
    if config.update_mode == "closed_form":
        fit = scaled_ridge_lstsq(mus[:-1], mus[1:], config.ridge_rel).T
        return T + config.closed_form_damping * (fit - T)
    n = mus.shape[0] - 1
    for p in range(config.passes_per_cycle):
        for lo in range(0, n, config.batch_size):
            hi = min(lo + config.batch_size, n)
            T = ssm.wake_update_T_batch(T, mus[lo:hi], mus[lo + 1 : hi + 1], lr)
    return T


def holdout_error(model: StateSpaceModel, observations: np.ndarray) -> float:
    mus = ssm.filter_trajectory(observations, model)
    return ssm.wake_prediction_error(mus, model.T)


def run_wake_sleep(
    config: WakeSleepConfig,
    spec: EnvironmentSpec,
    basis: StateFeatureBasis,
    behavior_policy="random",
    model: StateSpaceModel | None = None,
) -> WakeSleepResult:
    """Run the full training schedule and return the trained model plus
    per-cycle diagnostics. Deterministic given ``config.seed``."""
    if model is None:
        model = ssm.init_state_space_model(basis)
    holdout = rollout(
        behavior_policy, config.holdout_steps, spec, None, derive_rng(config.seed, "wakesleep/holdout")
    )
    initial_error = holdout_error(model, holdout.observed)

    sleep_residuals = []
    wake_errors = []
    previous = initial_error
    for cycle in range(1, config.n_cycles + 1):
        decay = 1.0 + config.lr_decay * (cycle - 1)
        lr_w = config.lr_w / decay
        lr_t = config.lr_t / decay

        sleep_traj = ssm.sleep_sample(
            model,
            config.sleep_samples_per_cycle,
            config.sleep_noise_sigma,
            spec,
            derive_rng(config.seed, f"wakesleep/sleep/cycle={cycle}"),
        )
        W, sleep_residual = _sleep_phase(model, sleep_traj, config, lr_w)
        model = ssm.with_updates(model, W=W)

        wake_traj = rollout(
            behavior_policy,
            config.wake_observations_per_cycle,
            spec,
            None,
            derive_rng(config.seed, f"wakesleep/wake/cycle={cycle}"),
        )
        mus = ssm.filter_trajectory(wake_traj.observed, model)
        obs_inputs = ssm.wake_observation_inputs(model, mus)
        T = _wake_phase(model, mus, config, lr_t)
        obs_model = ssm.fit_observation_model(obs_inputs, wake_traj.observed)
        model = ssm.with_updates(model, T=T, obs_model=obs_model)

        _check_finite(cycle, T=model.T, W=model.W, C=model.obs_model.C)

        error = holdout_error(model, holdout.observed)
        sleep_residuals.append(sleep_residual)
        wake_errors.append(error)

        if config.early_stop_rel_improvement > 0.0:
            if previous - error < config.early_stop_rel_improvement * previous:
                break
        previous = error

    return WakeSleepResult(
        model=model,
        sleep_residual=np.array(sleep_residuals),
        wake_pred_error=np.array(wake_errors),
        initial_wake_pred_error=initial_error,
    )

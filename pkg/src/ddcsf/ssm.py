"""DDC-parameterized state-space model and its recursive recognition filter.

The generative side is a transition matrix T with E[psi(s_{t+1}) | s_t] =
T psi(s_t) plus a linear observation readout. The recognition side is a
linear recursive filter mu_t = W [T mu_{t-1}; psi(o_t)] producing the
filtering posterior as a DDC vector. Updates come in two flavors: online
gradient steps (prediction-error style) and closed-form ridge fits; both
target the same least-squares objectives and agree at the optimum.

Models are immutable values here: update functions return new arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .environment import EnvironmentSpec, Trajectory, draw_start
from .errors import InsufficientDataError
from .features import (
    DEFAULT_RIDGE,
    DdcVector,
    MeanDecoder,
    StateFeatureBasis,
    grid_mean_decoder,
    ridge_lstsq,
    state_features,
    state_features_batch,
    uniform_ddc,
)


@dataclass(frozen=True)
class ObservationModel:
    C: np.ndarray  # (2, K), E[o | s] ~ C psi(s)
    noise_sigma: float

    def __post_init__(self):
        object.__setattr__(self, "C", np.ascontiguousarray(np.asarray(self.C, dtype=np.float64)))
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be non-negative")


@dataclass(frozen=True)
class StateSpaceModel:
    """Bundle of everything the recognition/generation loop needs."""

    basis: StateFeatureBasis
    T: np.ndarray  # (K, K) latent dynamics
    W: np.ndarray  # (K, 2K) recognition weights on [T mu; psi(o)]
    obs_model: ObservationModel
    decoder: MeanDecoder
    mu_prior: DdcVector  # belief before the first observation

    def __post_init__(self):
        k = self.basis.size
        object.__setattr__(self, "T", np.ascontiguousarray(np.asarray(self.T, dtype=np.float64)))
        object.__setattr__(self, "W", np.ascontiguousarray(np.asarray(self.W, dtype=np.float64)))
        if self.T.shape != (k, k):
            raise ValueError(f"T must be ({k}, {k})")
        if self.W.shape != (k, 2 * k):
            raise ValueError(f"W must be ({k}, {2 * k})")

    def w_blocks(self) -> tuple[np.ndarray, np.ndarray]:
        k = self.basis.size
        return (
            np.ascontiguousarray(self.W[:, :k]),
            np.ascontiguousarray(self.W[:, k:]),
        )


def init_state_space_model(
    basis: StateFeatureBasis,
    decoder_grid: int = 40,
    init_obs_noise_sigma: float = 0.1,
) -> StateSpaceModel:
    """Fresh model: T = I, W = [0 | I] (trust the observation features
    first), observation readout seeded from the grid decoder and refit
    from data every wake phase.

    The identity T makes the untrained generative dynamics an unbiased
    stationary walk; a contracted initialization (for example 0.9 I) pulls
    every first-cycle sleep trajectory into one corner of the box, which
    starves recognition training of coverage. Nothing inverts T before it
    is learned, so no contraction margin is needed here.
    """
    k = basis.size
    decoder = grid_mean_decoder(basis, resolution=decoder_grid)
    W = np.concatenate([np.zeros((k, k)), np.eye(k)], axis=1)
    return StateSpaceModel(
        basis=basis,
        T=np.eye(k),
        W=W,
        obs_model=ObservationModel(C=decoder.readout.copy(), noise_sigma=init_obs_noise_sigma),
        decoder=decoder,
        mu_prior=uniform_ddc(basis),
    )


# ---------------------------------------------------------------------------
# inference


def predict_prior(mu: DdcVector, T: np.ndarray) -> DdcVector:
    """One-step-ahead DDC under the model: T mu."""
    mu = np.asarray(mu, dtype=np.float64)
    if T.shape[1] != mu.shape[0]:
        raise ValueError(f"T width {T.shape[1]} does not match DDC length {mu.shape[0]}")
    return T @ mu


def recognize(mu_prev: DdcVector, o, W: np.ndarray, T: np.ndarray, basis: StateFeatureBasis) -> DdcVector:
    """One filter step: W [T mu_prev; psi(o)]."""
    mu_prev = np.asarray(mu_prev, dtype=np.float64)
    k = basis.size
    if W.shape != (k, 2 * k):
        raise ValueError(f"W must be ({k}, {2 * k})")
    x = np.concatenate([predict_prior(mu_prev, T), state_features(o, basis)])
    return W @ x


def filter_trajectory(
    observations: np.ndarray,
    model: StateSpaceModel,
    mu_init: DdcVector | None = None,
) -> np.ndarray:
    """Run the recursive filter along a whole observation sequence; (n, K)."""
    obs_feats = state_features_batch(observations, model.basis)
    w1, w2 = model.w_blocks()
    mu0 = model.mu_prior if mu_init is None else np.asarray(mu_init, dtype=np.float64)
    return _kernels.filter_sequence(model.T, w1, w2, obs_feats, np.ascontiguousarray(mu0))


# ---------------------------------------------------------------------------
# learning updates


def sleep_update_W(
    W: np.ndarray,
    mu_prev: np.ndarray,
    obs: np.ndarray,
    latents: np.ndarray,
    T: np.ndarray,
    basis: StateFeatureBasis,
    lr: float,
) -> np.ndarray:
    """One gradient step matching the filter output to psi(s_t) on a sleep
    batch; the gradient (psi(s) - W x) x^T is averaged over the batch."""
    mu_prev = np.atleast_2d(np.asarray(mu_prev, dtype=np.float64))
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    latents = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    x = np.concatenate([mu_prev @ T.T, state_features_batch(obs, basis)], axis=1)
    targets = state_features_batch(latents, basis)
    resid = targets - x @ W.T
    return W + lr * (resid.T @ x) / x.shape[0]


def wake_update_T(T: np.ndarray, mu_t: DdcVector, mu_next: DdcVector, lr: float) -> np.ndarray:
    """One prediction-error step T + lr (mu_{t+1} - T mu_t) mu_t^T."""
    mu_t = np.asarray(mu_t, dtype=np.float64)
    mu_next = np.asarray(mu_next, dtype=np.float64)
    err = mu_next - T @ mu_t
    return T + lr * np.outer(err, mu_t)


def wake_update_T_batch(T: np.ndarray, mus: np.ndarray, mus_next: np.ndarray, lr: float) -> np.ndarray:
    """Batch version of `wake_update_T`, gradient averaged over pairs."""
    err = mus_next - mus @ T.T
    return T + lr * (err.T @ mus) / mus.shape[0]


def fit_transition_batch(mus: np.ndarray, mus_next: np.ndarray, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Closed-form ridge fit of the transition matrix on posterior pairs."""
    return ridge_lstsq(mus, mus_next, ridge).T


def fit_recognition_batch(
    mu_prev: np.ndarray,
    obs: np.ndarray,
    latents: np.ndarray,
    T: np.ndarray,
    basis: StateFeatureBasis,
    ridge: float = DEFAULT_RIDGE,
) -> np.ndarray:
    """Closed-form ridge fit of W on a sleep batch (same objective as
    repeated `sleep_update_W` steps)."""
    x = np.concatenate([mu_prev @ T.T, state_features_batch(obs, basis)], axis=1)
    targets = state_features_batch(latents, basis)
    return ridge_lstsq(x, targets, ridge).T


def fit_observation_model(feats: np.ndarray, obs: np.ndarray, ridge: float = DEFAULT_RIDGE) -> ObservationModel:
    """Regress observations on feature vectors; noise_sigma is the RMS residual.

    The readout is applied to sharp state features psi(s) at generation
    time, so the training inputs must live on that manifold and must not
    already contain the paired observation. During wake the right inputs
    are psi(decode_mean(T mu_{t-1})): features of the decoded one-step
    prediction (see `wake_observation_inputs`). Regressing on the posterior
    mu_t instead leaks o_t's noise into the fit and collapses noise_sigma.
    """
    feats = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    if feats.shape[0] == 0:
        raise InsufficientDataError("cannot fit an observation model from no pairs")
    C = ridge_lstsq(feats, obs, ridge).T
    resid = obs - feats @ C.T
    return ObservationModel(C=C, noise_sigma=float(np.sqrt(np.mean(resid**2))))


def wake_observation_inputs(model: StateSpaceModel, mus: np.ndarray) -> np.ndarray:
    """Leak-free, on-manifold inputs for the wake observation fit: sharp
    features of the decoded one-step prediction from the previous belief.
    Decoded points are clamped into the box, the same constraint the
    generative model itself applies, so degenerate off-box features can
    never enter the regression."""
    priors = np.vstack([model.mu_prior, mus[:-1]]) @ model.T.T
    points = np.clip(priors @ model.decoder.readout.T, 0.0, 1.0)
    return state_features_batch(points, model.basis)


# ---------------------------------------------------------------------------
# sleep-phase generation


def sleep_sample(
    model: StateSpaceModel,
    n_steps: int,
    sleep_noise_sigma: float,
    spec: EnvironmentSpec,
    rng: np.random.Generator,
) -> Trajectory:
    """Simulate latent/observed sequences from the current generative model.

    Sampling a DDC-parameterized transition exactly is not tractable, so the
    next state is drawn as a Gaussian around the decoded one-step prediction
    decode_mean(T psi(s_t)), then passed through the environment's wall
    constraint. Observations come from the learned readout with its fitted
    noise scale.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    s0 = draw_start(spec, rng)
    state_noise = rng.standard_normal((n_steps, 2))
    obs_noise = rng.standard_normal((n_steps, 2))
    wall, active = spec.wall_array()
    basis = model.basis
    states, obs = _kernels.sleep_rollout(
        s0,
        n_steps,
        model.T,
        model.decoder.readout,
        model.obs_model.C,
        basis.centers,
        basis.width,
        basis.trunc_side,
        basis.wall_normal,
        basis.wall_offset,
        float(sleep_noise_sigma),
        float(model.obs_model.noise_sigma),
        state_noise,
        obs_noise,
        wall,
        active,
    )
    return Trajectory(latent=states, observed=obs)


# ---------------------------------------------------------------------------
# diagnostics


def wake_prediction_error(mus: np.ndarray, T: np.ndarray) -> float:
    """Mean ||mu_{t+1} - T mu_t|| over consecutive pairs."""
    err = mus[1:] - mus[:-1] @ T.T
    return float(np.mean(np.linalg.norm(err, axis=1)))


def with_updates(model: StateSpaceModel, **kwargs) -> StateSpaceModel:
    return replace(model, **kwargs)

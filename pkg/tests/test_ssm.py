import numpy as np
import pytest

from ddcsf import _kernels
from ddcsf.environment import EnvironmentSpec
from ddcsf.errors import InsufficientDataError
from ddcsf.features import StateFeatureBasis, state_features, state_features_batch
from ddcsf.ssm import (
    StateSpaceModel,
    filter_trajectory,
    fit_observation_model,
    fit_recognition_batch,
    fit_transition_batch,
    init_state_space_model,
    predict_prior,
    recognize,
    sleep_sample,
    sleep_update_W,
    wake_prediction_error,
    wake_update_T,
    wake_update_T_batch,
    with_updates,
)

WALL = np.array([0.5, 0.0, 0.5, 0.6])


@pytest.fixture(scope="module")
def small_model():
    basis = StateFeatureBasis.lattice(6, 6, 0.3, wall=WALL)
    return init_state_space_model(basis, decoder_grid=25)


def test_predict_prior_cases():
    mu = np.array([0.2, 0.7])
    assert predict_prior(mu, np.eye(2)) == pytest.approx(mu)
    assert predict_prior(mu, np.zeros((2, 2))) == pytest.approx([0.0, 0.0])
    T = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert predict_prior(mu, T) == pytest.approx([0.7, 0.2])
    with pytest.raises(ValueError):
        predict_prior(np.zeros(3), np.eye(2))


def test_recognize_pure_prediction_and_pure_observation(small_model):
    m = small_model
    k = m.basis.size
    rng = np.random.default_rng(0)
    mu_prev = rng.uniform(0, 1, k)
    o = np.array([0.3, 0.8])
    W_pred = np.concatenate([np.eye(k), np.zeros((k, k))], axis=1)
    W_obs = np.concatenate([np.zeros((k, k)), np.eye(k)], axis=1)
    assert recognize(mu_prev, o, W_pred, m.T, m.basis) == pytest.approx(m.T @ mu_prev)
    assert recognize(mu_prev, o, W_obs, m.T, m.basis) == pytest.approx(state_features(o, m.basis))


def test_recognize_superposition_in_first_block(small_model):
    m = small_model
    k = m.basis.size
    rng = np.random.default_rng(1)
    W = rng.normal(size=(k, 2 * k)) * 0.1
    o = np.array([0.6, 0.2])
    mu1, mu2 = rng.uniform(0, 1, k), rng.uniform(0, 1, k)
    obs_part = W[:, k:] @ state_features(o, m.basis)
    lhs = recognize(2.0 * mu1 + 3.0 * mu2, o, W, m.T, m.basis) - obs_part
    rhs = 2.0 * (recognize(mu1, o, W, m.T, m.basis) - obs_part) + 3.0 * (
        recognize(mu2, o, W, m.T, m.basis) - obs_part
    )
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_sleep_update_zero_residual_is_noop(small_model):
    m = small_model
    k = m.basis.size
    latents = np.array([[0.2, 0.2], [0.7, 0.8]])
    obs = latents.copy()
    mu_prev = state_features_batch(latents, m.basis)
    x = np.concatenate([mu_prev @ m.T.T, state_features_batch(obs, m.basis)], axis=1)
    targets = state_features_batch(latents, m.basis)
    W = np.linalg.lstsq(x, targets, rcond=None)[0].T  # zero-residual solution? not exact
    # force exact zero residual instead: targets computed FROM W
    W = np.random.default_rng(2).normal(size=(k, 2 * k)) * 0.05
    exact_targets = x @ W.T
    # build latents whose features equal the current output: bypass via direct call
    W2 = sleep_update_W(W, mu_prev, obs, latents, m.T, m.basis, lr=0.3)
    resid = targets - x @ W.T
    expected = W + 0.3 * (resid.T @ x) / x.shape[0]
    assert W2 == pytest.approx(expected, abs=1e-12)


def test_sleep_update_hand_case():
    # K=1: psi(s)=1, x=(1, 0), W=(0, 0), lr=0.5 -> W' = (0.5, 0)
    basis = StateFeatureBasis(
        centers=np.array([[0.9, 0.5]]),
        width=0.3,
        trunc_side=np.array([1.0]),
        wall_normal=np.array([1.0, 0.0]),
        wall_offset=0.5,
    )
    T = np.array([[1.0]])
    W = np.zeros((1, 2))
    mu_prev = np.array([[1.0]])  # T mu_prev = 1
    obs = np.array([[0.1, 0.5]])  # wrong side of the wall: psi(o) = 0
    latents = np.array([[0.9, 0.5]])  # at the center: psi(s) = 1
    out = sleep_update_W(W, mu_prev, obs, latents, T, basis, lr=0.5)
    assert out == pytest.approx(np.array([[0.5, 0.0]]))


def test_sleep_update_descends_on_fixed_batch(small_model):
    m = small_model
    rng = np.random.default_rng(3)
    n = 64
    latents = rng.uniform(0, 1, (n, 2))
    obs = latents + 0.05 * rng.standard_normal((n, 2))
    mu_prev = state_features_batch(latents, m.basis) + 0.1 * rng.standard_normal((n, m.basis.size))
    W = np.concatenate([np.zeros((m.basis.size, m.basis.size)), np.eye(m.basis.size)], axis=1)
    x = np.concatenate([mu_prev @ m.T.T, state_features_batch(obs, m.basis)], axis=1)
    targets = state_features_batch(latents, m.basis)

    def loss(Wm):
        r = targets - x @ Wm.T
        return float(np.sum(r**2))

    losses = [loss(W)]
    for _ in range(20):
        W = sleep_update_W(W, mu_prev, obs, latents, m.T, m.basis, lr=0.01)
        losses.append(loss(W))
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_wake_update_T_cases():
    # exact prediction: no change
    T = np.array([[0.5]])
    out = wake_update_T(T, np.array([2.0]), np.array([1.0]), lr=0.1)
    assert out == pytest.approx(np.array([[0.5]]))  # 1.0 == 0.5 * 2.0 exactly
    # hand case: T=0, mu=2, mu_next=1, lr=0.1 -> 0.2
    out = wake_update_T(np.array([[0.0]]), np.array([2.0]), np.array([1.0]), lr=0.1)
    assert out == pytest.approx(np.array([[0.2]]))


def test_wake_update_is_descent_step():
    rng = np.random.default_rng(4)
    T = rng.normal(size=(5, 5)) * 0.1
    mu = rng.uniform(0, 1, 5)
    mu_next = rng.uniform(0, 1, 5)
    before = np.linalg.norm(mu_next - T @ mu)
    T2 = wake_update_T(T, mu, mu_next, lr=1e-3)
    after = np.linalg.norm(mu_next - T2 @ mu)
    assert after <= before


def test_wake_batch_stationary_at_optimum():
    rng = np.random.default_rng(5)
    T0 = rng.normal(size=(4, 4)) * 0.2
    mus = rng.uniform(0, 1, (50, 4))
    mus_next = mus @ T0.T  # exactly consistent
    assert wake_update_T_batch(T0, mus, mus_next, lr=0.1) == pytest.approx(T0, abs=1e-12)


def test_transition_batch_recovers_generator():
    rng = np.random.default_rng(6)
    T0 = rng.normal(size=(6, 6)) * 0.3
    mus = rng.uniform(0, 1, (400, 6))
    mus_next = mus @ T0.T
    fit = fit_transition_batch(mus, mus_next, ridge=1e-10)
    assert fit == pytest.approx(T0, abs=1e-6)


def test_online_and_batch_agree_at_optimum():
    # at the least-squares optimum the online gradient sweep must not move T
    rng = np.random.default_rng(7)
    T0 = rng.normal(size=(4, 4)) * 0.25
    mus = rng.uniform(0, 1, (200, 4))
    mus_next = mus @ T0.T
    T_batch = fit_transition_batch(mus, mus_next, ridge=1e-12)
    T_online = np.ascontiguousarray(T_batch.copy())
    _kernels.transition_sgd_sweep(T_online, np.ascontiguousarray(mus), 1e-2)
    assert T_online == pytest.approx(T_batch, abs=1e-8)


def test_recognition_batch_and_sgd_agree_at_optimum(small_model):
    m = small_model
    k = m.basis.size
    rng = np.random.default_rng(8)
    n = 300
    latents = rng.uniform(0, 1, (n, 2))
    obs = latents + 0.05 * rng.standard_normal((n, 2))
    mu_prev = state_features_batch(latents, m.basis)
    W_fit = fit_recognition_batch(mu_prev, obs, latents, m.T, m.basis, ridge=1e-9)
    # one more gradient step from the optimum barely moves it
    W_after = sleep_update_W(W_fit, mu_prev, obs, latents, m.T, m.basis, lr=0.05)
    assert np.max(np.abs(W_after - W_fit)) < 1e-6


def test_fit_observation_model_cases():
    rng = np.random.default_rng(9)
    C0 = rng.normal(size=(2, 8))
    feats = rng.uniform(0, 1, (500, 8))
    obs = feats @ C0.T
    om = fit_observation_model(feats, obs, ridge=1e-12)
    assert om.C == pytest.approx(C0, abs=1e-6)
    assert om.noise_sigma < 1e-7

    noisy = obs + 0.1 * rng.standard_normal(obs.shape)
    om2 = fit_observation_model(feats, noisy)
    assert om2.noise_sigma == pytest.approx(0.1, abs=0.01)

    om3 = fit_observation_model(np.ones((5, 3)), np.ones((5, 2)))
    assert np.all(np.isfinite(om3.C))

    with pytest.raises(InsufficientDataError):
        fit_observation_model(np.zeros((0, 3)), np.zeros((0, 2)))


def test_sleep_sample_shapes_and_fixed_point(small_model):
    m = with_updates(small_model, T=np.eye(small_model.basis.size))
    spec = EnvironmentSpec.default()
    traj = sleep_sample(m, 50, 0.0, spec, np.random.default_rng(10))
    assert len(traj) == 50
    assert traj.observed.shape == (50, 2)
    # sigma=0 with near-identity decoded dynamics: steps bounded by the
    # decoder's reconstruction error
    moves = np.linalg.norm(np.diff(traj.latent, axis=0), axis=1)
    assert np.all(moves < 5e-2)


def test_sleep_sample_mean_matches_decoded_prediction(small_model):
    # Monte Carlo: conditional mean of s_{t+1} equals decode_mean(T psi(s))
    m = small_model
    spec = EnvironmentSpec.default()
    basis = m.basis
    s0 = np.array([0.75, 0.75])  # far from walls so the constraint is inert
    sigma = 0.02
    wall, active = spec.wall_array()
    n = 10_000
    rng = np.random.default_rng(11)
    samples = np.empty((n, 2))
    for i in range(n):
        states, _ = _kernels.sleep_rollout(
            s0, 2, m.T, m.decoder.readout, m.obs_model.C,
            basis.centers, basis.width, basis.trunc_side, basis.wall_normal, basis.wall_offset,
            sigma, 0.0, rng.standard_normal((2, 2)), rng.standard_normal((2, 2)), wall, active,
        )
        samples[i] = states[1]
    expected = m.decoder.readout @ (m.T @ state_features(s0, basis))
    mc_err = sigma / np.sqrt(n)
    assert np.all(np.abs(samples.mean(axis=0) - expected) < 4 * mc_err)


def test_filter_trajectory_runs_and_is_finite(small_model):
    rng = np.random.default_rng(12)
    obs = rng.uniform(0, 1, (100, 2))
    mus = filter_trajectory(obs, small_model)
    assert mus.shape == (100, small_model.basis.size)
    assert np.all(np.isfinite(mus))


def test_wake_prediction_error_zero_for_consistent_dynamics():
    rng = np.random.default_rng(13)
    T = rng.normal(size=(4, 4)) * 0.3
    mus = [rng.uniform(0, 1, 4)]
    for _ in range(20):
        mus.append(T @ mus[-1])
    assert wake_prediction_error(np.array(mus), T) < 1e-12


def test_model_shape_validation(small_model):
    k = small_model.basis.size
    with pytest.raises(ValueError):
        StateSpaceModel(
            basis=small_model.basis,
            T=np.eye(k + 1),
            W=small_model.W,
            obs_model=small_model.obs_model,
            decoder=small_model.decoder,
            mu_prior=small_model.mu_prior,
        )

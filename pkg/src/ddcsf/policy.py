"""Reward regression, values, one-step look-ahead Q, and generalized
policy iteration under the three observability conditions.

The Q-value of an action is r + gamma * w^T U P (feat x phi(a)), where
``feat`` is the condition's feature stream: true latent features psi(s),
the filtered belief mu(O), or raw observation features psi(o). The argmax
runs over a discretized ring of candidate directions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels, ssm
from .environment import EnvironmentSpec, RewardField, Trajectory, draw_start, rewards_batch, rollout
from .features import (
    DEFAULT_RIDGE,
    ActionFeatureBasis,
    StateFeatureBasis,
    action_features,
    action_features_batch,
    ridge_lstsq,
    state_features_batch,
)
from .ssm import StateSpaceModel
from .streams import derive_rng
from .successor import SuccessorMatrix, td_sweep_sf


class Condition(enum.Enum):
    LATENT = "latent"
    INFERRED = "inferred"
    OBSERVED = "observed"

    @property
    def code(self) -> int:
        return {"latent": 0, "inferred": 1, "observed": 2}[self.value]


@dataclass(frozen=True)
class RewardWeights:
    w_rew: np.ndarray  # (K,)
    fit_residual: float = 0.0  # RMS residual of the fit, reported alongside

    def __post_init__(self):
        object.__setattr__(self, "w_rew", np.ascontiguousarray(np.asarray(self.w_rew, dtype=np.float64)))
        if not np.all(np.isfinite(self.w_rew)):
            raise ValueError("reward weights must be finite")


@dataclass(frozen=True)
class BilinearActionModel:
    """P maps the Kronecker product feat x phi(a) (index i*A + j) to the
    expected next feature vector."""

    P: np.ndarray  # (K, K*A)
    action_basis: ActionFeatureBasis

    def __post_init__(self):
        object.__setattr__(self, "P", np.ascontiguousarray(np.asarray(self.P, dtype=np.float64)))
        if self.P.shape[1] % self.action_basis.size != 0:
            raise ValueError("P width must be K * A")

    def predict(self, feat: np.ndarray, a: float) -> np.ndarray:
        return self.P @ np.kron(feat, action_features(a, self.action_basis))


@dataclass(frozen=True)
class GpiConfig:
    gamma: float = 0.99
    n_cycles: int = 500
    steps_per_episode: int = 500
    action_candidates: int = 16
    positive_return_filter: bool = True
    eval_episodes: int = 100
    epsilon0: float = 0.1  # linearly decayed to 0 over the first half of cycles
    explore_transitions: int = 10_000
    sf_lr0: float = 5e-3
    sf_k0: float = 2e4
    t_lr: float = 1e-2
    ridge: float = DEFAULT_RIDGE
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError("gamma must lie in [0, 1)")
        if self.n_cycles < 0 or self.steps_per_episode < 2:
            raise ValueError("need n_cycles >= 0 and steps_per_episode >= 2")
        if self.action_candidates < 1:
            raise ValueError("need at least one candidate action")


@dataclass
class Agent:
    condition: Condition
    gamma: float
    basis: StateFeatureBasis
    action_basis: ActionFeatureBasis
    candidates: np.ndarray  # (C,) candidate angles
    U: np.ndarray  # (K, K) successor matrix for the condition's stream
    w_rew: np.ndarray  # (K,)
    bilinear: BilinearActionModel
    T_pi: Optional[np.ndarray] = None  # policy-conditioned latent dynamics
    model: Optional[StateSpaceModel] = None  # needed for INFERRED
    sf_steps: float = 0.0  # TD update counter (learning-rate schedule state)

    def successor(self) -> SuccessorMatrix:
        method = "td_sleep" if self.condition is Condition.LATENT else "td_wake"
        return SuccessorMatrix(U=self.U, discount=self.gamma, method=method)


# ---------------------------------------------------------------------------
# fits and point evaluations


def fit_reward_weights(feats: np.ndarray, rewards: np.ndarray, ridge: float = DEFAULT_RIDGE) -> RewardWeights:
    """Ridge regression of observed rewards on feature vectors."""
    feats = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    rewards = np.asarray(rewards, dtype=np.float64).ravel()
    if feats.shape[0] == 0 or rewards.shape[0] == 0:
        raise ValueError("cannot fit reward weights from empty data")
    if feats.shape[0] != rewards.shape[0]:
        raise ValueError("features and rewards must have equal length")
    w = ridge_lstsq(feats, rewards[:, None], ridge)[:, 0]
    resid = rewards - feats @ w
    return RewardWeights(w_rew=w, fit_residual=float(np.sqrt(np.mean(resid**2))))


def value(w, U, feat: np.ndarray) -> float:
    """V = w^T U feat."""
    wv = w.w_rew if isinstance(w, RewardWeights) else np.asarray(w, dtype=np.float64)
    mat = U.U if isinstance(U, SuccessorMatrix) else np.asarray(U, dtype=np.float64)
    feat = np.asarray(feat, dtype=np.float64)
    if mat.shape[1] != feat.shape[0] or wv.shape[0] != mat.shape[0]:
        raise ValueError("shape mismatch between weights, successor matrix, and features")
    return float(wv @ (mat @ feat))


def fit_bilinear_dynamics(
    feats_t: np.ndarray,
    actions: np.ndarray,
    feats_next: np.ndarray,
    action_basis: ActionFeatureBasis,
    ridge: float = DEFAULT_RIDGE,
) -> BilinearActionModel:
    """Least-squares fit of next features on feat x phi(a)."""
    feats_t = np.atleast_2d(np.asarray(feats_t, dtype=np.float64))
    feats_next = np.atleast_2d(np.asarray(feats_next, dtype=np.float64))
    actions = np.asarray(actions, dtype=np.float64).ravel()
    if feats_t.shape[0] == 0:
        raise ValueError("cannot fit bilinear dynamics from empty data")
    if not (feats_t.shape[0] == actions.shape[0] == feats_next.shape[0]):
        raise ValueError("transition arrays must have equal length")
    phis = action_features_batch(actions, action_basis)  # (N, A)
    design = (feats_t[:, :, None] * phis[:, None, :]).reshape(feats_t.shape[0], -1)
    P = ridge_lstsq(design, feats_next, ridge).T
    return BilinearActionModel(P=P, action_basis=action_basis)


def q_value(
    feat: np.ndarray,
    a: float,
    r_here: float,
    w,
    U,
    bilinear: BilinearActionModel,
    gamma: float,
) -> float:
    """One-step look-ahead: r + gamma * w^T U E[feat' | feat, a]."""
    wv = w.w_rew if isinstance(w, RewardWeights) else np.asarray(w, dtype=np.float64)
    mat = U.U if isinstance(U, SuccessorMatrix) else np.asarray(U, dtype=np.float64)
    return float(r_here + gamma * wv @ (mat @ bilinear.predict(np.asarray(feat, dtype=np.float64), a)))


def greedy_action(
    feat: np.ndarray,
    r_here: float,
    w,
    U,
    bilinear: BilinearActionModel,
    gamma: float,
    candidates: np.ndarray,
) -> float:
    """Argmax of q_value over candidate angles; ties go to the lowest index."""
    candidates = np.asarray(candidates, dtype=np.float64)
    if candidates.size == 0:
        raise ValueError("need at least one candidate action")
    qs = [q_value(feat, a, r_here, w, U, bilinear, gamma) for a in candidates]
    return float(candidates[int(np.argmax(qs))])


# ---------------------------------------------------------------------------
# episodes


def _q_mat(agent: Agent) -> np.ndarray:
    """(K, A) matrix m with scores(a) = phi(a) . (feat @ m), the part of Q
    that varies across candidates."""
    k = agent.basis.size
    a = agent.action_basis.size
    lin = (agent.w_rew @ agent.U) @ agent.bilinear.P  # (K*A,)
    return np.ascontiguousarray(lin.reshape(k, a))


def run_episode(
    agent: Agent,
    spec: EnvironmentSpec,
    n_steps: int,
    epsilon: float,
    rng: np.random.Generator,
    q_mat: np.ndarray | None = None,
) -> Trajectory:
    """One fixed-length episode under the agent's epsilon-greedy policy.

    Returns a Trajectory whose ``feats`` attribute (stashed on the object)
    is the condition's per-step feature stream.
    """
    basis = agent.basis
    wall, active = spec.wall_array()
    s0 = draw_start(spec, rng)
    eps_u = rng.uniform(0.0, 1.0, n_steps - 1)
    act_u = rng.uniform(0.0, 1.0, n_steps - 1)
    obs_noise = spec.obs_noise_sigma * rng.standard_normal((n_steps, 2))
    if agent.condition is Condition.INFERRED:
        model = agent.model
        T, (w1, w2) = model.T, model.w_blocks()
        mu_init = np.ascontiguousarray(model.mu_prior)
    else:
        k = basis.size
        T = np.zeros((k, k))
        w1 = np.zeros((k, k))
        w2 = np.zeros((k, k))
        mu_init = np.zeros(k)
    if q_mat is None:
        q_mat = _q_mat(agent)
    cand_phis = action_features_batch(agent.candidates, agent.action_basis)
    states, obs, feats, actions = _kernels.greedy_episode(
        s0,
        n_steps,
        spec.step_length,
        wall,
        active,
        basis.centers,
        basis.width,
        basis.trunc_side,
        basis.wall_normal,
        basis.wall_offset,
        agent.condition.code,
        T,
        w1,
        w2,
        mu_init,
        q_mat,
        np.ascontiguousarray(cand_phis),
        np.ascontiguousarray(agent.candidates),
        float(epsilon),
        eps_u,
        act_u,
        obs_noise,
    )
    traj = Trajectory(latent=states, observed=obs, actions=actions)
    traj.feats = feats
    return traj


def condition_features(traj: Trajectory, condition: Condition, model: StateSpaceModel) -> np.ndarray:
    """The feature stream an agent in the given condition would see."""
    if condition is Condition.LATENT:
        return state_features_batch(traj.latent, model.basis)
    if condition is Condition.OBSERVED:
        return state_features_batch(traj.observed, model.basis)
    return ssm.filter_trajectory(traj.observed, model)


# ---------------------------------------------------------------------------
# generalized policy iteration


@dataclass
class GpiResult:
    agent: Agent
    episode_returns: np.ndarray  # (n_cycles,) return of each training episode
    updated: np.ndarray  # (n_cycles,) bool, whether the episode updated the agent


class _RewardAccumulator:
    """Running normal equations for the cumulative (feature, reward) replay."""

    def __init__(self, k: int, ridge: float):
        self.gram = np.zeros((k, k))
        self.rhs = np.zeros(k)
        self.ridge = ridge
        self.count = 0
        self.sq_sum = 0.0

    def add(self, feats: np.ndarray, rewards: np.ndarray) -> None:
        self.gram += feats.T @ feats
        self.rhs += feats.T @ rewards
        self.count += feats.shape[0]
        self.sq_sum += float(rewards @ rewards)

    def solve(self) -> np.ndarray:
        return np.linalg.solve(self.gram + self.ridge * np.eye(self.gram.shape[0]), self.rhs)


def generalized_policy_iteration(
    config: GpiConfig,
    condition: Condition,
    spec: EnvironmentSpec,
    fieldspec: RewardField,
    model: StateSpaceModel,
    action_basis: ActionFeatureBasis | None = None,
) -> GpiResult:
    """Alternate greedy episodes with TD successor-feature updates.

    Bootstraps from a random-walk exploration phase that fits the bilinear
    action model (frozen afterwards) and warm-starts the successor matrix,
    reward weights, and policy dynamics; pure greedy action selection from
    a zero-value start has no reward signal to climb.
    """
    if action_basis is None:
        action_basis = ActionFeatureBasis.ring(10, 2.0)
    basis = model.basis
    k = basis.size
    candidates = 2.0 * np.pi * np.arange(config.action_candidates) / config.action_candidates
    tag = condition.value

    explore = rollout(
        "random",
        config.explore_transitions + 1,
        spec,
        fieldspec,
        derive_rng(config.seed, f"gpi/{tag}/explore"),
    )
    feats = condition_features(explore, condition, model)
    rewards = explore.rewards
    acc = _RewardAccumulator(k, config.ridge)
    acc.add(feats, rewards)

    bilinear = fit_bilinear_dynamics(feats[:-1], explore.actions, feats[1:], action_basis, config.ridge)
    U, sf_steps = td_sweep_sf(np.eye(k), feats, config.gamma, config.sf_lr0, config.sf_k0, 0.0)
    w_rew = acc.solve()
    T_pi = None
    if condition is not Condition.OBSERVED:
        T_pi = ssm.fit_transition_batch(feats[:-1], feats[1:], config.ridge)

    agent = Agent(
        condition=condition,
        gamma=config.gamma,
        basis=basis,
        action_basis=action_basis,
        candidates=candidates,
        U=U,
        w_rew=w_rew,
        bilinear=bilinear,
        T_pi=T_pi,
        model=model if condition is Condition.INFERRED else None,
        sf_steps=sf_steps,
    )

    half = max(config.n_cycles // 2, 1)
    returns = np.zeros(config.n_cycles)
    updated = np.zeros(config.n_cycles, dtype=bool)
    for cycle in range(1, config.n_cycles + 1):
        epsilon = config.epsilon0 * max(0.0, 1.0 - (cycle - 1) / half)
        traj = run_episode(
            agent,
            spec,
            config.steps_per_episode,
            epsilon,
            derive_rng(config.seed, f"gpi/{tag}/cycle={cycle}"),
        )
        ep_rewards = rewards_batch(traj.latent, fieldspec)
        ep_return = float(ep_rewards.sum())
        returns[cycle - 1] = ep_return
        if config.positive_return_filter and ep_return <= 0.0:
            continue
        updated[cycle - 1] = True
        agent.U, agent.sf_steps = td_sweep_sf(
            agent.U, traj.feats, config.gamma, config.sf_lr0, config.sf_k0, agent.sf_steps
        )
        acc.add(traj.feats, ep_rewards)
        agent.w_rew = acc.solve()
        if agent.T_pi is not None:
            T_pi = agent.T_pi.copy()
            _kernels.transition_sgd_sweep(T_pi, np.ascontiguousarray(traj.feats), config.t_lr)
            agent.T_pi = T_pi
    return GpiResult(agent=agent, episode_returns=returns, updated=updated)


def evaluate_policy(
    agent: Agent,
    n_episodes: int,
    spec: EnvironmentSpec,
    fieldspec: RewardField,
    seed: int,
    steps_per_episode: int = 500,
) -> np.ndarray:
    """Undiscounted returns of fixed-length greedy episodes from uniform
    random starts; episode j uses its own derived stream."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    q_mat = _q_mat(agent)
    tag = agent.condition.value
    out = np.zeros(n_episodes)
    for j in range(n_episodes):
        traj = run_episode(
            agent,
            spec,
            steps_per_episode,
            0.0,
            derive_rng(seed, f"eval/{tag}/episode={j}"),
            q_mat=q_mat,
        )
        out[j] = float(rewards_batch(traj.latent, fieldspec).sum())
    return out

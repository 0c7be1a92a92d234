"""Distributional successor features over a learned latent state-space model.

A 2D box world is observed through Gaussian noise; a wake-sleep loop
learns a DDC-parameterized latent dynamics model and a recursive
recognition filter; successor features over the latent features support
value computation and generalized policy iteration under three
observability conditions (latent / inferred / observed).
"""

from ._kernels import NUMBA_ENABLED, backend_name
from .environment import EnvironmentSpec, RewardField, Trajectory, observe, reward, rollout, step
from .features import (
    ActionFeatureBasis,
    DdcVector,
    MeanDecoder,
    StateFeatureBasis,
    action_features,
    decode_mean,
    fit_mean_decoder,
    state_features,
)
from .policy import (
    Agent,
    BilinearActionModel,
    Condition,
    GpiConfig,
    RewardWeights,
    evaluate_policy,
    fit_bilinear_dynamics,
    fit_reward_weights,
    generalized_policy_iteration,
    greedy_action,
    q_value,
    value,
)
from .ssm import (
    ObservationModel,
    StateSpaceModel,
    fit_observation_model,
    init_state_space_model,
    predict_prior,
    recognize,
    sleep_sample,
    sleep_update_W,
    wake_update_T,
)
from .successor import (
    DiscreteMdp,
    FixedPointSolver,
    SuccessorMatrix,
    discrete_sr_oracle,
    distributional_sf,
    sf_analytic,
    sf_fixed_point,
    sf_td_update,
)
from .wakesleep import WakeSleepConfig, WakeSleepResult, run_wake_sleep

__version__ = "0.1.0"

"""Successor features over the latent feature space.

Three interchangeable routes to the same object U with M(s) = U psi(s)
and distributional SFs U mu:

* ``sf_analytic``    - direct linear solve of (I - gamma T) U = I.
* ``sf_fixed_point`` - relaxation dynamics whose equilibrium applies
  (I - gamma T)^{-1} to one DDC vector without forming U.
* ``sf_td_update``   - temporal-difference learning from feature
  transitions; the same rule covers latent features, filtered beliefs,
  and one-hot features of a discrete MDP.

``discrete_sr_oracle`` supplies the exact discrete-state ground truth the
TD route is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NumericError

SOLVE_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class SuccessorMatrix:
    U: np.ndarray  # (K, K)
    discount: float
    method: str  # analytic | fixed_point | td_sleep | td_wake

    def __post_init__(self):
        if not (0.0 <= self.discount < 1.0):
            raise ValueError("discount must lie in [0, 1)")
        if not np.all(np.isfinite(self.U)):
            raise ValueError("successor matrix must be finite")


@dataclass(frozen=True)
class FixedPointSolver:
    tau: float = 1.0
    dt: float = 0.5
    max_iters: int = 100_000
    tol: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.dt / self.tau <= 1.0):
            raise ValueError("dt/tau must lie in (0, 1]")
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class DiscreteMdp:
    P: np.ndarray  # (N, N) row-stochastic
    discount: float

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.float64)
        object.__setattr__(self, "P", P)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("P must be square")
        if np.any(P < 0.0):
            raise ValueError("transition probabilities must be non-negative")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("transition matrix rows must sum to 1")
        if not (0.0 <= self.discount < 1.0):
            raise ValueError("discount must lie in [0, 1)")


def spectral_radius(M: np.ndarray, iters: int = 50) -> float:
    """Power-iteration estimate of the spectral radius."""
    k = M.shape[0]
    v = 1.0 + 0.01 * np.arange(k)
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = M @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return float(np.linalg.norm(M @ v))


def _check_contraction(T: np.ndarray, gamma: float) -> None:
    rho = spectral_radius(gamma * T)
    if rho >= 1.0:
        raise NumericError(
            f"spectral radius of gamma*T is {rho:.6f} >= 1; successor features do not converge"
        )


def sf_analytic(T: np.ndarray, gamma: float) -> SuccessorMatrix:
    """U = (I - gamma T)^{-1} by a dense linear solve with residual check."""
    T = np.asarray(T, dtype=np.float64)
    _check_contraction(T, gamma)
    k = T.shape[0]
    A = np.eye(k) - gamma * T
    U = np.linalg.solve(A, np.eye(k))
    residual = float(np.max(np.abs(A @ U - np.eye(k))))
    if residual > SOLVE_RESIDUAL_TOL:
        raise NumericError(f"linear solve residual {residual:.3e} exceeds {SOLVE_RESIDUAL_TOL:.1e}")
    return SuccessorMatrix(U=U, discount=gamma, method="analytic")


def sf_fixed_point(
    T: np.ndarray,
    gamma: float,
    mu: np.ndarray,
    solver: FixedPointSolver = FixedPointSolver(),
) -> np.ndarray:
    """Relax tau dx/dt = -x + gamma T x + mu to its equilibrium
    (I - gamma T)^{-1} mu; stops when the residual max-norm drops below tol."""
    T = np.asarray(T, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    _check_contraction(T, gamma)
    rate = solver.dt / solver.tau
    x = mu.copy()
    for _ in range(solver.max_iters):
        residual = gamma * (T @ x) + mu - x
        if float(np.max(np.abs(residual))) < solver.tol:
            return x
        x = x + rate * residual
    raise NumericError(
        f"fixed-point iteration did not reach tol={solver.tol:.1e} in {solver.max_iters} steps; "
        f"residual={float(np.max(np.abs(gamma * (T @ x) + mu - x))):.3e}"
    )


def sf_td_update(U: np.ndarray, feat_t: np.ndarray, feat_next: np.ndarray, gamma: float, lr: float) -> np.ndarray:
    """One TD step on feature predictions: delta = psi_t + gamma U psi_{t+1} - U psi_t."""
    delta = feat_t + gamma * (U @ feat_next) - U @ feat_t
    return U + lr * np.outer(delta, feat_t)


def td_sweep_sf(
    U: np.ndarray,
    feats: np.ndarray,
    gamma: float,
    lr0: float = 0.1,
    k0: float = 1e3,
    step0: float = 0.0,
) -> tuple[np.ndarray, float]:
    """TD-update U along a whole feature sequence.

    The learning rate decays harmonically, lr = lr0 / (1 + step/k0), with
    ``step`` counting updates across calls (pass the returned counter back
    in). Returns the updated matrix and the new counter.
    """
    U = np.ascontiguousarray(U, dtype=np.float64).copy()
    feats = np.ascontiguousarray(feats, dtype=np.float64)
    step = _kernels.td_sweep(U, feats, float(gamma), float(lr0), float(k0), float(step0))
    return U, float(step)


def distributional_sf(U, mu: np.ndarray) -> np.ndarray:
    """Posterior expectation of the successor features: U @ mu."""
    mat = U.U if isinstance(U, SuccessorMatrix) else np.asarray(U, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if mat.shape[1] != mu.shape[-1]:
        raise ValueError(f"successor matrix width {mat.shape[1]} does not match DDC length {mu.shape[-1]}")
    return mat @ mu if mu.ndim == 1 else mu @ mat.T


def discrete_sr_oracle(mdp: DiscreteMdp) -> np.ndarray:
    """Exact discrete successor matrix M = (I - gamma P)^{-1}."""
    n = mdp.P.shape[0]
    A = np.eye(n) - mdp.discount * mdp.P
    try:
        return np.linalg.solve(A, np.eye(n))
    except np.linalg.LinAlgError as exc:  # unreachable for gamma < 1
        raise NumericError(f"discrete successor system is singular: {exc}") from exc

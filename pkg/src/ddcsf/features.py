"""Feature bases over states and actions, DDC vectors, and linear decoders.

A distribution p over states is represented throughout by the vector of
expected feature values E_p[psi(s)] (a distributed distributional code).
A deterministic state encodes as psi(s) itself. DDC vectors are plain
float64 numpy arrays of length K; no wrapper class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InsufficientDataError

# A DDC vector: length-K array of expected feature values.
DdcVector = np.ndarray

DEFAULT_RIDGE = 1e-6


@dataclass(frozen=True)
class StateFeatureBasis:
    """Gaussian bumps on a lattice over the unit box, with optional
    half-plane truncation next to an internal wall.

    ``trunc_side[i]`` is +1/-1 if feature i is active only where
    ``sign(wall_normal . s - wall_offset)`` matches, and 0 if untruncated.
    Points exactly on the wall line count as active for either side.
    """

    centers: np.ndarray  # (K, 2)
    width: float
    trunc_side: np.ndarray = field(default=None)  # (K,) of {-1, 0, +1}
    wall_normal: np.ndarray = field(default=None)  # (2,)
    wall_offset: float = 0.0

    def __post_init__(self):
        centers = np.ascontiguousarray(np.asarray(self.centers, dtype=np.float64))
        object.__setattr__(self, "centers", centers)
        if centers.ndim != 2 or centers.shape[1] != 2 or centers.shape[0] < 1:
            raise ValueError("centers must be a (K, 2) array with K >= 1")
        if np.any(centers < 0.0) or np.any(centers > 1.0):
            raise ValueError("all feature centers must lie inside the unit box")
        if not self.width > 0.0:
            raise ValueError("feature width must be positive")
        if self.trunc_side is None:
            object.__setattr__(self, "trunc_side", np.zeros(centers.shape[0]))
        else:
            object.__setattr__(
                self, "trunc_side", np.ascontiguousarray(np.asarray(self.trunc_side, dtype=np.float64))
            )
        if self.wall_normal is None:
            object.__setattr__(self, "wall_normal", np.zeros(2))
        else:
            object.__setattr__(
                self, "wall_normal", np.ascontiguousarray(np.asarray(self.wall_normal, dtype=np.float64))
            )

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    @staticmethod
    def lattice(
        nx: int = 10,
        ny: int = 10,
        width: float = 0.3,
        wall: np.ndarray | None = None,
        trunc_factor: float = 2.0,
    ) -> "StateFeatureBasis":
        """Regular nx-by-ny lattice of cell centers over the unit box.

        When ``wall`` (a segment ``[x0, y0, x1, y1]``) is given, features
        whose center lies within ``trunc_factor * width`` of the wall line,
        measured perpendicular to it and within the segment's span, are
        truncated to the half-plane containing their center. Centers whose
        perpendicular foot falls beyond the segment ends stay untruncated,
        so the feature field remains smooth in the open region around the
        wall tip.
        """
        xs = (np.arange(nx) + 0.5) / nx
        ys = (np.arange(ny) + 0.5) / ny
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        centers = np.column_stack([gx.ravel(), gy.ravel()])
        k = centers.shape[0]
        trunc_side = np.zeros(k)
        wall_normal = np.zeros(2)
        wall_offset = 0.0
        if wall is not None:
            wall = np.asarray(wall, dtype=np.float64)
            a, b = wall[:2], wall[2:]
            tangent = b - a
            length = float(np.hypot(*tangent))
            if length > 0.0:
                tangent = tangent / length
                wall_normal = np.array([-tangent[1], tangent[0]])
                wall_offset = float(wall_normal @ a)
                rel = centers - a
                along = rel @ tangent
                perp = centers @ wall_normal - wall_offset
                near = (np.abs(perp) < trunc_factor * width) & (along >= 0.0) & (along <= length)
                trunc_side[near] = np.sign(perp[near])
        return StateFeatureBasis(centers, width, trunc_side, wall_normal, wall_offset)


@dataclass(frozen=True)
class ActionFeatureBasis:
    """Circular bump tuning curves exp(kappa * (cos(a - theta_j) - 1)),
    peak value 1 at the preferred angle."""

    preferred_angles: np.ndarray  # (A,), strictly increasing in [0, 2pi)
    concentration: float = 2.0

    def __post_init__(self):
        angles = np.ascontiguousarray(np.asarray(self.preferred_angles, dtype=np.float64))
        object.__setattr__(self, "preferred_angles", angles)
        if angles.ndim != 1 or angles.shape[0] < 1:
            raise ValueError("need at least one preferred angle")
        if np.any(angles < 0.0) or np.any(angles >= 2.0 * np.pi) or np.any(np.diff(angles) <= 0.0):
            raise ValueError("preferred angles must be strictly increasing in [0, 2pi)")

    @property
    def size(self) -> int:
        return self.preferred_angles.shape[0]

    @staticmethod
    def ring(n: int = 10, concentration: float = 2.0) -> "ActionFeatureBasis":
        return ActionFeatureBasis(2.0 * np.pi * np.arange(n) / n, concentration)


@dataclass(frozen=True)
class MeanDecoder:
    """Linear readout alpha with s approximately alpha @ psi(s)."""

    readout: np.ndarray  # (2, K)

    def __post_init__(self):
        object.__setattr__(self, "readout", np.ascontiguousarray(np.asarray(self.readout, dtype=np.float64)))


def state_features(s, basis: StateFeatureBasis) -> DdcVector:
    """Evaluate psi(s) for a single 2D point."""
    point = np.asarray(s, dtype=np.float64).reshape(1, 2)
    return _kernels.features_batch(
        point, basis.centers, basis.width, basis.trunc_side, basis.wall_normal, basis.wall_offset
    )[0]


def state_features_batch(points: np.ndarray, basis: StateFeatureBasis) -> np.ndarray:
    """Evaluate psi at each row of ``points``; returns (N, K)."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    return _kernels.features_batch(
        pts, basis.centers, basis.width, basis.trunc_side, basis.wall_normal, basis.wall_offset
    )


def action_features(a: float, basis: ActionFeatureBasis) -> np.ndarray:
    """Evaluate phi(a); angles are taken modulo 2pi."""
    return np.exp(basis.concentration * (np.cos(a - basis.preferred_angles) - 1.0))


def action_features_batch(angles: np.ndarray, basis: ActionFeatureBasis) -> np.ndarray:
    angles = np.asarray(angles, dtype=np.float64)
    return np.exp(basis.concentration * (np.cos(angles[:, None] - basis.preferred_angles[None, :]) - 1.0))


def uniform_ddc(basis: StateFeatureBasis, resolution: int = 50) -> DdcVector:
    """DDC of the uniform distribution over the box (grid average of psi).

    Used as the prior belief before the first observation arrives.
    """
    xs = (np.arange(resolution) + 0.5) / resolution
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return state_features_batch(pts, basis).mean(axis=0)


def ridge_lstsq(X: np.ndarray, Y: np.ndarray, ridge: float) -> np.ndarray:
    """Solve min ||Y - X B||^2 + ridge ||B||^2 for B of shape (X.shape[1], Y.shape[1])."""
    gram = X.T @ X
    if ridge > 0.0:
        gram = gram + ridge * np.eye(gram.shape[0])
    else:
        rank = np.linalg.matrix_rank(gram)
        if rank < gram.shape[0]:
            raise InsufficientDataError(
                f"normal equations are rank deficient ({rank} < {gram.shape[0]}) and ridge is 0"
            )
    return np.linalg.solve(gram, X.T @ Y)


def scaled_ridge_lstsq(X: np.ndarray, Y: np.ndarray, rel: float) -> np.ndarray:
    """Ridge solve with the penalty scaled to the data: lambda = rel * mean
    diagonal of the gram matrix. Directions the data barely excites are
    pulled to zero, which keeps downstream recursions stable."""
    gram = X.T @ X
    lam = rel * float(np.trace(gram)) / gram.shape[0]
    return np.linalg.solve(gram + lam * np.eye(gram.shape[0]), X.T @ Y)


def fit_mean_decoder(states: np.ndarray, feats: np.ndarray, ridge: float = DEFAULT_RIDGE) -> MeanDecoder:
    """Least-squares readout alpha minimizing sum ||s - alpha psi(s)||^2 + ridge ||alpha||^2."""
    states = np.asarray(states, dtype=np.float64)
    feats = np.asarray(feats, dtype=np.float64)
    if states.size == 0 or feats.size == 0:
        raise InsufficientDataError("cannot fit a decoder from an empty sample list")
    if states.shape[0] != feats.shape[0]:
        raise ValueError("states and features must have matching lengths")
    coef = ridge_lstsq(feats, states, ridge)  # (K, 2)
    return MeanDecoder(coef.T)


def grid_mean_decoder(basis: StateFeatureBasis, resolution: int = 40, ridge: float = DEFAULT_RIDGE) -> MeanDecoder:
    """Fit the readout on a dense grid over the box; depends only on the basis."""
    xs = (np.arange(resolution) + 0.5) / resolution
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return fit_mean_decoder(pts, state_features_batch(pts, basis), ridge)


def decode_mean(v: DdcVector, dec: MeanDecoder) -> np.ndarray:
    """Point estimate alpha @ v for a DDC vector v."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != dec.readout.shape[1]:
        raise ValueError(f"DDC length {v.shape[-1]} does not match decoder width {dec.readout.shape[1]}")
    return v @ dec.readout.T if v.ndim > 1 else dec.readout @ v

"""Hot inner-loop kernels, in numba and pure-numpy variants.

Sequential recursions dominate runtime at experiment scale: belief
filtering, TD sweeps over episodes, and greedy/random-walk rollouts all
carry state from step t to t+1 and cannot be vectorized across time.
Each kernel therefore exists twice:

* ``_<name>_loops`` - scalar loops, compiled with ``@njit`` when numba
  is active; this is the default execution path.
* ``_<name>_numpy`` - the fallback, using vectorized numpy calls where
  the recursion allows.

Set ``DDCSF_NUMBA=0`` (or ``false``/``no``/``off``) before import to
select the fallback package-wide. ``benchmarks/bench_kernels.py`` times
one path against the other.

Kernels are deterministic: all randomness is pre-drawn by the caller and
passed in as arrays, and nothing here spawns threads.
"""

from __future__ import annotations

import math
import os

import numpy as np


def _env_wants_numba() -> bool:
    value = os.environ.get("DDCSF_NUMBA", "1").strip().lower()
    return value not in ("0", "false", "no", "off")


NUMBA_ENABLED = False
if _env_wants_numba():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dependency
        NUMBA_ENABLED = False


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# geometry


def _proper_cross_loops(px, py, qx, qy, ax, ay, bx, by):
    # strict segment crossing: endpoints merely touching the wall line do
    # not count, so a move starting exactly on the wall stays legal
    d1 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    d2 = (bx - ax) * (qy - ay) - (by - ay) * (qx - ax)
    d3 = (qx - px) * (ay - py) - (qy - py) * (ax - px)
    d4 = (qx - px) * (by - py) - (qy - py) * (bx - px)
    return (d1 * d2 < 0.0) and (d3 * d4 < 0.0)


def _step_from_loops(sx, sy, theta, step_len, wall, wall_active):
    px = sx + step_len * math.cos(theta)
    py = sy + step_len * math.sin(theta)
    if px < 0.0:
        px = 0.0
    elif px > 1.0:
        px = 1.0
    if py < 0.0:
        py = 0.0
    elif py > 1.0:
        py = 1.0
    if wall_active and _proper_cross(sx, sy, px, py, wall[0], wall[1], wall[2], wall[3]):
        return sx, sy
    return px, py


# ---------------------------------------------------------------------------
# feature evaluation


def _point_features_loops(x, y, centers, width, trunc_side, wall_n, wall_off, out):
    side = x * wall_n[0] + y * wall_n[1] - wall_off
    two_s2 = 2.0 * width * width
    for i in range(centers.shape[0]):
        dx = x - centers[i, 0]
        dy = y - centers[i, 1]
        v = math.exp(-(dx * dx + dy * dy) / two_s2)
        if trunc_side[i] * side < 0.0:
            v = 0.0
        out[i] = v


def _features_batch_loops(points, centers, width, trunc_side, wall_n, wall_off):
    n = points.shape[0]
    k = centers.shape[0]
    out = np.empty((n, k))
    for t in range(n):
        _point_features(points[t, 0], points[t, 1], centers, width, trunc_side, wall_n, wall_off, out[t])
    return out


def _features_batch_numpy(points, centers, width, trunc_side, wall_n, wall_off):
    diff = points[:, None, :] - centers[None, :, :]
    dist2 = diff[..., 0] ** 2 + diff[..., 1] ** 2
    vals = np.exp(-dist2 / (2.0 * width * width))
    side = points @ wall_n - wall_off
    vals[(trunc_side[None, :] * side[:, None]) < 0.0] = 0.0
    return vals


# ---------------------------------------------------------------------------
# rollouts


def _random_walk_states_loops(s0, angles, step_len, wall, wall_active):
    n = angles.shape[0] + 1
    states = np.empty((n, 2))
    sx, sy = s0[0], s0[1]
    states[0, 0] = sx
    states[0, 1] = sy
    for t in range(n - 1):
        sx, sy = _step_from(sx, sy, angles[t], step_len, wall, wall_active)
        states[t + 1, 0] = sx
        states[t + 1, 1] = sy
    return states


def _random_walk_states_numpy(s0, angles, step_len, wall, wall_active):
    n = angles.shape[0] + 1
    states = np.empty((n, 2))
    sx, sy = s0[0], s0[1]
    states[0] = (sx, sy)
    for t in range(n - 1):
        sx, sy = _step_from_loops(sx, sy, angles[t], step_len, wall, wall_active)
        states[t + 1] = (sx, sy)
    return states


# ---------------------------------------------------------------------------
# sleep-phase rollout from the generative model: the next latent state is a
# Gaussian around the decoded one-step prediction, the observation a Gaussian
# around the learned readout; both wall-constrained like the environment


def _sleep_rollout_loops(
    s0,
    n_steps,
    T,
    readout,
    C,
    centers,
    width,
    trunc_side,
    wall_n,
    wall_off,
    sleep_sigma,
    obs_sigma,
    state_noise,
    obs_noise,
    wall,
    wall_active,
):
    k = centers.shape[0]
    states = np.empty((n_steps, 2))
    obs = np.empty((n_steps, 2))
    psi = np.empty(k)
    sx, sy = s0[0], s0[1]
    for t in range(n_steps):
        states[t, 0] = sx
        states[t, 1] = sy
        _point_features(sx, sy, centers, width, trunc_side, wall_n, wall_off, psi)
        obs[t, 0] = C[0] @ psi + obs_sigma * obs_noise[t, 0]
        obs[t, 1] = C[1] @ psi + obs_sigma * obs_noise[t, 1]
        if t < n_steps - 1:
            pred = T @ psi
            px = readout[0] @ pred + sleep_sigma * state_noise[t, 0]
            py = readout[1] @ pred + sleep_sigma * state_noise[t, 1]
            if px < 0.0:
                px = 0.0
            elif px > 1.0:
                px = 1.0
            if py < 0.0:
                py = 0.0
            elif py > 1.0:
                py = 1.0
            if wall_active and _proper_cross(sx, sy, px, py, wall[0], wall[1], wall[2], wall[3]):
                px, py = sx, sy
            sx, sy = px, py
    return states, obs


def _sleep_rollout_numpy(
    s0,
    n_steps,
    T,
    readout,
    C,
    centers,
    width,
    trunc_side,
    wall_n,
    wall_off,
    sleep_sigma,
    obs_sigma,
    state_noise,
    obs_noise,
    wall,
    wall_active,
):
    states = np.empty((n_steps, 2))
    obs = np.empty((n_steps, 2))
    point = np.empty((1, 2))
    sx, sy = s0[0], s0[1]
    for t in range(n_steps):
        states[t] = (sx, sy)
        point[0] = (sx, sy)
        psi = _features_batch_numpy(point, centers, width, trunc_side, wall_n, wall_off)[0]
        obs[t] = C @ psi + obs_sigma * obs_noise[t]
        if t < n_steps - 1:
            prop = readout @ (T @ psi) + sleep_sigma * state_noise[t]
            px = min(max(prop[0], 0.0), 1.0)
            py = min(max(prop[1], 0.0), 1.0)
            if wall_active and _proper_cross_loops(sx, sy, px, py, wall[0], wall[1], wall[2], wall[3]):
                px, py = sx, sy
            sx, sy = px, py
    return states, obs


# ---------------------------------------------------------------------------
# recursive belief filtering: mu_t = W1 (T mu_{t-1}) + W2 psi(o_t)


def _filter_sequence_loops(T, W1, W2, obs_feats, mu_init):
    n, k = obs_feats.shape
    mus = np.empty((n, k))
    mu = mu_init.copy()
    for t in range(n):
        pred = T @ mu
        mu = W1 @ pred + W2 @ obs_feats[t]
        mus[t] = mu
    return mus


def _filter_sequence_numpy(T, W1, W2, obs_feats, mu_init):
    n, k = obs_feats.shape
    mus = np.empty((n, k))
    mu = mu_init.copy()
    for t in range(n):
        mu = W1 @ (T @ mu) + W2 @ obs_feats[t]
        mus[t] = mu
    return mus


# ---------------------------------------------------------------------------
# TD sweep over a feature sequence with harmonic learning-rate decay


def _td_sweep_loops(U, feats, gamma, lr0, k0, step0):
    n, k = feats.shape
    step = step0
    for t in range(n - 1):
        ft = feats[t]
        fn = feats[t + 1]
        uft = U @ ft
        ufn = U @ fn
        lr = lr0 / (1.0 + step / k0)
        for i in range(k):
            d = lr * (ft[i] + gamma * ufn[i] - uft[i])
            for j in range(k):
                U[i, j] += d * ft[j]
        step += 1.0
    return step


def _td_sweep_numpy(U, feats, gamma, lr0, k0, step0):
    n = feats.shape[0]
    step = step0
    for t in range(n - 1):
        ft = feats[t]
        delta = ft + gamma * (U @ feats[t + 1]) - U @ ft
        lr = lr0 / (1.0 + step / k0)
        U += lr * np.outer(delta, ft)
        step += 1.0
    return step


# ---------------------------------------------------------------------------
# online SGD sweeps for the generative and recognition models


def _transition_sgd_sweep_loops(T, mus, lr):
    n, k = mus.shape
    acc = 0.0
    for t in range(n - 1):
        mt = mus[t]
        pred = T @ mt
        sq = 0.0
        for i in range(k):
            e = mus[t + 1, i] - pred[i]
            sq += e * e
            d = lr * e
            for j in range(k):
                T[i, j] += d * mt[j]
        acc += sq
    return acc / max(n - 1, 1)


def _transition_sgd_sweep_numpy(T, mus, lr):
    n = mus.shape[0]
    acc = 0.0
    for t in range(n - 1):
        err = mus[t + 1] - T @ mus[t]
        acc += float(err @ err)
        T += lr * np.outer(err, mus[t])
    return acc / max(n - 1, 1)


def _recognition_sgd_sweep_loops(W1, W2, T, obs_feats, targets, mu_init, lr):
    n, k = obs_feats.shape
    mu = mu_init.copy()
    acc = 0.0
    for t in range(n):
        pred = T @ mu
        po = obs_feats[t]
        out = W1 @ pred + W2 @ po
        sq = 0.0
        for i in range(k):
            e = targets[t, i] - out[i]
            sq += e * e
            d = lr * e
            for j in range(k):
                W1[i, j] += d * pred[j]
                W2[i, j] += d * po[j]
        acc += sq
        mu = out
    return acc / n


def _recognition_sgd_sweep_numpy(W1, W2, T, obs_feats, targets, mu_init, lr):
    n = obs_feats.shape[0]
    mu = mu_init.copy()
    acc = 0.0
    for t in range(n):
        pred = T @ mu
        po = obs_feats[t]
        out = W1 @ pred + W2 @ po
        err = targets[t] - out
        acc += float(err @ err)
        W1 += lr * np.outer(err, pred)
        W2 += lr * np.outer(err, po)
        mu = out
    return acc / n


# ---------------------------------------------------------------------------
# greedy-policy episode: feature stream + epsilon-greedy actions + env step
#
# condition codes: 0 = latent psi(s), 1 = inferred mu(O), 2 = observed psi(o)
# q_mat is (K, A) with q_mat[i, j] = [w^T U P]_{i*A+j}; per-step action
# scores are cand_phis @ (feat @ q_mat), up to the shared r + gamma factors
# that do not move the argmax.


def _greedy_episode_loops(
    s0,
    n_steps,
    step_len,
    wall,
    wall_active,
    centers,
    width,
    trunc_side,
    wall_n,
    wall_off,
    condition,
    T,
    W1,
    W2,
    mu_init,
    q_mat,
    cand_phis,
    cand_angles,
    epsilon,
    eps_u,
    act_u,
    obs_noise,
):
    k = centers.shape[0]
    c_count = cand_angles.shape[0]
    states = np.empty((n_steps, 2))
    obs = np.empty((n_steps, 2))
    feats = np.empty((n_steps, k))
    actions = np.empty(max(n_steps - 1, 0))
    psi_o = np.empty(k)
    mu = mu_init.copy()
    sx, sy = s0[0], s0[1]
    for t in range(n_steps):
        states[t, 0] = sx
        states[t, 1] = sy
        ox = sx + obs_noise[t, 0]
        oy = sy + obs_noise[t, 1]
        obs[t, 0] = ox
        obs[t, 1] = oy
        if condition == 0:
            _point_features(sx, sy, centers, width, trunc_side, wall_n, wall_off, feats[t])
        elif condition == 2:
            _point_features(ox, oy, centers, width, trunc_side, wall_n, wall_off, feats[t])
        else:
            _point_features(ox, oy, centers, width, trunc_side, wall_n, wall_off, psi_o)
            pred = T @ mu
            mu = W1 @ pred + W2 @ psi_o
            feats[t] = mu
        if t < n_steps - 1:
            if eps_u[t] < epsilon:
                c = int(act_u[t] * c_count)
                if c >= c_count:
                    c = c_count - 1
            else:
                m = feats[t] @ q_mat
                best = -np.inf
                c = 0
                for ci in range(c_count):
                    score = 0.0
                    for j in range(m.shape[0]):
                        score += cand_phis[ci, j] * m[j]
                    if score > best:
                        best = score
                        c = ci
            theta = cand_angles[c]
            actions[t] = theta
            sx, sy = _step_from(sx, sy, theta, step_len, wall, wall_active)
    return states, obs, feats, actions


def _greedy_episode_numpy(
    s0,
    n_steps,
    step_len,
    wall,
    wall_active,
    centers,
    width,
    trunc_side,
    wall_n,
    wall_off,
    condition,
    T,
    W1,
    W2,
    mu_init,
    q_mat,
    cand_phis,
    cand_angles,
    epsilon,
    eps_u,
    act_u,
    obs_noise,
):
    k = centers.shape[0]
    c_count = cand_angles.shape[0]
    states = np.empty((n_steps, 2))
    obs = np.empty((n_steps, 2))
    feats = np.empty((n_steps, k))
    actions = np.empty(max(n_steps - 1, 0))
    mu = mu_init.copy()
    sx, sy = s0[0], s0[1]
    point = np.empty((1, 2))
    for t in range(n_steps):
        states[t] = (sx, sy)
        ox = sx + obs_noise[t, 0]
        oy = sy + obs_noise[t, 1]
        obs[t] = (ox, oy)
        if condition == 0:
            point[0] = (sx, sy)
            feats[t] = _features_batch_numpy(point, centers, width, trunc_side, wall_n, wall_off)[0]
        elif condition == 2:
            point[0] = (ox, oy)
            feats[t] = _features_batch_numpy(point, centers, width, trunc_side, wall_n, wall_off)[0]
        else:
            point[0] = (ox, oy)
            psi_o = _features_batch_numpy(point, centers, width, trunc_side, wall_n, wall_off)[0]
            mu = W1 @ (T @ mu) + W2 @ psi_o
            feats[t] = mu
        if t < n_steps - 1:
            if eps_u[t] < epsilon:
                c = min(int(act_u[t] * c_count), c_count - 1)
            else:
                scores = cand_phis @ (feats[t] @ q_mat)
                c = int(np.argmax(scores))
            theta = cand_angles[c]
            actions[t] = theta
            sx, sy = _step_from_loops(sx, sy, theta, step_len, wall, wall_active)
    return states, obs, feats, actions


# ---------------------------------------------------------------------------
# path selection

if NUMBA_ENABLED:
    _jit = njit(cache=True)
    _proper_cross = _jit(_proper_cross_loops)
    _step_from = _jit(_step_from_loops)
    _point_features = _jit(_point_features_loops)
    features_batch = _jit(_features_batch_loops)
    random_walk_states = _jit(_random_walk_states_loops)
    sleep_rollout = _jit(_sleep_rollout_loops)
    filter_sequence = _jit(_filter_sequence_loops)
    td_sweep = _jit(_td_sweep_loops)
    transition_sgd_sweep = _jit(_transition_sgd_sweep_loops)
    recognition_sgd_sweep = _jit(_recognition_sgd_sweep_loops)
    greedy_episode = _jit(_greedy_episode_loops)
else:
    _proper_cross = _proper_cross_loops
    _step_from = _step_from_loops
    _point_features = _point_features_loops
    features_batch = _features_batch_numpy
    random_walk_states = _random_walk_states_numpy
    sleep_rollout = _sleep_rollout_numpy
    filter_sequence = _filter_sequence_numpy
    td_sweep = _td_sweep_numpy
    transition_sgd_sweep = _transition_sgd_sweep_numpy
    recognition_sgd_sweep = _recognition_sgd_sweep_numpy
    greedy_episode = _greedy_episode_numpy


def segments_cross(p, q, a, b) -> bool:
    """Strict crossing test between segments p-q and a-b."""
    return bool(_proper_cross(p[0], p[1], q[0], q[1], a[0], a[1], b[0], b[1]))

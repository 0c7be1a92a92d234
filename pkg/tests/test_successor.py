import numpy as np
import pytest

from ddcsf.errors import NumericError
from ddcsf.successor import (
    DiscreteMdp,
    FixedPointSolver,
    SuccessorMatrix,
    discrete_sr_oracle,
    distributional_sf,
    sf_analytic,
    sf_fixed_point,
    sf_td_update,
    spectral_radius,
    td_sweep_sf,
)


def neumann_sum(T, gamma, terms=200):
    """Independent oracle: truncated series sum_k (gamma T)^k."""
    k = T.shape[0]
    out = np.zeros((k, k))
    power = np.eye(k)
    for _ in range(terms + 1):
        out += power
        power = gamma * (power @ T)
    return out


def random_contractive(rng, k, target_radius):
    T = rng.normal(size=(k, k))
    T *= target_radius / max(abs(np.linalg.eigvals(T)))
    return T


def test_sf_analytic_trivial_cases():
    assert sf_analytic(np.zeros((4, 4)), 0.9).U == pytest.approx(np.eye(4))
    T = np.random.default_rng(0).normal(size=(4, 4)) * 0.1
    assert sf_analytic(T, 0.0).U == pytest.approx(np.eye(4))


def test_sf_analytic_matches_independent_neumann_sum():
    T = np.diag([0.5, 0.5])
    got = sf_analytic(T, 0.8).U
    oracle = neumann_sum(T, 0.8)
    assert got == pytest.approx(oracle, abs=1e-12)
    assert got == pytest.approx(np.diag([5 / 3, 5 / 3]), abs=1e-10)


def test_sf_analytic_random_instances_vs_neumann():
    rng = np.random.default_rng(1)
    for _ in range(10):
        gamma = rng.uniform(0.5, 0.95)
        T = random_contractive(rng, 8, rng.uniform(0.3, 0.95) / gamma)
        U = sf_analytic(T, gamma).U
        assert np.max(np.abs(U - neumann_sum(T, gamma))) < 1e-6


def test_sf_analytic_rejects_expansive_dynamics():
    with pytest.raises(NumericError, match="radius"):
        sf_analytic(1.2 * np.eye(3), 0.9)


def test_successor_matrix_invariant():
    T = np.diag([0.4, 0.2])
    sm = sf_analytic(T, 0.9)
    assert np.max(np.abs((np.eye(2) - 0.9 * T) @ sm.U - np.eye(2))) < 1e-8
    with pytest.raises(ValueError):
        SuccessorMatrix(U=np.eye(2), discount=1.0, method="analytic")


def test_fixed_point_trivial():
    mu = np.array([0.3, -0.2, 1.1])
    x = sf_fixed_point(np.zeros((3, 3)), 0.9, mu)
    assert x == pytest.approx(mu, abs=1e-7)


def test_fixed_point_matches_analytic():
    rng = np.random.default_rng(2)
    solver = FixedPointSolver(tol=1e-10)
    for _ in range(5):
        T = random_contractive(rng, 6, 0.9)
        mu = rng.normal(size=6)
        gamma = 0.9
        x = sf_fixed_point(T, gamma, mu, solver)
        expected = sf_analytic(T, gamma).U @ mu
        assert np.max(np.abs(x - expected)) < 10 * solver.tol * max(1.0, np.max(np.abs(expected)))


def test_fixed_point_residual_decays_monotonically():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(5, 5))
    T = (A + A.T) / 2  # symmetric: relaxation is a contraction in 2-norm
    T *= 0.9 / max(abs(np.linalg.eigvals(T)))
    gamma = 0.95
    mu = rng.normal(size=5)
    solver = FixedPointSolver(dt=1.0, tau=1.0, tol=1e-12, max_iters=10)
    rate = solver.dt / solver.tau
    x = mu.copy()
    resids = []
    for _ in range(40):
        r = gamma * (T @ x) + mu - x
        resids.append(np.linalg.norm(r))
        x = x + rate * r
    assert all(resids[i + 1] <= resids[i] + 1e-15 for i in range(len(resids) - 1))


def test_fixed_point_budget_error():
    T = 0.99 * np.eye(4)
    with pytest.raises(NumericError, match="residual"):
        sf_fixed_point(T, 0.99, np.ones(4), FixedPointSolver(max_iters=3, tol=1e-14))


def test_fixed_point_solver_validation():
    with pytest.raises(ValueError):
        FixedPointSolver(dt=2.0, tau=1.0)
    with pytest.raises(ValueError):
        FixedPointSolver(tol=0.0)


def test_td_update_zero_error_at_solution():
    rng = np.random.default_rng(4)
    T = random_contractive(rng, 6, 0.8)
    gamma = 0.9
    U = sf_analytic(T, gamma).U
    feat = rng.normal(size=6)
    U2 = sf_td_update(U, feat, T @ feat, gamma, lr=0.5)
    assert U2 == pytest.approx(U, abs=1e-9)


def test_td_update_hand_case():
    U = np.array([[0.0]])
    out = sf_td_update(U, np.array([1.0]), np.array([1.0]), 0.5, 1.0)
    assert out == pytest.approx(np.array([[1.0]]))


def test_td_mean_update_vanishes_at_fixed_point():
    # with feat_next = T feat + noise, the expected update at the solution
    # is zero; check the empirical mean against its standard error
    rng = np.random.default_rng(5)
    k = 4
    T = random_contractive(rng, k, 0.7)
    gamma = 0.9
    U = sf_analytic(T, gamma).U
    n = 10_000
    updates = np.empty((n, k, k))
    for i in range(n):
        feat = rng.normal(size=k)
        noise = 0.1 * rng.normal(size=k)
        delta = feat + gamma * (U @ (T @ feat + noise)) - U @ feat
        updates[i] = np.outer(delta, feat)
    mean = updates.mean(axis=0)
    se = np.sqrt((updates.var(axis=0) / n).sum())
    assert np.linalg.norm(mean) < 4 * se


def reflecting_chain(n=5):
    P = np.zeros((n, n))
    for i in range(n):
        P[i, max(i - 1, 0)] += 0.5
        P[i, min(i + 1, n - 1)] += 0.5
    return P


def test_td_synchronous_sweeps_converge_on_chain():
    # one expected-TD update per state per sweep: feat_next is the belief
    # row P[i], the expected next one-hot feature
    n = 5
    P = reflecting_chain(n)
    gamma = 0.9
    oracle = discrete_sr_oracle(DiscreteMdp(P=P, discount=gamma))
    eye = np.eye(n)
    U = np.eye(n)
    k = 0.0
    for _ in range(2000):
        for i in range(n):
            U = sf_td_update(U, eye[i], P[i], gamma, 0.1 / (1.0 + k / 1e3))
            k += 1.0
    assert np.max(np.abs(U - oracle.T)) < 0.05


def test_td_sampled_trajectory_approaches_oracle():
    # sampled transitions carry an O(1/sqrt(N)) plug-in floor, so the
    # tolerance here is looser than the synchronous-sweep case
    n = 5
    P = reflecting_chain(n)
    gamma = 0.9
    oracle = discrete_sr_oracle(DiscreteMdp(P=P, discount=gamma))
    rng = np.random.default_rng(6)
    U = np.eye(n)
    steps = 0.0
    state = 0
    for _ in range(300):
        length = 200
        feats = np.zeros((length, n))
        for t in range(length):
            feats[t, state] = 1.0
            state = max(state - 1, 0) if rng.random() < 0.5 else min(state + 1, n - 1)
        U, steps = td_sweep_sf(U, feats, gamma, lr0=0.1, k0=1e3, step0=steps)
    assert np.max(np.abs(U - oracle.T)) < 0.1


def test_distributional_sf_linearity():
    rng = np.random.default_rng(7)
    U = rng.normal(size=(5, 5))
    a, b = rng.normal(size=5), rng.normal(size=5)
    got = distributional_sf(U, 2.0 * a + 3.0 * b)
    assert got == pytest.approx(2.0 * distributional_sf(U, a) + 3.0 * distributional_sf(U, b))
    with pytest.raises(ValueError):
        distributional_sf(U, np.zeros(4))


def test_distributional_sf_equals_monte_carlo_future_sum():
    # discrete-chain oracle: resample futures from a belief and average the
    # discounted one-hot feature sums
    n = 4
    P = np.array(
        [
            [0.1, 0.9, 0.0, 0.0],
            [0.0, 0.2, 0.8, 0.0],
            [0.0, 0.0, 0.5, 0.5],
            [0.6, 0.0, 0.0, 0.4],
        ]
    )
    gamma = 0.8
    U = discrete_sr_oracle(DiscreteMdp(P=P, discount=gamma)).T  # maps one-hot features
    belief = np.array([0.5, 0.2, 0.2, 0.1])
    rng = np.random.default_rng(8)
    horizon = 120  # gamma^120 ~ 2e-12
    n_mc = 4000
    sums = np.zeros((n_mc, n))
    for m in range(n_mc):
        s = rng.choice(n, p=belief)
        g = 1.0
        for _ in range(horizon):
            sums[m, s] += g
            g *= gamma
            s = rng.choice(n, p=P[s])
    mc = sums.mean(axis=0)
    se = sums.std(axis=0, ddof=1) / np.sqrt(n_mc)
    expected = distributional_sf(U, belief)
    assert np.all(np.abs(mc - expected) < 4 * se + 1e-9)


def test_discrete_oracle_cases():
    assert discrete_sr_oracle(DiscreteMdp(P=np.eye(3), discount=0.5)) == pytest.approx(2 * np.eye(3))
    P = np.array([[0.0, 1.0], [0.0, 1.0]])
    M = discrete_sr_oracle(DiscreteMdp(P=P, discount=0.5))
    assert M == pytest.approx(np.array([[1.0, 1.0], [0.0, 2.0]]))
    P3 = np.array([[0.2, 0.8], [0.5, 0.5]])
    assert discrete_sr_oracle(DiscreteMdp(P=P3, discount=0.0)) == pytest.approx(np.eye(2))


def test_discrete_oracle_identities():
    rng = np.random.default_rng(9)
    raw = rng.uniform(size=(6, 6))
    P = raw / raw.sum(axis=1, keepdims=True)
    gamma = 0.93
    M = discrete_sr_oracle(DiscreteMdp(P=P, discount=gamma))
    assert np.max(np.abs(M @ (np.eye(6) - gamma * P) - np.eye(6))) < 1e-10
    assert M.sum(axis=1) == pytest.approx(np.full(6, 1 / (1 - gamma)))


def test_discrete_mdp_validation():
    with pytest.raises(ValueError):
        DiscreteMdp(P=np.array([[0.5, 0.4], [0.5, 0.5]]), discount=0.9)
    with pytest.raises(ValueError):
        DiscreteMdp(P=np.array([[1.1, -0.1], [0.5, 0.5]]), discount=0.9)
    with pytest.raises(ValueError):
        DiscreteMdp(P=np.eye(2), discount=1.0)


def test_spectral_radius_estimates():
    assert spectral_radius(np.zeros((3, 3))) == 0.0
    assert spectral_radius(0.7 * np.eye(5)) == pytest.approx(0.7, rel=1e-6)
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])  # eigenvalues +-i
    assert spectral_radius(rot) == pytest.approx(1.0, rel=1e-6)

"""Command-line entry point and deterministic experiment pipelines.

Subcommands: train-ssm, export-dynamics, filter, value-grid, gpi,
evaluate. Every run is reproducible from the master seed; numeric CSV
fields use shortest round-trip decimal formatting so byte-identity of
outputs is meaningful. Exit codes: 0 success, 2 configuration error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import policy as policy_mod
from . import serialize, ssm
from .config import (
    CONDITIONS,
    SF_METHODS,
    ExperimentConfig,
    ValueGridConfig,
    load_config,
)
from .environment import EnvironmentSpec, RewardField, rewards_batch, rollout
from .errors import ConfigError, NumericError
from .features import state_features_batch
from .policy import Condition, condition_features, evaluate_policy, fit_reward_weights, generalized_policy_iteration
from .streams import derive_rng
from .successor import FixedPointSolver, sf_analytic, sf_fixed_point, td_sweep_sf
from .wakesleep import run_wake_sleep

TRAJECTORY_HEADER = "t,sx,sy,ox,oy,action,reward"
FILTER_HEADER = "t,sx,sy,ox,oy,mx,my"
DYNAMICS_HEADER = "ix,iy,x,y,dx,dy,wall"
VALUE_HEADER = "ix,iy,x,y,v,wall"
DIAGNOSTICS_HEADER = "cycle,sleep_residual,wake_pred_error"
CYCLE_RETURNS_HEADER = "cycle,return"
EPISODE_RETURNS_HEADER = "episode,return"
HISTOGRAM_HEADER = "bin_left,bin_right,count"


# ---------------------------------------------------------------------------
# CSV plumbing


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return repr(float(value))


def write_csv(path: Path, header: str, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def validate_csv(path: Path, header: str, expected_rows: int | None = None) -> None:
    """Schema check run on every output before exit."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != header:
        raise NumericError(f"{path}: expected header {header!r}")
    n_cols = len(header.split(","))
    for line in lines[1:]:
        if len(line.split(",")) != n_cols:
            raise NumericError(f"{path}: malformed row {line!r}")
    if expected_rows is not None and len(lines) - 1 != expected_rows:
        raise NumericError(f"{path}: expected {expected_rows} rows, found {len(lines) - 1}")


def read_trajectory_csv(path: Path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != TRAJECTORY_HEADER:
        raise ConfigError(f"{path}: expected header {TRAJECTORY_HEADER!r}")
    latent, observed = [], []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 7:
            raise ConfigError(f"{path}: malformed row {line!r}")
        latent.append((float(parts[1]), float(parts[2])))
        observed.append((float(parts[3]), float(parts[4])))
    if not latent:
        raise ConfigError(f"{path}: trajectory is empty")
    return np.array(latent), np.array(observed)


def write_trajectory_csv(path: Path, traj) -> None:
    rows = []
    n = len(traj)
    for t in range(n):
        action = _fmt(traj.actions[t]) if traj.actions is not None and t < n - 1 else ""
        rew = traj.rewards[t] if traj.rewards is not None else 0.0
        rows.append(
            (t, traj.latent[t, 0], traj.latent[t, 1], traj.observed[t, 0], traj.observed[t, 1], action, rew)
        )
    write_csv(path, TRAJECTORY_HEADER, rows)
    validate_csv(path, TRAJECTORY_HEADER, n)


# ---------------------------------------------------------------------------
# grid helpers


def grid_centers(resolution: int) -> np.ndarray:
    xs = (np.arange(resolution) + 0.5) / resolution
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _segment_hits_rect(p0, p1, xmin, xmax, ymin, ymax) -> bool:
    # Liang-Barsky clip of the segment against the rectangle
    t0, t1 = 0.0, 1.0
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    for p, q in ((-dx, p0[0] - xmin), (dx, xmax - p0[0]), (-dy, p0[1] - ymin), (dy, ymax - p0[1])):
        if p == 0.0:
            if q < 0.0:
                return False
        else:
            r = q / p
            if p < 0.0:
                if r > t1:
                    return False
                if r > t0:
                    t0 = r
            else:
                if r < t0:
                    return False
                if r < t1:
                    t1 = r
    return t0 <= t1


def wall_flags(resolution: int, env: EnvironmentSpec) -> np.ndarray:
    """1 for cells whose square intersects the internal wall segment."""
    flags = np.zeros(resolution * resolution, dtype=int)
    if env.internal_wall is None:
        return flags
    w = env.internal_wall
    p0, p1 = (w[0], w[1]), (w[2], w[3])
    idx = 0
    for ix in range(resolution):
        for iy in range(resolution):
            if _segment_hits_rect(
                p0, p1, ix / resolution, (ix + 1) / resolution, iy / resolution, (iy + 1) / resolution
            ):
                flags[idx] = 1
            idx += 1
    return flags


# ---------------------------------------------------------------------------
# subcommands


def cmd_train_ssm(config: ExperimentConfig, outdir: Path) -> Path:
    env = config.environment
    basis = config.basis.build(env)
    result = run_wake_sleep(config.wake_sleep, env, basis)
    checkpoint = outdir / "checkpoint.json"
    serialize.save_checkpoint(result.model, env, checkpoint)
    rows = [(0, float("nan"), result.initial_wake_pred_error)]
    for i in range(result.n_cycles):
        rows.append((i + 1, result.sleep_residual[i], result.wake_pred_error[i]))
    diag = outdir / "ssm_diagnostics.csv"
    write_csv(diag, DIAGNOSTICS_HEADER, rows)
    validate_csv(diag, DIAGNOSTICS_HEADER, result.n_cycles + 1)
    return checkpoint


def cmd_export_dynamics(checkpoint: Path, resolution: int, out: Path) -> None:
    model, env = serialize.load_checkpoint(checkpoint)
    centers = grid_centers(resolution)
    feats = state_features_batch(centers, model.basis)
    means = (feats @ model.T.T) @ model.decoder.readout.T
    arrows = means - centers
    flags = wall_flags(resolution, env)
    rows = []
    for idx in range(centers.shape[0]):
        ix, iy = divmod(idx, resolution)
        rows.append((ix, iy, centers[idx, 0], centers[idx, 1], arrows[idx, 0], arrows[idx, 1], flags[idx]))
    write_csv(out, DYNAMICS_HEADER, rows)
    validate_csv(out, DYNAMICS_HEADER, resolution * resolution)


def cmd_filter(
    checkpoint: Path,
    out: Path,
    trajectory: Path | None,
    steps: int,
    seed: int,
) -> None:
    model, env = serialize.load_checkpoint(checkpoint)
    if trajectory is not None:
        latent, observed = read_trajectory_csv(trajectory)
    else:
        traj = rollout("random", steps, env, None, derive_rng(seed, "cli/filter/rollout"))
        latent, observed = traj.latent, traj.observed
    mus = ssm.filter_trajectory(observed, model)
    decoded = mus @ model.decoder.readout.T
    rows = [
        (t, latent[t, 0], latent[t, 1], observed[t, 0], observed[t, 1], decoded[t, 0], decoded[t, 1])
        for t in range(latent.shape[0])
    ]
    write_csv(out, FILTER_HEADER, rows)
    validate_csv(out, FILTER_HEADER, latent.shape[0])


def _condition_transition_matrix(model, condition: Condition, feats: np.ndarray, ridge: float) -> np.ndarray:
    if condition is Condition.INFERRED:
        return model.T
    return ssm.fit_transition_batch(feats[:-1], feats[1:], ridge)


def _probe_features(model, condition: Condition, centers: np.ndarray, cfg, env, seed: int) -> np.ndarray:
    if condition is not Condition.INFERRED:
        return state_features_batch(centers, model.basis)
    # static burn-in: hold the latent state at the probe, filter a few
    # noisy observations of it, and read out the resulting belief
    n_probes = centers.shape[0]
    rng = derive_rng(seed, "value-grid/probe-burnin")
    noise = env.obs_noise_sigma * rng.standard_normal((cfg.burn_in, n_probes, 2))
    w1, w2 = model.w_blocks()
    mu = np.tile(model.mu_prior, (n_probes, 1))
    for b in range(cfg.burn_in):
        obs_feats = state_features_batch(centers + noise[b], model.basis)
        mu = (mu @ model.T.T) @ w1.T + obs_feats @ w2.T
    return mu


def value_grid(
    config: ExperimentConfig,
    model,
    env: EnvironmentSpec,
    condition: Condition,
    sf_method: str,
    resolution: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Value of every grid cell for the condition; returns (values, wall flags)."""
    cfg = config.value_grid
    seed = config.master_seed
    gamma = cfg.gamma
    tag = condition.value
    traj = rollout(
        "random", cfg.rollout_steps, env, config.reward, derive_rng(seed, f"value-grid/{tag}/rollout")
    )
    feats = condition_features(traj, condition, model)
    weights = fit_reward_weights(feats, traj.rewards, ridge=config.gpi.ridge)
    centers = grid_centers(resolution)
    probe = _probe_features(model, condition, centers, cfg, env, seed)
    if sf_method in ("analytic", "fixed-point"):
        T_cond = _condition_transition_matrix(model, condition, feats, config.gpi.ridge)
        if sf_method == "analytic":
            U = sf_analytic(T_cond, gamma).U
            values = probe @ U.T @ weights.w_rew
        else:
            solver = FixedPointSolver()
            values = np.array(
                [weights.w_rew @ sf_fixed_point(T_cond, gamma, probe[i]) for i in range(probe.shape[0])]
            )
    else:
        stream = state_features_batch(traj.latent, model.basis) if sf_method == "td-sleep" else feats
        U = np.eye(model.basis.size)
        steps = 0.0
        for _ in range(cfg.td_passes):
            U, steps = td_sweep_sf(U, stream, gamma, config.gpi.sf_lr0, config.gpi.sf_k0, steps)
        values = probe @ U.T @ weights.w_rew
    return values, wall_flags(resolution, env)


def cmd_value_grid(
    checkpoint: Path,
    config: ExperimentConfig,
    condition: Condition,
    sf_method: str,
    resolution: int,
    out: Path,
) -> None:
    model, env = serialize.load_checkpoint(checkpoint)
    values, flags = value_grid(config, model, env, condition, sf_method, resolution)
    centers = grid_centers(resolution)
    rows = []
    for idx in range(centers.shape[0]):
        ix, iy = divmod(idx, resolution)
        rows.append((ix, iy, centers[idx, 0], centers[idx, 1], values[idx], flags[idx]))
    write_csv(out, VALUE_HEADER, rows)
    validate_csv(out, VALUE_HEADER, resolution * resolution)


def cmd_gpi(checkpoint: Path, config: ExperimentConfig, condition: Condition, outdir: Path) -> None:
    model, env = serialize.load_checkpoint(checkpoint)
    result = generalized_policy_iteration(
        config.gpi, condition, env, config.reward, model, config.action_basis.build()
    )
    returns = evaluate_policy(
        result.agent,
        config.gpi.eval_episodes,
        env,
        config.reward,
        config.master_seed,
        config.gpi.steps_per_episode,
    )
    tag = condition.value
    serialize.save_agent(result.agent, env, outdir / f"agent_{tag}.json")

    cycle_rows = [(i + 1, result.episode_returns[i]) for i in range(result.episode_returns.shape[0])]
    path = outdir / f"gpi_returns_{tag}.csv"
    write_csv(path, CYCLE_RETURNS_HEADER, cycle_rows)
    validate_csv(path, CYCLE_RETURNS_HEADER, len(cycle_rows))

    ep_rows = [(j, returns[j]) for j in range(returns.shape[0])]
    path = outdir / f"eval_returns_{tag}.csv"
    write_csv(path, EPISODE_RETURNS_HEADER, ep_rows)
    validate_csv(path, EPISODE_RETURNS_HEADER, len(ep_rows))

    counts, edges = np.histogram(returns, bins=10)
    hist_rows = [(edges[i], edges[i + 1], int(counts[i])) for i in range(counts.shape[0])]
    path = outdir / f"return_histogram_{tag}.csv"
    write_csv(path, HISTOGRAM_HEADER, hist_rows)
    validate_csv(path, HISTOGRAM_HEADER, len(hist_rows))


def cmd_evaluate(agent_path: Path, config: ExperimentConfig, episodes: int, out: Path) -> None:
    agent, env = serialize.load_agent(agent_path)
    returns = evaluate_policy(
        agent, episodes, env, config.reward, config.master_seed, config.gpi.steps_per_episode
    )
    rows = [(j, returns[j]) for j in range(returns.shape[0])]
    write_csv(out, EPISODE_RETURNS_HEADER, rows)
    validate_csv(out, EPISODE_RETURNS_HEADER, episodes)


# ---------------------------------------------------------------------------
# argument parsing


def _load_base_config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    seed = getattr(args, "seed", None)
    if seed is not None:
        config = dataclasses.replace(
            config,
            master_seed=seed,
            wake_sleep=dataclasses.replace(config.wake_sleep, seed=seed),
            gpi=dataclasses.replace(config.gpi, seed=seed),
        )
    out = getattr(args, "out", None)
    if out is not None:
        config = dataclasses.replace(config, output_dir=str(out))
    return config


def _add_common(sub, with_seed=True):
    sub.add_argument("--config", type=Path, default=None, help="JSON experiment config")
    if with_seed:
        sub.add_argument("--seed", type=int, default=None, help="master seed override")
    sub.add_argument("--out", type=Path, default=None, help="output directory override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddcsf", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("train-ssm", help="run wake-sleep training, write checkpoint + diagnostics")
    _add_common(p)
    p.add_argument("--cycles", type=int, default=None, help="override wake-sleep cycle count")

    p = subs.add_parser("export-dynamics", help="decoded one-step mean displacement on a grid")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--resolution", type=int, default=20)

    p = subs.add_parser("filter", help="posterior decode of a trajectory")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--trajectory", type=Path, default=None, help="input trajectory CSV (else fresh rollout)")
    p.add_argument("--steps", type=int, default=1000, help="rollout length when no trajectory is given")

    p = subs.add_parser("value-grid", help="value function over a grid for one condition")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--condition", choices=CONDITIONS, required=True)
    p.add_argument("--sf-method", choices=SF_METHODS, default=None)
    p.add_argument("--resolution", type=int, default=None)

    p = subs.add_parser("gpi", help="generalized policy iteration for one condition")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--condition", choices=CONDITIONS, required=True)
    p.add_argument("--cycles", type=int, default=None, help="override GPI cycle count")
    p.add_argument("--episodes", type=int, default=None, help="override evaluation episode count")

    p = subs.add_parser("evaluate", help="evaluate a saved agent")
    _add_common(p)
    p.add_argument("--agent", type=Path, required=True)
    p.add_argument("--episodes", type=int, default=100)

    return parser


def run(args) -> None:
    config = _load_base_config(args)
    outdir = config.resolve_output_dir()
    outdir.mkdir(parents=True, exist_ok=True)

    if args.command == "train-ssm":
        if args.cycles is not None:
            config = dataclasses.replace(
                config, wake_sleep=dataclasses.replace(config.wake_sleep, n_cycles=args.cycles)
            )
        cmd_train_ssm(config, outdir)
    elif args.command == "export-dynamics":
        cmd_export_dynamics(args.checkpoint, args.resolution, outdir / "dynamics_grid.csv")
    elif args.command == "filter":
        cmd_filter(args.checkpoint, outdir / "filtered_trajectory.csv", args.trajectory, args.steps, config.master_seed)
    elif args.command == "value-grid":
        condition = Condition(args.condition)
        method = args.sf_method or config.sf_method
        resolution = args.resolution or config.value_grid.resolution
        cmd_value_grid(
            args.checkpoint, config, condition, method, resolution, outdir / f"value_grid_{condition.value}.csv"
        )
    elif args.command == "gpi":
        if args.cycles is not None:
            config = dataclasses.replace(config, gpi=dataclasses.replace(config.gpi, n_cycles=args.cycles))
        if args.episodes is not None:
            config = dataclasses.replace(config, gpi=dataclasses.replace(config.gpi, eval_episodes=args.episodes))
        cmd_gpi(args.checkpoint, config, Condition(args.condition), outdir)
    elif args.command == "evaluate":
        cmd_evaluate(args.agent, config, args.episodes, outdir / "eval_returns.csv")
    else:  # pragma: no cover - argparse enforces the choices
        raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

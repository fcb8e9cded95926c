"""Seeded experiment runs and their on-disk artifacts.

Seed split: run seed ``s`` maps to ``numpy.random.SeedSequence(s).spawn(3)``,
whose children seed, in order, the environment, the play stream and the
observation stream.  Every algorithm sees the same environment for a given
seed, and no two runs share generator state.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bco import BallSandwichedDomain, Mode, bco_round, init_bco
from .config import ExperimentConfig
from .core_online import ClassicExp3
from .environments import (
    LossMatrixEnv,
    PiecewiseExpertEnv,
    PointOracle,
    generate_piecewise,
    load_loss_csv,
    piecewise_quadratic_loss,
)
from .errors import InvalidArgumentError
from .evaluation import RunRecord, mean_stderr, sa_regret_exact, sa_regret_geometric
from .stabl import StablLearner, Variant, build_schedule

SCHEMA_VERSION = 1
WORKERS_ENV = "ADAPTIVE_BANDITS_WORKERS"
MAB_COLUMNS = ["t", "played_arm", "observed_arm", "reward", "loss", "cum_reward", "cum_loss"]

_VARIANTS = {
    "stabl": Variant.FULL,
    "stabl_naive": Variant.NAIVE_OBSERVATION,
    "stabl_single_scale": Variant.SINGLE_SCALE,
}


def split_seed(seed: int) -> tuple[np.random.SeedSequence, ...]:
    """(environment, play, observe) seed sequences for run seed ``seed``."""
    return tuple(np.random.SeedSequence(seed).spawn(3))


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def build_environment(config: ExperimentConfig, seed: int) -> LossMatrixEnv:
    env = config.environment
    if env["kind"] == "piecewise":
        env_ss = split_seed(seed)[0]
        return generate_piecewise(config.arms, config.horizon, env["change_points"], env["boost"], env_ss)
    if env["kind"] == "csv":
        path = Path(config.base_dir) / env["path"]
        matrix = load_loss_csv(path)
        if matrix.T != config.horizon:
            raise InvalidArgumentError(f"{path} has {matrix.T} rounds, config horizon is {config.horizon}")
        if config.arms is not None and matrix.n != config.arms:
            raise InvalidArgumentError(f"{path} has {matrix.n} arms, config says {config.arms}")
        return matrix
    raise InvalidArgumentError(f"environment kind {env['kind']!r} has no loss matrix")


@dataclass
class MabRun:
    plays: np.ndarray
    observed: np.ndarray
    losses: np.ndarray  # suffered per round
    transcript_queries: list[int] = field(default_factory=list)


def run_mab(kind: str, env: LossMatrixEnv, seed: int, scales=None, expert_rate_scale: float = 1.0) -> MabRun:
    """One full pass of a bandit algorithm over ``env`` through the query protocol."""
    _, play_ss, obs_ss = split_seed(seed)
    play_rng, obs_rng = np.random.default_rng(play_ss), np.random.default_rng(obs_ss)
    T = env.T
    session = env.session()
    plays = np.empty(T, dtype=int)
    observed = np.empty(T, dtype=int)
    suffered = np.empty(T)
    if kind == "exp3":
        learner = ClassicExp3(env.n, T)
        for t in range(1, T + 1):
            arm, prob = learner.play(play_rng)
            loss = session.reveal(t, [arm])[arm]
            learner.update(arm, loss, prob)
            plays[t - 1] = observed[t - 1] = arm
            suffered[t - 1] = loss
    else:
        learner = StablLearner(
            env.n, T, play_rng, obs_rng, _VARIANTS[kind], scales=scales, expert_rate_scale=expert_rate_scale
        )
        for t in range(1, T + 1):
            d = learner.step(lambda x, xo, t=t: session.reveal(t, [x, xo]))
            plays[t - 1], observed[t - 1] = d.play_arm, d.observe_arm
            suffered[t - 1] = d.play_loss
    return MabRun(plays, observed, suffered, session.transcript.queries_per_round())


def _regret_summary(config: ExperimentConfig, record: RunRecord, schedule) -> dict:
    if config.regret == "exact":
        value, (j, s) = sa_regret_exact(record, config.work_budget)
        return {"value": value, "interval": [j, s]}
    if config.regret == "geometric":
        table = sa_regret_geometric(record, schedule)
        return {"value": max(table.values()), "per_scale": {str(k): v for k, v in table.items()}}
    return {}


def _mab_job(config: ExperimentConfig, algo_index: int, seed: int, out_dir: Path) -> dict:
    algo = config.algorithms[algo_index]
    start = time.perf_counter()
    env = build_environment(config, seed)
    run = run_mab(algo.kind, env, seed, algo.scales, algo.expert_rate_scale)
    rewards = 1.0 - run.losses
    path = out_dir / algo.label / f"seed_{seed}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    cum_r, cum_l = np.cumsum(rewards), np.cumsum(run.losses)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MAB_COLUMNS)
        for i in range(env.T):
            w.writerow([
                i + 1, int(run.plays[i]), int(run.observed[i]),
                fmt(rewards[i]), fmt(run.losses[i]), fmt(cum_r[i]), fmt(cum_l[i]),
            ])
    record = RunRecord.from_plays(env.losses, run.plays, seed, algo.label)
    regret = _regret_summary(config, record, build_schedule(env.T))
    segments = None
    if isinstance(env, PiecewiseExpertEnv):
        segments = [float(rewards[a:b].mean()) for a, b in env.segments()]
    return {
        "seed": seed,
        "total_reward": float(cum_r[-1]),
        "total_loss": float(cum_l[-1]),
        "segment_mean_reward": segments,
        "sa_regret": regret,
        "max_queries_per_round": max(run.transcript_queries),
        "wall_clock_seconds": time.perf_counter() - start,
        "series": rewards,
        "csv": str(path),
    }


def _bco_setup(config: ExperimentConfig):
    env = config.environment
    d = config.dim
    domain = BallSandwichedDomain(d, env["inner_radius"], env["radius"])
    centers = np.asarray(env["centers"], dtype=float)
    D = env["radius"]
    far = float(np.max(np.linalg.norm(centers, axis=1))) + D
    lipschitz = env["lipschitz"] or 2.0 * far
    loss_bound = env["loss_bound"] or far**2
    if env["noise_std"]:
        loss_bound += 6.0 * env["noise_std"]
    loss_fn = piecewise_quadratic_loss(centers, env["change_points"])
    return domain, lipschitz, loss_bound, loss_fn


def _bco_job(config: ExperimentConfig, algo_index: int, seed: int, out_dir: Path) -> dict:
    algo = config.algorithms[algo_index]
    start = time.perf_counter()
    domain, lipschitz, loss_bound, loss_fn = _bco_setup(config)
    mode = Mode.THREE_QUERY if algo.kind == "bco_three_query" else Mode.TWO_QUERY_SURROGATE
    state = init_bco(domain, config.horizon, lipschitz, loss_bound, mode, algo.scales)
    env_ss, play_ss, _ = split_seed(seed)
    infos, state, oracle = _drive_bco(
        state, loss_fn, config.environment["noise_std"],
        np.random.default_rng(env_ss), np.random.default_rng(play_ss),
    )
    losses = np.array([i.loss for i in infos])
    played = np.vstack([i.played for i in infos])
    path = out_dir / algo.label / f"seed_{seed}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    cum = np.cumsum(losses)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "loss", "cum_loss", "queries", *(f"x_{k}" for k in range(domain.dim))])
        for i, info in enumerate(infos):
            w.writerow([i + 1, fmt(losses[i]), fmt(cum[i]), info.queries, *(fmt(v) for v in played[i])])
    regret = {}
    comparators = config.environment["comparators"] or config.environment["centers"]
    if config.regret != "off":
        comp = np.asarray(comparators, dtype=float)
        grid = np.array([[loss_fn(t, c) for c in comp] for t in range(1, config.horizon + 1)])
        record = RunRecord(grid, losses, seed=seed, label=algo.label)
        regret = _regret_summary(config, record, build_schedule(config.horizon))
        regret["comparator_grid_size"] = len(comp)
    return {
        "seed": seed,
        "total_loss": float(cum[-1]),
        "oracle_calls": oracle.calls,
        "sa_regret": regret,
        "max_queries_per_round": max(oracle.transcript.queries_per_round()),
        "wall_clock_seconds": time.perf_counter() - start,
        "series": losses,
        "csv": str(path),
    }


def _drive_bco(state, loss_fn, noise, noise_rng, rng):
    oracle = PointOracle(loss_fn, budget=state.mode.queries, noise_std=noise, rng=noise_rng)
    infos = []
    while state.t <= state.schedule.horizon:
        t = state.t
        info, state = bco_round(state, rng, lambda pts, t=t: oracle.evaluate(t, pts))
        infos.append(info)
    return infos, state, oracle


def _job(args):
    config, algo_index, seed, out_dir = args
    if config.is_bco:
        return _bco_job(config, algo_index, seed, out_dir)
    return _mab_job(config, algo_index, seed, out_dir)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _stats(values) -> dict:
    m, se = mean_stderr(values)
    return {"mean": m, "stderr": se, "per_seed": [float(v) for v in values]}


def run_experiment(config: ExperimentConfig, out_dir=None, workers: int | None = None, plot: bool | None = None) -> dict:
    """Run every (algorithm, seed) pair, write CSVs + ``summary.json``; return the summary."""
    start = time.perf_counter()
    root = Path(out_dir if out_dir is not None else Path(config.base_dir) / config.output_dir) / config.name
    root.mkdir(parents=True, exist_ok=True)
    workers = default_workers() if workers is None else max(1, workers)
    jobs = [(config, a, s, root) for a in range(len(config.algorithms)) for s in config.seeds]
    if workers == 1:
        results = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))

    per_algo = []
    curves = {}
    for a, algo in enumerate(config.algorithms):
        runs = results[a * len(config.seeds) : (a + 1) * len(config.seeds)]
        entry = {"label": algo.label, "kind": algo.kind, "seeds": list(config.seeds)}
        if config.is_bco:
            entry["total_loss"] = _stats([r["total_loss"] for r in runs])
            entry["oracle_calls"] = [r["oracle_calls"] for r in runs]
        else:
            entry["total_reward"] = _stats([r["total_reward"] for r in runs])
            entry["total_loss"] = _stats([r["total_loss"] for r in runs])
            if runs[0]["segment_mean_reward"] is not None:
                seg = np.array([r["segment_mean_reward"] for r in runs])
                entry["segment_mean_reward"] = [float(v) for v in seg.mean(axis=0)]
        if config.regret != "off":
            entry["sa_regret"] = {
                "mode": config.regret,
                **_stats([r["sa_regret"]["value"] for r in runs]),
                "runs": [r["sa_regret"] for r in runs],
            }
        entry["max_queries_per_round"] = max(r["max_queries_per_round"] for r in runs)
        entry["wall_clock_seconds"] = float(sum(r["wall_clock_seconds"] for r in runs))
        entry["csv"] = [os.path.relpath(r["csv"], root) for r in runs]
        per_algo.append(entry)
        curves[algo.label] = np.mean([r["series"] for r in runs], axis=0)

    summary = {
        "schema_version": SCHEMA_VERSION,
        "experiment": config.name,
        "status": "ok",
        "config": config.to_dict(),
        "algorithms": per_algo,
        "wall_clock_seconds": time.perf_counter() - start,
    }
    if plot if plot is not None else config.plot:
        from .plotting import plot_moving_average

        change_points = config.environment.get("change_points") or []
        fig_path = root / "moving_average.png"
        plot_moving_average(
            curves, config.window, fig_path,
            change_points=change_points,
            ylabel="loss" if config.is_bco else "reward",
            title=config.name,
        )
        summary["figures"] = [fig_path.name]
    with (root / "summary.json").open("w") as fh:
        json.dump(summary, fh, indent=2, default=_json_default)
    return summary


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and not math.isfinite(o):
        return None
    raise TypeError(f"not JSON serializable: {type(o).__name__}")

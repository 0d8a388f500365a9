"""
Experiment-matrix runner and result emitter.

Cells of the matrix are independent: each derives its own seeds from the
cell coordinates, so results do not depend on worker count or scheduling
order. Learning agents are trained once per cell and then evaluated; the
baselines are evaluated directly.

Files written by :func:`emit`:

* ``results.csv``: one row per cell, key columns then metrics.
* ``aggregates.csv``: seed mean and sample std per (agent, lambda, channel, weights).
* ``summary.json``: the aggregates and any cell failures.
* ``timings.csv``: wall time per cell, kept apart so ``results.csv`` is reproducible byte for byte.
* ``plot_cost.csv``, ``plot_queue.csv``, ``plot_delta.csv``, ``plot_drops.csv`` with ``plot_data``.
"""

from builtins import Exception, float, int, len, str
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import hashlib
import logging
from pathlib import Path
import time
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from app.schemas.env_schemas import ChannelPreset, EnvConfig, WeightPreset
from app.schemas.experiment_schemas import (
    AgentName, AggregateRecord, CellFailure, CellKey, ExperimentSpec, MatrixSummary, MetricsRecord, MetricSummary,
    scenario_name,
)
from app.schemas.training_schemas import TrainConfig
from app.services.agent_service import DeterministicPolicy, DqnPolicy, GreedyPolicy, Policy, QTablePolicy
from app.services.training_service import evaluate, run_qlearning, run_training

logger = logging.getLogger(__name__)

KEY_COLUMNS = ["agent", "arrival_mean", "channel", "weights", "seed"]
GROUP_COLUMNS = ["agent", "arrival_mean", "channel", "weights"]
METRIC_COLUMNS = ["avg_cost", "avg_queue_len", "avg_delta", "avg_drops", "frame_loss_packets"]
PLOT_FILES = {
    "avg_cost": "plot_cost.csv",
    "avg_queue_len": "plot_queue.csv",
    "avg_delta": "plot_delta.csv",
    "avg_drops": "plot_drops.csv",
}


@dataclass
class MatrixResult:
    records: List[MetricsRecord] = field(default_factory=list)
    failures: List[CellFailure] = field(default_factory=list)
    aggregates: List[AggregateRecord] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def scenario_channels(spec: ExperimentSpec, env_base: EnvConfig) -> List[Optional[ChannelPreset]]:
    """The matrix channel axis; without one, the base config's own preset (None when its vector is custom)."""
    return list(spec.channels) if spec.channels else [env_base.channel_preset]


def scenario_weights(spec: ExperimentSpec, env_base: EnvConfig) -> List[Optional[WeightPreset]]:
    return list(spec.weights) if spec.weights else [env_base.weight_preset]


def cell_keys(spec: ExperimentSpec, env_base: Optional[EnvConfig] = None) -> List[CellKey]:
    """Matrix cells in output order: agent, lambda, channel, weights, seed."""
    env_base = env_base or EnvConfig()
    return [
        CellKey(agent=agent, arrival_mean=lam, channel=channel, weights=weights, seed=seed)
        for agent in spec.agents
        for lam in spec.lambdas
        for channel in scenario_channels(spec, env_base)
        for weights in scenario_weights(spec, env_base)
        for seed in spec.seeds
    ]


def _label_entropy(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")


def cell_seeds(key: CellKey) -> Tuple[int, int]:
    """
    Training and evaluation seeds of a cell, derived from the user seed and a key hash.

    The evaluation seed ignores the agent so every policy in a scenario is
    scored on the same channel and arrival streams.
    """
    train_seq = np.random.SeedSequence([key.seed, _label_entropy(key.label())])
    scenario = f"{key.arrival_mean!r}|{scenario_name(key.channel)}|{scenario_name(key.weights)}|{key.seed}"
    eval_seq = np.random.SeedSequence([key.seed, _label_entropy(scenario)])
    return int(train_seq.generate_state(1)[0]), int(eval_seq.generate_state(1)[0])


def cell_env_config(key: CellKey, env_base: EnvConfig) -> EnvConfig:
    """Base config with the cell's arrival rate; a preset left as None keeps the base vector."""
    overrides = {"arrival_mean": key.arrival_mean}
    if key.channel is not None:
        overrides["channel"] = key.channel
    if key.weights is not None:
        overrides["weights"] = key.weights
    return env_base.with_overrides(**overrides)


def build_policy(key: CellKey, env_cfg: EnvConfig, train_cfg: TrainConfig, spec: ExperimentSpec) -> Policy:
    train_seed, _ = cell_seeds(key)
    if key.agent == AgentName.I_ICS:
        result = run_training(env_cfg, train_cfg.model_copy(update={"seed": train_seed}))
        return DqnPolicy(result.net, env_cfg)
    if key.agent == AgentName.QLEARNING:
        result = run_qlearning(env_cfg, train_cfg.model_copy(update={"seed": train_seed}))
        return QTablePolicy(result.table, env_cfg)
    if key.agent == AgentName.GREEDY:
        return GreedyPolicy(env_cfg)
    return DeterministicPolicy(env_cfg, spec.deterministic_frames)


def run_cell(key: CellKey, env_base: EnvConfig, train_cfg: TrainConfig, spec: ExperimentSpec) -> MetricsRecord:
    """Train (learning agents only) and evaluate one matrix cell."""
    started = time.perf_counter()
    env_cfg = cell_env_config(key, env_base)
    policy = build_policy(key, env_cfg, train_cfg, spec)
    _, eval_seed = cell_seeds(key)
    report = evaluate(policy, env_cfg, spec.eval_slots, n_seeds=1, seed=eval_seed)
    metrics = report.mean.model_dump(exclude={"seed"})
    return MetricsRecord(**key.model_dump(), **metrics, wall_time=time.perf_counter() - started)


def _run_cell_safely(args) -> Union[MetricsRecord, CellFailure]:
    key, env_base, train_cfg, spec = args
    try:
        record = run_cell(key, env_base, train_cfg, spec)
        logger.info(f"Cell {key.label()} done: avg_cost={record.avg_cost:.6f} ({record.wall_time:.1f}s)")
        return record
    except Exception as e:
        logger.error(f"Cell {key.label()} failed: {e}")
        return CellFailure(key=key, error=f"{type(e).__name__}: {e}")


def run_matrix(spec: ExperimentSpec, env_base: Optional[EnvConfig] = None, train_cfg: Optional[TrainConfig] = None,
               jobs: int = 1) -> MatrixResult:
    """
    Run every cell of ``spec`` and aggregate over seeds.

    Failed cells are recorded and skipped. Records come back in cell order
    whatever ``jobs`` is.
    """
    env_base = env_base or EnvConfig()
    train_cfg = train_cfg or TrainConfig()
    keys = cell_keys(spec, env_base)
    logger.info(f"Running {len(keys)} cells with {jobs} worker(s).")
    tasks = [(key, env_base, train_cfg, spec) for key in keys]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_cell_safely, tasks))
    else:
        outcomes = [_run_cell_safely(task) for task in tasks]

    result = MatrixResult()
    for outcome in outcomes:
        if isinstance(outcome, CellFailure):
            result.failures.append(outcome)
        else:
            result.records.append(outcome)
    result.aggregates = aggregate(result.records)
    logger.info(f"Matrix finished: {len(result.records)} cells ok, {len(result.failures)} failed.")
    return result


def results_frame(records: List[MetricsRecord]) -> pd.DataFrame:
    rows = [r.model_dump(mode="json", exclude={"wall_time"}) for r in records]
    return pd.DataFrame(rows, columns=KEY_COLUMNS + METRIC_COLUMNS)


def aggregate(records: List[MetricsRecord]) -> List[AggregateRecord]:
    """Seed mean and sample standard deviation (0 for a single seed) per scenario."""
    if not records:
        return []
    frame = results_frame(records)
    grouped = frame.groupby(GROUP_COLUMNS, sort=False)
    means = grouped[METRIC_COLUMNS].mean()
    stds = grouped[METRIC_COLUMNS].std(ddof=1).fillna(0.0)
    counts = grouped.size()
    aggregates = []
    for group_key in means.index:
        agent, lam, channel, weights = group_key
        aggregates.append(AggregateRecord(
            agent=agent, arrival_mean=lam, channel=channel, weights=weights, n_seeds=int(counts[group_key]),
            **{m: MetricSummary(mean=float(means.loc[group_key, m]), std=float(stds.loc[group_key, m]))
               for m in METRIC_COLUMNS},
        ))
    return aggregates


def aggregates_frame(aggregates: List[AggregateRecord]) -> pd.DataFrame:
    rows = []
    for record in aggregates:
        row = record.model_dump(mode="json", include=set(GROUP_COLUMNS))
        row["n_seeds"] = record.n_seeds
        for metric in METRIC_COLUMNS:
            summary = getattr(record, metric)
            row[f"{metric}_mean"] = summary.mean
            row[f"{metric}_std"] = summary.std
        rows.append(row)
    columns = GROUP_COLUMNS + ["n_seeds"] + [f"{m}_{s}" for m in METRIC_COLUMNS for s in ("mean", "std")]
    return pd.DataFrame(rows, columns=columns)


def plot_frames(aggregates: List[AggregateRecord]):
    """One table per metric: mean and std versus lambda, one series per agent."""
    frame = aggregates_frame(aggregates)
    for metric, filename in PLOT_FILES.items():
        plot = frame[GROUP_COLUMNS + [f"{metric}_mean", f"{metric}_std"]].rename(
            columns={f"{metric}_mean": "mean", f"{metric}_std": "std"}
        )
        yield filename, plot.sort_values(["channel", "weights", "agent", "arrival_mean"], kind="stable")


def emit(result: MatrixResult, out_dir: Union[str, Path], plot_data: bool = False) -> List[Path]:
    """
    Write the result tables under ``out_dir``.

    Raises:
        ValueError: If there is nothing to write.
        OSError: If the directory or a file cannot be written.
    """
    if not result.records and not result.failures:
        raise ValueError("No results to emit.")
    out = Path(out_dir)
    written: List[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)

        def write(frame: pd.DataFrame, name: str) -> None:
            path = out / name
            frame.to_csv(path, index=False, lineterminator="\n")
            written.append(path)

        write(results_frame(result.records), "results.csv")
        write(aggregates_frame(result.aggregates), "aggregates.csv")
        timings = pd.DataFrame(
            [{**r.model_dump(mode="json", include=set(KEY_COLUMNS)), "wall_time": r.wall_time} for r in result.records],
            columns=KEY_COLUMNS + ["wall_time"],
        )
        write(timings, "timings.csv")
        summary = MatrixSummary(cells=result.aggregates, failures=result.failures)
        summary_path = out / "summary.json"
        summary_path.write_text(summary.model_dump_json(indent=2) + "\n", encoding="utf-8")
        written.append(summary_path)
        if plot_data:
            for filename, frame in plot_frames(result.aggregates):
                write(frame, filename)
    except OSError as e:
        logger.error(f"Cannot write results to {out}: {e}")
        raise OSError(f"Cannot write results to {out}: {e.strerror or e}") from e
    logger.info(f"Wrote {len(written)} files to {out}")
    return written


def run_convergence(env_cfg: EnvConfig, train_cfg: TrainConfig) -> pd.DataFrame:
    """Train both learning agents on one scenario and stack their convergence logs."""
    frames = []
    deep = run_training(env_cfg, train_cfg)
    tabular = run_qlearning(env_cfg, train_cfg)
    for agent, log in ((AgentName.I_ICS, deep.log), (AgentName.QLEARNING, tabular.log)):
        rows = [{"step": e.step, "agent": agent.value, "epsilon": e.epsilon,
                 "moving_avg_reward": e.moving_avg_reward, "loss": e.loss} for e in log]
        frames.append(pd.DataFrame(rows, columns=["step", "agent", "epsilon", "moving_avg_reward", "loss"]))
    return pd.concat(frames, ignore_index=True)


def write_convergence_log(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        logger.error(f"Cannot write convergence log to {path}: {e}")
        raise
    return path

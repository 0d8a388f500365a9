"""
Command-line surface of the simulator.

``run`` executes an experiment matrix, ``train`` and ``eval`` work on a
single cell, ``convergence`` writes the learning curves of both learning
agents and ``check`` runs the built-in consistency checks. Options given on
the command line override values read from ``--config``.
"""

from builtins import float, int, str
import functools
import logging
from pathlib import Path
from typing import Dict, Optional

import click
import pandas as pd

from app.dependencies import get_settings, load_run_config
from app.schemas.env_schemas import ChannelPreset, WeightPreset
from app.schemas.experiment_schemas import AgentName, CellKey
from app.services.agent_service import DeterministicPolicy, DqnPolicy, GreedyPolicy, QTablePolicy
from app.services.harness_service import (
    cell_env_config, emit, run_convergence, run_matrix, scenario_channels, scenario_weights, write_convergence_log,
)
from app.services.self_check_service import run_self_checks
from app.services.training_service import evaluate, run_qlearning, run_training
from app.utils.checkpoint import load_net, load_q_table, save_net, save_q_table
from app.utils.errors import ConfigurationError, IcsError

logger = logging.getLogger(__name__)

AGENT_CHOICE = click.Choice([a.value for a in AgentName])
CHANNEL_CHOICE = click.Choice([c.value for c in ChannelPreset])
WEIGHTS_CHOICE = click.Choice([w.value for w in WeightPreset])


def handle_errors(command):
    """Turn domain and I/O errors into clean click failures (exit code 1)."""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except IcsError as e:
            raise click.ClickException(str(e)) from e
        except OSError as e:
            raise click.FileError(getattr(e, "filename", None) or "output", hint=str(e)) from e
    return wrapper


def _resolve(config_path: Optional[str], env: Dict = None, train: Dict = None, experiment: Dict = None):
    return load_run_config(config_path).with_overrides(env=env, train=train, experiment=experiment)


def _single_cell(agent: str, lam: Optional[float], channel: Optional[str], weights: Optional[str], seed: int,
                 run_cfg) -> CellKey:
    return CellKey(
        agent=AgentName(agent),
        arrival_mean=run_cfg.env.arrival_mean if lam is None else lam,
        channel=ChannelPreset(channel) if channel else scenario_channels(run_cfg.experiment, run_cfg.env)[0],
        weights=WeightPreset(weights) if weights else scenario_weights(run_cfg.experiment, run_cfg.env)[0],
        seed=seed,
    )


@click.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Run configuration file.")
@click.option("--agent", "agents", help="Comma separated agents (i-ics, qlearning, greedy, deterministic).")
@click.option("--lambda", "lambdas", help="Comma separated mean arrival rates.")
@click.option("--channel", "channels", help="Comma separated channel presets (poor, normal, good).")
@click.option("--weights", help="Comma separated weight presets (W1, W2).")
@click.option("--seeds", help="Comma separated seeds.")
@click.option("--eval-slots", type=int, help="Evaluation slots per cell.")
@click.option("--steps", type=int, help="Training steps for learning agents.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), help="Output directory (default: ICS_OUTPUT_DIR).")
@click.option("--plot-data", is_flag=True, help="Also write one CSV per metric versus lambda.")
@click.option("--jobs", type=int, help="Worker processes.")
@handle_errors
def run(config_path, agents, lambdas, channels, weights, seeds, eval_slots, steps, out_dir, plot_data, jobs):
    """Run the experiment matrix and write result tables."""
    settings = get_settings()
    run_cfg = _resolve(
        config_path,
        train={"total_steps": steps},
        experiment={"agents": agents, "lambdas": lambdas, "channels": channels, "weights": weights,
                    "seeds": seeds, "eval_slots": eval_slots},
    )
    spec = run_cfg.experiment
    click.echo(f"Running {spec.cell_count} cells.")
    result = run_matrix(spec, run_cfg.env, run_cfg.train, jobs=jobs or settings.max_jobs)
    written = emit(result, out_dir or settings.output_dir, plot_data=plot_data)
    for path in written:
        click.echo(f"wrote {path}")
    if not result.ok:
        for failure in result.failures:
            click.echo(f"FAILED {failure.key.label()}: {failure.error}", err=True)
        raise click.exceptions.Exit(1)


@click.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--agent", type=click.Choice([AgentName.I_ICS.value, AgentName.QLEARNING.value]),
              default=AgentName.I_ICS.value, show_default=True)
@click.option("--lambda", "lam", type=float)
@click.option("--channel", type=CHANNEL_CHOICE)
@click.option("--weights", type=WEIGHTS_CHOICE)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--steps", type=int, help="Training steps (T).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), help="Directory for the checkpoint and log.")
@handle_errors
def train(config_path, agent, lam, channel, weights, seed, steps, out_dir):
    """Train one learning agent on one scenario."""
    settings = get_settings()
    run_cfg = _resolve(config_path, train={"total_steps": steps, "seed": seed})
    key = _single_cell(agent, lam, channel, weights, seed, run_cfg)
    env_cfg = cell_env_config(key, run_cfg.env)
    out = Path(out_dir or settings.output_dir)

    if key.agent == AgentName.I_ICS:
        result = run_training(env_cfg, run_cfg.train)
        artifact = save_net(result.net, out / "i-ics.ckpt")
    else:
        result = run_qlearning(env_cfg, run_cfg.train)
        artifact = save_q_table(result.table, out / "q_table.csv")
    log = pd.DataFrame([e.model_dump() for e in result.log], columns=["step", "epsilon", "moving_avg_reward", "loss"])
    log_path = write_convergence_log(log, out / f"{key.agent.value}_convergence.csv")
    click.echo(f"wrote {artifact}")
    click.echo(f"wrote {log_path}")


@click.command(name="eval")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--agent", type=AGENT_CHOICE, required=True)
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False),
              help="Network checkpoint (i-ics) or Q-table CSV (qlearning).")
@click.option("--lambda", "lam", type=float)
@click.option("--channel", type=CHANNEL_CHOICE)
@click.option("--weights", type=WEIGHTS_CHOICE)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n-seeds", type=int, default=1, show_default=True)
@click.option("--slots", type=int, help="Evaluation slots per seed.")
@handle_errors
def evaluate_command(config_path, agent, checkpoint, lam, channel, weights, seed, n_seeds, slots):
    """Evaluate one policy on one scenario and print the report as JSON."""
    run_cfg = load_run_config(config_path)
    key = _single_cell(agent, lam, channel, weights, seed, run_cfg)
    env_cfg = cell_env_config(key, run_cfg.env)
    if key.agent.learns and checkpoint is None:
        raise ConfigurationError(f"--checkpoint is required to evaluate {key.agent.value}.")
    if key.agent == AgentName.I_ICS:
        policy = DqnPolicy(load_net(checkpoint), env_cfg)
    elif key.agent == AgentName.QLEARNING:
        policy = QTablePolicy(load_q_table(checkpoint, env_cfg), env_cfg)
    elif key.agent == AgentName.GREEDY:
        policy = GreedyPolicy(env_cfg)
    else:
        policy = DeterministicPolicy(env_cfg, run_cfg.experiment.deterministic_frames)
    report = evaluate(policy, env_cfg, slots or run_cfg.experiment.eval_slots, n_seeds=n_seeds, seed=seed)
    click.echo(report.model_dump_json(indent=2))


@click.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--lambda", "lam", type=float)
@click.option("--channel", type=CHANNEL_CHOICE)
@click.option("--weights", type=WEIGHTS_CHOICE)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--steps", type=int)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="CSV path (default: <output_dir>/convergence.csv).")
@handle_errors
def convergence(config_path, lam, channel, weights, seed, steps, out_path):
    """Train i-ICS and Q-learning on one scenario and write both convergence logs."""
    settings = get_settings()
    run_cfg = _resolve(config_path, train={"total_steps": steps, "seed": seed})
    key = _single_cell(AgentName.I_ICS.value, lam, channel, weights, seed, run_cfg)
    frame = run_convergence(cell_env_config(key, run_cfg.env), run_cfg.train)
    path = write_convergence_log(frame, out_path or Path(settings.output_dir) / "convergence.csv")
    click.echo(f"wrote {path}")


@click.command()
def check():
    """Run the formula, gradient and oracle self-checks."""
    results = run_self_checks()
    for result in results:
        click.echo(f"{'PASS' if result.passed else 'FAIL'} {result.name}: {result.detail}")
    if not all(r.passed for r in results):
        raise click.exceptions.Exit(1)

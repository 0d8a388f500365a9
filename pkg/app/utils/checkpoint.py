"""
Persistence for trained agents.

Network checkpoints are a single JSON header line followed by every
parameter array in ``PARAM_NAMES`` order as little-endian float64. Q-tables
are written as CSV with one row per ``(q, c)`` state and one column per
frame count.
"""

from builtins import int, open, str
import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from app.models.dueling_net import PARAM_NAMES, DuelingNet
from app.models.q_table import QTable
from app.schemas.env_schemas import EnvConfig
from app.schemas.training_schemas import Aggregation, LearningRateSchedule
from app.utils.errors import ContractViolation

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "ics-dueling-net"
CHECKPOINT_VERSION = 1

PathLike = Union[str, Path]


class CheckpointHeader(BaseModel):
    format: str = CHECKPOINT_FORMAT
    version: int = CHECKPOINT_VERSION
    input_dim: int
    hidden_dim: int
    action_count: int
    aggregation: Aggregation


def _shapes(header: CheckpointHeader):
    i, h, a = header.input_dim, header.hidden_dim, header.action_count
    return {
        "w_hidden": (h, i), "b_hidden": (h,),
        "w_value": (1, h), "b_value": (1,),
        "w_advantage": (a, h), "b_advantage": (a,),
    }


def save_net(net: DuelingNet, path: PathLike) -> Path:
    path = Path(path)
    header = CheckpointHeader(input_dim=net.input_dim, hidden_dim=net.hidden_dim,
                              action_count=net.action_count, aggregation=net.aggregation)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as stream:
        stream.write(header.model_dump_json().encode("utf-8") + b"\n")
        for name in PARAM_NAMES:
            stream.write(np.ascontiguousarray(getattr(net, name), dtype="<f8").tobytes())
    logger.info(f"Saved network checkpoint to {path}")
    return path


def load_net(path: PathLike) -> DuelingNet:
    """
    Read a checkpoint written by :func:`save_net`.

    Raises:
        ContractViolation: If the header is malformed, the format tag or
            version is unknown, or the payload size does not match.
    """
    with open(path, "rb") as stream:
        header_line = stream.readline()
        payload = stream.read()
    try:
        header = CheckpointHeader.model_validate_json(header_line)
    except ValidationError as e:
        raise ContractViolation(f"Malformed checkpoint header in {path}: {e}") from e
    if header.format != CHECKPOINT_FORMAT or header.version != CHECKPOINT_VERSION:
        raise ContractViolation(f"Unsupported checkpoint {header.format!r} v{header.version} in {path}.")

    shapes = _shapes(header)
    expected = 8 * sum(int(np.prod(shape)) for shape in shapes.values())
    if len(payload) != expected:
        raise ContractViolation(f"Checkpoint {path} holds {len(payload)} payload bytes, expected {expected}.")
    arrays, offset = {}, 0
    for name in PARAM_NAMES:
        count = int(np.prod(shapes[name]))
        arrays[name] = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).astype(np.float64)
        arrays[name] = arrays[name].reshape(shapes[name])
        offset += 8 * count
    return DuelingNet(input_dim=header.input_dim, hidden_dim=header.hidden_dim,
                      action_count=header.action_count, aggregation=header.aggregation, **arrays)


def q_table_to_frame(table: QTable) -> pd.DataFrame:
    rows = table.values.shape[0]
    frame = pd.DataFrame(table.values, columns=[f"a{j + 1}" for j in range(table.values.shape[1])])
    frame.insert(0, "c", np.arange(rows) % table.class_count)
    frame.insert(0, "q", np.arange(rows) // table.class_count)
    return frame


def save_q_table(table: QTable, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    q_table_to_frame(table).to_csv(path, index=False, float_format="%.17g")
    return path


def load_q_table(path: PathLike, cfg: EnvConfig, alpha: float = 0.1, eta: float = 0.9,
                 schedule: LearningRateSchedule = LearningRateSchedule.CONSTANT) -> QTable:
    """Rebuild a Q-table from CSV; visit counts are not persisted and restart at zero."""
    frame = pd.read_csv(path)
    table = QTable.zeros(cfg, alpha=alpha, eta=eta, schedule=schedule)
    action_columns = [f"a{j + 1}" for j in range(cfg.max_frames)]
    if list(frame.columns) != ["q", "c", *action_columns] or len(frame) != cfg.state_count:
        raise ContractViolation(f"Q-table CSV {path} does not match a {cfg.state_count} x {cfg.max_frames} table.")
    rows = frame["q"].to_numpy() * cfg.class_count + frame["c"].to_numpy()
    table.values[rows] = frame[action_columns].to_numpy(dtype=np.float64)
    return table

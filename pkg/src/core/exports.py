import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from src.core.trajectories import ControlSignal, StatePath
from src.errors import ContractViolationError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def write_table(path: Path, header: Sequence[str], columns: Sequence[np.ndarray]) -> Path:
    """Write equally long columns as CSV at full double precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    if table.shape[1] != len(header):
        raise ContractViolationError(f"{len(header)} headers for {table.shape[1]} columns")
    np.savetxt(path, table, delimiter=",", header=",".join(header), comments="", fmt=FLOAT_FORMAT)
    logger.debug(f"Wrote {path} ({table.shape[0]} rows)")
    return path


def write_trajectory_csv(
    path: Path,
    state: StatePath,
    control: Optional[ControlSignal] = None,
    state_names: Optional[Sequence[str]] = None,
) -> Path:
    names = list(state_names or [f"y{i + 1}" for i in range(state.dim)])
    header = ["t"] + names
    columns = [state.grid.nodes] + [state.values[:, i] for i in range(state.dim)]
    if control is not None:
        header += [f"u{j + 1}" for j in range(control.channels)]
        columns += [control.values[:, j] for j in range(control.channels)]
    return write_table(path, header, columns)


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path

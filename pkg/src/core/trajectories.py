"""Time grids and the trajectories living on them.

All types are frozen and hold read-only arrays, so they can be shared
between worker threads without copying.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.errors import BlowUpError, ContractViolationError


def _frozen(values: np.ndarray) -> np.ndarray:
    array = np.array(values, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)):
            raise ContractViolationError("time grid bounds must be finite")
        if self.t_end <= self.t_start:
            raise ContractViolationError(
                f"t_end={self.t_end} must exceed t_start={self.t_start}"
            )
        if self.n_steps < 2:
            raise ContractViolationError(f"n_steps={self.n_steps} must be at least 2")

    @classmethod
    def with_density(cls, t_start: float, t_end: float, steps_per_unit: int) -> "TimeGrid":
        """Grid whose step count scales with the interval length."""
        n_steps = max(2, int(round((t_end - t_start) * steps_per_unit)))
        return cls(t_start, t_end, n_steps)

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @property
    def nodes(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_nodes)

    def node(self, k: int) -> float:
        return self.t_start + k * self.dt

    @property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights, dt·w_k."""
        w = np.full(self.n_nodes, self.dt)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t_start, self.t_end, self.n_steps * factor)


@dataclass(frozen=True)
class ControlSignal:
    grid: TimeGrid
    values: np.ndarray
    box_bound: Optional[float] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != self.grid.n_nodes:
            raise ContractViolationError(
                f"control has {values.shape[0]} rows for {self.grid.n_nodes} nodes"
            )
        if self.box_bound is not None:
            if self.box_bound < 0:
                raise ContractViolationError("box_bound must be nonnegative")
            if np.max(np.abs(values), initial=0.0) > self.box_bound:
                raise ContractViolationError(
                    f"control violates the box bound {self.box_bound}"
                )
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def zeros(cls, grid: TimeGrid, channels: int, box_bound: Optional[float] = None):
        return cls(grid, np.zeros((grid.n_nodes, channels)), box_bound)

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "ControlSignal":
        return ControlSignal(self.grid, values, self.box_bound)


@dataclass(frozen=True)
class StatePath:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != self.grid.n_nodes:
            raise ContractViolationError(
                f"state has {values.shape[0]} rows for {self.grid.n_nodes} nodes"
            )
        check_finite(values, self.grid)
        object.__setattr__(self, "values", _frozen(values))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def initial(self) -> np.ndarray:
        return self.values[0]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


@dataclass(frozen=True)
class RiccatiPath:
    """Symmetric 2×2 matrices Π(t_k) on a grid, optionally one period long."""

    grid: TimeGrid
    matrices: np.ndarray
    periodic: bool = field(default=False)

    def __post_init__(self):
        matrices = np.asarray(self.matrices, dtype=float)
        if matrices.shape[0] != self.grid.n_nodes or matrices.shape[1:] != (2, 2):
            raise ContractViolationError(f"unexpected Riccati array shape {matrices.shape}")
        check_finite(matrices.reshape(matrices.shape[0], -1), self.grid)
        object.__setattr__(self, "matrices", _frozen(matrices))

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation in t; exact at grid nodes.

        Periodic paths extend by ``t mod period``.
        """
        g = self.grid
        if self.periodic:
            period = g.t_end - g.t_start
            t = g.t_start + math.fmod(t - g.t_start, period)
            if t < g.t_start:
                t += period
        position = (t - g.t_start) / g.dt
        k = int(math.floor(position + 1e-9))
        k = min(max(k, 0), g.n_steps)
        theta = position - k
        if abs(theta) < 1e-9 or k == g.n_steps:
            return self.matrices[k]
        return (1.0 - theta) * self.matrices[k] + theta * self.matrices[k + 1]


def check_finite(values: np.ndarray, grid: TimeGrid, threshold: float = math.inf) -> None:
    """Raise ``BlowUpError`` at the first node holding a non-finite or oversized entry."""
    values = np.asarray(values, dtype=float)
    rows = values.reshape(values.shape[0], -1)
    bad = ~np.isfinite(rows).all(axis=1)
    if math.isfinite(threshold):
        with np.errstate(invalid="ignore"):
            bad |= (np.abs(rows) > threshold).any(axis=1)
    if bad.any():
        k = int(np.argmax(bad))
        raise BlowUpError("state left the admissible range", time=grid.node(k), node=k)

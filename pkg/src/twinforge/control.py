"""Source-term controls and the known source ``q(u, c) = c``.

A control is either one scalar for the whole run or a value per grid node.  A
grid control acts on output interval ``i -> i+1`` through the average of rows
``i`` and ``i+1`` (trapezoid in time).  With periodic boundaries the first and
last space nodes are the same point, so cell 0 sees the mean of both columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .field import Grid
from .tape import take, total


@dataclass(frozen=True, eq=False)
class ControlField:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim not in (0, 2):
            raise ShapeError(f"control must be scalar or M x N, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("control contains non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def scalar(cls, value=0.0) -> ControlField:
        return cls(np.array(float(value)))

    @classmethod
    def uniform(cls, grid: Grid, value=0.0) -> ControlField:
        return cls(np.full(grid.shape, float(value)))

    @property
    def is_scalar(self) -> bool:
        return self.values.ndim == 0

    @property
    def size(self) -> int:
        return int(self.values.size)

    def check(self, grid: Grid) -> None:
        if not self.is_scalar and self.values.shape != grid.shape:
            raise ShapeError(f"control shape {self.values.shape} does not match grid {grid.shape}")

    def perturbed(self, flat_index: int, delta: float) -> ControlField:
        v = np.array(self.values, dtype=float)
        v.reshape(-1)[flat_index] += delta
        return ControlField(v)


def cell_nodes(grid: Grid, bc: str) -> np.ndarray:
    """Indices of the space nodes that carry unknowns."""
    if bc == "periodic":
        return np.arange(grid.N - 1)
    return np.arange(1, grid.N)


def source_index(grid: Grid, bc: str, rows) -> np.ndarray:
    """Flat control indices whose mean (over axis 0) is the source of each cell.

    The result has shape ``(4, len(rows), n_cells)`` for the intervals starting at ``rows``.
    """
    rows = np.atleast_1d(np.asarray(rows))
    cols = cell_nodes(grid, bc)
    cols_b = cols.copy()
    if bc == "periodic":
        cols_b[0] = grid.N - 1
    r0 = rows[:, None] * grid.N
    r1 = (rows[:, None] + 1) * grid.N
    return np.stack([r0 + cols, r0 + cols_b, r1 + cols, r1 + cols_b])


def interval_sources(control, grid: Grid, bc: str, rows, is_scalar: bool):
    """Source of every cell for the intervals starting at ``rows``; shape ``(len(rows), n_cells)``.

    ``control`` may be an array or a tape variable.  Scalar controls are returned
    unchanged and broadcast inside the scheme.
    """
    if is_scalar:
        return control
    return 0.25 * total(take(control, source_index(grid, bc, rows)), axis=0)

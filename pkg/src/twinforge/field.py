"""Uniform space-time grids, quadrature weights and solution fields.

A field stores ``k`` conserved variables on an ``M x N`` (time x space) grid.
Fields are written as CSV with a one-line JSON header::

    # {"k": 1, "M": 21, "N": 32, "T": 1.0, "x_lo": 0.0, "x_hi": 1.0}
    t,x,v_1,...,v_k        (M*N rows, time-major, 17 significant digits)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigError, FieldFormatError, ShapeError


@dataclass(frozen=True)
class Grid:
    M: int
    N: int
    T: float
    x_lo: float = 0.0
    x_hi: float = 1.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ConfigError(f"need at least 2 time nodes, got {self.M}", "M")
        if int(self.N) != self.N or self.N < 2:
            raise ConfigError(f"need at least 2 space nodes, got {self.N}", "N")
        if not self.T > 0:
            raise ConfigError(f"final time must be positive, got {self.T}", "T")
        if not self.x_hi > self.x_lo:
            raise ConfigError(f"empty spatial domain ({self.x_lo}, {self.x_hi})", "domain")

    @cached_property
    def t_nodes(self) -> np.ndarray:
        t = np.linspace(0.0, self.T, self.M)
        t.flags.writeable = False
        return t

    @cached_property
    def x_nodes(self) -> np.ndarray:
        x = np.linspace(self.x_lo, self.x_hi, self.N)
        x.flags.writeable = False
        return x

    @property
    def dt(self) -> float:
        return self.T / (self.M - 1)

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / (self.N - 1)

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def shape(self) -> tuple[int, int]:
        return (self.M, self.N)

    def to_dict(self) -> dict:
        return {"M": self.M, "N": self.N, "T": self.T, "domain": [self.x_lo, self.x_hi]}


def build_grid(M: int, N: int, T: float, domain=(0.0, 1.0)) -> Grid:
    """Uniform grid with ``M`` time nodes on ``[0, T]`` and ``N`` space nodes on ``domain``."""
    x_lo, x_hi = domain
    return Grid(int(M), int(N), float(T), float(x_lo), float(x_hi))


@dataclass(frozen=True, eq=False)
class QuadratureWeights:
    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        if w.ndim != 2:
            raise ShapeError(f"weights must be M x N, got shape {w.shape}")
        if not np.all(w > 0):
            raise ValueError("quadrature weights must be positive")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    @property
    def shape(self):
        return self.w.shape

    def is_time_independent(self, rtol=1e-14) -> bool:
        return bool(np.allclose(self.w, self.w[0], rtol=rtol, atol=0.0))


def _trapezoid_1d(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def trapezoid_weights(grid: Grid) -> QuadratureWeights:
    """Tensor-product trapezoid rule; the weights sum to ``T * |domain|``."""
    wt = _trapezoid_1d(grid.M, grid.dt)
    wx = _trapezoid_1d(grid.N, grid.dx)
    return QuadratureWeights(np.outer(wt, wx))


def uniform_time_weights(grid: Grid) -> QuadratureWeights:
    """Time-independent weights ``w_ij = (T / M) * wx_j`` (trapezoid in space).

    Used where a weighted norm must not change from one time row to the next.
    """
    wx = _trapezoid_1d(grid.N, grid.dx)
    return QuadratureWeights(np.tile(grid.T / grid.M * wx, (grid.M, 1)))


def space_weights(grid: Grid) -> np.ndarray:
    return _trapezoid_1d(grid.N, grid.dx)


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3 or v.shape[1:] != self.grid.shape:
            raise ShapeError(f"field shape {np.shape(self.values)} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def u(self) -> np.ndarray:
        """The single conserved variable as an ``M x N`` array (k = 1 fields)."""
        if self.k != 1:
            raise ShapeError(f"field has {self.k} variables")
        return self.values[0]

    def __sub__(self, other: SpaceTimeField) -> SpaceTimeField:
        if self.grid != other.grid or self.values.shape != other.values.shape:
            raise ShapeError("fields live on different grids")
        return SpaceTimeField(self.values - other.values, self.grid)


def weighted_sq_norm(field: SpaceTimeField, weights: QuadratureWeights, mask=None) -> float:
    """``sum_{(i,j) in mask} w_ij * sum_vars value_ij**2`` (all nodes when ``mask`` is None)."""
    if weights.shape != field.grid.shape:
        raise ShapeError(f"weights {weights.shape} vs grid {field.grid.shape}")
    sq = np.sum(field.values**2, axis=0)
    w = weights.w
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != w.shape:
            raise ShapeError(f"mask {mask.shape} vs grid {w.shape}")
        w = np.where(mask, w, 0.0)
    return float(np.sum(w * sq))


def write_field(path, field: SpaceTimeField) -> None:
    g = field.grid
    header = json.dumps({"k": field.k, "M": g.M, "N": g.N, "T": g.T, "x_lo": g.x_lo, "x_hi": g.x_hi})
    tt, xx = np.meshgrid(g.t_nodes, g.x_nodes, indexing="ij")
    cols = [tt.ravel(), xx.ravel()] + [field.values[v].ravel() for v in range(field.k)]
    np.savetxt(path, np.column_stack(cols), fmt="%.17g", delimiter=",", header=header, comments="# ")


def read_field(path) -> SpaceTimeField:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise FieldFormatError(f"{path}: missing JSON header line")
        try:
            meta = json.loads(first.lstrip("#").strip())
            k, M, N = int(meta["k"]), int(meta["M"]), int(meta["N"])
            grid = Grid(M, N, float(meta["T"]), float(meta["x_lo"]), float(meta["x_hi"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise FieldFormatError(f"{path}: malformed header: {exc}") from exc
        try:
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise FieldFormatError(f"{path}: {exc}") from exc
    if data.shape != (M * N, 2 + k):
        raise ShapeError(f"{path}: expected {M * N} rows of {2 + k} columns, got {data.shape}")
    if not np.all(np.isfinite(data)):
        raise FieldFormatError(f"{path}: non-finite entries")
    values = data[:, 2:].T.reshape(k, M, N)
    return SpaceTimeField(values, grid)

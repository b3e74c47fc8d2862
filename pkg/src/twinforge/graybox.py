"""Reference conservation-law simulators used as gray boxes.

Training code only ever sees the :class:`SpaceTimeField` returned by
:func:`graybox_solve`.  :func:`true_flux` is the hidden physics and is imported
solely by the verification harness (``twinforge.verify``) and the CLI's
verification commands.

Scheme: first-order finite volume with the Rusanov (local Lax-Friedrichs) flux
and forward Euler substeps, ``substeps`` per output interval.  Unknowns live on
the grid nodes; with periodic boundaries the last node duplicates the first.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .control import ControlField, cell_nodes, interval_sources
from .errors import BlowUpError, CFLError, ConfigError
from .field import Grid, SpaceTimeField, space_weights

FLUX_KINDS = ("buckley_leverett", "linear_advection", "burgers")
IC_KINDS = ("sine", "gaussian", "step")
BC_KINDS = ("periodic", "inflow")


def true_flux(flux_kind: str, u, speed: float = 1.0):
    """Exact flux ``F(u)`` and ``dF/du``."""
    u = np.asarray(u, dtype=float)
    if flux_kind == "buckley_leverett":
        d = 1.0 + 2.0 * (1.0 - u) ** 2
        return u * u / d, (2.0 * u * d + 4.0 * u * u * (1.0 - u)) / (d * d)
    if flux_kind == "linear_advection":
        return speed * u, np.full_like(u, speed)
    if flux_kind == "burgers":
        return 0.5 * u * u, u.copy()
    raise ConfigError(f"unknown flux kind {flux_kind!r}", "flux")


@dataclass(frozen=True)
class InitialCondition:
    kind: str
    params: dict = field(default_factory=dict)

    _DEFAULTS = {
        "sine": {"amplitude": 0.45, "offset": 0.5, "periods": 1},
        "gaussian": {"center": 0.5, "width": 0.1, "height": 1.0, "base": 0.0},
        "step": {"left": 0.0, "right": 1.0, "jump_pos": 0.5},
    }

    def __post_init__(self):
        if self.kind not in IC_KINDS:
            raise ConfigError(f"unknown initial condition {self.kind!r}", "ic.kind")
        unknown = set(self.params) - set(self._DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"unknown parameters {sorted(unknown)}", "ic")

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items()))))

    def param(self, name):
        return float(self.params.get(name, self._DEFAULTS[self.kind][name]))

    def __call__(self, x, x_lo=0.0, length=1.0):
        x = np.asarray(x, dtype=float)
        if self.kind == "sine":
            s = (x - x_lo) / length
            return self.param("offset") + self.param("amplitude") * np.sin(2 * np.pi * self.param("periods") * s)
        if self.kind == "gaussian":
            z = (x - self.param("center")) / self.param("width")
            return self.param("base") + self.param("height") * np.exp(-z * z)
        return np.where(x < self.param("jump_pos"), self.param("left"), self.param("right"))

    def to_dict(self):
        return {"kind": self.kind, **self.params}


@dataclass(frozen=True)
class GrayBoxCase:
    flux: str
    ic: InitialCondition
    grid: Grid
    cfl: float = 0.5
    bc: str = "periodic"
    inflow_value: float = 0.0
    speed: float = 1.0
    substeps: int | None = None

    def __post_init__(self):
        if self.flux not in FLUX_KINDS:
            raise ConfigError(f"unknown flux kind {self.flux!r}", "flux")
        if not 0.0 < self.cfl <= 0.5:
            raise ConfigError(f"cfl must lie in (0, 0.5], got {self.cfl}", "cfl")
        if self.bc not in BC_KINDS:
            raise ConfigError(f"unknown boundary condition {self.bc!r}", "bc")
        if self.substeps is not None and (int(self.substeps) != self.substeps or self.substeps < 1):
            raise ConfigError(f"substeps must be a positive integer, got {self.substeps}", "substeps")
        u0 = self.initial_row()
        if self.flux == "buckley_leverett" and (u0.min() < 0.0 or u0.max() > 1.0):
            raise ConfigError("Buckley-Leverett saturation must stay within [0, 1]", "ic")

    def initial_row(self) -> np.ndarray:
        g = self.grid
        u0 = np.asarray(self.ic(g.x_nodes, g.x_lo, g.length), dtype=float)
        if self.bc == "periodic":
            u0[-1] = u0[0]
        else:
            u0[0] = self.inflow_value
        return u0


@dataclass(frozen=True)
class GrayBoxRun:
    field: SpaceTimeField
    substeps: int
    max_courant: float
    conservation_drift: float


_solve_lock = threading.Lock()
_solve_count = 0


def solve_count() -> int:
    return _solve_count


def _rusanov_step(u, dts, h, src, flux_fn, bc, inflow):
    F, dF = flux_fn(u)
    if bc == "periodic":
        uR, FR, dFR = np.roll(u, -1), np.roll(F, -1), np.roll(dF, -1)
        fhat = 0.5 * (F + FR) - 0.5 * np.maximum(np.abs(dF), np.abs(dFR)) * (uR - u)
        div = fhat - np.roll(fhat, 1)
    else:
        ue = np.concatenate(([inflow], u, u[-1:]))
        Fe, dFe = flux_fn(ue)
        a = np.maximum(np.abs(dFe[:-1]), np.abs(dFe[1:]))
        fhat = 0.5 * (Fe[:-1] + Fe[1:]) - 0.5 * a * (ue[1:] - ue[:-1])
        div = fhat[1:] - fhat[:-1]
    return u - dts / h * div + dts * src, np.max(np.abs(dF))


def _speed_bound(case: GrayBoxCase, control: ControlField, flux_fn) -> float:
    u0 = case.initial_row()
    c = np.abs(control.values)
    drift = float(c) * case.grid.T if control.is_scalar else float(np.sum(np.max(c, axis=1)[:-1] + np.max(c, axis=1)[1:]) * 0.5 * case.grid.dt)
    lo, hi = u0.min() - drift, u0.max() + drift
    if case.bc == "inflow":
        lo, hi = min(lo, case.inflow_value - drift), max(hi, case.inflow_value + drift)
    return float(np.max(np.abs(flux_fn(np.linspace(lo, hi, 2001))[1])))


def required_substeps(case: GrayBoxCase, control: ControlField | None = None) -> int:
    """Smallest substep count keeping the Courant number below ``case.cfl``."""
    control = control or ControlField.scalar(0.0)
    smax = _speed_bound(case, control, lambda u: true_flux(case.flux, u, case.speed))
    return max(1, math.ceil(smax * case.grid.dt / (case.cfl * case.grid.dx) * (1.0 + 1e-9)))


def graybox_run(case: GrayBoxCase, control: ControlField | None = None) -> GrayBoxRun:
    global _solve_count
    control = control or ControlField.scalar(0.0)
    g = case.grid
    control.check(g)
    with _solve_lock:
        _solve_count += 1

    def flux_fn(u):
        return true_flux(case.flux, u, case.speed)

    K = case.substeps or required_substeps(case, control)
    dts, h = g.dt / K, g.dx
    cells = cell_nodes(g, case.bc)
    sources = np.broadcast_to(
        interval_sources(control.values, g, case.bc, np.arange(g.M - 1), control.is_scalar), (g.M - 1, len(cells))
    )
    u = case.initial_row()[cells]
    rows = np.empty(g.shape)
    rows[0] = case.initial_row()
    mass0 = np.sum(u) * h
    max_courant = 0.0
    for i in range(g.M - 1):
        for _ in range(K):
            u, smax = _rusanov_step(u, dts, h, sources[i], flux_fn, case.bc, case.inflow_value)
            courant = smax * dts / h
            max_courant = max(max_courant, courant)
            if courant > case.cfl * (1.0 + 1e-9):
                need = math.ceil(smax * g.dt / (case.cfl * h) * (1.0 + 1e-9))
                raise CFLError(f"Courant number {courant:.4g} exceeds cfl={case.cfl} in interval {i}", need)
        if not np.all(np.isfinite(u)):
            raise BlowUpError(i + 1)
        rows[i + 1, cells] = u
        if case.bc == "periodic":
            rows[i + 1, -1] = u[0]
        else:
            rows[i + 1, 0] = case.inflow_value
    drift = abs(np.sum(u) * h - mass0) / max(abs(mass0), 1e-300)
    return GrayBoxRun(SpaceTimeField(rows, g), K, max_courant, float(drift))


def graybox_solve(case: GrayBoxCase, control: ControlField | None = None) -> SpaceTimeField:
    return graybox_run(case, control).field


def graybox_objective(solution: SpaceTimeField, target: float = 0.5) -> float:
    """Trapezoid-in-space integral of ``(u(T, x) - target)**2``."""
    uT = solution.u[-1]
    return float(np.sum(space_weights(solution.grid) * (uT - target) ** 2))

"""The twin model: the gray box's scheme with the flux replaced by a dictionary expansion.

Two schemes exist.  ``rusanov_forward_euler`` mirrors the gray box (with smooth
``abs``/``max`` so it is differentiable) and is differentiated by recording the
whole march on a :class:`~twinforge.tape.Tape`.  ``implicit_upwind_linear`` is a
backward-Euler upwind scheme with an inflow boundary, used for the contraction
check; it is differentiated through :func:`~twinforge.tape.timestep_adjoint`.

Everything the twin needs from the gray box is its output field: the initial
row, the grid, and the substep count the gray run reported.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import tape as tp
from .basis import Dictionary, DictionaryFlux
from .control import ControlField, cell_nodes, interval_sources, source_index
from .errors import BlowUpError, CFLError, ConfigError, NumericalError, ShapeError
from .field import Grid, QuadratureWeights, SpaceTimeField, space_weights, trapezoid_weights

SCHEMES = ("rusanov_forward_euler", "implicit_upwind_linear")

_count_lock = threading.Lock()
_solve_count = 0


def solve_count() -> int:
    """Number of twin PDE solves (forward marches) performed in this process."""
    return _solve_count


def _count_solve():
    global _solve_count
    with _count_lock:
        _solve_count += 1


@dataclass(frozen=True)
class Discretization:
    grid: Grid
    substeps: int = 1
    bc: str = "periodic"
    inflow_value: float = 0.0
    scheme: str = "rusanov_forward_euler"
    smooth_eps: float = tp.DEFAULT_SMOOTH_EPS
    max_courant: float = 1.0  # explicit stability limit; larger wave speeds raise CFLError

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}", "scheme")
        if self.bc not in ("periodic", "inflow"):
            raise ConfigError(f"unknown boundary condition {self.bc!r}", "bc")
        if self.scheme == "implicit_upwind_linear" and self.bc != "inflow":
            raise ConfigError("the implicit upwind scheme needs an inflow boundary", "bc")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ConfigError(f"substeps must be a positive integer, got {self.substeps}", "substeps")


class _Layout:
    """Index bookkeeping between cell states and full grid rows."""

    def __init__(self, disc: Discretization):
        g = disc.grid
        self.grid = g
        self.bc = disc.bc
        self.g = float(disc.inflow_value)
        self.cells = cell_nodes(g, disc.bc)
        n = self.n = len(self.cells)
        if disc.bc == "periodic":
            self.col_map = np.append(np.arange(n), 0)
            self.col_mask = None
        else:
            self.col_map = np.concatenate(([0], np.arange(n)))
            self.col_mask = np.ones(g.N)
            self.col_mask[0] = 0.0
            self.col_offset = np.zeros(g.N)
            self.col_offset[0] = self.g
        self._shift_cache = {}

    def full(self, cells):
        """Full ``N``-node row(s) from cell state(s)."""
        if np.ndim(tp.value_of(cells)) == 1:
            idx = self.col_map
        else:
            rows = tp.value_of(cells).shape[0]
            idx = np.arange(rows)[:, None] * self.n + self.col_map
        out = tp.take(cells, idx)
        if self.col_mask is None:
            return out
        return out * self.col_mask + self.col_offset

    def shifts(self, shape):
        """Flat indices of right and left neighbours for states of ``shape``."""
        if shape not in self._shift_cache:
            n = self.n
            j = np.arange(n)
            if self.bc == "periodic":
                right, left = (j + 1) % n, (j - 1) % n
            else:
                right, left = np.minimum(j + 1, n - 1), np.maximum(j - 1, 0)
            base = np.arange(int(np.prod(shape[:-1], dtype=int))).reshape(shape[:-1] + (1,)) * n
            first = np.zeros(shape)
            first[..., 0] = 1.0
            self._shift_cache[shape] = (base + right, base + left, first, 1.0 - first)
        return self._shift_cache[shape]


@dataclass
class TwinModel:
    dictionary: Dictionary
    disc: Discretization
    u0: np.ndarray  # initial condition on the N grid nodes
    flux_override: object = None  # replaces the dictionary flux (verification only)

    def __post_init__(self):
        self.u0 = np.array(self.u0, dtype=float)
        if self.u0.shape != (self.disc.grid.N,):
            raise ShapeError(f"initial row has shape {self.u0.shape}, grid has N={self.disc.grid.N}")
        if self.dictionary.k != 1:
            raise ConfigError("only univariate fluxes are supported", "dictionary")
        self._layout = _Layout(self.disc)
        self._flux = self.flux_override if self.flux_override is not None else DictionaryFlux(self.dictionary.ids)

    @classmethod
    def from_gray(cls, dictionary: Dictionary, gray: SpaceTimeField, substeps: int, **disc_kw) -> TwinModel:
        """Twin on the gray field's grid with its initial row (and inflow value)."""
        if disc_kw.get("bc") == "inflow" and "inflow_value" not in disc_kw:
            disc_kw["inflow_value"] = float(gray.u[0, 0])
        return cls(dictionary, Discretization(gray.grid, substeps, **disc_kw), gray.u[0])

    @property
    def grid(self) -> Grid:
        return self.disc.grid

    @property
    def layout(self) -> _Layout:
        return self._layout

    @property
    def flux(self) -> DictionaryFlux:
        return self._flux

    def with_dictionary(self, dictionary: Dictionary) -> TwinModel:
        return TwinModel(dictionary, self.disc, self.u0, self.flux_override)

    def with_alphas(self, alphas) -> TwinModel:
        return self.with_dictionary(self.dictionary.with_alphas(alphas))


# ---------------------------------------------------------------------------
# explicit scheme (array or tape)


def _rusanov_substep(u, src, twin: TwinModel, prepared, r, dts):
    lay, eps = twin.layout, twin.disc.smooth_eps
    right, left, first, rest = lay.shifts(tp.value_of(u).shape)
    F, dF = twin.flux(u, prepared)
    a = tp.abs_smooth(dF, eps)
    uR, FR, aR = tp.take(u, right), tp.take(F, right), tp.take(a, right)
    fR = 0.5 * (F + FR) - 0.5 * tp.max_smooth(a, aR, eps) * (uR - u)
    fL = tp.take(fR, left)
    if lay.bc == "inflow":
        ghost = np.full((1,) * np.ndim(tp.value_of(u)), lay.g)
        Fg, dFg = twin.flux(ghost, prepared)
        fg = 0.5 * (Fg + F) - 0.5 * tp.max_smooth(tp.abs_smooth(dFg, eps), a, eps) * (u - lay.g)
        fL = fL * rest + fg * first
    out = u - r * (fR - fL)
    if src is not None:
        out = out + dts * src
    courant = r * float(np.max(tp.value_of(a)))
    if courant > twin.disc.max_courant:
        if not math.isfinite(courant):
            raise NumericalError("non-finite wave speed in the twin flux")
        need = math.ceil(courant * twin.disc.substeps / twin.disc.max_courant)
        raise CFLError(f"twin Courant number {courant:.3g} exceeds {twin.disc.max_courant}", need)
    return out


def _interval_source(control, twin: TwinModel, i, is_scalar):
    if is_scalar:
        return control
    idx = source_index(twin.grid, twin.disc.bc, [i])[:, 0, :]
    return 0.25 * tp.total(tp.take(control, idx), axis=0)


def _explicit_march(twin: TwinModel, alpha, control, is_scalar, check=True):
    """Cell states for every output row; works on arrays or tape variables."""
    g, K = twin.grid, twin.disc.substeps
    dts = g.dt / K
    r = dts / g.dx
    prepared = twin.flux.prepare(alpha)
    u = twin.u0[twin.layout.cells].copy()
    rows = [u]
    zero_src = is_scalar and not isinstance(control, tp.Var) and float(control) == 0.0
    for i in range(g.M - 1):
        src = None if zero_src else _interval_source(control, twin, i, is_scalar)
        for _ in range(K):
            u = _rusanov_substep(u, src, twin, prepared, r, dts)
        if check and not np.all(np.isfinite(tp.value_of(u))):
            raise BlowUpError(i + 1)
        rows.append(u)
    return rows


# ---------------------------------------------------------------------------
# implicit upwind scheme


@dataclass
class _ImplicitTrace:
    states: list  # every substep state, cells only
    jacobians: list  # d R / d u_next per substep
    feature_diffs: list  # d R / d alpha per substep, shape (n, n_bases)


def _implicit_step(twin, alphas, u_prev, src, r, dts, tol=1e-12, max_newton=50):
    g = twin.layout.g
    n = len(u_prev)
    base = getattr(twin.flux, "base", None)  # additive parameter-free flux (verification)

    def flux(v):
        phi, dphi = twin.flux.features(v)
        F, dF = alphas @ phi, alphas @ dphi
        if base is not None:
            F0, dF0 = base(v)
            F, dF = F + F0, dF + dF0
        return F, dF, phi

    Fg_arr, _, phi_g = flux(np.array([g]))
    Fg = float(Fg_arr[0])
    u = u_prev.copy()
    for _ in range(max_newton):
        F, dF, _ = flux(u)
        FL = np.concatenate(([Fg], F[:-1]))
        R = u - u_prev + r * (F - FL) - dts * src
        J = np.eye(n) + r * (np.diag(dF) - np.diag(dF[:-1], -1))
        if np.max(np.abs(R)) <= tol * (1.0 + np.max(np.abs(u))):
            break
        try:
            u = u - np.linalg.solve(J, R)
        except np.linalg.LinAlgError:
            raise NumericalError("singular Newton matrix in implicit step") from None
        if not np.all(np.isfinite(u)):
            raise NumericalError("Newton iteration diverged in implicit step")
    else:
        raise NumericalError("Newton iteration did not converge in implicit step")
    _, dF, phi = flux(u)
    J = np.eye(n) + r * (np.diag(dF) - np.diag(dF[:-1], -1))
    phiL = np.concatenate((phi_g, phi[:, :-1]), axis=1)
    return u, J, (r * (phi - phiL)).T


def _implicit_march(twin: TwinModel, alphas, control: ControlField):
    g, K = twin.grid, twin.disc.substeps
    dts = g.dt / K
    r = dts / g.dx
    lay = twin.layout
    srcs = np.broadcast_to(
        interval_sources(control.values, g, "inflow", np.arange(g.M - 1), control.is_scalar), (g.M - 1, lay.n)
    )
    u = twin.u0[lay.cells].copy()
    trace = _ImplicitTrace([u], [], [])
    rows = [u]
    for i in range(g.M - 1):
        for _ in range(K):
            u, J, dparam = _implicit_step(twin, alphas, u, srcs[i], r, dts)
            trace.states.append(u)
            trace.jacobians.append(J)
            trace.feature_diffs.append(dparam)
        if not np.all(np.isfinite(u)):
            raise BlowUpError(i + 1)
        rows.append(u)
    return rows, trace


# ---------------------------------------------------------------------------
# public solve / gradient API


def _as_control(control) -> ControlField:
    if control is None:
        return ControlField.scalar(0.0)
    if isinstance(control, ControlField):
        return control
    return ControlField(np.asarray(control, dtype=float))


def _alpha_array(twin: TwinModel, alphas, ndim=1):
    a = twin.dictionary.alphas if alphas is None else np.asarray(alphas, dtype=float).reshape(-1)
    if a.shape != (len(twin.dictionary),):
        raise ShapeError(f"{len(twin.dictionary)} bases but {a.size} coefficients")
    return a.reshape((-1,) + (1,) * ndim)


def _rows(twin: TwinModel, control: ControlField, alphas=None):
    control.check(twin.grid)
    _count_solve()
    if twin.disc.scheme == "implicit_upwind_linear":
        return _implicit_march(twin, _alpha_array(twin, alphas, 0), control)[0]
    return _explicit_march(twin, _alpha_array(twin, alphas), control.values, control.is_scalar)


def twin_solve(twin: TwinModel, control=None, alphas=None) -> SpaceTimeField:
    """Solve the twin PDE on the twin's grid; ``alphas`` overrides the stored coefficients."""
    control = _as_control(control)
    rows = _rows(twin, control, alphas)
    lay = twin.layout
    return SpaceTimeField(np.array([lay.full(u) for u in rows]), twin.grid)


def evaluate(twin: TwinModel, functional, control=None, alphas=None) -> float:
    """Value of ``functional(rows, control, layout)`` on the twin solution (no tape)."""
    control = _as_control(control)
    rows = _rows(twin, control, alphas)
    return float(functional(rows, control.values, twin.layout))


@dataclass
class ValueAndGrad:
    value: float
    d_alpha: np.ndarray
    d_control: np.ndarray


def value_and_grad(twin: TwinModel, functional, control=None, alphas=None) -> ValueAndGrad:
    """Value of a functional of the twin solution and its gradients with respect to the
    coefficients and the control, from one forward solve and one reverse sweep."""
    control = _as_control(control)
    control.check(twin.grid)
    if twin.disc.scheme == "implicit_upwind_linear":
        return _implicit_value_and_grad(twin, functional, control, alphas)
    _count_solve()
    t = tp.Tape()
    alpha = t.input(_alpha_array(twin, alphas))
    c = t.input(control.values)
    rows = _explicit_march(twin, alpha, c, control.is_scalar)
    out = functional(rows, c, twin.layout)
    if not isinstance(out, tp.Var):
        out = t.constant(out)
    if not np.isfinite(out.value):
        raise NumericalError("functional evaluated to a non-finite value")
    d_alpha, d_control = t.backward(out)
    return ValueAndGrad(float(out.value), d_alpha.reshape(-1), d_control)


def _implicit_value_and_grad(twin, functional, control, alphas) -> ValueAndGrad:
    g, K = twin.grid, twin.disc.substeps
    a = _alpha_array(twin, alphas, 0)
    _count_solve()
    rows, trace = _implicit_march(twin, a, control)

    # partials of the functional with respect to each output row and the control
    t = tp.Tape()
    c = t.input(control.values)
    row_vars = [rows[0]] + [t.input(u) for u in rows[1:]]
    out = functional(row_vars, c, twin.layout)
    if not isinstance(out, tp.Var):
        out = t.constant(out)
    grads = t.backward(out)
    d_c_direct, d_rows = grads[0], grads[1:]

    n = twin.layout.n
    n_steps = len(trace.jacobians)
    dts = g.dt / K
    dxi_dx = [np.zeros(n) for _ in range(n_steps + 1)]
    for i, d in enumerate(d_rows):
        dxi_dx[(i + 1) * K] = d
    eye = np.eye(n)
    steps = [
        tp.StepPartials(-eye, J, -dts * eye, dp) for J, dp in zip(trace.jacobians, trace.feature_diffs)
    ]
    res = tp.timestep_adjoint(steps, dxi_dx, dxi_dparam=np.zeros(len(a)))
    d_src = np.array([np.sum(res.d_controls[i * K : (i + 1) * K], axis=0) for i in range(g.M - 1)])
    if control.is_scalar:
        d_control = d_c_direct + np.sum(d_src)
    else:
        idx = source_index(g, "inflow", np.arange(g.M - 1))
        w = np.broadcast_to(0.25 * d_src, idx.shape)
        d_control = d_c_direct + np.bincount(idx.ravel(), weights=w.ravel(), minlength=g.M * g.N).reshape(g.shape)
    return ValueAndGrad(float(out.value), np.asarray(res.d_param, dtype=float).reshape(-1), d_control)


# ---------------------------------------------------------------------------
# functionals of the twin solution


def _row_weights(weights, mask, grid):
    w = trapezoid_weights(grid).w if weights is None else (weights.w if isinstance(weights, QuadratureWeights) else weights)
    w = np.asarray(w, dtype=float)
    if w.shape != grid.shape:
        raise ShapeError(f"weights {w.shape} vs grid {grid.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != grid.shape:
            raise ShapeError(f"mask {mask.shape} vs grid {grid.shape}")
        w = np.where(mask, w, 0.0)
    return w


class MismatchFunctional:
    """``sum_mask w_ij (u_twin_ij - u_gray_ij)**2``."""

    def __init__(self, gray: SpaceTimeField, weights=None, mask=None):
        self.gray = gray.u
        self.w = _row_weights(weights, mask, gray.grid)
        self.rows = [i for i in range(gray.grid.M) if np.any(self.w[i] != 0.0)]

    def __call__(self, rows, control, layout):
        total = 0.0
        for i in self.rows:
            d = layout.full(rows[i]) - self.gray[i]
            total = total + tp.total(self.w[i] * (d * d))
        return total


class TerminalQuadratic:
    """``xi = integral over x of (u(T, x) - target)**2`` (trapezoid in space)."""

    def __init__(self, target=0.5):
        self.target = target

    def __call__(self, rows, control, layout):
        d = layout.full(rows[-1]) - self.target
        return tp.total(space_weights(layout.grid) * (d * d))

    def to_dict(self):
        return {"kind": "terminal_quadratic", "target": self.target}


class SpaceTimeQuadratic:
    """``xi = sum_ij w_ij (state_weight (u_ij - target_ij)**2 + control_weight c_ij**2)``."""

    def __init__(self, target=0.0, weights=None, state_weight=1.0, control_weight=0.0):
        self.target = target
        self.weights = weights
        self.state_weight = float(state_weight)
        self.control_weight = float(control_weight)

    def __call__(self, rows, control, layout):
        g = layout.grid
        w = _row_weights(self.weights, None, g)
        target = np.broadcast_to(np.asarray(self.target, dtype=float), g.shape)
        total = 0.0
        if self.state_weight:
            for i, u in enumerate(rows):
                d = layout.full(u) - target[i]
                total = total + self.state_weight * tp.total(w[i] * (d * d))
        if self.control_weight:
            if np.ndim(tp.value_of(control)) == 0:
                total = total + (self.control_weight * float(np.sum(w))) * (control * control)
            else:
                total = total + self.control_weight * tp.total(w * (control * control))
        return total

    def to_dict(self):
        return {
            "kind": "space_time_quadratic",
            "target": float(np.mean(self.target)),
            "state_weight": self.state_weight,
            "control_weight": self.control_weight,
        }


def make_objective(spec: dict | None):
    spec = dict(spec or {"kind": "terminal_quadratic"})
    kind = spec.pop("kind", "terminal_quadratic")
    if kind == "terminal_quadratic":
        return TerminalQuadratic(**spec)
    if kind == "space_time_quadratic":
        return SpaceTimeQuadratic(**spec)
    raise ConfigError(f"unknown objective {kind!r}", "objective.kind")


# ---------------------------------------------------------------------------
# residuals and the gradients used in training


def residual_field(twin: TwinModel, gray: SpaceTimeField, control=None, alphas=None) -> SpaceTimeField:
    """One-interval defects ``tau_i = u_i - G(u_{i-1})`` of the gray field under the twin's
    step operator ``G``; ``tau_0 = 0``.  No twin PDE solve is performed."""
    if gray.grid != twin.grid:
        raise ShapeError("gray field and twin live on different grids")
    control = _as_control(control)
    advanced = _residual_cells(twin, gray, control, _alpha_array(twin, alphas, 2), np.arange(twin.grid.M - 1))
    out = np.zeros(twin.grid.shape)
    out[1:] = gray.u[1:] - twin.layout.full(advanced)
    return SpaceTimeField(out, twin.grid)


def _residual_cells(twin, gray, control: ControlField, alpha, rows):
    """``G`` applied to gray rows ``rows`` (cell states), stacked; array or tape ``alpha``."""
    g, K = twin.grid, twin.disc.substeps
    if twin.disc.scheme == "implicit_upwind_linear":
        a = tp.value_of(alpha).reshape(-1)
        srcs = np.broadcast_to(interval_sources(control.values, g, "inflow", rows, control.is_scalar), (len(rows), twin.layout.n))
        out = []
        for k, i in enumerate(rows):
            u = gray.u[i, twin.layout.cells]
            for _ in range(K):
                u = _implicit_step(twin, a, u, srcs[k], g.dt / K / g.dx, g.dt / K)[0]
            out.append(u)
        return np.array(out)
    dts = g.dt / K
    r = dts / g.dx
    u = gray.u[np.asarray(rows)][:, twin.layout.cells]
    src = None
    if not (control.is_scalar and float(control.values) == 0.0):
        src = interval_sources(control.values, g, twin.disc.bc, rows, control.is_scalar)
    prepared = twin.flux.prepare(alpha)
    for _ in range(K):
        u = _rusanov_substep(u, src, twin, prepared, r, dts)
    return u


class TruncationFunctional:
    """``sum_mask w_ij tau_ij**2`` restricted to the time intervals in ``rows``."""

    def __init__(self, twin: TwinModel, gray: SpaceTimeField, weights=None, mask=None, control=None):
        self.twin, self.gray = twin, gray
        self.control = _as_control(control)
        self.w = _row_weights(weights, mask, gray.grid)

    def value_and_grad(self, alphas, rows=None, need_grad=True):
        twin = self.twin
        rows = np.arange(1, twin.grid.M) if rows is None else np.asarray(rows)
        rows = rows[np.any(self.w[rows] != 0.0, axis=1)]
        if len(rows) == 0:
            return 0.0, np.zeros(len(twin.dictionary))
        w, target = self.w[rows], self.gray.u[rows]
        a = _alpha_array(twin, alphas, 2)
        if not need_grad or twin.disc.scheme == "implicit_upwind_linear":
            if need_grad:
                return self._implicit_value_and_grad(a.reshape(-1), rows, w, target)
            d = twin.layout.full(_residual_cells(twin, self.gray, self.control, a, rows - 1)) - target
            return float(np.sum(w * d * d)), None
        t = tp.Tape()
        alpha = t.input(a)
        d = twin.layout.full(_residual_cells(twin, self.gray, self.control, alpha, rows - 1)) - target
        out = tp.total(w * (d * d))
        (grad,) = t.backward(out)
        return float(out.value), grad.reshape(-1)

    def _implicit_value_and_grad(self, a, rows, w, target):
        # tau = u_i - G(u_{i-1}); dG/dalpha through the implicit function theorem per substep
        twin, g, K = self.twin, self.twin.grid, self.twin.disc.substeps
        dts = g.dt / K
        r = dts / g.dx
        lay = twin.layout
        srcs = np.broadcast_to(
            interval_sources(self.control.values, g, "inflow", rows - 1, self.control.is_scalar), (len(rows), lay.n)
        )
        value, grad = 0.0, np.zeros(len(a))
        for k, i in enumerate(rows):
            u = self.gray.u[i - 1, lay.cells]
            du = np.zeros((lay.n, len(a)))
            for _ in range(K):
                u, J, dp = _implicit_step(twin, a, u, srcs[k], r, dts)
                du = np.linalg.solve(J, du - dp)
            d = self.gray.u[i, lay.cells] - u
            wc = w[k, lay.cells]
            value += float(np.sum(w[k] * (lay.full(u) - target[k]) ** 2))
            grad += -2.0 * (wc * d) @ du
        return value, grad


def grad_mismatch_alpha(twin: TwinModel, gray: SpaceTimeField, control=None, mask=None, weights=None) -> np.ndarray:
    """Exact discrete gradient of the (masked) mismatch with respect to every coefficient."""
    return value_and_grad(twin, MismatchFunctional(gray, weights, mask), control).d_alpha


def grad_objective_control(twin: TwinModel, objective, control=None) -> ValueAndGrad:
    """``xi`` and ``d xi / d c`` for the whole control from one solve and one reverse sweep."""
    return value_and_grad(twin, objective, control)


# ---------------------------------------------------------------------------
# finite differences and gradient reports


def fd_gradient(func, control, delta=1e-5, components=None, jobs=1) -> np.ndarray:
    """Central differences ``(f(c + delta e_i) - f(c - delta e_i)) / (2 delta)``.

    ``func`` maps a :class:`ControlField` (or a plain array) to a real; ``components``
    selects flat indices (all by default).
    """
    if not delta > 0:
        raise ValueError(f"finite-difference step must be positive, got {delta}")
    wrap = isinstance(control, ControlField)
    base = control.values if wrap else np.asarray(control, dtype=float)
    comps = np.arange(base.size) if components is None else np.asarray(components, dtype=int).reshape(-1)

    def shifted(i, s):
        v = np.array(base, dtype=float)
        v.reshape(-1)[i] += s
        return func(ControlField(v) if wrap else v)

    def column(i):
        return (shifted(i, delta) - shifted(i, -delta)) / (2.0 * delta)

    if jobs > 1 and len(comps) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return np.array(list(pool.map(column, comps)))
    return np.array([column(i) for i in comps])


@dataclass
class GradientReport:
    gradient: np.ndarray
    components: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    oracle: np.ndarray | None = None
    rel_err: np.ndarray | None = None
    abs_err: np.ndarray | None = None
    max_rel_err: float = float("nan")

    @classmethod
    def compare(cls, gradient, components, oracle, floor=1e-14) -> GradientReport:
        gradient = np.asarray(gradient, dtype=float)
        components = np.asarray(components, dtype=int)
        oracle = np.asarray(oracle, dtype=float)
        adj = gradient.reshape(-1)[components]
        abs_err = np.abs(adj - oracle)
        denom = np.abs(oracle)
        # zero oracle: fall back to the absolute error
        rel = np.where(denom > floor, abs_err / np.maximum(denom, floor), abs_err)
        return cls(gradient, components, oracle, rel, abs_err, float(np.max(rel)) if rel.size else 0.0)

    def to_dict(self) -> dict:
        return {
            "components": self.components.tolist(),
            "adjoint": self.gradient.reshape(-1)[self.components].tolist(),
            "fd": None if self.oracle is None else self.oracle.tolist(),
            "rel_err": None if self.rel_err is None else self.rel_err.tolist(),
            "max_rel_err": self.max_rel_err,
        }

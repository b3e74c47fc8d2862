"""Training the twin: mismatch and truncation-error objectives, coefficient fits,
significance ranking, k-fold cross validation, adaptive basis construction,
SGD pre-training and the contraction (pre-training bound) check.

Only the gray-box *output field* enters here; the hidden flux is never imported.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import twin as tw
from .basis import Dictionary, initial_basis, neighborhood
from .errors import ConfigError, DivergenceError, NumericalError, ShapeError
from .field import Grid, QuadratureWeights, SpaceTimeField, trapezoid_weights, weighted_sq_norm
from .optimize import BFGSConfig, bfgs

log = logging.getLogger(__name__)

METRICS = ("mismatch", "truncation")


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SGDConfig:
    step: float | None = None  # None: 0.5 preconditioned, else 1 / (curvature estimate)
    batch_rows: int = 4  # time intervals per mini-batch
    epochs: int = 50
    tol: float = 1e-6  # relative change of T over one epoch
    divergence_factor: float = 10.0
    precondition: bool = True  # Gauss-Newton metric of the residuals, refreshed every epoch

    def __post_init__(self):
        if self.step is not None and self.step < 0:
            raise ConfigError("SGD step must be non-negative", "train.sgd.step")
        if self.batch_rows < 1 or self.epochs < 0 or not self.tol > 0:
            raise ConfigError(f"invalid SGD settings {self}", "train.sgd")


@dataclass(frozen=True)
class TrainConfig:
    k_folds: int = 2
    l1_weight: float = 0.0
    l1_eps: float = 1e-8
    bfgs: BFGSConfig = field(default_factory=BFGSConfig)
    sgd: SGDConfig = field(default_factory=SGDConfig)
    sgd_warm_start: bool = True  # run SGD before BFGS when fitting the truncation error
    max_outer_iters: int = 30
    accept_rtol: float = 0.02  # minimum relative drop of the validation error for acceptance
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.k_folds < 2:
            raise ConfigError(f"k_folds must be at least 2, got {self.k_folds}", "train.k_folds")
        if self.l1_weight < 0:
            raise ConfigError("l1_weight must be non-negative", "train.l1_weight")
        if self.max_outer_iters < 1:
            raise ConfigError("max_outer_iters must be positive", "train.max_outer_iters")

    @classmethod
    def from_dict(cls, d: dict | None) -> TrainConfig:
        d = dict(d or {})
        try:
            bf = BFGSConfig(**d.pop("bfgs", {}))
            sg = SGDConfig(**d.pop("sgd", {}))
            return cls(bfgs=bf, sgd=sg, **d)
        except TypeError as exc:
            raise ConfigError(str(exc), "train") from exc
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), "train") from exc

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# folds


@dataclass(frozen=True, eq=False)
class FoldSplit:
    k_folds: int
    assignment: np.ndarray  # fold index per grid node
    seed: int

    def mask(self, fold: int) -> np.ndarray:
        return self.assignment == fold

    def train_mask(self, fold: int) -> np.ndarray:
        return self.assignment != fold


def make_folds(grid: Grid, k_folds: int, seed: int = 0) -> FoldSplit:
    """Shuffle the nodes and deal them round-robin into ``k_folds`` folds."""
    if k_folds < 2:
        raise ConfigError(f"k_folds must be at least 2, got {k_folds}", "k_folds")
    n = grid.M * grid.N
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=int)
    assignment[perm] = np.arange(n) % k_folds
    a = assignment.reshape(grid.shape)
    a.flags.writeable = False
    return FoldSplit(k_folds, a, seed)


# ---------------------------------------------------------------------------
# objectives


def mismatch(twin_sol: SpaceTimeField, gray_sol: SpaceTimeField, weights=None, mask=None) -> float:
    """``sum_mask w_ij (u_twin - u_gray)**2``."""
    if twin_sol.grid != gray_sol.grid:
        raise ShapeError("fields live on different grids")
    weights = weights or trapezoid_weights(gray_sol.grid)
    return weighted_sq_norm(twin_sol - gray_sol, weights, mask)


def truncation_error(twin: tw.TwinModel, gray: SpaceTimeField, weights=None, mask=None, control=None) -> float:
    """``sum_mask w_ij tau_ij**2``; no twin PDE solve is performed."""
    return tw.TruncationFunctional(twin, gray, weights, mask, control).value_and_grad(None, need_grad=False)[0]


class Objective:
    """One training metric for a fixed twin layout, gray field, weights and control."""

    def __init__(self, twin: tw.TwinModel, gray: SpaceTimeField, metric: str, weights=None, control=None):
        if metric not in METRICS:
            raise ConfigError(f"unknown metric {metric!r}", "metric")
        self.twin, self.gray, self.metric = twin, gray, metric
        self.weights = weights if weights is not None else trapezoid_weights(gray.grid)
        self.control = control

    def for_dictionary(self, dictionary: Dictionary) -> Objective:
        return Objective(self.twin.with_dictionary(dictionary), self.gray, self.metric, self.weights, self.control)

    def value(self, alphas, mask=None) -> float:
        if self.metric == "mismatch":
            return tw.evaluate(self.twin, tw.MismatchFunctional(self.gray, self.weights, mask), self.control, alphas)
        f = tw.TruncationFunctional(self.twin, self.gray, self.weights, mask, self.control)
        return f.value_and_grad(alphas, need_grad=False)[0]

    def value_and_grad(self, alphas, mask=None, rows=None):
        if self.metric == "mismatch":
            vg = tw.value_and_grad(self.twin, tw.MismatchFunctional(self.gray, self.weights, mask), self.control, alphas)
            return vg.value, vg.d_alpha
        return tw.TruncationFunctional(self.twin, self.gray, self.weights, mask, self.control).value_and_grad(alphas, rows)


# ---------------------------------------------------------------------------
# coefficient fits


@dataclass
class InnerResult:
    alphas: np.ndarray
    value: float  # metric value without the L1 term
    iterations: int
    converged: bool
    line_search_failed: bool


def minimize_inner(objective: Objective, config: TrainConfig = TrainConfig(), alpha0=None, mask=None) -> InnerResult:
    """BFGS fit of the coefficients of ``objective``'s dictionary from ``alpha0``."""
    n = len(objective.twin.dictionary)
    if n == 0:
        raise ConfigError("cannot fit an empty dictionary", "dictionary")
    x0 = np.zeros(n) if alpha0 is None else np.asarray(alpha0, dtype=float).reshape(-1)
    lam, eps = config.l1_weight, config.l1_eps

    def penalty(a):
        if not lam:
            return 0.0, 0.0
        s = np.sqrt(a * a + eps * eps)
        return lam * float(np.sum(s)), lam * a / s

    def vg(a):
        v, g = objective.value_and_grad(a, mask)
        p, dp = penalty(a)
        return v + p, g + dp

    def val(a):
        return objective.value(a, mask) + penalty(a)[0]

    res = bfgs(vg, x0, config.bfgs, value=val)
    raw = res.f - penalty(res.x)[0]
    return InnerResult(res.x, raw, res.iterations, res.converged, res.line_search_failed)


@dataclass
class SGDReport:
    alphas: np.ndarray
    initial: float
    final: float
    epochs: int
    step: float
    history: list
    converged: bool
    twin_solves: int


def _curvature(objective: Objective, alphas, mask=None) -> float:
    """Spectral radius of the truncation-error Hessian, by differencing gradients.

    The radius rather than the top eigenvalue: at ``alpha = 0`` the Rusanov
    dissipation ``|dF|`` has a kink and the Hessian can be indefinite.
    """
    a = np.asarray(alphas, dtype=float)
    _, g0 = objective.value_and_grad(a, mask)
    n = a.size
    H = np.empty((n, n))
    h = 1e-4 * max(1.0, float(np.max(np.abs(a), initial=0.0)))
    for i in range(n):
        e = a.copy()
        e[i] += h
        H[:, i] = (objective.value_and_grad(e, mask)[1] - g0) / h
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (H + H.T)))))


def _gauss_newton_inverse(objective: Objective, alphas, mask=None, h=1e-6, rcond=1e-10) -> np.ndarray:
    """Pseudo-inverse of ``2 J^T W J``, ``J`` the central-difference Jacobian of the residuals."""
    twin, gray = objective.twin, objective.gray
    w = tw._row_weights(objective.weights, mask, gray.grid).ravel()
    a = np.asarray(alphas, dtype=float)
    cols = []
    for i in range(a.size):
        e = np.zeros(a.size)
        e[i] = h
        tp_ = tw.residual_field(twin, gray, objective.control, a + e).u
        tm_ = tw.residual_field(twin, gray, objective.control, a - e).u
        cols.append((tp_ - tm_).ravel() / (2 * h))
    J = np.stack(cols, axis=1)
    H = 2.0 * J.T @ (w[:, None] * J)
    ev, V = np.linalg.eigh(0.5 * (H + H.T))
    top = max(float(ev[-1]), 1e-300)
    inv = np.where(ev > rcond * top, 1.0 / np.maximum(ev, rcond * top), 0.0)
    return (V * inv) @ V.T


def sgd_pretrain(objective: Objective, config: TrainConfig = TrainConfig(), alpha0=None, mask=None) -> SGDReport:
    """Mini-batch SGD on the truncation error.

    A mini-batch is a set of time intervals; one update is
    ``alpha -= step * P @ grad(sum over the batch of w_ij tau_ij**2)`` with ``P``
    the inverse Gauss-Newton matrix of the residuals (refreshed every epoch) or the
    identity when preconditioning is off.
    """
    if objective.metric != "truncation":
        raise ConfigError("SGD pre-training applies to the truncation error only", "metric")
    sgd = config.sgd
    a = np.zeros(len(objective.twin.dictionary)) if alpha0 is None else np.array(alpha0, dtype=float).reshape(-1)
    start_solves = tw.solve_count()
    rows = np.arange(1, objective.gray.grid.M)
    nb = max(1, math.ceil(len(rows) / sgd.batch_rows))
    step = sgd.step
    if step is None:
        step = 0.5 if sgd.precondition else 1.0 / max(_curvature(objective, a, mask), 1e-300)
    rng = np.random.default_rng(config.seed)
    t0 = t_prev = objective.value(a, mask)
    history = [t0]
    converged = False
    epoch = 0

    def diverged(msg, value):
        report = SGDReport(a, t0, value, epoch, step, history, False, tw.solve_count() - start_solves)
        return DivergenceError(msg, report)

    for epoch in range(1, sgd.epochs + 1):
        try:
            P = _gauss_newton_inverse(objective, a, mask) if sgd.precondition else None
            order = rng.permutation(rows)
            for b in range(nb):
                batch = order[b * sgd.batch_rows : (b + 1) * sgd.batch_rows]
                _, g = objective.value_and_grad(a, mask, rows=batch)
                a = a - step * (g if P is None else P @ g)
            t_now = objective.value(a, mask)
        except NumericalError as exc:
            raise diverged(f"epoch {epoch}: {exc}", math.inf) from exc
        history.append(t_now)
        if not np.isfinite(t_now) or t_now > sgd.divergence_factor * t_prev:
            raise diverged(f"truncation error grew from {t_prev:.3e} to {t_now:.3e} in epoch {epoch}", t_now)
        if abs(t_prev - t_now) <= sgd.tol * max(t_prev, 1e-300):
            converged = True
            break
        t_prev = t_now
    return SGDReport(a, t0, history[-1], epoch, step, history, converged, tw.solve_count() - start_solves)


def fit(objective: Objective, config: TrainConfig, alpha0=None, mask=None, cold=False) -> InnerResult:
    """Coefficient fit used inside the adaptive loop.  A cold fit of the truncation
    error starts with SGD; warm-started fits go straight to BFGS."""
    if cold and objective.metric == "truncation" and config.sgd_warm_start and config.sgd.epochs > 0:
        try:
            alpha0 = sgd_pretrain(objective, config, alpha0, mask).alphas
        except NumericalError as exc:
            log.info("SGD warm start failed, continuing with BFGS: %s", exc)
    return minimize_inner(objective, config, alpha0, mask)


# ---------------------------------------------------------------------------
# significance


def significance(objective: Objective, alphas, candidates, mask=None) -> np.ndarray:
    """``|d metric / d alpha_l|`` at ``alpha_l = 0`` for every candidate, one reverse sweep."""
    d = objective.twin.dictionary
    candidates = list(candidates)
    for c in candidates:
        if c in d:
            raise ValueError(f"candidate {c} is already in the dictionary")
    if not candidates:
        return np.zeros(0)
    aug = Dictionary(d.ids + candidates)
    a = np.concatenate([np.asarray(alphas, dtype=float).reshape(-1), np.zeros(len(candidates))])
    _, g = objective.for_dictionary(aug).value_and_grad(a, mask)
    return np.abs(g[len(d) :])


def member_significance(objective: Objective, alphas, mask=None) -> np.ndarray:
    """Significance of each member: the candidate rule applied to the dictionary without it.

    A member whose removal leaves a twin that cannot be simulated scores ``inf``.
    """
    d = objective.twin.dictionary
    alphas = np.asarray(alphas, dtype=float).reshape(-1)
    out = np.empty(len(d))
    for i in range(len(d)):
        a = alphas.copy()
        a[i] = 0.0
        try:
            out[i] = abs(objective.value_and_grad(a, mask)[1][i])
        except NumericalError:
            out[i] = math.inf
    return out


def rank(candidates, scores, descending=True):
    """Candidates ordered by score; ties go to lower total resolution, then ``(j, eta)``."""
    sign = -1.0 if descending else 1.0
    order = sorted(range(len(candidates)), key=lambda i: (sign * scores[i], candidates[i].sort_key()))
    return [candidates[i] for i in order]


# ---------------------------------------------------------------------------
# cross validation


@dataclass
class CVResult:
    mean: float
    fold_errors: list
    fold_alphas: list


def cross_validate(objective: Objective, split: FoldSplit, config: TrainConfig = TrainConfig(), alpha0=None) -> CVResult:
    """Train on all folds but one, evaluate on the held-out fold, average over folds."""
    if split.k_folds < 2:
        raise ConfigError("cross validation needs at least two folds", "k_folds")

    def one(fold):
        res = fit(objective, config, alpha0, split.train_mask(fold))
        return objective.value(res.alphas, split.mask(fold)), res.alphas

    folds = range(split.k_folds)
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=min(config.jobs, split.k_folds)) as pool:
            out = list(pool.map(one, folds))
    else:
        out = [one(f) for f in folds]
    errs = [e for e, _ in out]
    return CVResult(float(np.mean(errs)), errs, [a for _, a in out])


# ---------------------------------------------------------------------------
# adaptive basis construction


@dataclass
class TrainStep:
    kind: str  # "initial", "forward" or "backward"
    basis: list | None
    accepted: bool
    cv_error: float
    train_error: float
    size: int
    significance: float | None = None

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    metric: str
    steps: list = field(default_factory=list)
    dictionary: Dictionary | None = None
    final_error: float = float("nan")
    twin_solves: int = 0
    outer_iterations: int = 0
    max_outer_reached: bool = False
    line_search_failures: int = 0
    notes: list = field(default_factory=list)
    stages: dict = field(default_factory=dict)
    wall_time: float = 0.0  # excluded from the deterministic dict

    def accepted_cv(self) -> list:
        return [s.cv_error for s in self.steps if s.accepted and s.kind != "initial"]

    def to_dict(self, include_timing=False) -> dict:
        out = {
            "metric": self.metric,
            "steps": [s.to_dict() for s in self.steps],
            "dictionary": self.dictionary.to_records() if self.dictionary is not None else None,
            "final_error": self.final_error,
            "twin_solves": self.twin_solves,
            "outer_iterations": self.outer_iterations,
            "max_outer_reached": self.max_outer_reached,
            "line_search_failures": self.line_search_failures,
            "notes": list(self.notes),
            "stages": self.stages,
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out


def default_initial_dictionary(gray: SpaceTimeField) -> Dictionary:
    u = gray.u
    return Dictionary([initial_basis(float(u.min()), float(u.max()))])


def adaptive_train(objective: Objective, config: TrainConfig = TrainConfig(), initial: Dictionary | None = None):
    """Forward-backward basis construction with k-fold cross validation.

    Returns ``(dictionary, report)``.  The first forward step is always compared
    against an infinite validation error; the loop ends at the first rejected
    forward step or after ``config.max_outer_iters`` iterations (flagged).
    """
    t_start = time.perf_counter()
    solves0 = tw.solve_count()
    gray = objective.gray
    d = initial if initial is not None else default_initial_dictionary(gray)
    split = make_folds(gray.grid, config.k_folds, config.seed)
    report = TrainReport(objective.metric)
    report.notes.append("backward-step significance is recomputed at the current coefficients")

    obj = objective.for_dictionary(d)
    res = fit(obj, config, d.alphas, cold=True)
    report.line_search_failures += int(res.line_search_failed)
    alphas = res.alphas
    report.steps.append(TrainStep("initial", [b.to_dict() for b in d.ids], True, math.inf, res.value, len(d)))
    cv_best = math.inf

    def accepts(cv):
        return cv < cv_best and (not math.isfinite(cv_best) or cv < cv_best - config.accept_rtol * abs(cv_best))

    it = 0
    while True:
        if it >= config.max_outer_iters:
            report.max_outer_reached = True
            break
        it += 1
        # forward step
        cands = [c for c in neighborhood(d.ids) if c not in d]
        scores = significance(obj, alphas, cands)
        best = rank(cands, scores)[0]
        s_best = float(scores[cands.index(best)])
        d_new = d.added(best)
        obj_new = objective.for_dictionary(d_new)
        a_start = np.append(alphas, 0.0)
        cv = _cv(obj_new, split, config, a_start)
        if not accepts(cv):
            report.steps.append(TrainStep("forward", best.to_dict(), False, cv, math.nan, len(d_new), s_best))
            break
        cv_best = cv
        res = fit(obj_new, config, a_start)
        report.line_search_failures += int(res.line_search_failed)
        d, obj, alphas = d_new, obj_new, res.alphas
        report.steps.append(TrainStep("forward", best.to_dict(), True, cv, res.value, len(d), s_best))

        # backward step
        if len(d) < 2:
            continue
        ms = member_significance(obj, alphas)
        weakest = rank(d.ids, ms, descending=False)[0]
        if weakest == best:
            continue
        i = d.ids.index(weakest)
        d_less = d.removed(weakest)
        obj_less = objective.for_dictionary(d_less)
        a_less = np.delete(alphas, i)
        cv = _cv(obj_less, split, config, a_less)
        s_weak = float(ms[i])
        if accepts(cv):
            cv_best = cv
            res = fit(obj_less, config, a_less)
            report.line_search_failures += int(res.line_search_failed)
            d, obj, alphas = d_less, obj_less, res.alphas
            report.steps.append(TrainStep("backward", weakest.to_dict(), True, cv, res.value, len(d), s_weak))
        else:
            report.steps.append(TrainStep("backward", weakest.to_dict(), False, cv, math.nan, len(d_less), s_weak))

    d = d.with_alphas(alphas)
    report.dictionary = d
    report.outer_iterations = it
    report.final_error = objective.for_dictionary(d).value(alphas)
    report.twin_solves = tw.solve_count() - solves0
    report.wall_time = time.perf_counter() - t_start
    return d, report


def _cv(objective, split, config, alpha0) -> float:
    try:
        return cross_validate(objective, split, config, alpha0).mean
    except NumericalError as exc:
        log.info("cross validation failed: %s", exc)
        return math.inf


def train_coefficients(objective: Objective, dictionary: Dictionary, config: TrainConfig = TrainConfig()):
    """Fit the coefficients of a fixed dictionary (no basis edits)."""
    t_start = time.perf_counter()
    solves0 = tw.solve_count()
    obj = objective.for_dictionary(dictionary)
    res = fit(obj, config, dictionary.alphas)
    d = dictionary.with_alphas(res.alphas)
    report = TrainReport(objective.metric)
    report.steps.append(TrainStep("initial", [b.to_dict() for b in d.ids], True, math.nan, res.value, len(d)))
    report.dictionary = d
    report.final_error = res.value
    report.line_search_failures = int(res.line_search_failed)
    report.twin_solves = tw.solve_count() - solves0
    report.wall_time = time.perf_counter() - t_start
    return d, report


def pretrain_finetune(objective: Objective, config: TrainConfig = TrainConfig(), initial: Dictionary | None = None):
    """Adaptive construction on the truncation error, then a mismatch fit of the
    resulting coefficients.  ``objective`` must be the mismatch objective."""
    if objective.metric != "mismatch":
        raise ConfigError("fine-tuning needs the mismatch objective", "metric")
    t_start = time.perf_counter()
    pre_obj = Objective(objective.twin, objective.gray, "truncation", objective.weights, objective.control)
    solves0 = tw.solve_count()
    d_pre, pre_report = adaptive_train(pre_obj, config, initial)
    pre_solves = tw.solve_count() - solves0
    d, fine_report = train_coefficients(objective, d_pre, config)
    report = TrainReport("pretrain+finetune")
    report.steps = pre_report.steps + fine_report.steps[-1:]
    report.dictionary = d
    report.final_error = fine_report.final_error
    report.outer_iterations = pre_report.outer_iterations
    report.max_outer_reached = pre_report.max_outer_reached
    report.line_search_failures = pre_report.line_search_failures + fine_report.line_search_failures
    report.notes = pre_report.notes
    report.twin_solves = tw.solve_count() - solves0
    report.stages = {
        "pretrain": {"twin_solves": pre_solves, "final_truncation_error": pre_report.final_error, "size": len(d_pre)},
        "finetune": {"twin_solves": fine_report.twin_solves, "final_mismatch": fine_report.final_error},
    }
    report.wall_time = time.perf_counter() - t_start
    return d, report


# ---------------------------------------------------------------------------
# contraction check (mismatch bounded by truncation error)


@dataclass
class ContractionReport:
    beta: float
    beta_sampled: float
    beta_jacobian: float
    mismatch: float
    truncation: float
    bound: float
    applicable: bool
    holds: bool | None
    margin: float

    def to_dict(self):
        return asdict(self)


def _step_map(twin: tw.TwinModel, control):
    """One output-interval step ``G`` of the twin acting on full grid rows."""
    g = twin.grid

    def G(row, i=0):
        sol_grid = Grid(2, g.N, g.dt, g.x_lo, g.x_hi)
        sub = tw.TwinModel(twin.dictionary, tw.Discretization(sol_grid, twin.disc.substeps, twin.disc.bc,
                                                              twin.disc.inflow_value, twin.disc.scheme,
                                                              twin.disc.smooth_eps), row)
        gray = SpaceTimeField(np.vstack([row, row]), sol_grid)
        return tw._residual_cells(sub, gray, tw._as_control(control), tw._alpha_array(sub, None, 2), np.array([0]))[0]

    return G


def contraction_check(twin: tw.TwinModel, gray: SpaceTimeField, weights: QuadratureWeights, control=None,
                      pairs: int = 64, margin: float = 0.01, seed: int = 0) -> ContractionReport:
    """Estimate the step operator's contraction factor in the weighted norm and test
    ``M <= T / (1 - beta)``.  Requires time-independent weights and a source-free or
    scalar control (the step operator must be the same for every interval)."""
    if not weights.is_time_independent():
        raise ConfigError("the contraction check needs time-independent weights", "weights")
    if control is not None and not tw._as_control(control).is_scalar:
        raise ConfigError("the contraction check needs a time-independent control", "control")
    lay = twin.layout
    w = weights.w[0][lay.cells]
    if lay.bc == "periodic":
        w = w.copy()
        w[0] += weights.w[0][-1]
    G = _step_map(twin, control)

    def full(cells):
        return np.asarray(lay.full(cells), dtype=float)

    def wnorm2(v):
        return float(np.sum(w * v * v))

    rng = np.random.default_rng(seed)
    lo, hi = float(gray.u.min()), float(gray.u.max())
    span = max(hi - lo, 1e-3)
    beta_s = 0.0
    for _ in range(pairs):
        a = rng.uniform(lo, hi, lay.n)
        b = a + 0.1 * span * rng.standard_normal(lay.n)
        beta_s = max(beta_s, wnorm2(G(full(a)) - G(full(b))) / wnorm2(a - b))

    # exact spectral norm of W^1/2 J W^-1/2, J the finite-difference Jacobian at the mean state
    base = np.full(lay.n, 0.5 * (lo + hi))
    Gb = G(full(base))
    h = 1e-6 * span
    J = np.empty((lay.n, lay.n))
    for k in range(lay.n):
        e = base.copy()
        e[k] += h
        J[:, k] = (G(full(e)) - Gb) / h
    sq = np.sqrt(w)
    beta_j = float(np.linalg.norm(sq[:, None] * J / sq[None, :], 2)) ** 2
    beta = max(beta_s, beta_j)
    sol = tw.twin_solve(twin, control)
    M = mismatch(sol, gray, weights)
    T = truncation_error(twin, gray, weights, None, control)
    applicable = beta + margin < 1.0
    bound = T / (1.0 - beta) if beta < 1.0 else math.inf
    holds = bool(M <= bound * (1 + 1e-12) + 1e-300) if applicable else None
    return ContractionReport(beta, beta_s, beta_j, M, T, bound, applicable, holds, margin)


"""BFGS with Armijo backtracking for small dense problems.

Written out here (rather than borrowed) because the acceptance rules need the
iteration count, the line-search failure flag and a stopping test on the
infinity norm of the gradient, and because trial points that make the twin
blow up must count as infinite values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BFGSConfig:
    grad_tol: float = 1e-8
    max_iters: int = 200
    c1: float = 1e-4  # Armijo sufficient-decrease constant
    shrink: float = 0.5
    max_backtracks: int = 40

    def __post_init__(self):
        if not (self.grad_tol > 0 and self.max_iters >= 0 and 0 < self.c1 < 1 and 0 < self.shrink < 1):
            raise ValueError(f"invalid BFGS settings {self}")


@dataclass
class BFGSResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    iterations: int
    evaluations: int
    converged: bool
    line_search_failed: bool = False


def _safe(fn, x):
    try:
        return fn(x)
    except (NumericalError, FloatingPointError):
        return None


def bfgs(value_and_grad, x0, config: BFGSConfig = BFGSConfig(), value=None) -> BFGSResult:
    """Minimize from ``x0``.

    ``value_and_grad(x) -> (f, g)``; the optional ``value(x) -> f`` is used for
    line-search trials so gradients are only computed at accepted points.
    Either callable may raise :class:`NumericalError`, which counts as ``f = inf``.
    """
    x = np.array(x0, dtype=float).reshape(-1)
    first = value_and_grad(x)
    f, g = float(first[0]), np.asarray(first[1], dtype=float).reshape(-1)
    evals = 1
    n = x.size
    H = np.eye(n)
    scaled = False
    it = 0
    while it < config.max_iters:
        if np.max(np.abs(g), initial=0.0) <= config.grad_tol:
            return BFGSResult(x, f, g, it, evals, True)
        p = -H @ g
        slope = float(g @ p)
        if slope >= 0:  # lost descent: restart from steepest descent
            H = np.eye(n)
            p, slope = -g, -float(g @ g)
        step = 1.0
        accepted = None
        for _ in range(config.max_backtracks):
            xt = x + step * p
            if value is not None:
                ft = _safe(value, xt)
                evals += 1
                if ft is not None and np.isfinite(ft) and ft <= f + config.c1 * step * slope:
                    vg = _safe(value_and_grad, xt)
                    evals += 1
                    if vg is not None:
                        accepted = (xt, float(vg[0]), np.asarray(vg[1], dtype=float).reshape(-1))
                        break
            else:
                vg = _safe(value_and_grad, xt)
                evals += 1
                if vg is not None and np.isfinite(vg[0]) and vg[0] <= f + config.c1 * step * slope:
                    accepted = (xt, float(vg[0]), np.asarray(vg[1], dtype=float).reshape(-1))
                    break
            step *= config.shrink
        if accepted is None:
            log.debug("line search failed at iteration %d (f=%g)", it, f)
            return BFGSResult(x, f, g, it, evals, False, line_search_failed=True)
        xn, fn, gn = accepted
        s, y = xn - x, gn - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if not scaled:
                H = np.eye(n) * (sy / float(y @ y))
                scaled = True
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
        x, f, g = xn, fn, gn
        it += 1
    converged = bool(np.max(np.abs(g), initial=0.0) <= config.grad_tol)
    return BFGSResult(x, f, g, it, evals, converged)

"""Reverse-mode differentiation over a recorded sequence of elementary operations.

Node values are numpy arrays (or 0-d arrays) and elementwise ops broadcast, so a
whole grid row is one node.  Besides the elementwise op set, two structural ops
exist: ``take`` (gather by flat index, used for periodic neighbours) and ``sum``.

The module-level functions (:func:`logistic`, :func:`take`, ...) accept either
plain arrays or :class:`Var` handles, so a numerical scheme written against them
runs unrecorded on arrays or recorded on a tape with the same source.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularStepError

DEFAULT_SMOOTH_EPS = 1e-8

ARITY = {
    "input": 0,
    "constant": 0,
    "add": 2,
    "sub": 2,
    "mul": 2,
    "div": 2,
    "neg": 1,
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "logistic": 1,
    "abs_smooth": 1,
    "max_smooth": 2,
    "take": 1,
    "sum": 1,
}


def _logistic(x):
    # 1 / (1 + exp(-x)), written through tanh to avoid overflow
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _forward(op, args, attrs):
    if op == "add":
        return args[0] + args[1]
    if op == "sub":
        return args[0] - args[1]
    if op == "mul":
        return args[0] * args[1]
    if op == "div":
        return args[0] / args[1]
    if op == "neg":
        return -args[0]
    if op == "sin":
        return np.sin(args[0])
    if op == "cos":
        return np.cos(args[0])
    if op == "exp":
        return np.exp(args[0])
    if op == "logistic":
        return _logistic(args[0])
    if op == "abs_smooth":
        a = args[0]
        return np.sqrt(a * a + attrs["eps"] ** 2)
    if op == "max_smooth":
        a, b = args
        d = a - b
        return 0.5 * (a + b + np.sqrt(d * d + attrs["eps"] ** 2))
    if op == "take":
        return np.take(args[0], attrs["index"])
    if op == "sum":
        return np.sum(args[0], axis=attrs["axis"])
    raise ValueError(f"unknown op {op!r}")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tape:
    """Append-only record of elementary operations.

    Parents always precede their children, so the record is a topological order
    and :meth:`backward` is a single reverse sweep.
    """

    def __init__(self):
        self.ops: list[str] = []
        self.parents: list[tuple[int, ...]] = []
        self.values: list[np.ndarray] = []
        self.attrs: list[dict | None] = []
        self.active: list[bool] = []  # depends on some input
        self.inputs: list[int] = []
        self.edges_traversed = 0

    def __len__(self):
        return len(self.ops)

    def _append(self, op, parents, value, attrs, active):
        value = np.asarray(value, dtype=float)
        self.ops.append(op)
        self.parents.append(parents)
        self.values.append(value)
        self.attrs.append(attrs)
        self.active.append(active)
        return len(self.ops) - 1

    def input(self, value) -> Var:
        nid = self._append("input", (), np.array(value, dtype=float), None, True)
        self.inputs.append(nid)
        return Var(self, nid)

    def constant(self, value) -> Var:
        return Var(self, self._append("constant", (), value, None, False))

    def record(self, op: str, parents, **attrs) -> int:
        """Append ``op`` applied to existing node ids ``parents``; returns the new id."""
        if op not in ARITY or op in ("input", "constant"):
            raise ValueError(f"unknown op {op!r}")
        parents = tuple(int(p) for p in parents)
        if len(parents) != ARITY[op]:
            raise ValueError(f"{op} takes {ARITY[op]} operand(s), got {len(parents)}")
        n = len(self.ops)
        for p in parents:
            if not 0 <= p < n:
                raise ValueError(f"parent {p} is not on the tape")
        value = _forward(op, [self.values[p] for p in parents], attrs)
        active = any(self.active[p] for p in parents)
        return self._append(op, parents, value, attrs or None, active)

    def backward(self, output, seed=None) -> list[np.ndarray]:
        """Adjoints of ``output`` with respect to every input, in input order.

        ``seed`` defaults to ones (the gradient of the sum for non-scalar outputs).
        """
        out = output.id if isinstance(output, Var) else int(output)
        if not 0 <= out < len(self.ops):
            raise ValueError(f"node {out} is not on the tape")
        adj: list = [None] * (out + 1)
        ov = self.values[out]
        adj[out] = np.ones_like(ov) if seed is None else np.broadcast_to(np.asarray(seed, float), ov.shape).copy()
        values, parents, ops, attrs, active = self.values, self.parents, self.ops, self.attrs, self.active
        edges = 0
        for nid in range(out, -1, -1):
            g = adj[nid]
            if g is None or not parents[nid]:
                continue
            ps = parents[nid]
            edges += len(ps)
            grads = _vjp(ops[nid], g, [values[p] for p in ps], values[nid], attrs[nid], [active[p] for p in ps])
            for p, gp in zip(ps, grads):
                if gp is None:
                    continue
                gp = _unbroadcast(np.asarray(gp), values[p].shape)
                adj[p] = gp if adj[p] is None else adj[p] + gp
        self.edges_traversed = edges
        return [
            adj[i] if i <= out and adj[i] is not None else np.zeros_like(self.values[i]) for i in self.inputs
        ]

    def gradient(self, output, wrt) -> list[np.ndarray]:
        grads = self.backward(output)
        index = {nid: k for k, nid in enumerate(self.inputs)}
        return [grads[index[v.id]] for v in wrt]


def _vjp(op, g, args, out, attrs, need):
    if op == "add":
        return [g if need[0] else None, g if need[1] else None]
    if op == "sub":
        return [g if need[0] else None, -g if need[1] else None]
    if op == "mul":
        a, b = args
        return [g * b if need[0] else None, g * a if need[1] else None]
    if op == "div":
        a, b = args
        ga = g / b if need[0] else None
        gb = -g * a / (b * b) if need[1] else None
        return [ga, gb]
    if op == "neg":
        return [-g]
    if op == "sin":
        return [g * np.cos(args[0])]
    if op == "cos":
        return [-g * np.sin(args[0])]
    if op == "exp":
        return [g * out]
    if op == "logistic":
        return [g * out * (1.0 - out)]
    if op == "abs_smooth":
        return [g * args[0] / out]
    if op == "max_smooth":
        a, b = args
        d = a - b
        t = d / np.sqrt(d * d + attrs["eps"] ** 2)
        return [0.5 * g * (1.0 + t) if need[0] else None, 0.5 * g * (1.0 - t) if need[1] else None]
    if op == "take":
        src = args[0]
        flat = np.bincount(np.ravel(attrs["index"]), weights=np.ravel(g), minlength=src.size)
        return [flat.reshape(src.shape)]
    if op == "sum":
        axis = attrs["axis"]
        src = args[0]
        if axis is None:
            return [np.broadcast_to(g, src.shape)]
        return [np.broadcast_to(np.expand_dims(g, axis), src.shape)]
    raise ValueError(f"unknown op {op!r}")


class Var:
    """Handle to a tape node with arithmetic operator overloading."""

    __slots__ = ("tape", "id")
    __array_ufunc__ = None  # make ndarray <op> Var dispatch to the reflected Var method

    def __init__(self, tape: Tape, nid: int):
        self.tape = tape
        self.id = nid

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.id]

    @property
    def shape(self):
        return self.value.shape

    def _lift(self, other):
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise ValueError("operands recorded on different tapes")
            return other
        return self.tape.constant(other)

    def _binary(self, op, other, reflected=False):
        other = self._lift(other)
        a, b = (other, self) if reflected else (self, other)
        return Var(self.tape, self.tape.record(op, (a.id, b.id)))

    def __add__(self, o):
        return self._binary("add", o)

    def __radd__(self, o):
        return self._binary("add", o, True)

    def __sub__(self, o):
        return self._binary("sub", o)

    def __rsub__(self, o):
        return self._binary("sub", o, True)

    def __mul__(self, o):
        return self._binary("mul", o)

    def __rmul__(self, o):
        return self._binary("mul", o, True)

    def __truediv__(self, o):
        return self._binary("div", o)

    def __rtruediv__(self, o):
        return self._binary("div", o, True)

    def __neg__(self):
        return Var(self.tape, self.tape.record("neg", (self.id,)))

    def __repr__(self):
        return f"Var(id={self.id}, op={self.tape.ops[self.id]}, shape={self.shape})"


def _unary(op, x, numpy_fn, **attrs):
    if isinstance(x, Var):
        return Var(x.tape, x.tape.record(op, (x.id,), **attrs))
    return numpy_fn(x)


def sin(x):
    return _unary("sin", x, np.sin)


def cos(x):
    return _unary("cos", x, np.cos)


def exp(x):
    return _unary("exp", x, np.exp)


def logistic(x):
    return _unary("logistic", x, _logistic)


def abs_smooth(x, eps=DEFAULT_SMOOTH_EPS):
    """``sqrt(x**2 + eps**2)``; ``eps = 0`` gives the exact absolute value on arrays."""
    return _unary("abs_smooth", x, lambda a: np.sqrt(a * a + eps * eps), eps=eps)


def max_smooth(a, b, eps=DEFAULT_SMOOTH_EPS):
    """``(a + b + sqrt((a - b)**2 + eps**2)) / 2``."""
    if isinstance(a, Var) or isinstance(b, Var):
        tape = a.tape if isinstance(a, Var) else b.tape
        a = a if isinstance(a, Var) else tape.constant(a)
        b = b if isinstance(b, Var) else tape.constant(b)
        return Var(tape, tape.record("max_smooth", (a.id, b.id), eps=eps))
    d = a - b
    return 0.5 * (a + b + np.sqrt(d * d + eps * eps))


def take(x, index):
    """Gather ``x.ravel()[index]``; the result has the shape of ``index``."""
    index = np.asarray(index, dtype=np.intp)
    return _unary("take", x, lambda a: np.take(a, index), index=index)


def total(x, axis=None):
    return _unary("sum", x, lambda a: np.sum(a, axis=axis), axis=axis)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x)


# ---------------------------------------------------------------------------
# time-marching adjoint from per-step partial Jacobians


@dataclass
class StepPartials:
    """Partials of one step residual ``R(x_prev, x_next, c_next) = 0``.

    ``d_param`` is the optional Jacobian with respect to parameters shared by all
    steps (e.g. flux coefficients).
    """

    d_prev: np.ndarray
    d_next: np.ndarray
    d_control: np.ndarray
    d_param: np.ndarray | None = None


@dataclass
class TimestepAdjointResult:
    d_controls: list[np.ndarray]  # d xi / d c_{t+1}, t = 0..T-1
    d_initial: np.ndarray  # d xi / d x_0
    d_param: np.ndarray | None
    adjoints: list[np.ndarray]  # lambda_{t+1} per step


def timestep_adjoint(steps, dxi_dx, dxi_dc=None, dxi_dparam=None) -> TimestepAdjointResult:
    """Total derivatives of ``xi`` with respect to every step control in one reverse sweep.

    ``steps[t]`` holds the partials of the residual that defines ``x_{t+1}`` from
    ``x_t`` and ``c_{t+1}``; ``dxi_dx`` has one entry per state ``x_0..x_T`` and
    ``dxi_dc`` one per control ``c_1..c_T``.  Each step solves
    ``(dR/dx_{t+1})^T lambda = xbar_{t+1}``.
    """
    n_steps = len(steps)
    if len(dxi_dx) != n_steps + 1:
        raise ValueError(f"need {n_steps + 1} state partials, got {len(dxi_dx)}")
    xbar = np.atleast_1d(np.asarray(dxi_dx[n_steps], dtype=float)).copy()
    d_controls: list = [None] * n_steps
    adjoints: list = [None] * n_steps
    d_param = None if dxi_dparam is None else np.array(dxi_dparam, dtype=float)
    for t in range(n_steps - 1, -1, -1):
        s = steps[t]
        B = np.atleast_2d(np.asarray(s.d_next, dtype=float))
        try:
            lam = np.linalg.solve(B.T, xbar)
        except np.linalg.LinAlgError:
            raise SingularStepError(t) from None
        if not np.all(np.isfinite(lam)) or np.linalg.cond(B) > 1e14:
            raise SingularStepError(t)
        adjoints[t] = lam
        C = np.atleast_2d(np.asarray(s.d_control, dtype=float))
        dc = -C.T @ lam
        if dxi_dc is not None:
            dc = dc + np.atleast_1d(np.asarray(dxi_dc[t], dtype=float))
        d_controls[t] = dc
        if s.d_param is not None:
            dp = -np.atleast_2d(np.asarray(s.d_param, dtype=float)).T @ lam
            d_param = dp if d_param is None else d_param + dp
        A = np.atleast_2d(np.asarray(s.d_prev, dtype=float))
        xbar = np.atleast_1d(np.asarray(dxi_dx[t], dtype=float)) - A.T @ lam
    return TimestepAdjointResult(d_controls, xbar, d_param, adjoints)

"""Tensor-product logistic sigmoid bases for the inferred flux.

A basis is identified by integer resolutions ``j`` and shifts ``eta`` per input
dimension and evaluates ``prod_d phi(2**j_d * u_d - eta_d)`` with the logistic
mother sigmoid ``phi``.  Its center in dimension ``d`` is ``eta_d / 2**j_d``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import tape as tp


def mother_sigmoid(u):
    """Logistic ``1 / (1 + exp(-u))``."""
    return tp._logistic(np.asarray(u, dtype=float))


@dataclass(frozen=True, order=True)
class BasisId:
    j: tuple[int, ...]
    eta: tuple[int, ...]

    def __post_init__(self):
        j = tuple(int(v) for v in np.atleast_1d(self.j))
        eta = tuple(int(v) for v in np.atleast_1d(self.eta))
        if not j or len(j) != len(eta):
            raise ValueError(f"resolution {j} and shift {eta} must be non-empty and of equal length")
        object.__setattr__(self, "j", j)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def univariate(cls, j: int, eta: int) -> BasisId:
        return cls((j,), (eta,))

    @property
    def k(self) -> int:
        return len(self.j)

    @property
    def center(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(e) / Fraction(2) ** jj for jj, e in zip(self.j, self.eta))

    def sort_key(self):
        """Tie-break order: lower total resolution first, then lexicographic ``(j, eta)``."""
        return (sum(self.j), self.j, self.eta)

    def to_dict(self) -> dict:
        return {"j": list(self.j), "eta": list(self.eta)}

    def __str__(self):
        if self.k == 1:
            return f"({self.j[0]}, {self.eta[0]}/2^{self.j[0]})"
        return f"({list(self.j)}, {list(self.eta)})"


def eval_basis(bid: BasisId, u):
    """Value and gradient of one basis at the point ``u`` (length ``k``)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    scale = np.exp2(np.array(bid.j, dtype=float))
    phi = mother_sigmoid(scale * u - np.array(bid.eta, dtype=float))
    dphi = scale * phi * (1.0 - phi)
    value = float(np.prod(phi))
    grad = np.array([dphi[d] * np.prod(np.delete(phi, d)) for d in range(bid.k)])
    return value, grad


class Dictionary:
    """Ordered set of basis ids with one coefficient each."""

    def __init__(self, ids=(), alphas=None):
        self.ids: list[BasisId] = list(ids)
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("dictionary contains duplicate bases")
        if len({b.k for b in self.ids}) > 1:
            raise ValueError("bases of different input dimension")
        self.alphas = np.zeros(len(self.ids)) if alphas is None else np.array(alphas, dtype=float).reshape(-1)
        if self.alphas.shape != (len(self.ids),):
            raise ValueError(f"{len(self.ids)} bases but {self.alphas.size} coefficients")

    def __len__(self):
        return len(self.ids)

    def __contains__(self, bid):
        return bid in self.ids

    def __iter__(self):
        return iter(self.ids)

    def __eq__(self, other):
        return isinstance(other, Dictionary) and self.ids == other.ids and np.array_equal(self.alphas, other.alphas)

    def __repr__(self):
        items = ", ".join(f"{b}: {a:.6g}" for b, a in zip(self.ids, self.alphas))
        return f"Dictionary({items})"

    @property
    def k(self) -> int:
        return self.ids[0].k if self.ids else 1

    def with_alphas(self, alphas) -> Dictionary:
        return Dictionary(self.ids, alphas)

    def added(self, bid: BasisId, alpha: float = 0.0) -> Dictionary:
        return Dictionary(self.ids + [bid], np.append(self.alphas, alpha))

    def removed(self, bid: BasisId) -> Dictionary:
        keep = [i for i, b in enumerate(self.ids) if b != bid]
        return Dictionary([self.ids[i] for i in keep], self.alphas[keep])

    def scales(self) -> np.ndarray:
        """``2**j`` as a ``(n, k)`` array."""
        return np.exp2(np.array([b.j for b in self.ids], dtype=float).reshape(len(self), self.k))

    def shifts(self) -> np.ndarray:
        return np.array([b.eta for b in self.ids], dtype=float).reshape(len(self), self.k)

    def to_records(self) -> list[dict]:
        return [{**b.to_dict(), "alpha": float(a)} for b, a in zip(self.ids, self.alphas)]

    @classmethod
    def from_records(cls, records) -> Dictionary:
        ids = [BasisId(tuple(r["j"]), tuple(r["eta"])) for r in records]
        return cls(ids, [float(r.get("alpha", 0.0)) for r in records])


def eval_flux(dictionary: Dictionary, u):
    """Flux ``sum_i alpha_i phi_i(u)`` and its gradient at one ``k``-vector ``u``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    value, grad = 0.0, np.zeros(u.shape)
    for bid, a in zip(dictionary.ids, dictionary.alphas):
        v, g = eval_basis(bid, u)
        value += a * v
        grad += a * g
    return value, grad


def flux_curve(dictionary: Dictionary, u, alphas=None):
    """Univariate flux and derivative on an array of states (vectorized ``eval_flux``)."""
    alphas = dictionary.alphas if alphas is None else np.asarray(alphas, dtype=float)
    u = np.asarray(u, dtype=float)
    if len(dictionary) == 0:
        return np.zeros_like(u), np.zeros_like(u)
    S = dictionary.scales()[:, 0].reshape((-1,) + (1,) * u.ndim)
    E = dictionary.shifts()[:, 0].reshape((-1,) + (1,) * u.ndim)
    a = alphas.reshape((-1,) + (1,) * u.ndim)
    phi = mother_sigmoid(S * u - E)
    return np.sum(a * phi, axis=0), np.sum(a * S * phi * (1.0 - phi), axis=0)


class DictionaryFlux:
    """Univariate dictionary flux usable on arrays or tape variables.

    For a state of rank ``d`` the coefficients must have shape ``(n,) + (1,) * d``
    so they broadcast against the stacked basis values.
    """

    def __init__(self, ids):
        d = Dictionary(ids)
        if d.k != 1:
            raise ValueError("the twin solver supports univariate fluxes only")
        self.ids = d.ids
        self.S = d.scales()[:, 0]
        self.E = d.shifts()[:, 0]

    def __len__(self):
        return len(self.ids)

    def _shaped(self, v, ndim):
        return v.reshape((-1,) + (1,) * ndim)

    def prepare(self, alpha):
        """Per-solve constants: ``alpha`` and ``alpha * 2**j``."""
        ndim = np.ndim(tp.value_of(alpha)) - 1
        return alpha, alpha * self._shaped(self.S, ndim)

    def __call__(self, u, prepared):
        alpha, alpha_s = prepared
        if not self.ids:
            z = 0.0 * u
            return z, z
        ndim = np.ndim(tp.value_of(u))
        phi = tp.logistic(self._shaped(self.S, ndim) * u - self._shaped(self.E, ndim))
        F = tp.total(alpha * phi, axis=0)
        dF = tp.total(alpha_s * (phi * (1.0 - phi)), axis=0)
        return F, dF

    def features(self, u):
        """Basis values and their u-derivatives, each of shape ``(n,) + u.shape``."""
        u = np.asarray(u, dtype=float)
        S = self._shaped(self.S, u.ndim)
        phi = mother_sigmoid(S * u - self._shaped(self.E, u.ndim))
        return phi, S * phi * (1.0 - phi)


def neighborhood(ids) -> list[BasisId]:
    """Union of the neighborhoods of ``ids``: per dimension one finer basis with the
    same center and two same-resolution bases shifted by one step."""
    out: list[BasisId] = []
    seen = set()
    for bid in ids:
        for d in range(bid.k):
            j, eta = list(bid.j), list(bid.eta)
            finer = BasisId(tuple(j[:d] + [j[d] + 1] + j[d + 1 :]), tuple(eta[:d] + [2 * eta[d]] + eta[d + 1 :]))
            cands = [finer]
            for step in (1, -1):
                cands.append(BasisId(bid.j, tuple(eta[:d] + [eta[d] + step] + eta[d + 1 :])))
            for c in cands:
                if c not in seen:
                    seen.add(c)
                    out.append(c)
    return out


def initial_basis(u_min: float, u_max: float) -> BasisId:
    """Coarse basis covering ``[u_min, u_max]``: resolution ``ceil(log2(1/width))``,
    centered on the dyadic point nearest the middle of the range."""
    width = max(u_max - u_min, 1e-12)
    j = int(np.ceil(np.log2(1.0 / width)))
    eta = int(np.floor((u_min + u_max) / 2 * 2.0**j + 0.5))
    return BasisId.univariate(j, eta)


def save_dictionary(path, dictionary: Dictionary) -> None:
    Path(path).write_text(json.dumps(dictionary.to_records(), indent=2) + "\n")


def load_dictionary(path) -> Dictionary:
    return Dictionary.from_records(json.loads(Path(path).read_text()))

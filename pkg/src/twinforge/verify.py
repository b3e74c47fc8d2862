"""Verification harness with oracle access to the hidden flux.

This is the only module (besides the CLI's verification commands) that imports
:func:`twinforge.graybox.true_flux`.  It provides the reference gradient (an
oracle twin that runs the gray box's scheme with the exact flux on the tape),
the integrated gradient error, and the flux-recovery diagnostics.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import twin as tw
from .basis import Dictionary, flux_curve
from .field import SpaceTimeField, trapezoid_weights
from .graybox import true_flux


class TrueFlux:
    """Exact flux written in tape ops, optionally perturbed by ``eps * u**2 / 2``."""

    def __init__(self, kind: str, speed: float = 1.0, eps: float = 0.0):
        true_flux(kind, 0.0, speed)  # validates the kind
        self.kind, self.speed, self.eps = kind, float(speed), float(eps)

    def prepare(self, alpha):
        return None

    def features(self, u):
        """No trainable bases: empty feature stacks."""
        u = np.asarray(u, dtype=float)
        z = np.zeros((0,) + u.shape)
        return z, z

    def base(self, u):
        return self(np.asarray(u, dtype=float), None)

    def __call__(self, u, prepared):
        if self.kind == "buckley_leverett":
            v = 1.0 - u
            d = 1.0 + 2.0 * (v * v)
            F = (u * u) / d
            dF = (2.0 * u * d + 4.0 * (u * u) * v) / (d * d)
        elif self.kind == "linear_advection":
            F, dF = self.speed * u, 0.0 * u + self.speed
        else:
            F, dF = 0.5 * (u * u), 1.0 * u
        if self.eps:
            F, dF = F + (0.5 * self.eps) * (u * u), dF + self.eps * u
        return F, dF


def oracle_twin(twin: tw.TwinModel, flux_kind: str, speed: float = 1.0, eps: float = 0.0) -> tw.TwinModel:
    """The twin's scheme and grid with the exact (optionally perturbed) flux."""
    return tw.TwinModel(Dictionary(), twin.disc, twin.u0, TrueFlux(flux_kind, speed, eps))


def reference_gradient(twin: tw.TwinModel, flux_kind: str, objective, control=None, speed: float = 1.0):
    """``xi`` and ``d xi / d c`` of the gray-box physics by the oracle twin's adjoint."""
    return tw.value_and_grad(oracle_twin(twin, flux_kind, speed), objective, control)


def integrated_gradient_error(estimate, reference, weights=None, grid=None) -> float:
    """``sum_ij w_ij (g_est - g_ref)**2`` for gradient densities ``g = (d xi / d c_ij) / w_ij``."""
    estimate, reference = np.asarray(estimate, float), np.asarray(reference, float)
    if estimate.shape != reference.shape:
        raise ValueError(f"gradient shapes differ: {estimate.shape} vs {reference.shape}")
    if weights is None:
        weights = trapezoid_weights(grid)
    w = weights.w if hasattr(weights, "w") else np.asarray(weights, float)
    return float(np.sum((estimate - reference) ** 2 / w))


@dataclass
class FluxRecoveryReport:
    u_min: float
    u_max: float
    rel_l2_derivative: float
    offset_mean: float  # mean of F_twin - F_true on the range
    offset_spread: float  # max - min of F_twin - F_true on the range
    sweep_eps: list
    sweep_mismatch: list
    sweep_monotone: bool | None  # None when no sweep was run

    def to_dict(self):
        return asdict(self)


def derivative_error(dictionary: Dictionary, flux_kind: str, u_min: float, u_max: float, speed=1.0, points=201) -> float:
    """Relative L2 error of ``dF_twin/du`` against ``dF/du`` on ``[u_min, u_max]``."""
    u = np.linspace(u_min, u_max, points)
    _, dF = true_flux(flux_kind, u, speed)
    _, dFt = flux_curve(dictionary, u)
    return float(np.linalg.norm(dFt - dF) / max(np.linalg.norm(dF), 1e-300))


def perturbation_sweep(twin: tw.TwinModel, gray: SpaceTimeField, flux_kind: str, eps_list=(0.01, 0.05, 0.1), speed=1.0):
    """Sup-norm mismatch of twins whose flux derivative is perturbed by ``eps * u``."""
    out = []
    for eps in eps_list:
        sol = tw.twin_solve(oracle_twin(twin, flux_kind, speed, eps))
        out.append(float(np.max(np.abs(sol.values - gray.values))))
    return out


def flux_recovery_report(dictionary: Dictionary, flux_kind: str, gray: SpaceTimeField, twin: tw.TwinModel | None = None,
                         eps_list=(0.01, 0.05, 0.1), speed=1.0) -> FluxRecoveryReport:
    u_min, u_max = float(gray.u.min()), float(gray.u.max())
    u = np.linspace(u_min, u_max, 201)
    F, _ = true_flux(flux_kind, u, speed)
    Ft, _ = flux_curve(dictionary, u)
    offset = Ft - F
    if twin is None:
        eps_list, sweep, monotone = [], [], None
    else:
        sweep = perturbation_sweep(twin, gray, flux_kind, eps_list, speed)
        monotone = bool(all(b >= a for a, b in zip(sweep, sweep[1:])))
    return FluxRecoveryReport(u_min, u_max, derivative_error(dictionary, flux_kind, u_min, u_max, speed),
                              float(np.mean(offset)), float(np.ptp(offset)), list(eps_list), sweep, monotone)

"""Per-state monitor functionals evaluated by quadrature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .galerkin import BasisSet, SpeciesField
from .model import ModelParams, entropy_density

__all__ = ["MonitorRow", "monitor_columns", "compute_monitors"]


@dataclass(frozen=True, eq=False)
class MonitorRow:
    """Scalar functionals of one state.

    ``v_l2_sq`` is ||u**(s/2)||^2, kept for the higher moment in the ensemble
    estimates; it is not part of the monitor CSV.
    """

    t: float
    l2_norm_sq: float
    grad_norm_sq: float
    grad_us_norm_sq: float
    grad_us2_norm_sq: float
    entropy: float
    mass: np.ndarray
    min_nodal: float
    us_l2_norm: float
    v_l2_sq: float = 0.0

    def csv_values(self) -> list[float]:
        return [
            self.t,
            self.l2_norm_sq,
            self.grad_norm_sq,
            self.grad_us_norm_sq,
            self.grad_us2_norm_sq,
            self.entropy,
            *[float(m) for m in self.mass],
            self.min_nodal,
            self.us_l2_norm,
        ]


def monitor_columns(n: int) -> list[str]:
    return (
        ["t", "l2_sq", "grad_sq", "grad_us_sq", "grad_us2_sq", "entropy"]
        + [f"mass_{i + 1}" for i in range(n)]
        + ["min_nodal", "us_l2"]
    )


def _power_grad_sq(au, grad, p, w):
    """sum_i int |d(|u_i|**p)/dx|**2 via p |u|**(p-1) u'."""
    with np.errstate(divide="ignore", invalid="ignore"):
        g = p * au ** (p - 1.0) * grad
    g = np.where(grad == 0.0, 0.0, g)
    return float((g**2 @ w).sum())


def compute_monitors(state: SpeciesField, basis: BasisSet, params: ModelParams, t: float = 0.0) -> MonitorRow:
    """Quadrature functionals of a state.

    Signed states (Euler-Maruyama excursions) enter powers through |u| and the
    entropy through max(u, 0), its continuous extension.
    """
    u = state.values
    grad = state.grad
    w = basis.quad_weights
    s = params.s
    au = np.abs(u)
    us = au**s
    return MonitorRow(
        t=float(t),
        l2_norm_sq=float((u**2 @ w).sum()),
        grad_norm_sq=float((grad**2 @ w).sum()),
        grad_us_norm_sq=_power_grad_sq(au, grad, s, w),
        grad_us2_norm_sq=_power_grad_sq(au, grad, s / 2.0, w),
        entropy=float(entropy_density(np.maximum(u, 0.0), params) @ w),
        mass=u @ w,
        min_nodal=float(u.min()),
        us_l2_norm=float(np.sqrt((us**2 @ w).sum())),
        v_l2_sq=float((us @ w).sum()),
    )

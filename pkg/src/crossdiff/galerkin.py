"""One-dimensional Neumann cosine Galerkin discretisation on [0, L].

Nonlinear coefficients are evaluated pseudo-spectrally: fields are synthesised
at quadrature nodes, multiplied pointwise, and tested against the basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import DomainError
from .model import ModelParams, abs_diffusion_matrix, diffusion_matrix

__all__ = [
    "GridSpec",
    "BasisSet",
    "SpeciesField",
    "build_basis",
    "composite_gauss",
    "cosine_modes",
    "project",
    "synthesize",
    "assemble_divergence_term",
    "assemble_divergence",
    "mass",
]

PANEL_POINTS = 32


@dataclass(frozen=True)
class GridSpec:
    domain_length: float = 1.0
    N: int = 16
    Q: int = 64

    def __post_init__(self):
        if not self.domain_length > 0:
            raise DomainError("domain_length must be positive")
        if self.N < 1:
            raise DomainError("N must be a positive integer")
        if self.Q < 2 * self.N + 1:
            raise DomainError(f"Q={self.Q} must be at least 2N+1={2 * self.N + 1}")


@dataclass(frozen=True, eq=False)
class BasisSet:
    """Basis values and derivatives at the quadrature nodes (rows = modes)."""

    grid: GridSpec
    values: np.ndarray
    derivs: np.ndarray
    quad_weights: np.ndarray
    quad_nodes: np.ndarray
    gram_error: float

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def Q(self) -> int:
        return self.grid.Q

    @property
    def length(self) -> float:
        return self.grid.domain_length

    @property
    def eigenvalues(self) -> np.ndarray:
        """(k pi / L)**2, the Neumann Laplacian eigenvalue of each mode."""
        k = np.arange(self.N)
        return (k * np.pi / self.length) ** 2

    @property
    def weighted_values(self) -> np.ndarray:
        return self.values * self.quad_weights

    @property
    def weighted_derivs(self) -> np.ndarray:
        return self.derivs * self.quad_weights


def composite_gauss(Q: int, length: float, panel_points: int = PANEL_POINTS):
    """Composite Gauss-Legendre rule with Q nodes on [0, length].

    Panels hold ``panel_points`` nodes when Q divides evenly, otherwise a single
    panel is used.
    """
    panels = Q // panel_points if Q % panel_points == 0 and Q >= 2 * panel_points else 1
    q = Q // panels
    x, w = leggauss(q)
    h = length / panels
    nodes = np.concatenate([(x + 1.0) * (h / 2) + p * h for p in range(panels)])
    weights = np.tile(w * (h / 2), panels)
    return nodes, weights


def cosine_modes(k: np.ndarray, x: np.ndarray, length: float):
    """Orthonormal Neumann modes and their derivatives at points x."""
    k = np.asarray(k)[:, None]
    norm = np.where(k == 0, np.sqrt(1.0 / length), np.sqrt(2.0 / length))
    arg = k * np.pi * np.asarray(x)[None, :] / length
    values = norm * np.cos(arg)
    derivs = -norm * (k * np.pi / length) * np.sin(arg)
    return values, derivs


def build_basis(grid: GridSpec) -> BasisSet:
    nodes, weights = composite_gauss(grid.Q, grid.domain_length)
    values, derivs = cosine_modes(np.arange(grid.N), nodes, grid.domain_length)
    gram = (values * weights) @ values.T
    err = float(np.abs(gram - np.eye(grid.N)).max())
    for arr in (values, derivs, weights, nodes):
        arr.setflags(write=False)
    return BasisSet(grid, values, derivs, weights, nodes, err)


def project(f, basis: BasisSet, N_keep: int | None = None) -> np.ndarray:
    """Coefficients (f, e_k) of nodal field(s) f, shape (..., Q) -> (..., N_keep)."""
    N_keep = basis.N if N_keep is None else N_keep
    if N_keep > basis.N:
        raise DomainError(f"N_keep={N_keep} exceeds basis size {basis.N}")
    return np.asarray(f) @ basis.weighted_values[:N_keep].T


def synthesize(coeffs, basis: BasisSet) -> np.ndarray:
    coeffs = np.asarray(coeffs)
    return coeffs @ basis.values[: coeffs.shape[-1]]


def synthesize_derivative(coeffs, basis: BasisSet) -> np.ndarray:
    coeffs = np.asarray(coeffs)
    return coeffs @ basis.derivs[: coeffs.shape[-1]]


@dataclass(eq=False)
class SpeciesField:
    """Nodal densities plus Galerkin coefficients.

    ``grad`` holds nodal x-derivatives.  For fields built from coefficients it
    is the exact spectral derivative; for entropy-scheme states (u = u(w) is not
    itself in the Galerkin space) it comes from the chain rule u' = w' / h''(u),
    and ``coeffs`` is then the L2 projection of the nodal values.
    """

    values: np.ndarray
    coeffs: np.ndarray
    grad: np.ndarray

    @classmethod
    def from_coeffs(cls, coeffs, basis: BasisSet) -> "SpeciesField":
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        return cls(synthesize(coeffs, basis), coeffs, synthesize_derivative(coeffs, basis))

    @classmethod
    def from_nodal(cls, values, basis: BasisSet, grad=None) -> "SpeciesField":
        values = np.atleast_2d(np.asarray(values, dtype=float))
        coeffs = project(values, basis)
        if grad is None:
            grad = synthesize_derivative(coeffs, basis)
        return cls(values, coeffs, np.asarray(grad, dtype=float))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.coeffs)))


def assemble_divergence(values, grad, basis: BasisSet, params: ModelParams, matrix_kind: str = "A") -> np.ndarray:
    """All species at once: entry (i, k) = -sum_j int K_ij(u) u_j' e_k' dx, K = A or M."""
    if matrix_kind == "A":
        K = diffusion_matrix(values, params)
    elif matrix_kind == "M":
        K = abs_diffusion_matrix(values, params)
    else:
        raise DomainError(f"matrix_kind must be 'A' or 'M', got {matrix_kind!r}")
    flux = np.einsum("ijq,jq->iq", K, grad)
    return -flux @ basis.weighted_derivs.T


def assemble_divergence_term(u: SpeciesField, i: int, basis: BasisSet, params: ModelParams, matrix_kind: str = "A") -> np.ndarray:
    """Galerkin coefficients of Pi_N div(sum_j K_ij(u) grad u_j) for species i."""
    return assemble_divergence(u.values, u.grad, basis, params, matrix_kind)[i]


def mass(u: SpeciesField, basis: BasisSet) -> np.ndarray:
    return u.values @ basis.quad_weights

"""Slow, independent reference computations used by the tests.

Nothing here shares code paths with the production assembly: fields are
re-synthesised from coefficients with explicit cosines on a separate
Gauss-Legendre rule, matrices are built entry by entry, and roots are found by
plain bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "OracleReport",
    "compare",
    "dense_nodes",
    "dense_fields",
    "dense_matrix",
    "dense_weak_form",
    "dense_quadratic_form",
    "dense_power_grad_sq",
    "bisect_entropy_log_inverse",
    "bisect_entropy_inverse",
    "heat_decay_reference",
]


@dataclass(frozen=True)
class OracleReport:
    name: str
    max_abs_err: float
    max_rel_err: float
    samples: int

    def ok(self, rel_tol: float) -> bool:
        return self.max_rel_err <= rel_tol


def compare(name: str, got, ref, floor: float = 0.0) -> OracleReport:
    """Elementwise errors; relative errors divide by max(|ref|, floor)."""
    got = np.asarray(got, dtype=float)
    ref = np.asarray(ref, dtype=float)
    err = np.abs(got - ref)
    denom = np.maximum(np.abs(ref), floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(err == 0, 0.0, err / denom)
    return OracleReport(name, float(err.max(initial=0.0)), float(rel.max(initial=0.0)), int(err.size))


def dense_nodes(count: int, length: float, panels: int = 1):
    """Gauss-Legendre nodes and weights on [0, length] split into equal panels."""
    x, w = leggauss(count // panels)
    h = length / panels
    nodes = np.concatenate([(x + 1) * h / 2 + p * h for p in range(panels)])
    weights = np.concatenate([w * h / 2 for _ in range(panels)])
    return nodes, weights


def dense_fields(coeffs, x, length):
    """u and u' at points x from cosine coefficients, one mode at a time."""
    coeffs = np.atleast_2d(coeffs)
    u = np.zeros((coeffs.shape[0], x.size))
    ux = np.zeros_like(u)
    for k in range(coeffs.shape[1]):
        if k == 0:
            u += coeffs[:, :1] / math.sqrt(length)
            continue
        amp = math.sqrt(2.0 / length)
        wk = k * math.pi / length
        u += coeffs[:, k : k + 1] * amp * np.cos(wk * x)
        ux -= coeffs[:, k : k + 1] * amp * wk * np.sin(wk * x)
    return u, ux


def dense_matrix(u, params, kind: str = "A"):
    """A(u) (kind 'A') or A^H(v) (kind 'H') for a single state vector, entry by entry."""
    n, s = params.n, params.s
    a, a0 = params.a, params.a0
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                if kind == "A":
                    val = a0[i] + (s + 1) * a[i, i] * u[i] ** s
                    val += sum(a[i, k] * u[k] ** s for k in range(n) if k != i)
                else:
                    val = a0[i] + (s + 1) * a[i, i] * u[i] ** 2
                    val += sum(a[i, k] * u[k] ** 2 for k in range(n) if k != i)
            elif kind == "A":
                val = s * a[i, j] * u[i] * u[j] ** (s - 1)
            else:
                val = s * a[i, j] * u[i] * u[j]
            out[i, j] = val
    return out


def dense_weak_form(coeffs, i: int, basis, params, factor: int = 4) -> np.ndarray:
    """-sum_j int A_ij(u) u_j' e_k' dx for k < N, on factor*Q fresh Gauss nodes.

    ``coeffs`` are the Galerkin coefficients of u (shape (n, N)); a
    SpeciesField is accepted too.
    """
    coeffs = getattr(coeffs, "coeffs", coeffs)
    L = basis.length
    count = factor * basis.Q
    x, w = dense_nodes(count, L, panels=max(1, count // 64))
    u, ux = dense_fields(coeffs, x, L)
    if np.any(u < 0):
        raise ValueError("dense_weak_form needs u >= 0 at the dense nodes")
    flux = np.zeros(x.size)
    for q in range(x.size):
        A = dense_matrix(u[:, q], params)
        flux[q] = sum(A[i, j] * ux[j, q] for j in range(params.n))
    out = np.zeros(basis.N)
    for k in range(basis.N):
        wk = k * math.pi / L
        dek = -math.sqrt(2.0 / L) * wk * np.sin(wk * x) if k else np.zeros_like(x)
        out[k] = -float(np.sum(w * flux * dek))
    return out


def dense_quadratic_form(kind: str, u, z, params) -> float:
    """Double sum of the coercivity lemma of the given kind, by explicit loops."""
    u = np.asarray(u, dtype=float)
    z = np.asarray(z, dtype=float)
    s = params.s
    A = dense_matrix(u, params, "H" if kind == "L4" else "A")
    total = 0.0
    for i in range(params.n):
        if kind == "L2":
            wi = 1.0 / u[i]
        elif kind == "L3":
            wi = u[i] ** (s - 2)
        else:
            wi = 1.0
        for j in range(params.n):
            total += params.pi[i] * wi * A[i, j] * z[i] * z[j]
    return total


def dense_power_grad_sq(coeffs, p: float, basis, factor: int = 4) -> float:
    """sum_i int |d(u_i**p)/dx|**2 on fresh nodes, for positive u."""
    L = basis.length
    count = factor * basis.Q
    x, w = dense_nodes(count, L, panels=max(1, count // 64))
    u, ux = dense_fields(coeffs, x, L)
    return float(np.sum(w * (p * u ** (p - 1) * ux) ** 2))


def bisect_entropy_log_inverse(w: float, pi_i: float, s: float) -> float:
    """log u solving pi (u**(s-1) + log u) = w, by bisection on log u."""

    def F(ell):
        return pi_i * (math.exp((s - 1) * ell) + ell) - w if (s - 1) * ell < 700 else math.inf

    lo, hi = -1.0, 1.0
    while F(lo) > 0:
        lo *= 2.0
    while F(hi) < 0:
        hi *= 2.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if F(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def bisect_entropy_inverse(w: float, pi_i: float, s: float) -> float:
    """Root u of pi (u**(s-1) + log u) = w; may underflow to 0 for very negative w."""
    return math.exp(bisect_entropy_log_inverse(w, pi_i, s))


def heat_decay_reference(coeff_k: float, dt: float, a10: float, k: int, L: float) -> float:
    """One semi-implicit heat step for mode k: coeff / (1 + dt a10 (k pi / L)**2)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return coeff_k / (1.0 + dt * a10 * (k * math.pi / L) ** 2)

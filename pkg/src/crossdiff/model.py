"""Algebraic objects of the cross-diffusion model.

Every function here is pure and vectorised over trailing axes: a state ``u``
of shape ``(n, ...)`` yields matrices of shape ``(n, n, ...)``.  This lets the
spatial code evaluate coefficients at all quadrature nodes in one call.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .errors import ConvergenceError, DomainError

__all__ = [
    "ModelParams",
    "diffusion_matrix",
    "abs_diffusion_matrix",
    "transformed_matrix",
    "transform_h_matrix",
    "entropy_density",
    "entropy_gradient",
    "entropy_gradient_inverse",
    "entropy_log_inverse",
    "entropy_hessian",
    "entropy_hessian_diag",
    "inverse_hessian_diag",
    "entropy_transport_matrix",
    "diffusion_matrix_jacobian",
    "inverse_hessian_diag_derivative",
]

_TINY = np.finfo(float).tiny
DOMINANCE_FLAGS = ("strong", "weak", "none")


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Coefficients of the population system.

    ``a`` holds self-diffusion on its diagonal and cross-diffusion off it.
    ``dominance`` selects which self-diffusion dominance condition is enforced
    at construction ("strong" uses the s**2/4 factor, "weak" the s-1 factor).
    """

    n: int
    s: float
    a0: np.ndarray
    a: np.ndarray
    pi: np.ndarray
    dominance: str = "strong"
    s_warning: bool = field(init=False, default=False)

    def __post_init__(self):
        object.__setattr__(self, "a0", np.asarray(self.a0, dtype=float).reshape(-1))
        object.__setattr__(self, "a", np.atleast_2d(np.asarray(self.a, dtype=float)))
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=float).reshape(-1))
        object.__setattr__(self, "s", float(self.s))
        problems = self.problems()
        if problems:
            raise DomainError("; ".join(problems))
        if self.s < 2.0:
            object.__setattr__(self, "s_warning", True)
            warnings.warn(
                f"s={self.s} < 2: existence theory does not cover this exponent",
                RuntimeWarning,
                stacklevel=3,
            )
        for arr in (self.a0, self.a, self.pi):
            arr.setflags(write=False)

    def problems(self) -> list[str]:
        """All violated invariants, as messages (empty when valid)."""
        out = []
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 1:
            return [f"n must be a positive integer, got {n!r}"]
        if self.a0.shape != (n,):
            out.append(f"a0 must have length {n}")
        if self.a.shape != (n, n):
            out.append(f"a must be {n}x{n}")
        if self.pi.shape != (n,):
            out.append(f"pi must have length {n}")
        if out:
            return out
        if not np.isfinite(self.s) or self.s < 1.0:
            out.append(f"s must be >= 1, got {self.s}")
        if np.any(self.a0 <= 0):
            out.append("a0 entries must be positive")
        if np.any(self.a < 0):
            out.append("a entries must be nonnegative")
        if np.any(self.pi <= 0):
            out.append("pi entries must be positive")
        if out:
            return out
        if self.balance_residual() > 1e-12 * max(np.abs(self.pi[:, None] * self.a).max(), 1e-300):
            out.append("detailed balance pi_i a_ij = pi_j a_ji violated")
        if self.dominance not in DOMINANCE_FLAGS:
            out.append(f"dominance must be one of {DOMINANCE_FLAGS}")
        elif self.dominance != "none":
            margins = self.strong_margins() if self.dominance == "strong" else self.weak_margins()
            bad = np.flatnonzero(margins <= 0)
            if bad.size:
                cond = "strong condition (8)" if self.dominance == "strong" else "weak condition (9)"
                out.append(
                    f"self-diffusion dominance ({cond}) fails for species "
                    + ", ".join(str(i + 1) for i in bad)
                )
        return out

    def balance_residual(self) -> float:
        pa = self.pi[:, None] * self.a
        return float(np.abs(pa - pa.T).max())

    def cross_sums(self) -> np.ndarray:
        """sum_{k != i} a_ik for each i."""
        return self.a.sum(axis=1) - np.diag(self.a)

    def strong_margins(self) -> np.ndarray:
        return (self.s + 1) * np.diag(self.a) - self.s**2 / 4 * self.cross_sums()

    def weak_margins(self) -> np.ndarray:
        return (self.s + 1) * np.diag(self.a) - (self.s - 1) * self.cross_sums()


def _expand(vec: np.ndarray, ndim: int) -> np.ndarray:
    return vec.reshape(vec.shape + (1,) * ndim)


def _offdiag(a: np.ndarray) -> np.ndarray:
    return a - np.diag(np.diag(a))


def _assemble(u: np.ndarray, params: ModelParams, diag_pow: np.ndarray, cross_i, cross_j):
    """Shared layout of A, M and A^H: diagonal sums plus rank-one off-diagonals."""
    n, s = params.n, params.s
    extra = u.ndim - 1
    a = params.a
    diag = _expand(params.a0, extra) + (s + 1) * _expand(np.diag(a), extra) * diag_pow
    diag = diag + np.tensordot(_offdiag(a), diag_pow, axes=(1, 0))
    out = s * a.reshape((n, n) + (1,) * extra) * cross_i[:, None] * cross_j[None, :]
    idx = np.arange(n)
    out[idx, idx] = diag
    return out


def _as_state(u, params: ModelParams) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[:1] != (params.n,):
        raise DomainError(f"state must have leading dimension n={params.n}, got {u.shape}")
    return u


def diffusion_matrix(u, params: ModelParams) -> np.ndarray:
    """Cross-diffusion matrix A(u) for a nonnegative state."""
    u = _as_state(u, params)
    if np.any(u < 0):
        raise DomainError("diffusion_matrix needs u >= 0; use abs_diffusion_matrix for signed states")
    s = params.s
    return _assemble(u, params, u**s, u, u ** (s - 1))


def abs_diffusion_matrix(u, params: ModelParams) -> np.ndarray:
    """Matrix M(u): A evaluated on |u|, defined for every real state."""
    au = np.abs(_as_state(u, params))
    s = params.s
    return _assemble(au, params, au**s, au, au ** (s - 1))


def transformed_matrix(v, params: ModelParams) -> np.ndarray:
    """Matrix A^H(v) of the v = u**(s/2) formulation."""
    v = _as_state(v, params)
    if np.any(v < 0):
        raise DomainError("transformed_matrix needs v >= 0")
    return _assemble(v, params, v**2, v, v)


def transform_h_matrix(v, params: ModelParams) -> np.ndarray:
    """Diagonal H(v) with entries (2/s) v**(2/s - 1), so that du = H(v) dv."""
    v = _as_state(v, params)
    if np.any(v <= 0):
        raise DomainError("H(v) needs v > 0")
    s = params.s
    d = (2.0 / s) * v ** (2.0 / s - 1.0)
    return _diag_matrix(d)


def _diag_matrix(d: np.ndarray) -> np.ndarray:
    n = d.shape[0]
    out = np.zeros((n, n) + d.shape[1:])
    idx = np.arange(n)
    out[idx, idx] = d
    return out


def entropy_density(u, params: ModelParams) -> np.ndarray:
    """h_s(u) = sum_i pi_i (u_i**s/s + u_i(log u_i - 1) + 1), extended continuously to u_i = 0."""
    u = _as_state(u, params)
    if np.any(u < 0):
        raise DomainError("entropy_density needs u >= 0")
    s = params.s
    per = u**s / s + xlogy(u, u) - u + 1.0
    return np.tensordot(params.pi, per, axes=(0, 0))


def _require_positive(u: np.ndarray, what: str):
    if np.any(~(u > 0)):
        raise DomainError(f"{what} needs u > 0 componentwise")


def entropy_gradient(u, params: ModelParams) -> np.ndarray:
    u = _as_state(u, params)
    _require_positive(u, "entropy_gradient")
    pi = _expand(params.pi, u.ndim - 1)
    return pi * (u ** (params.s - 1) + np.log(u))


def entropy_log_inverse(w, params: ModelParams, tol: float = 1e-13, max_iter: int = 200, guess=None) -> np.ndarray:
    """log of (h'_s)^{-1}(w), solved in the log domain.

    Per component the map ell -> exp((s-1) ell) + ell is increasing and convex,
    so Newton started at the upper end of the bracket decreases monotonically to
    the root; a bisection step is taken whenever an iterate leaves the bracket.
    The log domain keeps states far below the float range (w ~ -1e6) solvable.
    """
    w = _as_state(w, params)
    if tol <= 0:
        raise DomainError("tol must be positive")
    if not np.all(np.isfinite(w)):
        raise DomainError("w must be finite")
    pi = _expand(params.pi, w.ndim - 1)
    y = w / pi
    p = params.s - 1.0
    if p == 0.0:
        return y - 1.0
    lo = np.minimum(y, 0.0) - 1.0
    with np.errstate(over="ignore"):
        hi = np.minimum(y, np.log1p(np.maximum(y, 0.0) ** (1.0 / p)))
    hi = np.maximum(hi, lo)
    ell = hi.copy() if guess is None else np.clip(np.asarray(guess, dtype=float), lo, hi)
    scale = tol * np.maximum(1.0, np.abs(y))
    for _ in range(max_iter):
        e = np.exp(p * ell)
        f = e + ell - y
        done = np.abs(f) <= scale
        if np.all(done):
            return ell
        lo = np.where(f < 0, ell, lo)
        hi = np.where(f > 0, ell, hi)
        step = f / (p * e + 1.0)
        new = ell - step
        outside = (new <= lo) | (new >= hi)
        new = np.where(outside, 0.5 * (lo + hi), new)
        stalled = np.abs(new - ell) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(ell))
        ell = np.where(done, ell, new)
        if np.all(done | stalled):
            return ell
    e = np.exp(p * ell)
    worst = float(np.max(np.abs(e + ell - y) * pi))
    raise ConvergenceError("entropy gradient inversion did not converge", worst)


def entropy_gradient_inverse(w, params: ModelParams, tol: float = 1e-12, max_iter: int = 200, guess=None) -> np.ndarray:
    """Primal state u with h'_s(u) = w; strictly positive for every finite w.

    The residual |h'_s(u) - w| is held below ``tol * max(1, |w|/pi)`` (times pi);
    states smaller than the float range are floored at the smallest normal
    double, in which case the residual holds for the log-domain value.
    """
    ell = entropy_log_inverse(w, params, tol=tol, max_iter=max_iter, guess=guess)
    return np.maximum(np.exp(ell), _TINY)


def entropy_hessian_diag(u, params: ModelParams) -> np.ndarray:
    """Diagonal of h''_s(u): pi_i (1/u_i + (s-1) u_i**(s-2))."""
    u = _as_state(u, params)
    _require_positive(u, "entropy_hessian")
    pi = _expand(params.pi, u.ndim - 1)
    return pi * (1.0 / u + (params.s - 1) * u ** (params.s - 2))


def inverse_hessian_diag(u, params: ModelParams) -> np.ndarray:
    """1 / h''_s(u) written without the 1/u singularity: u / (pi (1 + (s-1) u**(s-1)))."""
    u = _as_state(u, params)
    pi = _expand(params.pi, u.ndim - 1)
    return u / (pi * (1.0 + (params.s - 1) * u ** (params.s - 1)))


def entropy_hessian(u, params: ModelParams) -> np.ndarray:
    return _diag_matrix(entropy_hessian_diag(u, params))


def entropy_transport_matrix(w, params: ModelParams, tol: float = 1e-12) -> np.ndarray:
    """B(w) = A(u(w)) h''_s(u(w))^{-1}, the mobility acting on entropy-variable gradients."""
    u = entropy_gradient_inverse(w, params, tol=tol)
    return diffusion_matrix(u, params) * inverse_hessian_diag(u, params)[None, :]


def diffusion_matrix_jacobian(u, params: ModelParams) -> np.ndarray:
    """dA_ij/du_l for a positive state, shape (n, n, n, ...) indexed [i, j, l]."""
    u = _as_state(u, params)
    n, s, a = params.n, params.s, params.a
    extra = u.ndim - 1
    us1 = u ** (s - 1)
    out = np.zeros((n, n, n) + u.shape[1:])
    for i in range(n):
        for j in range(n):
            if i == j:
                for l in range(n):
                    if l == i:
                        out[i, i, i] = s * (s + 1) * a[i, i] * us1[i]
                    else:
                        out[i, i, l] = s * a[i, l] * us1[l]
            elif a[i, j] != 0.0:
                out[i, j, i] = s * a[i, j] * us1[j]
                out[i, j, j] = s * (s - 1) * a[i, j] * u[i] * u[j] ** (s - 2)
    return out if extra else out.reshape(n, n, n)


def inverse_hessian_diag_derivative(u, params: ModelParams) -> np.ndarray:
    """d/du_i of 1/h''_s(u)_i."""
    u = _as_state(u, params)
    s = params.s
    pi = _expand(params.pi, u.ndim - 1)
    q = u ** (s - 1)
    return (1.0 - (s - 1) * (s - 2) * q) / (pi * (1.0 + (s - 1) * q) ** 2)

"""Truncated cylindrical Brownian paths, Wong-Zakai interpolation and noise families.

A noise model couples species i to driving process j through amplitude
``c[i, j]``; process j is expanded over ``K`` consecutive cosine modes
starting at ``first_mode``.  Setting ``first_mode=1`` removes the constant mode,
so additive noise then leaves every species' mass untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ModelError
from .galerkin import BasisSet, SpeciesField, project, synthesize
from .model import ModelParams

__all__ = [
    "NOISE_KINDS",
    "NoiseModel",
    "BrownianPath",
    "sample_path",
    "wong_zakai_value",
    "path_rate",
    "step_rates",
    "sigma_apply",
    "sigma_nodal",
    "sigma_derivative_nodal",
    "ito_correction",
    "correction_nodal",
    "drift_nodal",
    "wong_zakai_drift",
]

NOISE_KINDS = ("zero", "additive", "bounded_multiplicative")


@dataclass(frozen=True, eq=False)
class NoiseModel:
    kind: str = "zero"
    c: np.ndarray | None = None
    K: int = 8
    first_mode: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise DomainError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if self.K < 1:
            raise DomainError("K must be a positive integer")
        if self.first_mode not in (0, 1):
            raise DomainError("first_mode must be 0 or 1")
        if self.c is not None:
            c = np.atleast_2d(np.asarray(self.c, dtype=float))
            if c.shape[0] != c.shape[1]:
                raise DomainError("noise amplitude matrix c must be square")
            c.setflags(write=False)
            object.__setattr__(self, "c", c)

    @property
    def modes(self) -> np.ndarray:
        return np.arange(self.first_mode, self.first_mode + self.K)

    def amplitudes(self, n: int) -> np.ndarray:
        if self.c is None:
            return np.zeros((n, n))
        if self.c.shape != (n, n):
            raise DomainError(f"noise amplitude matrix must be {n}x{n}")
        return self.c

    def check_basis(self, basis: BasisSet):
        if self.first_mode + self.K > basis.N:
            raise DomainError(
                f"noise modes {self.first_mode}..{self.first_mode + self.K - 1} exceed basis size N={basis.N}"
            )

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.c is None or not np.any(self.c)


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Independent Gaussian increments on a uniform mesh of width ``eta``."""

    eta: float
    increments: np.ndarray
    seed: int

    @property
    def M(self) -> int:
        return self.increments.shape[0]

    @property
    def T(self) -> float:
        return self.M * self.eta

    @property
    def cumulative(self) -> np.ndarray:
        """W at the mesh points t_m = m eta, shape (M+1, n, K)."""
        out = np.zeros((self.M + 1,) + self.increments.shape[1:])
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    def coarsen(self, factor: int) -> "BrownianPath":
        """Path on a mesh ``factor`` times wider, built by summing increments."""
        if factor < 1 or self.M % factor:
            raise DomainError(f"cannot coarsen {self.M} increments by {factor}")
        inc = self.increments.reshape((self.M // factor, factor) + self.increments.shape[1:]).sum(axis=1)
        return BrownianPath(self.eta * factor, inc, self.seed)


def sample_path(T: float, M: int, n: int, K: int, seed: int) -> BrownianPath:
    if not T > 0 or M < 1:
        raise DomainError("sample_path needs T > 0 and M >= 1")
    eta = T / M
    rng = np.random.default_rng(seed)
    inc = rng.standard_normal((M, n, K)) * np.sqrt(eta)
    return BrownianPath(eta, inc, seed)


def _interval(path: BrownianPath, t: float) -> int:
    if t < 0 or t > path.T * (1 + 1e-12):
        raise DomainError(f"t={t} outside [0, {path.T}]")
    return min(int(np.floor(t / path.eta)), path.M - 1)


def wong_zakai_value(path: BrownianPath, j: int, k: int, t: float) -> float:
    """Piecewise-linear interpolant of W_{jk} at time t."""
    m = _interval(path, t)
    W = path.cumulative
    return float(W[m, j, k] + (t - m * path.eta) / path.eta * path.increments[m, j, k])


def path_rate(path: BrownianPath, t: float) -> np.ndarray:
    """dW^eta/dt on the mesh interval containing t (right-continuous), shape (n, K)."""
    return path.increments[_interval(path, t)] / path.eta


def step_rates(path: BrownianPath, tau: float, n_steps: int) -> np.ndarray:
    """Average of dW^eta/dt over each step [k tau, (k+1) tau], shape (n_steps, n, K).

    Requires tau and eta to be integer multiples of one another.  When tau
    divides eta this is the interpolant's slope at the left endpoint.
    """
    eta = path.eta
    if tau <= eta:
        r = int(round(eta / tau))
        if abs(r * tau - eta) > 1e-9 * eta:
            raise DomainError(f"tau={tau} does not divide eta={eta}")
        idx = np.arange(n_steps) // r
        if n_steps and idx[-1] >= path.M:
            raise DomainError("path too short for requested steps")
        return path.increments[idx] / eta
    r = int(round(tau / eta))
    if abs(r * eta - tau) > 1e-9 * tau:
        raise DomainError(f"eta={eta} does not divide tau={tau}")
    if n_steps * r > path.M:
        raise DomainError("path too short for requested steps")
    inc = path.increments[: n_steps * r].reshape((n_steps, r) + path.increments.shape[1:])
    return inc.sum(axis=1) / tau


def _phi(x):
    return x / (1.0 + x)


def _dphi(x):
    return 1.0 / (1.0 + x) ** 2


def sigma_nodal(model: NoiseModel, values: np.ndarray, basis: BasisSet) -> np.ndarray:
    """Nodal fields sigma_ij(u) e_k, shape (n, n, K, Q)."""
    n, Q = values.shape
    model.check_basis(basis)
    if model.is_zero:
        return np.zeros((n, n, model.K, Q))
    c = model.amplitudes(n)
    modes = basis.values[model.modes]
    if model.kind == "additive":
        out = c[:, :, None, None] * modes[None, None]
    else:
        amp = _phi(np.abs(values))
        out = c[:, :, None, None] * amp[:, None, None, :] * modes[None, None]
    if not np.all(np.isfinite(out)):
        raise ModelError("noise model produced non-finite values")
    return out


def sigma_derivative_nodal(model: NoiseModel, values: np.ndarray, basis: BasisSet) -> np.ndarray:
    """d sigma_ij / d u_l as nodal fields, shape (n, n, n, K, Q) indexed [i, j, l, k, q]."""
    n, Q = values.shape
    out = np.zeros((n, n, n, model.K, Q))
    if model.is_zero or model.kind == "additive":
        return out
    c = model.amplitudes(n)
    modes = basis.values[model.modes]
    d = _dphi(np.abs(values)) * np.sign(values)
    idx = np.arange(n)
    out[idx, :, idx] = c[:, :, None, None] * d[:, None, None, :] * modes[None, None]
    return out


def sigma_apply(model: NoiseModel, u: SpeciesField, basis: BasisSet) -> np.ndarray:
    return sigma_nodal(model, u.values, basis)


def correction_nodal(model: NoiseModel, values: np.ndarray, basis: BasisSet) -> np.ndarray:
    """-(1/2) sum_{j,l,k} (d sigma_ij/d u_l) sigma_lj at the nodes, before projection."""
    n, Q = values.shape
    if model.is_zero or model.kind == "additive":
        return np.zeros((n, Q))
    if model.kind == "bounded_multiplicative":
        # sigma_ij depends on u_i alone, so only l = i survives.
        c = model.amplitudes(n)
        au = np.abs(values)
        modesq = (basis.values[model.modes] ** 2).sum(axis=0)
        return -0.5 * (c**2).sum(axis=1)[:, None] * _dphi(au) * np.sign(values) * _phi(au) * modesq
    sig = sigma_nodal(model, values, basis)
    dsig = sigma_derivative_nodal(model, values, basis)
    return -0.5 * np.einsum("ijlkq,ljkq->iq", dsig, sig)


def ito_correction(model: NoiseModel, u: SpeciesField, basis: BasisSet, params: ModelParams | None = None) -> np.ndarray:
    """Projected correction drift at the nodes, shape (n, Q)."""
    raw = correction_nodal(model, u.values, basis)
    return synthesize(project(raw, basis), basis)


def drift_nodal(model: NoiseModel, values: np.ndarray, rates: np.ndarray, basis: BasisSet) -> np.ndarray:
    """Unprojected Wong-Zakai forcing sum_jk sigma_ij e_k rate_jk plus correction.

    Testing against Galerkin functions makes the projection implicit.
    """
    n, Q = values.shape
    if model.is_zero:
        return np.zeros((n, Q))
    sig = sigma_nodal(model, values, basis)
    return np.einsum("ijkq,jk->iq", sig, rates) + correction_nodal(model, values, basis)


def wong_zakai_drift(
    model: NoiseModel,
    u: SpeciesField,
    path: BrownianPath,
    t: float,
    basis: BasisSet,
    params: ModelParams | None = None,
    dt: float | None = None,
) -> np.ndarray:
    """Projected forcing f(u) at time t, shape (n, Q).

    With ``dt`` the path derivative is averaged over [t, t + dt] instead of
    taken at t.
    """
    if dt is None:
        rates = path_rate(path, t)
    else:
        W0 = np.array([[wong_zakai_value(path, j, k, t) for k in range(path.increments.shape[2])]
                       for j in range(path.increments.shape[1])])
        W1 = np.array([[wong_zakai_value(path, j, k, t + dt) for k in range(path.increments.shape[2])]
                       for j in range(path.increments.shape[1])])
        rates = (W1 - W0) / dt
    raw = drift_nodal(model, u.values, rates, basis)
    return synthesize(project(raw, basis), basis)

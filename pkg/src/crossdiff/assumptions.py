"""Standing assumptions: detailed balance, dominance, and quadratic-form certificates.

The certificates are sampled checks of the four coercivity bounds

    sum_ij pi_i W_i(u) K_ij(u) z_i z_j >= alpha1 sum_i w1_i z_i**2 + alpha2 sum_i w2_i z_i**2

with (W, K, w1, w2) per kind:

    L1: (1,         A,   1,          u**s)
    L2: (1/u,       A,   1/u,        u**(s-1))
    L3: (u**(s-2),  A,   u**(s-2),   u**(2s-2))
    L4: (1,         A^H, 1,          v**2)
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CertificateError, DomainError, FalsificationError, ModelError
from .galerkin import GridSpec, build_basis
from .model import ModelParams, diffusion_matrix, transformed_matrix
from .noise import NoiseModel, sigma_derivative_nodal, sigma_nodal

__all__ = [
    "LEMMA_KINDS",
    "BalanceSolution",
    "DominanceReport",
    "LemmaCertificate",
    "NoiseComplianceReport",
    "solve_detailed_balance",
    "check_dominance",
    "dominance_constant",
    "lemma_beta",
    "quadratic_form_lhs",
    "quadratic_form_rhs",
    "certify_lemma",
    "check_noise_assumptions",
]

LEMMA_KINDS = ("L1", "L2", "L3", "L4")
SLACK_TOL = 1e-9


@dataclass(frozen=True)
class BalanceSolution:
    """Result of the detailed-balance solve.

    When infeasible, ``pi`` is None and ``cycle`` lists the species indices
    (0-based) of a closed cycle whose forward and backward rate products differ.
    """

    pi: np.ndarray | None
    cycle: tuple = ()
    mismatch: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.pi is not None

    def describe(self) -> str:
        if self.feasible:
            return "pi = " + ", ".join(f"{p:.12g}" for p in self.pi)
        names = " -> ".join(str(i + 1) for i in self.cycle + self.cycle[:1])
        return f"detailed balance infeasible on cycle {names} (relative mismatch {self.mismatch:.3g})"

    def require(self) -> np.ndarray:
        if not self.feasible:
            raise ModelError(self.describe())
        return self.pi


def _tree_path(parent, i):
    out = [i]
    while parent[out[-1]] is not None:
        out.append(parent[out[-1]])
    return out


def _cycle_through(parent, i, j):
    """Simple cycle formed by the tree paths to i and j plus the edge (i, j)."""
    pi_, pj = _tree_path(parent, i), _tree_path(parent, j)
    common = set(pi_) & set(pj)
    up_i = [k for k in pi_ if k not in common]
    up_j = [k for k in pj if k not in common]
    lca = next(k for k in pi_ if k in common)
    return tuple(up_i + [lca] + up_j[::-1])


def solve_detailed_balance(a, tol: float = 1e-12) -> BalanceSolution:
    """Weights pi > 0 with pi_i a_ij = pi_j a_ji, normalised so pi_1 = 1.

    Weights are propagated along a breadth-first spanning tree of the graph
    of positive pairs and the remaining edges are then verified; the first
    inconsistent edge yields the witness cycle.  Species in separate components
    each get a root weight of 1.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = a.shape[0]
    if a.shape != (n, n):
        raise DomainError("a must be square")
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise DomainError("a must be finite and nonnegative")
    for i in range(n):
        for j in range(i + 1, n):
            if (a[i, j] > 0) != (a[j, i] > 0):
                return BalanceSolution(None, (i, j), 1.0)
    pi = np.zeros(n)
    parent: list = [None] * n
    seen = [False] * n
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        pi[root] = 1.0
        queue = deque([root])
        while queue:
            i = queue.popleft()
            for j in range(n):
                if j != i and a[i, j] > 0 and not seen[j]:
                    seen[j] = True
                    parent[j] = i
                    pi[j] = pi[i] * a[i, j] / a[j, i]
                    queue.append(j)
    worst, witness = 0.0, None
    for i in range(n):
        for j in range(i + 1, n):
            if a[i, j] > 0:
                lhs, rhs = pi[i] * a[i, j], pi[j] * a[j, i]
                rel = abs(lhs - rhs) / max(lhs, rhs)
                if rel > tol and rel > worst:
                    worst, witness = rel, (i, j)
    if witness is not None:
        return BalanceSolution(None, _cycle_through(parent, *witness), worst)
    return BalanceSolution(pi)


@dataclass(frozen=True)
class DominanceReport:
    strong_margins: np.ndarray
    weak_margins: np.ndarray
    strong_ok: bool
    weak_ok: bool


def check_dominance(params: ModelParams) -> DominanceReport:
    strong = params.strong_margins()
    weak = params.weak_margins()
    return DominanceReport(strong, weak, bool(np.all(strong > 0)), bool(np.all(weak > 0)))


def dominance_constant(kind: str, s: float) -> float:
    if kind in ("L1", "L2"):
        return s**2 / 4.0
    if kind in ("L3", "L4"):
        return s - 1.0
    raise DomainError(f"unknown lemma kind {kind!r}; expected one of {LEMMA_KINDS}")


def lemma_beta(kind: str, params: ModelParams) -> np.ndarray:
    c = dominance_constant(kind, params.s)
    return params.pi * ((params.s + 1) * np.diag(params.a) - c * params.cross_sums())


def _check_state(kind: str, u: np.ndarray):
    if kind in ("L1", "L4"):
        if np.any(u < 0):
            raise DomainError(f"{kind} needs u >= 0")
    elif np.any(~(u > 0)):
        raise DomainError(f"{kind} needs u > 0")


def _weights(kind: str, u: np.ndarray, s: float):
    """(lhs row weight, first rhs weight, second rhs weight)."""
    one = np.ones_like(u)
    if kind == "L1":
        return one, one, u**s
    if kind == "L2":
        return 1.0 / u, 1.0 / u, u ** (s - 1)
    if kind == "L3":
        return u ** (s - 2), u ** (s - 2), u ** (2 * s - 2)
    if kind == "L4":
        return one, one, u**2
    raise DomainError(f"unknown lemma kind {kind!r}; expected one of {LEMMA_KINDS}")


def quadratic_form_lhs(kind: str, u, z, params: ModelParams):
    """sum_ij pi_i W_i(u) K_ij(u) z_i z_j; u, z of shape (n,) or (n, samples)."""
    u = np.asarray(u, dtype=float)
    z = np.asarray(z, dtype=float)
    _check_state(kind, u)
    K = transformed_matrix(u, params) if kind == "L4" else diffusion_matrix(u, params)
    W = _weights(kind, u, params.s)[0]
    pi = params.pi.reshape((-1,) + (1,) * (u.ndim - 1))
    row = pi * W * z
    return np.einsum("i...,ij...,j...->...", row, K, z)


def quadratic_form_rhs(kind: str, u, z, params: ModelParams):
    """alpha1 sum_i w1_i z_i**2 + alpha2 sum_i w2_i z_i**2 with the proof constants."""
    u = np.asarray(u, dtype=float)
    z = np.asarray(z, dtype=float)
    _check_state(kind, u)
    beta = lemma_beta(kind, params)
    bad = np.flatnonzero(beta <= 0)
    if bad.size:
        raise CertificateError(
            f"{kind}: dominance margin beta_{bad[0] + 1} = {beta[bad[0]]:.6g} is not positive", int(bad[0])
        )
    alpha1 = float(np.min(params.pi * params.a0))
    alpha2 = float(np.min(beta))
    _, w1, w2 = _weights(kind, u, params.s)
    return alpha1 * (w1 * z**2).sum(axis=0) + alpha2 * (w2 * z**2).sum(axis=0)


@dataclass(frozen=True)
class LemmaCertificate:
    kind: str
    alpha1: float
    alpha2: float
    beta: tuple
    samples_tested: int
    worst_slack: float
    worst_relative_slack: float = 0.0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _sample_states(rng, kind, n, m, lo=1e-6, hi=1e3):
    u = np.exp(rng.uniform(np.log(lo), np.log(hi), size=(n, m)))
    if kind in ("L1", "L4"):
        u[rng.random((n, m)) < 0.1] = 0.0
    return u


def certify_lemma(kind: str, params: ModelParams, n_samples: int = 100_000, seed: int = 0, chunk: int = 20_000) -> LemmaCertificate:
    """Sampled certificate of one coercivity lemma.

    States are log-uniform on [1e-6, 1e3]**n (with zeros mixed in for L1 and
    L4) and directions standard normal.  Any sample with
    lhs - rhs < -1e-9 |lhs| raises FalsificationError with the witness.
    """
    if kind not in LEMMA_KINDS:
        raise DomainError(f"unknown lemma kind {kind!r}; expected one of {LEMMA_KINDS}")
    if n_samples < 1:
        raise DomainError("n_samples must be positive")
    beta = lemma_beta(kind, params)
    bad = np.flatnonzero(beta <= 0)
    if bad.size:
        raise CertificateError(
            f"{kind}: dominance margin beta_{bad[0] + 1} = {beta[bad[0]]:.6g} is not positive", int(bad[0])
        )
    rng = np.random.default_rng(seed)
    worst = np.inf
    worst_rel = np.inf
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        u = _sample_states(rng, kind, params.n, m)
        z = rng.standard_normal((params.n, m))
        lhs = quadratic_form_lhs(kind, u, z, params)
        rhs = quadratic_form_rhs(kind, u, z, params)
        slack = lhs - rhs
        rel = slack / np.maximum(np.abs(lhs), np.finfo(float).tiny)
        k = int(np.argmin(rel))
        if rel[k] < -SLACK_TOL:
            raise FalsificationError(
                f"{kind} violated: lhs={lhs[k]:.17g}, rhs={rhs[k]:.17g}",
                {"u": u[:, k].tolist(), "z": z[:, k].tolist(), "lhs": float(lhs[k]), "rhs": float(rhs[k])},
            )
        worst = min(worst, float(slack.min()))
        worst_rel = min(worst_rel, float(rel[k]))
        done += m
    return LemmaCertificate(
        kind,
        float(np.min(params.pi * params.a0)),
        float(np.min(beta)),
        tuple(float(b) for b in beta),
        n_samples,
        worst,
        worst_rel,
        seed,
    )


@dataclass(frozen=True)
class NoiseComplianceReport:
    """Empirical constants for the noise assumptions.

    ``growth_estimate`` covers both the plain and the u**((s-2)/s)-weighted
    growth bounds; ``derivative_estimate`` is the largest derivative norm.
    """

    lipschitz_estimate: float
    growth_estimate: float
    derivative_estimate: float
    entropy_coupling_estimate: float
    sample_count: int
    caps: dict = field(default_factory=dict)
    passed: dict = field(default_factory=dict)

    @property
    def pass_all(self) -> bool:
        return all(self.passed.values())


def _hs_norms(fields, w):
    """Hilbert-Schmidt norms over (mode, node) of fields with shape (..., K, Q)."""
    return np.sqrt(((fields**2) @ w).sum(axis=-1))


def check_noise_assumptions(
    model: NoiseModel,
    params: ModelParams,
    n_samples: int = 1000,
    seed: int = 0,
    caps: dict | None = None,
    grid: GridSpec | None = None,
) -> NoiseComplianceReport:
    """Sampled constants for the Lipschitz, growth, derivative and entropy-coupling bounds.

    Field-level bounds use random positive fields exp(smooth Gaussian series);
    the entropy coupling is a pointwise statement and is scanned over
    log-uniform states in [1e-6, 1e3]**n at every quadrature node.
    """
    default_cap = 10.0
    caps = {k: default_cap for k in ("lipschitz", "growth", "derivative", "entropy_coupling")} | (caps or {})
    n, s = params.n, params.s
    grid = grid or GridSpec(1.0, max(16, model.first_mode + model.K), 64)
    basis = build_basis(grid)
    model.check_basis(basis)
    w = basis.quad_weights
    rng = np.random.default_rng(seed)
    lip = growth = deriv = coupling = 0.0

    for _ in range(n_samples):
        scale = rng.uniform(-3.0, 3.0)
        coef = rng.standard_normal((n, 4)) / np.arange(1, 5)
        u = np.exp(scale + coef @ basis.values[:4])
        v = u * np.exp(0.1 * rng.standard_normal((n, 1)) * basis.values[1])
        su = sigma_nodal(model, u, basis)
        sv = sigma_nodal(model, v, basis)
        unorm2 = float(((u**2) @ w).sum())
        du = float(np.sqrt(((u - v) ** 2 @ w).sum()))
        if du > 0:
            lip = max(lip, float(_hs_norms(su - sv, w).max()) / du)
        weighted = su * (u ** ((s - 2.0) / s))[:, None, None, :]
        g = _hs_norms(su, w) ** 2 + _hs_norms(weighted, w) ** 2
        growth = max(growth, float(g.max()) / (1.0 + unorm2))
        ds = sigma_derivative_nodal(model, u, basis)
        if ds.any():
            deriv = max(deriv, float(_hs_norms(ds, w).max()))

    # Pointwise entropy coupling: constant-in-space states, worst node.  The
    # mode sum is taken in l2 for the first term, as in the correction term.
    pts = np.exp(rng.uniform(np.log(1e-6), np.log(1e3), size=(n, max(n_samples, 1))))
    ones = np.ones(basis.Q)
    for u in pts.T:
        field_ = u[:, None] * ones
        sig = sigma_nodal(model, field_, basis)
        dsig = sigma_derivative_nodal(model, field_, basis)
        hprime = params.pi * (u ** (s - 1) + np.log(u))
        hs = float((params.pi * (u**s / s + u * (np.log(u) - 1.0) + 1.0)).sum())
        first = np.sqrt((np.einsum("ijkq,i->jkq", sig, hprime) ** 2).sum(axis=1)).max(axis=0)
        corr = np.einsum("ijlkq,ljkq,i->q", dsig, sig, hprime)
        coupling = max(coupling, float((first + 0.5 * np.abs(corr)).max()) / hs)

    est = {
        "lipschitz": lip,
        "growth": growth,
        "derivative": deriv,
        "entropy_coupling": coupling,
    }
    for k, val in est.items():
        if not np.isfinite(val):
            raise ModelError(f"noise assumption estimate {k} is not finite")
    passed = {k: bool(est[k] <= caps[k]) for k in est}
    return NoiseComplianceReport(lip, growth, deriv, coupling, n_samples, dict(caps), passed)

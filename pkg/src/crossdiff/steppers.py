"""Time integrators for the Galerkin system.

Three schemes share the Galerkin space and the noise machinery:

* ``entropy``: implicit Euler in the entropy variable w = h_s'(u).  The
  unknowns are the Galerkin coefficients of w and u = (h_s')^{-1}(w) is
  positive by construction.
* ``euler_maruyama``: semi-implicit Euler-Maruyama on the coefficient SDE with
  the absolute-value matrix M(u).
* ``transformed``: the same semi-implicit update applied to v = u**(s/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np

from .errors import ConvergenceError, DomainError, StepError
from .galerkin import BasisSet, SpeciesField, build_basis, project, synthesize, synthesize_derivative
from .model import (
    ModelParams,
    abs_diffusion_matrix,
    diffusion_matrix,
    diffusion_matrix_jacobian,
    entropy_gradient,
    entropy_log_inverse,
    inverse_hessian_diag,
    inverse_hessian_diag_derivative,
    transformed_matrix,
)
from .monitors import MonitorRow, compute_monitors
from .noise import BrownianPath, NoiseModel, drift_nodal, sample_path, sigma_nodal, step_rates

if TYPE_CHECKING:
    from .config import RunConfig

__all__ = [
    "SCHEMES",
    "StepConfig",
    "EntropyField",
    "TrajectoryRecord",
    "entropy_implicit_step",
    "euler_maruyama_step",
    "transformed_step",
    "interval_rates",
    "run_path",
    "path_for",
]

SCHEMES = ("entropy", "euler_maruyama", "transformed")
INITIAL_FLOOR = 1e-12
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class StepConfig:
    tau: float = 1e-3
    epsilon: float = 1e-11
    newton_tol: float = 1e-11
    newton_max_iter: int = 30
    continuation_steps: int = 8

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError("tau must be positive")
        if not self.newton_tol > 0:
            raise DomainError("newton_tol must be positive")
        if self.epsilon < 0:
            raise DomainError("epsilon must be nonnegative")
        if self.newton_max_iter < 1 or self.continuation_steps < 1:
            raise DomainError("newton_max_iter and continuation_steps must be positive")


@dataclass(eq=False)
class EntropyField:
    """Entropy variable w at the quadrature nodes, shape (n, Q).

    ``coeffs`` holds the Galerkin coefficients when w lies in the Galerkin
    space (every state produced by the implicit step); the initial w0 = h'(u0)
    generally does not.
    """

    w: np.ndarray
    coeffs: np.ndarray | None = None
    newton_iters: int = 0
    log_u: np.ndarray | None = None

    @classmethod
    def from_coeffs(cls, coeffs, basis: BasisSet, **kw) -> "EntropyField":
        coeffs = np.asarray(coeffs, dtype=float)
        return cls(synthesize(coeffs, basis), coeffs, **kw)

    def primal(self, params: ModelParams) -> np.ndarray:
        ell = self.log_u if self.log_u is not None else entropy_log_inverse(self.w, params)
        return np.maximum(np.exp(ell), _TINY)

    def species_field(self, basis: BasisSet, params: ModelParams) -> SpeciesField:
        """Primal state with chain-rule gradient u' = w' / h''(u)."""
        u = self.primal(params)
        if self.coeffs is not None:
            wx = synthesize_derivative(self.coeffs, basis)
        else:
            wx = synthesize_derivative(project(self.w, basis), basis)
        return SpeciesField(u, project(u, basis), wx * inverse_hessian_diag(u, params))


@dataclass(eq=False)
class TrajectoryRecord:
    times: np.ndarray
    states: list
    monitors: list
    scheme: str
    newton_iters: np.ndarray
    truncated: bool = False
    error: str = ""
    seed: int = 0

    @property
    def final(self):
        return self.states[-1]


# ---------------------------------------------------------------------------
# entropy scheme


class _EntropySystem:
    """Residual and Jacobian of the implicit step in the coefficients W of w.

    With load parameter theta the residual (scaled by tau) tested against e_m is
        int (u(w) - u_prev) e_m + tau * [theta (int flux e_m' - int f e_m) + eps int w e_m],
    where flux_i = sum_j B_ij(w) w_j' = sum_j A_ij(u) u_j'.
    """

    def __init__(self, u_prev, drift_eval, t_k, cfg: StepConfig, basis: BasisSet, params: ModelParams):
        self.u_prev = u_prev
        self.drift_eval = drift_eval
        self.t_k = t_k
        self.cfg = cfg
        self.basis = basis
        self.params = params
        self.V = basis.values
        self.D = basis.derivs
        self.Vw = basis.weighted_values
        self.Dw = basis.weighted_derivs
        self.ell = None

    def state(self, W):
        w = W @ self.V
        ell = entropy_log_inverse(w, self.params, tol=1e-14, guess=self.ell)
        return w, ell, np.maximum(np.exp(ell), _TINY)

    def _drift(self, u):
        if self.drift_eval is None:
            return np.zeros_like(u)
        return self.drift_eval(u, self.t_k)

    def residual(self, W, theta, want_jac=True):
        cfg, params = self.cfg, self.params
        tau, eps = cfg.tau, cfg.epsilon
        w, ell, u = self.state(W)
        wx = W @ self.D
        r = inverse_hessian_diag(u, params)
        A = diffusion_matrix(u, params)
        B = A * r[None, :]
        flux = np.einsum("ijq,jq->iq", B, wx)
        f = self._drift(u)
        R = (u - self.u_prev + tau * (eps * w - theta * f)) @ self.Vw.T + tau * theta * flux @ self.Dw.T
        if not want_jac:
            return R, None, ell
        n = params.n
        ux = r * wx
        dA = diffusion_matrix_jacobian(u, params)
        rp = inverse_hessian_diag_derivative(u, params)
        dflux = np.einsum("ijlq,jq->ilq", dA, ux) + A * (rp * wx)[None, :, :]
        dfdu = self._drift_jacobian(u, f)
        eye = np.eye(n)[:, :, None]
        Cvv = eye * (r + tau * eps)[None, :, :] - tau * theta * dfdu * r[None, :, :]
        Cdv = tau * theta * dflux * r[None, :, :]
        Cdd = tau * theta * B
        J = (
            np.einsum("ilq,mq,pq->imlp", Cvv, self.Vw, self.V, optimize=True)
            + np.einsum("ilq,mq,pq->imlp", Cdv, self.Dw, self.V, optimize=True)
            + np.einsum("ilq,mq,pq->imlp", Cdd, self.Dw, self.D, optimize=True)
        )
        N = self.basis.N
        return R, J.reshape(n * N, n * N), ell

    def _drift_jacobian(self, u, f):
        n, Q = u.shape
        out = np.zeros((n, n, Q))
        if self.drift_eval is None or getattr(self.drift_eval, "state_independent", False):
            return out
        for l in range(n):
            h = 1e-7 * np.maximum(1.0, np.abs(u[l]))
            up = u.copy()
            um = u.copy()
            up[l] += h
            um[l] = np.maximum(u[l] - h, 0.5 * u[l])
            out[:, l] = (self._drift(up) - self._drift(um)) / (up[l] - um[l])
        return out


def _newton(system: _EntropySystem, W0, theta, cfg: StepConfig):
    """Damped Newton; returns (W, iterations, residual, converged)."""
    W = W0.copy()
    shape = W.shape
    try:
        R, J, ell = system.residual(W, theta)
    except (ConvergenceError, DomainError, FloatingPointError):
        return W, 0, np.inf, False
    system.ell = ell
    res = float(np.abs(R).max())
    for it in range(1, cfg.newton_max_iter + 1):
        if res <= cfg.newton_tol:
            return W, it - 1, res, True
        try:
            dW = np.linalg.solve(J, -R.reshape(-1)).reshape(shape)
        except np.linalg.LinAlgError:
            return W, it, res, False
        lam = 1.0
        accepted = False
        while lam >= 1.0 / 256:
            trial = W + lam * dW
            try:
                Rt, Jt, ell_t = system.residual(trial, theta)
                rt = float(np.abs(Rt).max())
            except (ConvergenceError, DomainError, FloatingPointError):
                rt = np.inf
            if np.isfinite(rt) and rt <= (1.0 - 1e-4 * lam) * res:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            return W, it, res, False
        W, R, J, res = trial, Rt, Jt, rt
        system.ell = ell_t
    return W, cfg.newton_max_iter, res, res <= cfg.newton_tol


def entropy_implicit_step(
    w_prev: EntropyField,
    drift_eval: Callable | None,
    t_k: float,
    cfg: StepConfig,
    basis: BasisSet,
    params: ModelParams,
) -> EntropyField:
    """One implicit Euler step of the regularised entropy formulation.

    ``drift_eval(u, t)`` returns the nodal forcing for a nodal positive state;
    None means no forcing.  The Jacobian is analytic except for the forcing's
    state dependence, which is differenced pointwise.
    """
    if not np.all(np.isfinite(w_prev.w)):
        raise StepError("previous entropy state is not finite", np.inf)
    u_prev = w_prev.primal(params)
    system = _EntropySystem(u_prev, drift_eval, t_k, cfg, basis, params)
    W0 = w_prev.coeffs if w_prev.coeffs is not None else project(w_prev.w, basis)
    system.ell = w_prev.log_u
    W, iters, res, ok = _newton(system, W0, 1.0, cfg)
    total = iters
    if not ok:
        # Homotopy in the load parameter from the trivial problem theta = 0.
        W = W0
        system.ell = w_prev.log_u
        for theta in np.linspace(0.0, 1.0, cfg.continuation_steps + 1):
            W, iters, res, ok = _newton(system, W, float(theta), cfg)
            total += iters
            if not ok:
                raise StepError(f"Newton failed at continuation theta={theta:.3g}", res)
    _, ell = system.state(W)[:2]
    out = EntropyField.from_coeffs(W, basis, newton_iters=total, log_u=ell)
    if not np.all(np.isfinite(out.w)):
        raise StepError("entropy step produced non-finite values", res)
    return out


# ---------------------------------------------------------------------------
# semi-implicit schemes


def _semi_implicit(c, explicit, kappa, dt, basis: BasisSet, params: ModelParams, forcing):
    """(c + dt (N + kappa lam c) + forcing) / (1 + dt (a0 + kappa) lam), per mode."""
    lam = basis.eigenvalues[None, :]
    k = kappa[:, None]
    return (c + dt * (explicit + k * lam * c) + forcing) / (1.0 + dt * (params.a0[:, None] + k) * lam)


def _stabiliser(K, params: ModelParams) -> np.ndarray:
    """Largest Gershgorin row sum of K - a0 I over the nodes, per species."""
    n = params.n
    Kn = K.copy()
    idx = np.arange(n)
    Kn[idx, idx] -= params.a0[:, None]
    return np.abs(Kn).sum(axis=1).max(axis=-1)


def euler_maruyama_step(
    u_prev: SpeciesField,
    dW: np.ndarray,
    dt: float,
    basis: BasisSet,
    params: ModelParams,
    model: NoiseModel,
) -> SpeciesField:
    """Semi-implicit Euler-Maruyama step for the coefficient SDE.

    The a0 Laplacian is implicit.  The remaining divergence, built on M(u), is
    explicit and stabilised by an implicit/explicit pair kappa * Laplacian whose
    kappa bounds the nonlinear diffusion; kappa vanishes when only a0 acts.
    ``dW`` has shape (n, K): Brownian increments over the step.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    c = u_prev.coeffs
    vals = synthesize(c, basis)
    grad = synthesize_derivative(c, basis)
    M = abs_diffusion_matrix(vals, params)
    kappa = _stabiliser(M, params)
    Mn = M.copy()
    idx = np.arange(params.n)
    Mn[idx, idx] -= params.a0[:, None]
    explicit = -np.einsum("ijq,jq->iq", Mn, grad) @ basis.weighted_derivs.T
    forcing = np.zeros_like(c)
    if not model.is_zero:
        sig = sigma_nodal(model, vals, basis)
        forcing = project(np.einsum("ijkq,jk->iq", sig, np.asarray(dW)), basis)
    new = _semi_implicit(c, explicit, kappa, dt, basis, params, forcing)
    if not np.all(np.isfinite(new)):
        raise StepError("Euler-Maruyama blow-up: non-finite coefficients", np.inf)
    return SpeciesField.from_coeffs(new, basis)


def interval_rates(path: BrownianPath, t0: float, dt: float) -> np.ndarray:
    """(W^eta(t0 + dt) - W^eta(t0)) / dt for the piecewise-linear interpolant."""
    W = path.cumulative

    def value(t):
        m = min(int(np.floor(t / path.eta + 1e-9)), path.M - 1)
        return W[m] + (t - m * path.eta) / path.eta * path.increments[m]

    return (value(t0 + dt) - value(t0)) / dt


def transformed_step(
    v_prev: SpeciesField,
    path: BrownianPath | None,
    t_k: float,
    cfg: StepConfig,
    basis: BasisSet,
    params: ModelParams,
    model: NoiseModel,
    rates: np.ndarray | None = None,
) -> SpeciesField:
    """Semi-implicit step for v = u**(s/2) driven by the Wong-Zakai forcing.

    dv/dt = div(A^H(v) v') - (1 - 2/s)(v'/v) . A^H(v) v' + H(v)^{-1} f(u),
    with u = v**(2/s) and H(v)^{-1} = (s/2) v**(1 - 2/s).  ``rates`` overrides
    the path slope averaged over [t_k, t_k + tau].
    """
    s, tau = params.s, cfg.tau
    c = v_prev.coeffs
    v = synthesize(c, basis)
    if np.any(~(v > 0)):
        raise StepError("transformed step needs v > 0 at every node", float(np.min(v)))
    vx = synthesize_derivative(c, basis)
    AH = transformed_matrix(v, params)
    kappa = _stabiliser(AH, params)
    flux = np.einsum("ijq,jq->iq", AH, vx)
    lin = flux - params.a0[:, None] * vx
    explicit = -lin @ basis.weighted_derivs.T
    explicit -= ((1.0 - 2.0 / s) * (vx / v) * flux) @ basis.weighted_values.T
    forcing = np.zeros_like(c)
    if not model.is_zero:
        if rates is None:
            if path is None:
                raise DomainError("transformed_step needs a path or explicit rates")
            rates = interval_rates(path, t_k, tau)
        u = v ** (2.0 / s)
        f = drift_nodal(model, u, rates, basis)
        forcing = tau * project(0.5 * s * v ** (1.0 - 2.0 / s) * f, basis)
    new = _semi_implicit(c, explicit, kappa, tau, basis, params, forcing)
    if not np.all(np.isfinite(new)):
        raise StepError("transformed step produced non-finite coefficients", np.inf)
    return SpeciesField.from_coeffs(new, basis)


# ---------------------------------------------------------------------------
# trajectories


def path_for(run_cfg: "RunConfig", seed: int) -> tuple[BrownianPath, BrownianPath] | tuple[None, None]:
    """(base path on mesh min(tau, eta), Wong-Zakai path on mesh eta)."""
    T, tau, eta = run_cfg.T, run_cfg.step.tau, run_cfg.eta
    if T <= 0:
        return None, None
    fine = min(tau, eta)
    M = int(round(T / fine))
    if abs(M * fine - T) > 1e-9 * T:
        raise DomainError(f"T={T} is not a multiple of the mesh {fine}")
    base = sample_path(T, M, run_cfg.params.n, run_cfg.noise.K, seed)
    factor = int(round(eta / fine))
    return base, base.coarsen(factor)


class _Drift:
    def __init__(self, model: NoiseModel, rates, basis: BasisSet):
        self.model = model
        self.rates = rates
        self.basis = basis
        self.state_independent = model.is_zero or model.kind == "additive"

    def __call__(self, u, t):
        return drift_nodal(self.model, u, self.rates, self.basis)


def _entropy_advance(field, rates, t, cfg, basis, params, model):
    drift = None if model.is_zero else _Drift(model, rates, basis)
    try:
        return entropy_implicit_step(field, drift, t, cfg, basis, params)
    except StepError:
        half = StepConfig(cfg.tau / 2, cfg.epsilon, cfg.newton_tol, cfg.newton_max_iter, cfg.continuation_steps)
        mid = entropy_implicit_step(field, drift, t, half, basis, params)
        out = entropy_implicit_step(mid, drift, t + half.tau, half, basis, params)
        out.newton_iters += mid.newton_iters
        return out


def run_path(run_cfg: "RunConfig", seed: int | None = None, paths=None, basis: BasisSet | None = None) -> TrajectoryRecord:
    """Integrate one path over [0, T] and record monitors at every step.

    ``paths`` may supply the (base, Wong-Zakai) pair to couple runs that
    differ in eta or tau; by default it is sampled from ``seed``.
    """
    seed = run_cfg.seed if seed is None else seed
    params, cfg, model = run_cfg.params, run_cfg.step, run_cfg.noise
    basis = build_basis(run_cfg.grid) if basis is None else basis
    model.check_basis(basis)
    tau = cfg.tau
    n_steps = int(round(run_cfg.T / tau))
    if run_cfg.T > 0 and abs(n_steps * tau - run_cfg.T) > 1e-9 * run_cfg.T:
        raise DomainError(f"T={run_cfg.T} is not a multiple of tau={tau}")
    if paths is None:
        base, wz = path_for(run_cfg, seed) if not model.is_zero else (None, None)
    else:
        base, wz = paths
    zero_rates = np.zeros((params.n, model.K))
    if n_steps and not model.is_zero:
        rates = step_rates(wz, tau, n_steps)
        increments = step_rates(base, tau, n_steps) * tau
    else:
        rates = np.broadcast_to(zero_rates, (n_steps,) + zero_rates.shape)
        increments = rates

    c0 = project(run_cfg.initial.evaluate(basis.quad_nodes, params.n, basis.length), basis)
    scheme = run_cfg.scheme
    times = [0.0]
    iters = [0]
    states = []
    rows = []
    truncated = False
    error = ""

    if scheme == "entropy":
        u0 = np.maximum(synthesize(c0, basis), INITIAL_FLOOR)
        field_ = EntropyField(entropy_gradient(u0, params), None, 0, np.log(u0))
        current = SpeciesField(u0, c0, synthesize_derivative(c0, basis))
    elif scheme == "euler_maruyama":
        current = SpeciesField.from_coeffs(c0, basis)
    elif scheme == "transformed":
        u0 = np.maximum(synthesize(c0, basis), 0.0)
        vstate = SpeciesField.from_coeffs(project(u0 ** (params.s / 2), basis), basis)
        current = _primal_from_v(vstate, basis, params)
    else:
        raise DomainError(f"unknown scheme {scheme!r}")
    states.append(current)
    rows.append(compute_monitors(current, basis, params, t=0.0))

    for k in range(n_steps):
        t = k * tau
        try:
            if scheme == "entropy":
                field_ = _entropy_advance(field_, rates[k], t, cfg, basis, params, model)
                current = field_.species_field(basis, params)
                iters.append(field_.newton_iters)
            elif scheme == "euler_maruyama":
                current = euler_maruyama_step(current, increments[k], tau, basis, params, model)
                iters.append(0)
            else:
                vstate = transformed_step(vstate, wz, t, cfg, basis, params, model, rates=rates[k])
                current = _primal_from_v(vstate, basis, params)
                iters.append(0)
        except (StepError, ConvergenceError, DomainError) as exc:
            truncated = True
            error = f"step {k + 1} (t={t + tau:.6g}): {exc}"
            break
        if not current.is_finite():
            truncated = True
            error = f"step {k + 1}: non-finite state"
            break
        times.append((k + 1) * tau)
        states.append(current)
        rows.append(compute_monitors(current, basis, params, t=(k + 1) * tau))
    return TrajectoryRecord(
        np.array(times), states, rows, scheme, np.array(iters, dtype=int), truncated, error, seed
    )


def _primal_from_v(vstate: SpeciesField, basis: BasisSet, params: ModelParams) -> SpeciesField:
    """u = v**(2/s) with gradient (2/s) v**(2/s - 1) v'."""
    s = params.s
    v = np.maximum(vstate.values, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = np.where(v > 0, (2.0 / s) * v ** (2.0 / s - 1.0) * vstate.grad, 0.0)
    u = v ** (2.0 / s)
    return SpeciesField(u, project(u, basis), grad)

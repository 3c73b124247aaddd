"""Monte Carlo moment estimates and coupled refinement studies.

Paths are independent and may run on worker threads; every reduction runs in
path-index order so results do not depend on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, EnsembleError
from .galerkin import GridSpec, build_basis
from .noise import sample_path
from .steppers import TrajectoryRecord, run_path

__all__ = [
    "MOMENT_NAMES",
    "EnsembleEstimate",
    "NUniformityTable",
    "RefinementTable",
    "estimate",
    "path_functionals",
    "run_paths",
    "ensemble_moments",
    "n_uniformity_study",
    "refinement_study",
    "final_distance",
]

MOMENT_NAMES = (
    "E sup_t |u|^2",
    "E int |grad u|^2",
    "E int |grad u^s|^2",
    "E int |u^s|^3",
    "E sup_t |v|^8",
)


@dataclass(frozen=True)
class EnsembleEstimate:
    name: str
    mean: float
    std_error: float
    paths: int
    truncated_paths: int


def estimate(name: str, samples, truncated: int = 0) -> EnsembleEstimate:
    """Mean and standard error of samples taken in the given order.

    Deviations are measured from the first sample, so an ensemble of identical
    values has a standard error of exactly zero.
    """
    x = np.asarray(samples, dtype=float)
    P = x.size
    if P == 0:
        raise EnsembleError(f"no samples for {name}")
    mean = math.fsum(x) / P
    if P < 2:
        return EnsembleEstimate(name, mean, 0.0, P, truncated)
    d = x - x[0]
    dm = math.fsum(d) / P
    var = max(math.fsum((d - dm) ** 2) / (P - 1), 0.0)
    return EnsembleEstimate(name, mean, math.sqrt(var / P), P, truncated)


def path_functionals(record: TrajectoryRecord) -> np.ndarray:
    """The five per-path quantities behind MOMENT_NAMES.

    Time integrals use right-endpoint sums over the steps; sup over t is the
    maximum over stored steps.
    """
    rows = record.monitors
    dt = np.diff(record.times)

    def integral(vals):
        return float(np.dot(dt, np.asarray(vals[1:]))) if dt.size else 0.0

    return np.array(
        [
            max(r.l2_norm_sq for r in rows),
            integral([r.grad_norm_sq for r in rows]),
            integral([r.grad_us_norm_sq for r in rows]),
            integral([r.us_l2_norm**3 for r in rows]),
            max(r.v_l2_sq**4 for r in rows),
        ]
    )


def run_paths(func, n_items: int, workers: int = 1) -> list:
    """[func(0), ..., func(n_items - 1)] evaluated on ``workers`` threads."""
    if workers <= 1:
        return [func(i) for i in range(n_items)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, range(n_items)))


def ensemble_moments(run_cfg, n_paths: int, base_seed: int | None = None, workers: int = 1, records: list | None = None):
    """Moment estimates over paths seeded base_seed + index.

    Truncated paths are excluded from the means and counted.  Pass ``records``
    to reuse trajectories that were already computed.
    """
    if n_paths < 2:
        raise DomainError("ensemble needs at least 2 paths")
    base_seed = run_cfg.seed if base_seed is None else base_seed
    if records is None:
        basis = build_basis(run_cfg.grid)
        records = run_paths(lambda p: run_path(run_cfg, base_seed + p, basis=basis), n_paths, workers)
    good = [r for r in records if not r.truncated]
    truncated = len(records) - len(good)
    if not good:
        raise EnsembleError(f"all {len(records)} paths truncated: {records[0].error}")
    table = np.array([path_functionals(r) for r in good])
    return [estimate(name, table[:, i], truncated) for i, name in enumerate(MOMENT_NAMES)]


@dataclass
class NUniformityTable:
    N_list: list
    estimates: dict
    ratios: dict = field(default_factory=dict)


def _grid_for(grid: GridSpec, N: int) -> GridSpec:
    Q = max(grid.Q, 4 * N)
    if Q >= 64:
        Q = 32 * math.ceil(Q / 32)
    return GridSpec(grid.domain_length, N, Q)


def n_uniformity_study(run_cfg, N_list, n_paths: int, base_seed: int | None = None, workers: int = 1) -> NUniformityTable:
    """Coupled ensembles across Galerkin sizes.

    The Brownian increments depend only on the seed, so every N sees the same
    noise.  Ratios are moment(max N) / moment(min N).
    """
    N_list = sorted(int(N) for N in N_list)
    est = {}
    for N in N_list:
        cfg = replace(run_cfg, grid=_grid_for(run_cfg.grid, N))
        est[N] = ensemble_moments(cfg, n_paths, base_seed, workers)
    lo, hi = est[N_list[0]], est[N_list[-1]]
    ratios = {}
    for a, b in zip(lo, hi):
        ratios[a.name] = b.mean / a.mean if a.mean != 0 else (1.0 if b.mean == 0 else math.inf)
    return NUniformityTable(N_list, est, ratios)


@dataclass
class RefinementTable:
    kind: str
    levels: np.ndarray
    distances: np.ndarray  # (paths, levels): final-state distance to the finest level
    consecutive: np.ndarray  # (paths, levels - 1): distance between neighbouring levels
    truncated_paths: int = 0

    @property
    def mean_distance(self) -> np.ndarray:
        return self.distances.mean(axis=0)

    @property
    def mean_consecutive(self) -> np.ndarray:
        return np.sqrt((self.consecutive**2).mean(axis=0))

    @property
    def orders(self) -> np.ndarray:
        """Empirical orders from successive neighbour differences."""
        c = self.mean_consecutive
        h = np.asarray(self.levels, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(c[:-1] / c[1:]) / np.log(h[:-2] / h[1:-1])

    @property
    def decreasing_fraction(self) -> float:
        """Share of paths whose distance to the finest level strictly decreases."""
        d = self.distances
        if not len(d):
            return 0.0
        return float(np.all(np.diff(d, axis=1) < 0, axis=1).mean())


def final_distance(a, b, basis) -> float:
    """L2 distance between two final states, summed over species."""
    diff = a.values - b.values
    return float(np.sqrt((diff**2 @ basis.quad_weights).sum()))


def _level_config(run_cfg, kind: str, level: float):
    if kind == "tau":
        return replace(run_cfg, step=replace(run_cfg.step, tau=level))
    if kind == "eta":
        return replace(run_cfg, eta=level)
    if kind == "epsilon":
        return replace(run_cfg, step=replace(run_cfg.step, epsilon=level))
    raise DomainError(f"refinement kind must be tau, eta or epsilon, got {kind!r}")


def _ratio(coarse: float, fine: float) -> int:
    r = int(round(coarse / fine))
    if r < 1 or abs(r * fine - coarse) > 1e-9 * coarse:
        raise DomainError(f"mesh {coarse} is not a multiple of {fine}")
    return r


def refinement_study(kind: str, run_cfg, levels, n_paths: int, base_seed: int | None = None, workers: int = 1) -> RefinementTable:
    """Final-state distances across a decreasing sequence of levels.

    All levels share one Brownian path sampled on the finest mesh; coarser
    meshes sum its increments.
    """
    levels = np.asarray(levels, dtype=float)
    if levels.size < 2 or np.any(np.diff(levels) >= 0):
        raise DomainError("levels must be a strictly decreasing sequence of length >= 2")
    base_seed = run_cfg.seed if base_seed is None else base_seed
    cfgs = [_level_config(run_cfg, kind, lv) for lv in levels]
    fine = min(min(c.step.tau, c.eta) for c in cfgs)
    basis = build_basis(run_cfg.grid)
    n, K = run_cfg.params.n, run_cfg.noise.K
    T = run_cfg.T

    def one(p):
        seed = base_seed + p
        master = None
        if not run_cfg.noise.is_zero and T > 0:
            master = sample_path(T, _ratio(T, fine), n, K, seed)
        recs = []
        for c in cfgs:
            paths = None
            if master is not None:
                base = master.coarsen(_ratio(min(c.step.tau, c.eta), fine))
                paths = (base, master.coarsen(_ratio(c.eta, fine)))
            recs.append(run_path(c, seed, paths=paths, basis=basis))
        return recs

    results = run_paths(one, n_paths, workers)
    good = [r for r in results if not any(x.truncated for x in r)]
    if not good:
        raise EnsembleError("all refinement paths truncated")
    L = len(levels)
    dist = np.array([[final_distance(r[l].final, r[-1].final, basis) for l in range(L)] for r in good])
    cons = np.array([[final_distance(r[l].final, r[l + 1].final, basis) for l in range(L - 1)] for r in good])
    return RefinementTable(kind, levels, dist, cons, len(results) - len(good))

"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Tolerances are the contract values; a failing criterion is reported, never
loosened.  Each test also checks its runtime budget.
"""

import argparse
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, make_params, random_positive_coeffs, run_config
from crossdiff.assumptions import LEMMA_KINDS, certify_lemma, check_dominance
from crossdiff.cli import run_command, write_monitor_csv
from crossdiff.config import InitialProfile
from crossdiff.ensemble import MOMENT_NAMES, n_uniformity_study, refinement_study, run_paths
from crossdiff.galerkin import GridSpec, SpeciesField, assemble_divergence_term, build_basis
from crossdiff.model import entropy_gradient, entropy_gradient_inverse, entropy_hessian
from crossdiff.noise import NoiseModel
from crossdiff.oracle import bisect_entropy_inverse, dense_weak_form
from crossdiff.steppers import run_path

MULT = NoiseModel("bounded_multiplicative", 0.1 * np.eye(2), 8)
ADDITIVE = NoiseModel("additive", 0.1 * np.eye(2), 8, first_mode=1)
COSINE = InitialProfile("cosine", base=(1.0,), amplitude=(0.5,))


def record(number, title, ok, detail, elapsed, budget):
    within = elapsed <= budget
    status = "PASS" if ok and within else "FAIL"
    line = f"criterion {number} {status}: {title}: {detail} ({elapsed:.2f} s of {budget:.0f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
    assert within, line


def test_criterion_1_lemma_certificates():
    t0 = time.perf_counter()
    params = make_params()
    worst = []
    for kind in LEMMA_KINDS:
        cert = certify_lemma(kind, params, 100_000, seed=0)
        worst.append(cert.worst_relative_slack)
    margins = check_dominance(params).strong_margins
    ok = min(worst) >= -1e-9 and np.all(margins > 0)
    detail = f"worst relative slack {min(worst):.3g}, strong margins {np.round(margins, 6).tolist()}"
    record(1, "lemma certificates", ok, detail, time.perf_counter() - t0, 30)


def test_criterion_2_positivity():
    t0 = time.perf_counter()
    cfg = run_config(T=0.1, tau=1e-3, eta=1e-2, noise=MULT)
    basis = build_basis(cfg.grid)
    recs = run_paths(lambda p: run_path(cfg, 100 + p, basis=basis), 50, workers=4)
    truncated = sum(r.truncated for r in recs)
    lo = min(m.min_nodal for r in recs for m in r.monitors)
    ok = truncated == 0 and lo > 1e-300 and all(len(r.monitors) == 101 for r in recs)
    detail = f"50 paths, {truncated} truncated, smallest nodal value {lo:.3g}"
    record(2, "positivity", ok, detail, time.perf_counter() - t0, 120)


@pytest.fixture(scope="module")
def zero_noise_run():
    t0 = time.perf_counter()
    rec = run_path(run_config(T=0.1, tau=1e-3, epsilon=0.0))
    return rec, time.perf_counter() - t0


def test_criterion_3_entropy_dissipation(zero_noise_run):
    rec, elapsed = zero_noise_run
    H = np.array([m.entropy for m in rec.monitors])
    steps = len(H) - 1
    worst = float(np.diff(H).max())
    ok = not rec.truncated and steps == 100 and worst <= 1e-9
    record(3, "entropy dissipation", ok, f"{steps} steps, largest increase {worst:.3g}", elapsed, 10)


def test_criterion_4_mass(zero_noise_run):
    rec, elapsed = zero_noise_run
    t0 = time.perf_counter()
    M = np.array([m.mass for m in rec.monitors])
    drift = float((np.abs(M - M[0]) / np.abs(M[0])).max())
    cfg = run_config(T=0.1, tau=1e-3, eta=1e-2, noise=ADDITIVE, epsilon=0.0)
    noisy = []
    for seed in (7, 8):
        r = run_path(cfg, seed)
        Mn = np.array([m.mass for m in r.monitors])
        noisy.append(float((np.abs(Mn - Mn[0]) / np.abs(Mn[0])).max()) if not r.truncated else np.inf)
    elapsed += time.perf_counter() - t0
    ok = drift <= 1e-8 and max(noisy) <= 1e-8
    detail = f"zero-noise drift {drift:.3g}, noisy drift {max(noisy):.3g} (mode 0 excluded)"
    record(4, "mass conservation", ok, detail, elapsed, 10)


def test_criterion_5_n_uniformity():
    t0 = time.perf_counter()
    cfg = run_config(T=0.1, tau=1e-3, eta=1e-2, noise=MULT)
    tab = n_uniformity_study(cfg, [8, 16, 32], 20, base_seed=1000, workers=4)
    gated = MOMENT_NAMES[:4]
    ratios = {k: tab.ratios[k] for k in gated}
    truncated = sum(e.truncated_paths for est in tab.estimates.values() for e in est[:1])
    ok = truncated == 0 and all(1 / 1.5 <= r <= 1.5 for r in ratios.values())
    detail = "ratios N=32/N=8 " + ", ".join(f"{k}: {r:.4f}" for k, r in ratios.items())
    record(5, "N-uniformity", ok, detail, time.perf_counter() - t0, 300)


def test_criterion_6_wong_zakai_refinement():
    t0 = time.perf_counter()
    cfg = run_config(T=0.1, tau=1.25e-3, eta=1e-2, noise=MULT)
    tab = refinement_study("eta", cfg, [1e-2, 5e-3, 2.5e-3], 50, base_seed=2000, workers=4)
    frac = tab.decreasing_fraction
    ok = tab.truncated_paths == 0 and frac >= 0.9
    detail = f"decreasing in {frac:.0%} of {tab.distances.shape[0]} paths, mean distances {np.round(tab.mean_distance, 6).tolist()}"
    record(6, "Wong-Zakai refinement", ok, detail, time.perf_counter() - t0, 180)


def test_criterion_7_oracle_equivalence():
    t0 = time.perf_counter()
    params = make_params()
    basis = build_basis(GridSpec(1.0, 16, 64))
    rng = np.random.default_rng(7)
    assembly = 0.0
    for _ in range(20):
        c = random_positive_coeffs(rng, 2, 16)
        u = SpeciesField.from_coeffs(c, basis)
        for i in range(2):
            ref = dense_weak_form(c, i, basis, params)
            got = assemble_divergence_term(u, i, basis, params)
            assembly = max(assembly, np.abs(got - ref).max() / np.abs(ref).max())
    w = rng.uniform(-20, 20, size=(2, 500))
    u = entropy_gradient_inverse(w, params)
    ref = np.array([[bisect_entropy_inverse(w[i, k], params.pi[i], params.s) for k in range(500)] for i in range(2)])
    inverse = float(np.max(np.abs(u - ref) / ref))
    x = np.exp(rng.uniform(-2, 2, size=(2, 100)))
    h = 1e-6
    D = entropy_hessian(x, params)
    hess = 0.0
    for i in range(2):
        e = np.zeros((2, 1))
        e[i] = h
        fd = (entropy_gradient(x + e, params)[i] - entropy_gradient(x - e, params)[i]) / (2 * h)
        hess = max(hess, float(np.max(np.abs(fd - D[i, i]) / np.abs(D[i, i]))))
    ok = assembly <= 1e-8 and inverse <= 1e-10 and hess <= 1e-6
    detail = f"assembly {assembly:.3g}, inverse {inverse:.3g}, Hessian {hess:.3g}"
    record(7, "oracle equivalence", ok, detail, time.perf_counter() - t0, 30)


def test_criterion_8_transform_consistency():
    t0 = time.perf_counter()
    p2 = make_params(2, 2.0)
    per_step = 0.0
    for noise in (None, NoiseModel("additive", 0.1 * np.eye(2), 8)):
        kw = dict(params=p2, T=0.05, tau=1e-3, noise=noise)
        a = run_path(run_config(scheme="transformed", **kw), seed=3)
        b = run_path(run_config(scheme="euler_maruyama", **kw), seed=3)
        for x, y in zip(a.states, b.states):
            per_step = max(per_step, float(np.abs(x.coeffs - y.coeffs).max()))
    basis = build_basis(GridSpec(1.0, 16, 64))
    errs = []
    for tau in (1e-3, 5e-4):
        kw = dict(T=0.02, tau=tau, initial=COSINE)
        v = run_path(run_config(scheme="transformed", **kw)).final.values ** 1.5
        ref = run_path(run_config(scheme="entropy", **kw)).final.values ** 1.5
        errs.append(float(np.sqrt(((v - ref) ** 2 @ basis.quad_weights).sum())))
    ratio = errs[0] / errs[1]
    ok = per_step <= 1e-10 and 1.5 <= ratio <= 3.0
    detail = f"s=2 max per-step difference {per_step:.3g}; s=3 errors {errs[0]:.4g}, {errs[1]:.4g}, ratio {ratio:.3f}"
    record(8, "transform consistency", ok, detail, time.perf_counter() - t0, 60)


def test_criterion_9_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = run_config(T=0.02, tau=1e-3, eta=1e-2, noise=MULT, seed=11)
    blobs = []
    for k in range(2):
        flags = argparse.Namespace(out=tmp_path / f"sim{k}", seed=None, paths=None, workers=None, plot=False)
        run_command("simulate", cfg, flags=flags, log=lambda m: None)
        blobs.append((tmp_path / f"sim{k}" / "monitors.csv").read_bytes())
    same_runs = blobs[0] == blobs[1]
    basis = build_basis(cfg.grid)
    per_worker = {}
    for workers in (1, 4):
        recs = run_paths(lambda p: run_path(cfg, 500 + p, basis=basis), 8, workers)
        out = []
        for p, r in enumerate(recs):
            path = write_monitor_csv(tmp_path / f"w{workers}_{p}.csv", r, 2)
            out.append(path.read_bytes())
        flags = argparse.Namespace(out=tmp_path / f"ens{workers}", seed=None, paths=8, workers=workers, plot=False)
        run_command("ensemble", cfg, flags=flags, log=lambda m: None)
        out.append((tmp_path / f"ens{workers}" / "moments.csv").read_bytes())
        per_worker[workers] = out
    same_threads = per_worker[1] == per_worker[4]
    ok = same_runs and same_threads
    detail = f"rerun identical: {same_runs}; 1 vs 4 threads identical: {same_threads}"
    record(9, "determinism", ok, detail, time.perf_counter() - t0, 60)

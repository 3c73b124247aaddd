import warnings

import numpy as np
import pytest

from crossdiff.assumptions import solve_detailed_balance
from crossdiff.galerkin import GridSpec, build_basis
from crossdiff.model import ModelParams

REF_A = np.array([[1.0, 0.5], [0.5, 1.0]])


def make_params(n=2, s=3.0, a0=None, a=None, pi=None, dominance="strong"):
    a = REF_A if a is None and n == 2 else (np.eye(n) if a is None else np.asarray(a, float))
    a0 = np.ones(n) if a0 is None else a0
    pi = solve_detailed_balance(a).require() if pi is None else pi
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return ModelParams(n, s, a0, a, pi, dominance)


@pytest.fixture
def ref_params():
    return make_params()


@pytest.fixture(scope="session")
def basis16():
    return build_basis(GridSpec(1.0, 16, 64))


def random_positive_coeffs(rng, n, N, level=1.5, spread=0.3):
    c = np.zeros((n, N))
    c[:, 0] = level
    c[:, 1:] = spread * rng.standard_normal((n, N - 1)) / np.arange(1, N) ** 2
    return c


def run_config(params=None, N=16, Q=64, tau=1e-3, T=0.01, eta=None, scheme="entropy", noise=None,
               initial=None, epsilon=1e-11, **kw):
    from crossdiff.config import InitialProfile, RunConfig
    from crossdiff.noise import NoiseModel
    from crossdiff.steppers import StepConfig

    return RunConfig(
        make_params() if params is None else params,
        grid=GridSpec(1.0, N, Q),
        step=StepConfig(tau=tau, epsilon=epsilon),
        noise=NoiseModel() if noise is None else noise,
        T=T,
        eta=tau if eta is None else eta,
        scheme=scheme,
        initial=InitialProfile() if initial is None else initial,
        **kw,
    )


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

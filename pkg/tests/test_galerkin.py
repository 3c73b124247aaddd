import math

import numpy as np
import pytest

from conftest import make_params, random_positive_coeffs
from crossdiff.errors import DomainError
from crossdiff.galerkin import (
    GridSpec,
    SpeciesField,
    assemble_divergence_term,
    build_basis,
    composite_gauss,
    mass,
    project,
    synthesize,
)
from crossdiff.oracle import dense_nodes, dense_weak_form


def test_grid_requires_enough_nodes():
    with pytest.raises(DomainError):
        GridSpec(1.0, 16, 32)
    with pytest.raises(DomainError):
        GridSpec(0.0, 4, 16)


@pytest.mark.parametrize("L", [1.0, 2.5])
def test_gram_identity_and_constant_mode(L):
    b = build_basis(GridSpec(L, 16, 64))
    assert b.gram_error <= 1e-10
    np.testing.assert_allclose(b.values[0], 1 / math.sqrt(L), rtol=1e-15)
    # doubled-node oracle rule agrees with the production Gram matrix
    x, w = dense_nodes(128, L, panels=2)
    k = np.arange(16)[:, None]
    e = np.where(k == 0, 1 / math.sqrt(L), math.sqrt(2 / L)) * np.cos(k * math.pi * x / L)
    np.testing.assert_allclose((e * w) @ e.T, np.eye(16), atol=1e-12)


def test_derivatives_vanish_at_endpoints():
    from crossdiff.galerkin import cosine_modes

    _, d = cosine_modes(np.arange(16), np.array([0.0, 1.0]), 1.0)
    assert np.all(np.abs(d) <= 1e-12)


def test_composite_panels():
    x, w = composite_gauss(64, 1.0)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(np.diff(x) > 0)


def test_project_unit_vectors(basis16):
    for k in range(16):
        c = project(basis16.values[k], basis16)
        np.testing.assert_allclose(c, np.eye(16)[k], atol=1e-13)
    with pytest.raises(DomainError):
        project(basis16.values[0], basis16, N_keep=17)


def test_projection_idempotent_and_bessel(basis16):
    rng = np.random.default_rng(0)
    w = basis16.quad_weights
    for _ in range(100):
        f = rng.standard_normal(basis16.Q)
        c = project(f, basis16)
        np.testing.assert_allclose(project(synthesize(c, basis16), basis16), c, atol=1e-12)
        assert np.sum(c**2) <= np.sum(f**2 * w) * (1 + 1e-12)


def test_divergence_constant_state(basis16, ref_params):
    u = SpeciesField.from_coeffs(np.array([[2.0] + [0] * 15, [0.5] + [0] * 15]), basis16)
    for i in range(2):
        np.testing.assert_allclose(assemble_divergence_term(u, i, basis16, ref_params), 0.0, atol=1e-14)


@pytest.mark.parametrize("m", [0, 1, 3, 7])
def test_heat_eigenmode(basis16, m):
    p = make_params(1, 2.0, a0=[0.8], a=[[0.0]], pi=[1.0], dominance="none")
    c = np.zeros((1, 16))
    c[0, m] = 1.0
    u = SpeciesField.from_coeffs(c, basis16)
    got = assemble_divergence_term(u, 0, basis16, p, "M")
    expect = -0.8 * (m * math.pi) ** 2 * np.eye(16)[m]
    np.testing.assert_allclose(got, expect, atol=1e-10 * max(1, abs(expect).max()))
    shifted = c.copy()
    shifted[0, 0] += 3.0  # the oracle wants u >= 0; constants carry no flux
    ref = dense_weak_form(shifted, 0, basis16, p)
    np.testing.assert_allclose(ref, expect, atol=1e-10 * max(1, abs(expect).max()))


def test_matches_dense_weak_form(basis16, ref_params):
    rng = np.random.default_rng(1)
    for _ in range(5):
        c = random_positive_coeffs(rng, 2, 16)
        u = SpeciesField.from_coeffs(c, basis16)
        for i in range(2):
            ref = dense_weak_form(c, i, basis16, ref_params)
            got = assemble_divergence_term(u, i, basis16, ref_params)
            assert np.abs(got - ref).max() <= 1e-8 * np.abs(ref).max()


def test_dense_weak_form_refinement(basis16, ref_params):
    c = random_positive_coeffs(np.random.default_rng(2), 2, 16)
    a = dense_weak_form(c, 1, basis16, ref_params, factor=4)
    b = dense_weak_form(c, 1, basis16, ref_params, factor=8)
    assert np.abs(a - b).max() <= 1e-10 * max(1.0, np.abs(b).max())


def test_matrix_kind_m_accepts_signed(basis16, ref_params):
    c = np.zeros((2, 16))
    c[:, 1] = 1.0
    u = SpeciesField.from_coeffs(c, basis16)
    with pytest.raises(DomainError):
        assemble_divergence_term(u, 0, basis16, ref_params, "A")
    neg = SpeciesField.from_coeffs(-c, basis16)
    np.testing.assert_allclose(
        assemble_divergence_term(neg, 0, basis16, ref_params, "M"),
        -assemble_divergence_term(u, 0, basis16, ref_params, "M"),
    )


def test_mass(basis16):
    u = SpeciesField.from_nodal(np.full((2, basis16.Q), 3.0), basis16)
    np.testing.assert_allclose(mass(u, basis16), 3.0)
    e1 = SpeciesField.from_coeffs(np.eye(16)[1][None, :], basis16)
    assert abs(mass(e1, basis16)[0]) <= 1e-15
    c = np.random.default_rng(3).standard_normal((2, 16))
    f = SpeciesField.from_coeffs(c, basis16)
    np.testing.assert_allclose(mass(f, basis16), c[:, 0] * math.sqrt(basis16.length), atol=1e-12)


def test_species_field_consistency(basis16):
    c = np.random.default_rng(4).standard_normal((2, 16))
    f = SpeciesField.from_coeffs(c, basis16)
    g = SpeciesField.from_nodal(f.values, basis16)
    np.testing.assert_allclose(g.coeffs, c, atol=1e-12)
    np.testing.assert_allclose(g.grad, f.grad, atol=1e-10)
    assert f.is_finite()

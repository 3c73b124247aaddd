import itertools

import numpy as np
import pytest

from conftest import make_params
from crossdiff.assumptions import (
    LEMMA_KINDS,
    certify_lemma,
    check_dominance,
    check_noise_assumptions,
    lemma_beta,
    quadratic_form_lhs,
    quadratic_form_rhs,
    solve_detailed_balance,
)
from crossdiff.errors import CertificateError, DomainError, FalsificationError, ModelError
from crossdiff.model import ModelParams
from crossdiff.noise import NoiseModel
from crossdiff.oracle import dense_quadratic_form


class TestDetailedBalance:
    def test_two_species(self):
        sol = solve_detailed_balance([[1.0, 2.0], [1.0, 1.0]])
        np.testing.assert_allclose(sol.pi, [1.0, 2.0])

    def test_symmetric_gives_ones(self):
        a = np.random.default_rng(0).uniform(0.1, 1, size=(4, 4))
        sol = solve_detailed_balance(a + a.T)
        np.testing.assert_array_equal(sol.pi, np.ones(4))

    def test_consistent_three_species(self):
        pi = np.array([1.0, 0.5, 3.0])
        rng = np.random.default_rng(1)
        b = rng.uniform(0.2, 1.0, size=(3, 3))
        b = b + b.T
        a = b / pi[:, None]  # pi_i a_ij = b_ij symmetric
        sol = solve_detailed_balance(a)
        np.testing.assert_allclose(sol.pi, pi, rtol=1e-14)
        pa = sol.pi[:, None] * a
        assert np.abs(pa - pa.T).max() <= 1e-12 * pa.max()

    def test_inconsistent_cycle_witness(self):
        pi = np.array([1.0, 0.5, 3.0])
        b = np.array([[1.0, 0.6, 0.4], [0.6, 1.0, 0.8], [0.4, 0.8, 1.0]])
        a = b / pi[:, None]
        a[2, 0] *= 1.1
        sol = solve_detailed_balance(a)
        assert not sol.feasible
        assert sorted(sol.cycle) == [0, 1, 2]
        assert "cycle" in sol.describe()
        # brute force: no (pi2, pi3) on a grid satisfies all three constraints
        grid = np.exp(np.linspace(-5, 5, 401))
        best = min(
            max(abs(a[0, 1] - p2 * a[1, 0]) / a[0, 1], abs(a[0, 2] - p3 * a[2, 0]) / a[0, 2],
                abs(p2 * a[1, 2] - p3 * a[2, 1]) / (p2 * a[1, 2]))
            for p2, p3 in itertools.product(grid, grid)
        )
        assert best > 1e-3
        with pytest.raises(ModelError):
            sol.require()

    def test_one_sided_pair_is_infeasible(self):
        sol = solve_detailed_balance([[1.0, 0.5], [0.0, 1.0]])
        assert not sol.feasible and sol.cycle == (0, 1)

    def test_disconnected_components(self):
        sol = solve_detailed_balance(np.eye(3))
        np.testing.assert_array_equal(sol.pi, np.ones(3))


class TestDominance:
    def test_s2_margins_coincide(self):
        p = make_params(2, 2.0)
        d = check_dominance(p)
        np.testing.assert_array_equal(d.strong_margins, d.weak_margins)

    def test_hand_margin(self):
        p = make_params(2, 3.0, a=[[1.0, 1.0], [1.0, 1.0]], pi=[1, 1])
        np.testing.assert_allclose(check_dominance(p).strong_margins, [1.75, 1.75])

    def test_strong_implies_weak(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            n = int(rng.integers(1, 5))
            b = rng.uniform(0, 2, size=(n, n))
            s = rng.uniform(2, 6)
            p = ModelParams(n, s, np.ones(n), b + b.T, np.ones(n), dominance="none")
            d = check_dominance(p)
            assert not d.strong_ok or d.weak_ok


class TestQuadraticForms:
    def test_zero_state(self, ref_params):
        z = np.array([0.3, -1.2])
        assert quadratic_form_lhs("L1", np.zeros(2), z, ref_params) == pytest.approx(
            np.sum(ref_params.pi * ref_params.a0 * z**2))
        p = make_params(2, 3.0, pi=[1, 1])
        assert quadratic_form_lhs("L4", np.zeros(2), np.ones(2), p) == pytest.approx(2.0)

    def test_hand_example_boundary_tight(self):
        p = make_params(2, 2.0, a=[[1.0, 1.0], [1.0, 1.0]], pi=[1, 1])
        u, z = np.ones(2), np.array([1.0, -1.0])
        assert quadratic_form_lhs("L1", u, z, p) == pytest.approx(6.0)
        assert quadratic_form_rhs("L1", u, z, p) == pytest.approx(6.0)
        assert dense_quadratic_form("L1", u, z, p) == pytest.approx(6.0)

    def test_single_species_structure(self):
        p = make_params(1, 3.0, a0=[0.7], a=[[1.3]], pi=[2.0])
        u, z = np.array([1.7]), np.array([0.9])
        lhs = quadratic_form_lhs("L1", u, z, p)
        rhs = quadratic_form_rhs("L1", u, z, p)
        assert lhs == pytest.approx(rhs, rel=1e-14)
        assert lemma_beta("L1", p)[0] == pytest.approx(2.0 * 4 * 1.3)

    @pytest.mark.parametrize("kind", LEMMA_KINDS)
    def test_matches_dense_oracle(self, kind, ref_params):
        rng = np.random.default_rng(3)
        for _ in range(50):
            u = np.exp(rng.uniform(-4, 3, size=2))
            z = rng.standard_normal(2)
            assert quadratic_form_lhs(kind, u, z, ref_params) == pytest.approx(
                dense_quadratic_form(kind, u, z, ref_params), rel=1e-12)

    def test_domain_checks(self, ref_params):
        with pytest.raises(DomainError):
            quadratic_form_lhs("L2", np.array([0.0, 1.0]), np.ones(2), ref_params)
        with pytest.raises(DomainError):
            quadratic_form_lhs("L1", np.array([-1.0, 1.0]), np.ones(2), ref_params)
        with pytest.raises(DomainError):
            quadratic_form_lhs("L9", np.ones(2), np.ones(2), ref_params)


class TestCertificates:
    @pytest.mark.parametrize("kind", LEMMA_KINDS)
    def test_reference_certificates(self, kind, ref_params):
        cert = certify_lemma(kind, ref_params, 20_000, seed=5)
        assert cert.alpha1 == np.min(ref_params.pi * ref_params.a0)
        assert cert.alpha2 == min(cert.beta) > 0
        assert cert.samples_tested == 20_000
        assert cert.worst_relative_slack >= -1e-9

    def test_symmetric_l1_nonnegative(self):
        p = make_params(2, 2.0, a=[[1.0, 1.0], [1.0, 1.0]], pi=[1, 1])
        assert certify_lemma("L1", p, 100_000, seed=1).worst_slack >= 0

    def test_deterministic(self, ref_params):
        a = certify_lemma("L2", ref_params, 5000, seed=9).to_json()
        b = certify_lemma("L2", ref_params, 5000, seed=9).to_json()
        assert a == b

    def test_dominance_violation_names_index(self):
        p = ModelParams(2, 3.0, [1, 1], [[1.0, 10.0], [10.0, 1.0]], [1, 1], dominance="none")
        with pytest.raises(CertificateError) as info:
            certify_lemma("L1", p, 100)
        assert info.value.index == 0 and "beta_1" in str(info.value)
        with pytest.raises(CertificateError):
            quadratic_form_rhs("L3", np.ones(2), np.ones(2), p)

    def test_falsification_carries_witness(self, ref_params, monkeypatch):
        import crossdiff.assumptions as mod

        monkeypatch.setattr(mod, "quadratic_form_rhs", lambda k, u, z, p: 2 * np.abs(quadratic_form_lhs(k, u, z, p)) + 1)
        with pytest.raises(FalsificationError) as info:
            mod.certify_lemma("L1", ref_params, 100)
        assert {"u", "z", "lhs", "rhs"} <= set(info.value.witness)


class TestNoiseAssumptions:
    def test_zero_noise(self, ref_params):
        rep = check_noise_assumptions(NoiseModel("zero"), ref_params, 50, seed=0)
        assert rep.lipschitz_estimate == rep.growth_estimate == rep.entropy_coupling_estimate == 0.0
        assert rep.pass_all

    def test_additive(self, ref_params):
        rep = check_noise_assumptions(NoiseModel("additive", 0.1 * np.eye(2), 4), ref_params, 100, seed=0)
        assert rep.lipschitz_estimate == 0.0 and rep.derivative_estimate == 0.0
        assert rep.growth_estimate > 0

    def test_bounded_family_passes(self, ref_params):
        rep = check_noise_assumptions(NoiseModel("bounded_multiplicative", 0.1 * np.eye(2), 8), ref_params, 10_000, seed=0)
        for v in (rep.lipschitz_estimate, rep.growth_estimate, rep.derivative_estimate, rep.entropy_coupling_estimate):
            assert np.isfinite(v) and v > 0
        assert rep.pass_all

    def test_pass_flags_monotone_in_cap(self, ref_params):
        model = NoiseModel("bounded_multiplicative", 0.1 * np.eye(2), 8)
        prev = None
        for cap in (1e-4, 1e-2, 1.0, 100.0):
            rep = check_noise_assumptions(model, ref_params, 200, seed=1, caps={k: cap for k in
                                          ("lipschitz", "growth", "derivative", "entropy_coupling")})
            flags = np.array(list(rep.passed.values()))
            if prev is not None:
                assert np.all(flags >= prev)
            prev = flags

import math

import numpy as np
import pytest

from crossdiff.oracle import (
    bisect_entropy_inverse,
    bisect_entropy_log_inverse,
    compare,
    dense_nodes,
    dense_weak_form,
    heat_decay_reference,
)


def test_bisection_examples():
    assert bisect_entropy_inverse(2.0, 2.0, 3.0) == pytest.approx(1.0, abs=1e-13)
    u = bisect_entropy_inverse(3.0, 1.0, 2.0)
    assert u == pytest.approx(2.2079, abs=1e-4)
    assert abs(u + math.log(u) - 3.0) <= 1e-12


def test_bisection_deep_negative():
    ell = bisect_entropy_log_inverse(-1e6, 1.0, 2.0)
    assert math.exp(ell) < 1e-300
    assert abs(math.exp(ell) + ell + 1e6) <= 1e-12 * 1e6


def test_heat_reference():
    assert heat_decay_reference(0.7, 0.3, 2.0, 0, 1.0) == 0.7
    assert heat_decay_reference(1.0, 0.1, 1.0, 1, 1.0) == pytest.approx(1 / (1 + 0.1 * math.pi**2), rel=1e-15)
    assert abs(heat_decay_reference(1.0, 1e-9, 1.0, 3, 1.0) - 1.0) <= 1e-7
    with pytest.raises(ValueError):
        heat_decay_reference(1.0, 0.0, 1.0, 1, 1.0)


def test_dense_nodes_integrate_polynomials():
    x, w = dense_nodes(256, 2.0, panels=4)
    assert np.sum(w * x**5) == pytest.approx(2.0**6 / 6, rel=1e-14)


def test_dense_weak_form_constant(basis16, ref_params):
    c = np.zeros((2, 16))
    c[:, 0] = [1.0, 2.0]
    np.testing.assert_allclose(dense_weak_form(c, 0, basis16, ref_params), 0.0, atol=1e-13)


def test_dense_weak_form_rejects_negative(basis16, ref_params):
    c = np.zeros((2, 16))
    c[:, 1] = 1.0
    with pytest.raises(ValueError):
        dense_weak_form(c, 0, basis16, ref_params)


def test_compare_report():
    rep = compare("x", np.array([1.0, 2.0]), np.array([1.0, 2.0 + 1e-9]))
    assert rep.samples == 2 and rep.max_abs_err == pytest.approx(1e-9)
    assert rep.ok(1e-8) and not rep.ok(1e-12)

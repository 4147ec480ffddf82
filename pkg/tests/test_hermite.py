import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import roots_hermitenorm

from ntkseries.hermite import (
    ActivationSpec,
    derivative_coeffs,
    gaussian_density_hermite_sq,
    hermite_at_zero,
    hermite_coefficients,
    hermite_eval,
    hermite_squares,
    hermite_table,
    log_double_factorial,
    quadrature_hermite,
    relu_hermite,
    relu_hermite_sq,
    wallis_ratio,
)


def test_hermite_eval_low_degrees():
    assert hermite_eval(0, 3.7) == 1.0
    assert hermite_eval(1, 2.0) == pytest.approx(2.0, abs=1e-15)
    assert hermite_eval(2, 0.0) == pytest.approx(-1 / math.sqrt(2), abs=1e-15)


def test_hermite_eval_matches_scipy_polynomials():
    # independent route: unnormalized He_k from scipy divided by sqrt(k!)
    from scipy.special import eval_hermitenorm

    x = np.linspace(-4, 4, 17)
    for k in range(12):
        ref = eval_hermitenorm(k, x) / math.sqrt(math.factorial(k))
        np.testing.assert_allclose(hermite_eval(k, x), ref, rtol=1e-12, atol=1e-12)


def test_three_term_recurrence():
    x = np.linspace(-5, 5, 101)
    H = hermite_table(41, x)
    for k in range(1, 41):
        lhs = math.sqrt(k + 1) * H[k + 1]
        rhs = x * H[k] - math.sqrt(k) * H[k - 1]
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * np.max(np.abs(rhs)))


def test_derivative_identity_by_finite_differences():
    x = np.linspace(-3, 3, 13)
    h = 1e-5
    for k in range(1, 15):
        fd = (hermite_eval(k, x + h) - hermite_eval(k, x - h)) / (2 * h)
        np.testing.assert_allclose(fd, math.sqrt(k) * hermite_eval(k - 1, x), atol=1e-6 * max(1, np.max(np.abs(fd))))


def test_value_at_zero_closed_form():
    for k in range(31):
        direct = float(hermite_eval(k, 0.0))
        assert hermite_at_zero(k) == pytest.approx(direct, abs=1e-14)
        if k % 2:
            assert hermite_at_zero(k) == 0.0
        else:
            expected = (-1) ** (k // 2) * math.sqrt(math.factorial(k)) / (2 ** (k // 2) * math.factorial(k // 2))
            assert hermite_at_zero(k) == pytest.approx(expected, rel=1e-12)


def test_orthonormality():
    x, w = roots_hermitenorm(40)
    w = w / w.sum()
    H = hermite_table(15, x)
    np.testing.assert_allclose((H * w) @ H.T, np.eye(16), atol=1e-10)


def test_relu_closed_form_examples():
    mu = relu_hermite(3).values
    assert mu[0] == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert mu[1] == 0.5
    assert abs(mu[2]) == pytest.approx(1 / math.sqrt(4 * math.pi), rel=1e-14)
    assert mu[3] == 0.0


def test_relu_closed_form_matches_quadrature():
    q = quadrature_hermite(ActivationSpec.relu(), 20)
    np.testing.assert_allclose(q.values, relu_hermite(20).values, atol=1e-10)


def test_relu_parseval_monotone_from_below():
    partial = np.cumsum(relu_hermite_sq(200))
    assert np.all(np.diff(partial) >= 0)
    assert np.all(partial <= 0.5)
    assert abs(partial[-1] - 0.5) <= 1e-3


def test_relu_squares_stay_finite_at_large_degree():
    sq = relu_hermite_sq(10**6)
    assert np.all(np.isfinite(sq)) and sq[-1] > 0 and sq[-2] == 0


def test_gaussian_density_examples():
    sq = gaussian_density_hermite_sq(1.0, 2)
    assert sq[0] == pytest.approx(1 / (4 * math.pi), rel=1e-14)
    assert sq[1] == 0.0
    assert sq[2] == pytest.approx(1 / (32 * math.pi), rel=1e-14)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_gaussian_density_closed_form_matches_quadrature(sigma):
    spec = ActivationSpec.gaussian(sigma)
    q = quadrature_hermite(spec, 30)
    np.testing.assert_allclose(q.values, hermite_coefficients(spec, 30).values, atol=1e-10)


def test_quadrature_recovers_a_hermite_polynomial():
    spec = ActivationSpec.custom(lambda x: hermite_eval(3, x), name="h3")
    q = quadrature_hermite(spec, 10)
    expected = np.zeros(11)
    expected[3] = 1.0
    np.testing.assert_allclose(q.values, expected, atol=1e-12)
    assert q.quadrature_error <= 1e-12


def test_tanh_even_coefficients_vanish():
    mu = hermite_coefficients(ActivationSpec.tanh(), 10).values
    assert abs(mu[0]) < 1e-14 and abs(mu[2]) < 1e-14


def test_quadrature_rejects_too_few_nodes():
    with pytest.raises(ValueError):
        quadrature_hermite(ActivationSpec.tanh(), 50, nodes=60)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_custom_must_be_square_integrable():
    with pytest.raises(ValueError):
        ActivationSpec.custom(lambda x: np.exp(x * x), name="too-fast")


def test_gaussian_density_needs_positive_sigma():
    with pytest.raises(ValueError):
        ActivationSpec.gaussian(0.0)


def test_derivative_coeffs_examples():
    d = derivative_coeffs(relu_hermite(4)).values
    assert d[0] == pytest.approx(0.5, abs=1e-15)
    assert d[1] == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)
    lin = derivative_coeffs(hermite_coefficients(ActivationSpec.linear(), 5)).values
    np.testing.assert_array_equal(lin, [1, 0, 0, 0, 0])


def test_derivative_coeffs_match_direct_quadrature_for_tanh():
    spec = ActivationSpec.tanh()
    direct = quadrature_hermite(ActivationSpec.custom(spec.prime, name="sech2"), 20).values
    np.testing.assert_allclose(derivative_coeffs(hermite_coefficients(spec, 21)).values, direct, atol=1e-10)


def test_wallis_ratio_examples():
    assert wallis_ratio(2) == pytest.approx(0.5, rel=1e-15)
    assert wallis_ratio(4) == pytest.approx(3 / 8, rel=1e-15)
    # the classical bounds are in terms of n = p/2
    v = wallis_ratio(1000)
    assert 1 / math.sqrt(500.5 * math.pi) < v < 1 / math.sqrt(500.25 * math.pi)
    with pytest.raises(ValueError):
        wallis_ratio(3)


def test_wallis_ratio_bounds_over_range():
    for p in range(2, 10**4 + 1, 2):
        n = p // 2
        assert 1 / math.sqrt(math.pi * (n + 0.5)) < wallis_ratio(p) < 1 / math.sqrt(math.pi * (n + 0.25))


def test_log_double_factorial_small_values():
    assert log_double_factorial(-1) == 0.0
    for n, v in [(0, 1), (1, 1), (5, 15), (6, 48), (9, 945)]:
        assert math.exp(log_double_factorial(n)) == pytest.approx(v, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=60), st.floats(min_value=-6, max_value=6))
def test_recurrence_holds_at_random_points(k, x):
    H = hermite_table(k + 1, np.array([x]))[:, 0]
    lhs = math.sqrt(k + 1) * H[k + 1]
    rhs = x * H[k] - (math.sqrt(k) * H[k - 1] if k else 0.0)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9 * max(1.0, abs(x * H[k])))


@settings(max_examples=20, deadline=None)
@given(st.floats(min_value=0.2, max_value=5.0))
def test_gaussian_density_parseval(sigma):
    spec = ActivationSpec.gaussian(sigma)
    partial = np.cumsum(hermite_squares(spec, 4000))
    assert np.all(partial <= spec.second_moment() * (1 + 1e-12))
    assert partial[-1] == pytest.approx(spec.second_moment(), rel=1e-3)

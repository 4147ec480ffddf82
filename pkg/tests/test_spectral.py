import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ntkseries.hermite import ActivationSpec
from ntkseries.powerseries import LayerHyperparams, kappa_two_layer
from ntkseries.spectral import (
    DataMatrix,
    assemble_gram,
    centered_bound,
    constant_term_bound,
    effective_rank,
    effective_rank_bounds,
    eig_sym,
    head_count,
    head_tail_bound,
    numerical_rank,
    outlier_census,
    power_iteration,
    rank_bound,
    read_matrix,
    tail_asymptote_check,
    tail_sum,
    unit_gram,
    write_matrix,
    write_spectrum,
)

RELU_KAPPA = kappa_two_layer(ActivationSpec.relu(), LayerHyperparams.relu_default(), 2000)


def _charpoly_eigenvalues(M):
    """Eigenvalues from the characteristic polynomial in 50-digit arithmetic."""
    mpmath.mp.dps = 50
    A = mpmath.matrix(M.tolist())
    n = A.rows
    # Faddeev-LeVerrier
    coeffs = [mpmath.mpf(1)]
    Mk = mpmath.zeros(n, n)
    for k in range(1, n + 1):
        Mk = A * Mk + coeffs[-1] * mpmath.eye(n)
        coeffs.append(-sum((A * Mk)[i, i] for i in range(n)) / k)
    roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=200)
    return np.sort([float(mpmath.re(r)) for r in roots])[::-1]


def test_data_matrix_generators():
    X = DataMatrix.gaussian(30, 5, seed=1)
    assert X.row_norms_unit and X.n == 30 and X.d == 5 and X.rank_r == 5
    L = DataMatrix.lowrank(40, 10, 3, seed=2)
    assert L.rank_r == 3
    np.testing.assert_allclose(np.linalg.norm(L.X, axis=1), 1.0, atol=1e-12)


def test_data_matrix_flag_is_checked():
    with pytest.raises(ValueError):
        DataMatrix(2 * np.eye(3), True, 3)
    assert not DataMatrix.from_array(2 * np.eye(3), normalize=False).row_norms_unit


def test_matrix_file_round_trip(tmp_path):
    M = np.random.default_rng(0).standard_normal((4, 3))
    path = tmp_path / "m.txt"
    write_matrix(M, path)
    assert path.read_text().splitlines()[0] == "4 3"
    np.testing.assert_array_equal(read_matrix(path), M)
    D = DataMatrix.from_file(path, normalize=True)
    assert D.row_norms_unit


def test_matrix_file_shape_mismatch(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("3 2\n1 2\n3 4\n")
    with pytest.raises(ValueError):
        read_matrix(path)


def test_gram_examples():
    X = DataMatrix.gaussian(8, 4, seed=3)
    n = X.n
    K0 = assemble_gram(X, [2.0])
    np.testing.assert_allclose(K0, np.full((n, n), 2.0 / n))
    rep = eig_sym(K0)
    assert rep.lambda_1 == pytest.approx(2.0) and rep.effective_rank == pytest.approx(1.0)
    np.testing.assert_allclose(n * assemble_gram(X, [0, 1]), X.X @ X.X.T, atol=1e-15)


def test_gram_on_orthonormal_rows():
    X = np.eye(3)
    K = assemble_gram(X, RELU_KAPPA)
    off = K[~np.eye(3, dtype=bool)]
    np.testing.assert_allclose(off, RELU_KAPPA[0] / 3, rtol=1e-15)
    np.testing.assert_allclose(np.diag(K), RELU_KAPPA.sum() / 3, rtol=1e-14)


def test_gram_rejects_bad_inputs():
    with pytest.raises(ValueError):
        assemble_gram(2 * np.eye(2), [1.0])
    with pytest.raises(ValueError):
        assemble_gram(np.eye(2), [1.0, -0.5])


def test_relu_gram_diagonal_reflects_trace_identity():
    X = DataMatrix.gaussian(10, 4, seed=0)
    K = assemble_gram(X, kappa_two_layer(ActivationSpec.relu(), LayerHyperparams.relu_default(), 10**5))
    np.testing.assert_allclose(np.diag(K) * X.n, 2.0, atol=1e-2)


def test_eig_sym_examples():
    np.testing.assert_allclose(eig_sym(np.eye(5)).eigenvalues, 1.0)
    np.testing.assert_allclose(eig_sym(np.ones((4, 4))).eigenvalues, [4, 0, 0, 0], atol=1e-12)


def test_eig_sym_against_characteristic_polynomial():
    A = np.random.default_rng(7).standard_normal((6, 6))
    M = A + A.T
    np.testing.assert_allclose(eig_sym(M).eigenvalues, _charpoly_eigenvalues(M), atol=1e-8)


def test_eig_sym_rejects_asymmetric():
    with pytest.raises(ValueError):
        eig_sym(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_spectrum_report_invariants():
    X = DataMatrix.gaussian(40, 6, seed=5)
    rep = eig_sym(assemble_gram(X, RELU_KAPPA))
    assert rep.eigenvalues.sum() == pytest.approx(rep.trace, rel=1e-8)
    assert rep.eigenvalues[-1] >= -1e-8 * rep.lambda_1
    assert np.all(np.diff(rep.eigenvalues) <= 0)


def test_write_spectrum(tmp_path):
    path = tmp_path / "s.csv"
    write_spectrum(eig_sym(np.diag([3.0, 1.0])), path, comment="x")
    assert path.read_text().splitlines()[:3] == ["# x", "index,eigenvalue,normalized_eigenvalue", "1,3.0,1.0"]


def test_outlier_census_examples():
    assert outlier_census(eig_sym(np.eye(7)), 0.5) == 7
    assert outlier_census(eig_sym(np.ones((7, 7))), 0.5) == 1
    with pytest.raises(ValueError):
        outlier_census(eig_sym(np.eye(2)), 0.0)


def test_effective_rank_bound_equality_cases():
    X = DataMatrix.gaussian(20, 5, seed=2)
    eff_K, bound = constant_term_bound([1.0], X)
    assert eff_K == pytest.approx(1.0, rel=1e-12) and bound == 1.0
    eff_c, bound_c, eff_x = centered_bound([0.0, 1.0], X)
    assert eff_c == pytest.approx(bound_c, rel=1e-12)
    assert eff_c == pytest.approx(effective_rank(X.X @ X.X.T), rel=1e-12)


def test_effective_rank_bounds_for_relu_kernel():
    X = DataMatrix.gaussian(64, 8, seed=4)
    b = effective_rank_bounds(RELU_KAPPA, X)
    assert b.eff_K <= b.bound_constant + 1e-8
    assert b.eff_centered <= b.bound_centered + 1e-8


def test_effective_rank_bounds_refuse_zero_coefficients():
    X = DataMatrix.gaussian(5, 3, seed=0)
    with pytest.raises(ValueError, match="c_0"):
        effective_rank_bounds([0.0, 1.0], X)
    with pytest.raises(ValueError, match="c_1"):
        effective_rank_bounds([1.0, 0.0, 1.0], X)
    with pytest.raises(ArithmeticError):
        effective_rank(np.zeros((3, 3)))


def test_power_iteration_matches_eigh():
    G = unit_gram(DataMatrix.gaussian(15, 4, seed=1))
    M = G**2
    assert power_iteration(M) == pytest.approx(np.linalg.eigvalsh(M)[-1], rel=1e-9)


def test_head_tail_bound_examples():
    X = DataMatrix.gaussian(20, 5, seed=6)
    c = 0.5 ** np.arange(200)
    assert head_tail_bound(X, c, 0, tail=lambda j: 2 * 0.5**j) == pytest.approx(2.0, rel=1e-12)
    bound = head_tail_bound(X, c, 3, tail=lambda j: 2 * 0.5**j)
    lam = eig_sym(assemble_gram(X, c)).eigenvalues
    assert lam[-1] <= bound


def test_hadamard_power_norms_do_not_increase():
    G = unit_gram(DataMatrix.gaussian(25, 4, seed=8))
    norms = [power_iteration(G**m) for m in range(1, 12)]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(norms, norms[1:]))


def test_tail_sum_routes():
    assert tail_sum([1.0, 0.5, 0.25, 0.0], 1) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        tail_sum([1.0, 0.5], 1)
    # numeric route against the zeta-function value of sum_{j>=1} j^-2
    numeric = tail_sum(lambda j: 1.0 / np.asarray(j, float) ** 2, 1)
    assert numeric == pytest.approx(math.pi**2 / 6, rel=1e-10)


def test_tail_sum_detects_divergence():
    with pytest.raises(ArithmeticError):
        tail_sum(lambda j: 1.0 / np.asarray(j, float), 1)


def test_rank_bound_examples():
    assert head_count(2, 2) == 3
    G = DataMatrix.lowrank(30, 6, 2, seed=1)
    H = assemble_gram(G, [0.7, 0.3, 0.0])
    assert numerical_rank(H) <= 3
    rb = rank_bound(7, 8)
    assert rb.simplified == 2 * 8**7 == 4_194_304
    assert rb.simplified >= rb.exact
    assert numerical_rank(np.ones((5, 5))) == 1 <= rank_bound(3, 1).exact
    with pytest.raises(ValueError):
        rank_bound(1, 3)


def test_rank_bound_dominates_exact_count():
    for r in range(2, 9):
        for m in range(1, 12):
            rb = rank_bound(r, m)
            assert rb.exact <= rb.loose
            if rb.simplified is not None:
                assert rb.exact <= rb.simplified


def test_tail_asymptote_envelopes():
    family = [DataMatrix.lowrank(n, 6, 2, seed=0) for n in (2**5, 2**6, 2**7)]
    rows = tail_asymptote_check(family, "exp", 1.0, T=200)
    for row in rows:
        assert row.lambda_n <= row.trace_bound
        assert row.lambda_n <= row.envelope
    with pytest.raises(ValueError):
        tail_asymptote_check([DataMatrix.lowrank(64, 10, 7, seed=0)], "power", 9.0)


def test_tail_asymptote_power_family_ratio_is_bounded():
    r = 7
    family = [DataMatrix.lowrank(n, 10, r, seed=1) for n in (2**7, 2**8, 2**9, 2**10)]
    rows = tail_asymptote_check(family, "power", r + 2.0, T=400, require_m_ge_r=False)
    ratios = [row.ratio for row in rows]
    assert max(ratios) <= 1.0
    assert all(row.lambda_n <= row.trace_bound for row in rows)


@settings(max_examples=25, deadline=None)
@given(
    st.integers(3, 25),
    st.integers(2, 6),
    st.lists(st.floats(0, 2), min_size=2, max_size=8),
    st.integers(0, 10**6),
)
def test_gram_properties(n, d, coeffs, seed):
    c = np.array(coeffs)
    c[0] += 0.1
    X = DataMatrix.gaussian(n, d, seed=seed)
    K = assemble_gram(X, c)
    np.testing.assert_allclose(np.trace(n * K), n * c.sum(), rtol=1e-12)
    rep = eig_sym(K)
    assert rep.lambda_1 * n >= n * c[0] - 1e-8
    assert rep.eigenvalues[-1] >= -1e-8 * rep.lambda_1


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10**6))
def test_effective_rank_is_subadditive(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, 3))
    B = rng.standard_normal((n, 2))
    PA, PB = A @ A.T, B @ B.T
    assert effective_rank(PA + PB) <= effective_rank(PA) + effective_rank(PB) + 1e-9

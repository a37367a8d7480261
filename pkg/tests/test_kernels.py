import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import special

from rkhs_pe.kernels import (
    FiniteSpanFunction,
    Kernel,
    RestrictedKernel,
    eval_kernel,
    eval_span,
    gram,
    matern_bessel,
    matern_closed_form,
    native_norm,
)


def scipy_matern(nu, s):
    """Independent Matern profile from scipy's Bessel function."""
    s = np.asarray(s, dtype=float)
    return 2 ** (1 - nu) / special.gamma(nu) * s**nu * special.kv(nu, s)


# -- eval_kernel ---------------------------------------------------------


def test_matern_half_at_zero_is_one():
    k = Kernel(nu=0.5, length_scale=1.0)
    assert eval_kernel(k, [0.0, 0.0], [0.0, 0.0]) == 1.0


def test_matern_half_at_1_3():
    k = Kernel(nu=0.5, length_scale=1.0)
    val = eval_kernel(k, [0.0], [1.3])
    assert val == pytest.approx(math.exp(-1.3), rel=1e-14)
    assert val == pytest.approx(float(scipy_matern(0.5, 1.3)), rel=1e-12)
    assert val == pytest.approx(0.27253, abs=1e-5)


def test_matern_three_halves_at_2():
    k = Kernel(nu=1.5, length_scale=1.0)
    val = eval_kernel(k, [0.0, 0.0], [2.0, 0.0])
    assert val == pytest.approx(3 * math.exp(-2.0), rel=1e-14)
    assert val == pytest.approx(0.40601, abs=1e-5)


def test_non_half_integer_uses_bessel_and_is_continuous_at_zero():
    k = Kernel(nu=1.3, length_scale=0.7)
    xi = np.array([0.0, 1e-12, 1e-8, 0.35, 2.0])
    vals = k.radial(xi)
    assert vals[0] == 1.0
    assert vals[1] == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(vals[3:], scipy_matern(1.3, xi[3:] / 0.7), rtol=1e-12)


def test_gaussian_family():
    k = Kernel(family="gaussian", length_scale=2.0)
    assert eval_kernel(k, [0.0], [3.0]) == pytest.approx(math.exp(-0.5 * 1.5**2))


def test_user_radial_is_normalised():
    k = Kernel(family="radial", profile=lambda r: 3.0 / (1.0 + np.asarray(r) ** 2), length_scale=1.0)
    assert eval_kernel(k, [1.0], [1.0]) == pytest.approx(1.0)
    assert eval_kernel(k, [0.0], [1.0]) == pytest.approx(0.5)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_inputs_rejected(bad):
    k = Kernel()
    with pytest.raises(ValueError):
        k([0.0, bad], [0.0, 0.0])


@pytest.mark.parametrize("kw", [dict(nu=0.0), dict(nu=-1.0), dict(length_scale=0.0), dict(family="cauchy"), dict(family="radial")])
def test_invalid_parameters(kw):
    with pytest.raises(ValueError):
        Kernel(**kw)


# -- gram ----------------------------------------------------------------


def test_single_center_gram():
    K = gram(Kernel(), [[0.3, -0.2]])
    assert K.entries.shape == (1, 1) and K.entries[0, 0] == 1.0


def test_coincident_centers_are_singular_and_warned():
    with pytest.warns(RuntimeWarning, match="duplicate"):
        K = gram(Kernel(), [[0.5, 0.5], [0.5, 0.5]])
    assert abs(K.min_eigenvalue()) < 1e-10


def test_random_distinct_centers_positive_definite():
    rng = np.random.default_rng(5)
    C = rng.uniform(-1, 1, size=(5, 2))
    K = gram(Kernel(nu=2.5), C)
    assert K.min_eigenvalue() > 0
    # brute-force quadratic-form scan
    A = rng.normal(size=(20000, 5))
    q = np.einsum("ki,ij,kj->k", A, K.entries, A)
    assert np.all(q > 0)


def test_gram_entries_match_pointwise_kernel():
    rng = np.random.default_rng(0)
    C = rng.normal(size=(7, 3))
    k = Kernel(nu=2.5, length_scale=0.8)
    K = gram(k, C)
    for i in range(7):
        for j in range(7):
            assert K.entries[i, j] == pytest.approx(float(k(C[i], C[j])), abs=1e-15)
    np.testing.assert_array_equal(np.diag(K.entries), 1.0)


def test_gram_rejects_bad_centers():
    with pytest.raises(ValueError):
        gram(Kernel(), np.empty((0, 2)))
    with pytest.raises(ValueError):
        gram(Kernel(), [[0.0, np.nan]])


def test_cholesky_falls_back_to_jitter():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        K = gram(Kernel(), [[0.0, 0.0], [0.0, 0.0]])
    L = K.cholesky()
    np.testing.assert_allclose(L @ L.T, K.jittered(), atol=1e-14)


def test_cholesky_uses_plain_matrix_when_possible():
    K = gram(Kernel(), [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    L = K.cholesky()
    np.testing.assert_allclose(L @ L.T, K.entries, atol=1e-15)


def test_gram_solve():
    rng = np.random.default_rng(1)
    K = gram(Kernel(), rng.uniform(-1, 1, (6, 2)))
    b = rng.normal(size=6)
    np.testing.assert_allclose(K.entries @ K.solve(b), b, atol=1e-10)


# -- eval_span / native_norm -----------------------------------------------


def test_zero_coefficients_evaluate_to_zero():
    f = FiniteSpanFunction(Kernel(), [[0.0, 0.0], [1.0, 1.0]], [0.0, 0.0])
    assert eval_span(f, [0.3, 0.4]) == 0.0


def test_kernel_section_reproduces_itself():
    c = [0.2, -0.7]
    f = FiniteSpanFunction(Kernel(), [c], [1.0])
    assert eval_span(f, c) == 1.0
    x = [0.9, 0.1]
    assert eval_span(f, x) == Kernel()(c, x)


def test_eval_span_dot_product_oracle():
    rng = np.random.default_rng(2)
    k = Kernel(nu=2.5, length_scale=0.4)
    C = rng.normal(size=(9, 2))
    a = rng.normal(size=9)
    f = FiniteSpanFunction(k, C, a)
    for x in rng.normal(size=(20, 2)):
        kx = np.array([k.radial(np.sqrt(np.sum((c - x) ** 2))) for c in C])
        assert eval_span(f, x) == pytest.approx(float(np.dot(a, kx)), abs=1e-13)


def test_eval_span_length_mismatch():
    with pytest.raises(ValueError):
        FiniteSpanFunction(Kernel(), [[0.0, 0.0], [1.0, 0.0]], [1.0])


def test_native_norm_examples():
    k = Kernel()
    C = np.array([[0.0, 0.0]])
    assert native_norm(FiniteSpanFunction(k, C, [1.0]), gram(k, C)) == 1.0
    assert native_norm(FiniteSpanFunction(k, C, [0.0]), gram(k, C)) == 0.0
    far = np.array([[0.0, 0.0], [20 * k.length_scale, 0.0]])
    Kf = gram(k, far)
    # nu = 3/2 at 20 length scales: (1 + 20) e^-20, about 4.3e-8
    assert Kf.entries[0, 1] == pytest.approx(21 * math.exp(-20.0), rel=1e-12)
    assert native_norm(FiniteSpanFunction(k, far, [1.0, 1.0]), Kf) == pytest.approx(math.sqrt(2), abs=1e-6)


def test_far_centers_decay_below_1e_8_for_exponential_kernel():
    k = Kernel(nu=0.5)
    far = np.array([[0.0, 0.0], [20 * k.length_scale, 0.0]])
    assert gram(k, far).entries[0, 1] < 1e-8


def test_native_norm_dimension_mismatch():
    k = Kernel()
    with pytest.raises(ValueError):
        native_norm(FiniteSpanFunction(k, [[0.0, 0.0]], [1.0]), gram(k, [[0.0, 0.0], [1.0, 0.0]]))


# -- restriction ---------------------------------------------------------


def test_restricted_kernel_values_are_bitwise_equal():
    base = Kernel(nu=2.5, length_scale=0.3)
    rk = RestrictedKernel(base, domain="S1")
    rng = np.random.default_rng(3)
    th = rng.uniform(0, 2 * np.pi, 50)
    P = np.column_stack([np.cos(th), np.sin(th)])
    np.testing.assert_array_equal(rk.matrix(P, P), base.matrix(P, P))
    np.testing.assert_array_equal(gram(rk, P).entries, gram(base, P).entries)


# -- invariants ----------------------------------------------------------


@pytest.mark.parametrize("kernel", [Kernel(nu=0.5), Kernel(nu=1.5), Kernel(nu=2.3), Kernel(family="gaussian")])
def test_symmetry_on_random_pairs(kernel):
    rng = np.random.default_rng(11)
    X = rng.normal(size=(1000, 3))
    Y = rng.normal(size=(1000, 3))
    assert np.max(np.abs(kernel(X, Y) - kernel(Y, X))) <= 1e-12
    M = kernel.matrix(X[:200], Y[:200])
    np.testing.assert_array_equal(M, kernel.matrix(Y[:200], X[:200]).T)


@pytest.mark.parametrize("kernel", [Kernel(nu=0.5), Kernel(nu=1.5), Kernel(nu=2.5), Kernel(nu=3.2), Kernel(family="gaussian")])
def test_monotone_radial_decay(kernel):
    xi = np.linspace(0, 10, 20001)
    v = kernel.radial(xi)
    assert np.all(np.diff(v) <= 0)
    assert v[0] == 1.0


@pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
def test_closed_form_matches_bessel(nu):
    s = np.geomspace(1e-6, 20, 1000)
    np.testing.assert_allclose(matern_closed_form(nu, s), matern_bessel(nu, s), rtol=0, atol=1e-10)
    np.testing.assert_allclose(matern_closed_form(nu, s), scipy_matern(nu, s), rtol=0, atol=1e-10)


def test_closed_form_rejects_non_half_integer():
    with pytest.raises(ValueError):
        matern_closed_form(1.0, [1.0])


def test_floor_is_value_at_eps_for_monotone_kernels():
    k = Kernel()
    assert k.floor(0.1) == pytest.approx(float(k.radial(0.1)) ** 2, rel=1e-14)


points = arrays(np.float64, st.tuples(st.integers(1, 12), st.just(2)), elements=st.floats(-3, 3))


@settings(max_examples=100, deadline=None)
@given(C=points, nu=st.sampled_from([0.5, 1.5, 2.5, 1.2]))
def test_gram_is_psd(C, nu):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        K = gram(Kernel(nu=nu), C)
    np.testing.assert_array_equal(K.entries, K.entries.T)
    assert K.min_eigenvalue() >= -1e-10 * np.linalg.norm(K.entries, 2)


@settings(max_examples=100, deadline=None)
@given(C=points, seed=st.integers(0, 2**32 - 1))
def test_reproducing_consistency(C, seed):
    k = Kernel()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        K = gram(k, C)
    a = np.random.default_rng(seed).normal(size=C.shape[0])
    f = FiniteSpanFunction(k, C, a)
    # (K_{c_i}, f)_H = e_i^T K alpha equals f(c_i)
    np.testing.assert_allclose(K.entries @ a, f(C), atol=1e-10)
    assert native_norm(f, K) >= 0

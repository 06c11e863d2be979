import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import hermite as H
from scipy.integrate import simpson

from shubin_lab.operator import (ShubinParams, SizingError, TruncationError, build_hamiltonian,
                                 derivative_coeffs, derivative_matrix, eigenbasis, evaluate,
                                 hermite_functions, momentum_squared_matrix, position_squared_matrix)

from conftest import cached_basis

# finite differences + two Richardson sweeps (scripts/derive_oracles.py)
FD_QUARTIC = [1.06036209047426, 3.799673029803676, 7.455697937968107, 11.644745511390248]
FD_BIQUARTIC = [1.396728345851584, 7.131528627870567, 18.640382873580027, 35.8590233655581]


def numpy_hermite_function(n, x):
    c = np.zeros(n + 1)
    c[n] = 1
    norm = math.exp(-0.5 * (n * math.log(2) + math.lgamma(n + 1) + 0.5 * math.log(math.pi)))
    return norm * H.hermval(x, c) * np.exp(-x ** 2 / 2)


def test_harmonic_eigenvalues_are_odd_integers():
    b = eigenbasis(ShubinParams(1, 1), 128)
    assert np.max(np.abs(b.eigenvalues[:41] - (2 * np.arange(41) + 1))) < 1e-9


def test_quartic_oscillator_matches_finite_differences():
    w = cached_basis(2, 1).eigenvalues[:4]
    np.testing.assert_allclose(w, FD_QUARTIC, rtol=1e-9)


def test_biquartic_matches_finite_differences():
    w = cached_basis(2, 2).eigenvalues[:4]
    np.testing.assert_allclose(w, FD_BIQUARTIC, rtol=1e-6)


def test_fourier_duality_swaps_k_and_m():
    a = eigenbasis(ShubinParams(2, 1), 256, count=40).eigenvalues
    b = eigenbasis(ShubinParams(1, 2), 256, count=40).eigenvalues
    np.testing.assert_allclose(a, b, rtol=1e-10)


def test_critical_exponent():
    assert ShubinParams(2, 1).s_star == 0.75
    assert ShubinParams(2, 2).s_star == 0.5
    assert ShubinParams(1, 1).s_star == 1.0


@pytest.mark.parametrize("kw", [dict(k=0, m=1), dict(k=1, m=0), dict(k=1, m=1, s=0.0), dict(k=1.5, m=1)])
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        ShubinParams(**kw)


def test_sizing_and_truncation_errors():
    with pytest.raises(SizingError):
        build_hamiltonian(ShubinParams(2, 2), 15)
    with pytest.raises(TruncationError):
        eigenbasis(ShubinParams(1, 1), 64, count=40)
    with pytest.raises(TruncationError):
        eigenbasis(ShubinParams(1, 1), 64, lam_max=1000.0)
    assert eigenbasis(ShubinParams(1, 1), 64, lam_max=10.0).count == 5


def test_hamiltonian_symmetric_and_matches_definition():
    p = ShubinParams(2, 1)
    h = build_hamiltonian(p, 40)
    assert np.array_equal(h, h.T)
    n_pad = p.padded_size(40)
    ref = momentum_squared_matrix(n_pad) + np.linalg.matrix_power(position_squared_matrix(n_pad), 2)
    np.testing.assert_allclose(h, ref[:40, :40], atol=1e-12)


def test_momentum_squared_is_minus_second_derivative():
    d = derivative_matrix(30)
    np.testing.assert_allclose(-(d @ d)[:28, :28], momentum_squared_matrix(30)[:28, :28], atol=1e-13)


@pytest.mark.parametrize("k,m", [(1, 1), (2, 1), (2, 2)])
def test_eigenvectors_orthonormal_with_parity(k, m):
    b = cached_basis(k, m)
    v = b.vectors
    np.testing.assert_allclose(v.T @ v, np.eye(b.count), atol=1e-12)
    for j in range(20):
        wrong = v[(j + 1) % 2::2, j]
        assert np.all(wrong == 0)


@pytest.mark.parametrize("k,m", [(2, 1), (2, 2)])
def test_rayleigh_quotient_recovers_eigenvalue(k, m):
    b = cached_basis(k, m)
    h = build_hamiltonian(b.params, b.n)
    v = b.vectors[: b.n, :10]
    np.testing.assert_allclose(np.diag(v.T @ h @ v), b.eigenvalues[:10], rtol=1e-12)


def test_reliability_index_bounds():
    b = cached_basis(2, 1)
    r = b.reliability_index()
    assert 10 < r < b.count
    bigger = eigenbasis(b.params, 384, count=r + 1)
    np.testing.assert_allclose(bigger.eigenvalues, b.eigenvalues[: r + 1], rtol=1e-8)


def test_sign_convention():
    b = cached_basis(2, 2)
    for j in range(b.count):
        col = b.vectors[:, j]
        first = col[np.flatnonzero(np.abs(col) > 1e-12)[0]]
        assert first > 0


def test_hermite_functions_match_numpy_polynomials():
    x = np.linspace(-7, 7, 301)
    phi = hermite_functions(31, x)
    for n in (0, 1, 5, 17, 30):
        np.testing.assert_allclose(phi[:, n], numpy_hermite_function(n, x), atol=1e-12)


def test_hermite_function_normalisation_by_simpson():
    x = np.linspace(-12, 12, 40001)
    phi = hermite_functions(6, x)
    assert abs(simpson(phi[:, 3] ** 2, x=x) - 1) < 1e-10
    assert abs(simpson(phi[:, 2] * phi[:, 4], x=x)) < 1e-10


def test_hermite_functions_stable_far_out():
    vals = hermite_functions(200, np.array([0.0, 25.0, -40.0]))
    assert np.all(np.isfinite(vals))
    assert np.max(np.abs(vals[2])) < 1e-100


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=12), st.integers(1, 3))
def test_derivative_coefficients_match_finite_differences(c, order):
    coeffs = np.zeros(len(c) + order + 1)
    coeffs[: len(c)] = c
    dc = derivative_coeffs(coeffs, order)
    h = 1e-3
    x = np.linspace(-3, 3, 13)
    f = lambda t: evaluate(coeffs, t)
    if order == 1:
        fd = (f(x + h) - f(x - h)) / (2 * h)
    elif order == 2:
        fd = (f(x + h) - 2 * f(x) + f(x - h)) / h ** 2
    else:
        h = 1e-2
        fd = (f(x + 2 * h) - 2 * f(x + h) + 2 * f(x - h) - f(x - 2 * h)) / (2 * h ** 3)
    scale = 1 + np.abs(dc).sum() * 10
    np.testing.assert_allclose(evaluate(dc, x), fd, atol=1e-3 * scale)


def test_derivative_needs_padding():
    with pytest.raises(SizingError):
        derivative_coeffs(np.ones(5), 1)

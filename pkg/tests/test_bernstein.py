import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import Polynomial
from numpy.polynomial import hermite as H

from shubin_lab.bernstein import (PASS, DomainError, EtaTooLargeError, bernstein_check, bracket_sup_norm_quadrature,
                                  exp_weight_norm, exp_weight_series, fit_premise, gs_coefficient_profile,
                                  lemma_implication_check, moment_table, smoothing_check, smoothing_exponents,
                                  sup_norm_check, weighted_norm, weighted_sup_norm)
from shubin_lab.operator import ShubinParams, SizingError
from shubin_lab.spectral import SpectralSubspace

from conftest import cached_basis


def gauss_hermite_norm(n, p, beta):
    """||<x>^p d^beta Phi_n|| exactly: Phi_n = P e^{-x^2/2}, d(Q e^{-x^2/2}) = (Q' - x Q) e^{-x^2/2}."""
    c = np.zeros(n + 1)
    c[n] = 1
    Q = Polynomial(H.herm2poly(c)) * math.exp(-0.5 * (n * math.log(2) + math.lgamma(n + 1) + 0.5 * math.log(math.pi)))
    X = Polynomial([0, 1])
    for _ in range(beta):
        Q = Q.deriv() - X * Q
    x, w = H.hermgauss(60)
    return math.sqrt(np.sum(w * (1 + x ** 2) ** p * Q(x) ** 2))


@pytest.mark.parametrize("n,p,beta", [(0, 0, 0), (0, 3, 0), (3, 2, 4), (7, 8, 8), (10, 5, 1), (2, 0, 6)])
def test_weighted_norm_of_hermite_function(n, p, beta):
    e = np.zeros(n + 1)
    e[n] = 1
    assert weighted_norm(e, p, beta) == pytest.approx(gauss_hermite_norm(n, p, beta), rel=1e-11)


@pytest.mark.parametrize("k,m,s", [(1, 1, 1.0), (2, 1, 0.75), (2, 2, 0.5)])
def test_matrix_polynomial_agrees_with_quadrature(k, m, s):
    b = cached_basis(k, m, s)
    for dim in (4, 25):
        sub = SpectralSubspace.first(b, dim)
        for p, beta in [(0, 0), (3, 5), (8, 8), (8, 0), (0, 8)]:
            assert weighted_sup_norm(b, sub, p, beta) == pytest.approx(
                bracket_sup_norm_quadrature(b, sub, p, beta), rel=1e-8)


def test_explicit_padding_too_small():
    b = cached_basis(2, 2)
    with pytest.raises(SizingError):
        weighted_sup_norm(b, SpectralSubspace.first(b, b.count), 4, 4, n_pad=b.n)


def test_sup_norm_of_ground_space_is_one():
    b = cached_basis(2, 2)
    assert weighted_sup_norm(b, SpectralSubspace.first(b, 5), 0, 0) == pytest.approx(1.0)


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=10).filter(lambda c: any(abs(v) > 1e-3 for v in c)),
       st.integers(0, 6), st.integers(0, 4))
def test_bracket_weight_is_monotone_in_p(c, p, beta):
    assert weighted_norm(c, p + 1, beta) >= weighted_norm(c, p, beta) * (1 - 1e-12)


def test_moment_tables_relation():
    c = np.array([0.3, -0.2, 0.5, 0.1])
    mono = moment_table(c, 2, 2, "monomial")
    brk = moment_table(c, 2, 2, "bracket")
    np.testing.assert_allclose(brk[1] ** 2, mono[0] ** 2 + mono[1] ** 2, rtol=1e-12)
    frac = moment_table(c, 2, 2, "fractional", delta=1.0)
    np.testing.assert_allclose(frac, brk, rtol=1e-10)


def test_exp_weight_closed_form_for_ground_state():
    b = cached_basis(1, 1, 1.0, 64)
    sub = SpectralSubspace.first(b, 1)
    exact = math.sqrt(math.exp(0.25) * 2 / math.sqrt(3))  # e^{2 eta}/sqrt(1 - 2 eta) at eta = 1/8
    assert exp_weight_norm(b, sub, 0.125) == pytest.approx(exact, rel=1e-10)
    total, tail = exp_weight_series(np.eye(3)[0], 0.125, 1, terms=80)
    assert total == pytest.approx(exact ** 2, rel=1e-10) and tail < 1e-12


def test_exp_weight_rejects_divergent_eta():
    b = cached_basis(1, 1, 1.0, 64)
    with pytest.raises(EtaTooLargeError):
        exp_weight_norm(b, SpectralSubspace.first(b, 3), 0.6)


def test_factorial_exponents():
    lam = cached_basis(1, 1).eigenvalues[:20]
    fit = bernstein_check(ShubinParams(1, 1, 1.0), lam, 2, 2, basis=cached_basis(1, 1))
    assert fit.stats["factorial_exponents"] == (0.5, 0.5)
    b = cached_basis(2, 1, 0.75)
    fit = bernstein_check(b.params, b.eigenvalues[:20], 2, 2, basis=b)
    assert fit.stats["factorial_exponents"] == pytest.approx((1 / 3, 2 / 3))


def test_bernstein_domain():
    with pytest.raises(DomainError):
        bernstein_check(ShubinParams(2, 2, 0.75), [3.0, 10.0], basis=cached_basis(2, 2, 0.75))


def test_bernstein_bound_holds_on_table():
    b = cached_basis(2, 2, 0.5)
    fit = bernstein_check(b.params, b.eigenvalues[:60], 6, 6, basis=b)
    assert fit.verdict == PASS and fit.max_violation <= 1e-12 and fit.C >= 1


def test_sup_norm_check_passes():
    b = cached_basis(2, 2, 0.5)
    fit = sup_norm_check(b, b.eigenvalues[:24:3], beta_max=3, spacing=5e-3)
    assert fit.verdict == PASS


def test_smoothing_regimes():
    assert smoothing_exponents(ShubinParams(1, 1, 1.0)) == (0.5, 0.5, "subcritical")
    ea, eb, regime = smoothing_exponents(ShubinParams(2, 1, 1.0))
    assert regime == "supercritical" and (ea, eb) == pytest.approx((1 / 3, 2 / 3))
    ea, eb, regime = smoothing_exponents(ShubinParams(2, 1, 0.5))
    assert regime == "subcritical" and (ea, eb) == pytest.approx((0.5, 1.0))


def test_smoothing_check_bounded_at_small_times():
    tab = smoothing_check(cached_basis(2, 2, 1.0), np.geomspace(0.02, 2, 12), 3, 3)
    assert tab.verdict == PASS and tab.regime == "supercritical"


@pytest.mark.parametrize("n", [0, 3, 6])
def test_moment_lemmas_on_hermite_functions(n):
    e = np.zeros(n + 1)
    e[n] = 1
    mono = moment_table(e, 6, 6, "monomial")
    C, A = fit_premise(mono, 0.5, 0.5)
    rep = lemma_implication_check("croch", mono, moment_table(e, 6, 6, "bracket"), C, A, 0.5, 0.5)
    assert rep.premise_ok and rep.verdict == PASS
    brk = moment_table(e, 5, 4, "bracket")
    C, A = fit_premise(brk, 0.5, 0.5)
    rep = lemma_implication_check("interpolation", brk, moment_table(e, 5, 4, "fractional", delta=0.5),
                                  C, A, 0.5, 0.5, delta=0.5)
    assert rep.verdict == PASS


def test_lemma_check_flags_unmet_premise():
    mono = moment_table(np.array([1.0]), 3, 3, "monomial")
    rep = lemma_implication_check("croch", mono, mono, 1e-3, 1.0, 0.5, 0.5)
    assert rep.verdict == "INCONCLUSIVE" and not rep.premise_ok


def test_gelfand_shilov_profile():
    b = cached_basis(2, 2)
    lam = b.eigenvalues[:60]
    c = np.exp(-lam ** 0.5)  # decays faster than exp(-eps lambda^(1/2) / 2) for eps < 2
    prof = gs_coefficient_profile(b, c, 1.0, [0.5, 4.0])
    assert prof.saturated.tolist() == [True, False]
    with pytest.raises(DomainError):
        gs_coefficient_profile(b, c, 0.5, [0.1])

"""Weighted-norm and smoothing measurements on spectral subspaces.

Suprema over unit f in a spectral subspace of ``||w(x) d^b f||`` are largest
eigenvalues of weighted Gram forms.  Polynomial weights are exact matrix
polynomials on a padded Hermite basis; exponential and fractional weights go
through quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import comb, gammaln

from .operator import (EigenBasis, ShubinParams, SizingError, derivative_matrix, eigenbasis,
                       hermite_functions, hermite_position_matrix)
from .quadrature import QuadratureSpec, composite_rule
from .spectral import SpectralSubspace, basis_extent

PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"


class DomainError(ValueError):
    pass


class EtaTooLargeError(ArithmeticError):
    """Exponentially weighted norm not stable under doubling of the quadrature window."""


def log_factorial(n):
    return gammaln(np.asarray(n, dtype=float) + 1)


def _padded(vectors: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros((size, vectors.shape[1]))
    rows = min(size, vectors.shape[0])
    out[:rows] = vectors[:rows]
    if np.any(vectors[rows:]):
        raise SizingError("padding smaller than coefficient support")
    return out


def _support(vectors: np.ndarray) -> int:
    nz = np.flatnonzero(np.abs(vectors).max(axis=1) > 0)
    return int(nz[-1]) + 1 if nz.size else 1


def moment_images(vectors: np.ndarray, powers: int, beta: int, n_pad: int | None = None) -> list[np.ndarray]:
    """[X^j D^beta V for j = 0..powers], exact on a basis padded by ``powers + beta``."""
    need = _support(vectors) + powers + beta + 1
    if n_pad is None:
        n_pad = need
    elif n_pad < need:
        raise SizingError(f"padded size {n_pad} too small for x-power {powers} and derivative {beta}; need {need}")
    v = _padded(vectors, n_pad)
    d = derivative_matrix(n_pad)
    x = hermite_position_matrix(n_pad)
    for _ in range(beta):
        v = d @ v
    out = [v]
    for _ in range(powers):
        out.append(x @ out[-1])
    return out


def bracket_form(vectors: np.ndarray, p: int, beta: int, n_pad: int | None = None) -> np.ndarray:
    """Matrix of <d^b f, (1 + x^2)^p d^b f> on the span of ``vectors``."""
    imgs = moment_images(vectors, p, beta, n_pad)
    form = sum(comb(p, j, exact=True) * (imgs[j].T @ imgs[j]) for j in range(p + 1))
    return (form + form.T) / 2


def monomial_form(vectors: np.ndarray, alpha: int, beta: int, n_pad: int | None = None) -> np.ndarray:
    """Matrix of <x^a d^b f, x^a d^b f>."""
    y = moment_images(vectors, alpha, beta, n_pad)[-1]
    return y.T @ y


def _top_eig(form: np.ndarray) -> float:
    scale = float(np.max(np.abs(np.diag(form))))
    if scale == 0:
        return 0.0
    top = np.linalg.eigvalsh(form / scale)[-1]
    return float(top) * scale


def weighted_sup_norm(basis: EigenBasis, subspace: SpectralSubspace, p: int, beta: int,
                      n_pad: int | None = None) -> float:
    """sup over unit f in the subspace of ||<x>^p d^beta f||."""
    if p < 0 or beta < 0:
        raise ValueError("p and beta must be non-negative")
    form = bracket_form(subspace.vectors(), p, beta, n_pad)
    return math.sqrt(max(_top_eig(form), 0.0))


def weighted_norm(coeffs, p: int, beta: int) -> float:
    """||<x>^p d^beta f|| for one function given by Hermite coefficients."""
    c = np.asarray(coeffs, dtype=float).reshape(-1, 1)
    return math.sqrt(float(bracket_form(c, p, beta)[0, 0]))


def monomial_norm(coeffs, alpha: int, beta: int) -> float:
    c = np.asarray(coeffs, dtype=float).reshape(-1, 1)
    return math.sqrt(float(monomial_form(c, alpha, beta)[0, 0]))


def derivative_values(vectors: np.ndarray, beta: int, x) -> np.ndarray:
    """Pointwise d^beta of each column (Hermite coefficients) at ``x``."""
    c = moment_images(vectors, 0, beta)[0]
    return hermite_functions(c.shape[0], x) @ c


def quadrature_form(vectors: np.ndarray, beta: int, log_weight, window: float,
                    quad: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """Matrix of int_{-L}^{L} exp(log_weight(x)) d^b f_i d^b f_j dx."""
    x, w = composite_rule([(-window, window)], quad)
    vals = derivative_values(vectors, beta, x)
    lw = log_weight(x) + np.log(w)
    # exp(lw) may overflow where the functions have already underflowed
    scale = np.where(np.any(vals != 0, axis=1), np.exp(np.minimum(lw, 700.0)), 0.0)
    if np.any(lw > 700.0) and np.any(vals[lw > 700.0] != 0):
        raise EtaTooLargeError("exponential weight overflows where the functions are still nonzero")
    form = (vals * scale[:, None]).T @ vals
    return (form + form.T) / 2


def bracket_sup_norm_quadrature(basis: EigenBasis, subspace: SpectralSubspace, p: float, beta: int,
                                window: float | None = None, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Quadrature version of :func:`weighted_sup_norm`; also accepts fractional ``p``."""
    L = basis_extent(basis.n + beta) if window is None else window
    form = quadrature_form(subspace.vectors(), beta, lambda x: p * np.log1p(x ** 2), L, quad)
    return math.sqrt(max(_top_eig(form), 0.0))


def exp_weight_norm(basis: EigenBasis, subspace: SpectralSubspace, eta: float, beta: int = 0,
                    power: float | None = None, window: float | None = None, rtol: float = 1e-6,
                    quad: QuadratureSpec = QuadratureSpec()) -> float:
    """sup over unit f of ||exp(eta <x>^power) d^beta f||, ``power`` defaulting to 2 s k.

    The value is accepted only if doubling the quadrature window changes it by
    less than ``rtol``.
    """
    if power is None:
        power = 2 * basis.params.s * basis.params.k
    L = basis_extent(basis.n + beta) if window is None else window
    logw = lambda x: 2 * eta * (1 + x ** 2) ** (power / 2)
    vals = []
    for win in (L, 2 * L):
        form = quadrature_form(subspace.vectors(), beta, logw, win, quad)
        vals.append(math.sqrt(max(_top_eig(form), 0.0)))
    if not all(np.isfinite(vals)) or abs(vals[1] - vals[0]) > rtol * abs(vals[1]):
        raise EtaTooLargeError(f"eta={eta}: window {L:.3g} gives {vals[0]:.6g}, window {2 * L:.3g} gives {vals[1]:.6g}")
    return vals[1]


def exp_weight_series(coeffs, eta: float, sk: int, terms: int = 60) -> tuple[float, float]:
    """Partial sum of sum_p (2 eta)^p ||<x>^{sk p} f||^2 / p! and a geometric tail bound.

    Returns ``(partial_sum, tail_bound)``; the tail bound extrapolates the ratio of
    the last two terms.
    """
    c = np.asarray(coeffs, dtype=float).reshape(-1, 1)
    total, prev, last = 0.0, 0.0, 0.0
    for p in range(terms):
        moment = float(bracket_form(c, sk * p, 0)[0, 0])
        term = math.exp(p * math.log(2 * eta) - float(log_factorial(p))) * moment
        total += term
        prev, last = last, term
    ratio = last / prev if prev > 0 else 0.0
    tail = last * ratio / (1 - ratio) if ratio < 1 else math.inf
    return total, tail


@dataclass
class WeightedNormTable:
    params: ShubinParams
    p: np.ndarray
    beta: np.ndarray
    lam: np.ndarray
    values: np.ndarray  # shape (len(p), len(beta), len(lam))

    def rows(self):
        for i, p in enumerate(self.p):
            for j, b in enumerate(self.beta):
                for l, lam in enumerate(self.lam):
                    yield int(p), int(b), float(lam), float(self.values[i, j, l])


def weighted_norm_table(basis: EigenBasis, lam_grid, p_max: int, beta_max: int) -> WeightedNormTable:
    lam_grid = np.sort(np.asarray(lam_grid, dtype=float))
    top = SpectralSubspace.below(basis, lam_grid[-1])
    dims = [basis.indices_below(l).size for l in lam_grid]
    vals = np.zeros((p_max + 1, beta_max + 1, len(lam_grid)))
    for p in range(p_max + 1):
        for b in range(beta_max + 1):
            form = bracket_form(top.vectors(), p, b)
            for l, d in enumerate(dims):
                blk = form[:d, :d]
                vals[p, b, l] = math.sqrt(max(_top_eig(blk), 0.0)) if d else 0.0
    return WeightedNormTable(basis.params, np.arange(p_max + 1), np.arange(beta_max + 1), lam_grid, vals)


@dataclass
class BernsteinFit:
    C: float
    eta_prime: float
    log_ratio: np.ndarray
    max_violation: float
    C_half: float = math.nan
    verdict: str = INCONCLUSIVE
    stats: dict = field(default_factory=dict)


def _fit_constants(lam, s, logval, pw_p, pw_b, P, B):
    """eta' flattens every row of the log table in lambda^s; C is then the sup of r^(1/(1+p+b))."""
    ell = logval - pw_p * log_factorial(P)[..., None] - pw_b * log_factorial(B)[..., None]
    ls = lam ** s
    if len(lam) > 1:
        slopes = np.diff(ell, axis=-1) / np.diff(ls)
        eta = max(float(np.max(slopes)), 1e-12)
    else:
        eta = 1e-12
    logr = ell - eta * ls
    logC = max(0.0, float(np.max(logr / (1 + P + B)[..., None])))
    return eta, math.exp(logC), logr


def bernstein_check(params: ShubinParams, lam_grid, p_max: int = 8, beta_max: int = 8, *,
                    basis: EigenBasis | None = None, n: int = 256, tol: float = 0.2) -> BernsteinFit:
    """Fit C, eta' in ||<x>^p d^b f|| <= C^(1+p+b) (p!)^(1/2sk) (b!)^(1/2sm) e^(eta' lambda^s).

    PASS when the fitted bound holds on the whole table and C moves by at most
    ``tol`` relative between the lower half of the lambda range and the full range.
    """
    s = params.s
    if s > params.s_star + 1e-12:
        raise DomainError(f"s={s} exceeds s*={params.s_star}; the weighted estimate needs s <= s*")
    basis = basis or eigenbasis(params, n)
    table = weighted_norm_table(basis, lam_grid, p_max, beta_max)
    P, B = np.meshgrid(table.p, table.beta, indexing="ij")
    pw_p, pw_b = 1 / (2 * s * params.k), 1 / (2 * s * params.m)
    logval = np.log(table.values)
    eta, C, logr = _fit_constants(table.lam, s, logval, pw_p, pw_b, P, B)
    viol = float(np.max(logr - (1 + P + B)[..., None] * math.log(C)))
    half = table.lam <= table.lam[-1] / 2
    if half.sum() >= 2:
        _, C_half, _ = _fit_constants(table.lam[half], s, logval[..., half], pw_p, pw_b, P, B)
        stable = abs(C / C_half - 1) <= tol
        verdict = PASS if (viol <= 1e-12 and stable) else FAIL
    else:
        C_half, verdict = math.nan, INCONCLUSIVE
    return BernsteinFit(C, eta, logr, viol, C_half, verdict,
                        {"factorial_exponents": (pw_p, pw_b), "table": table})


def sup_norm_values(basis: EigenBasis, subspace: SpectralSubspace, beta: int, spacing: float = 1e-3,
                    window: float | None = None, chunk: int = 20000) -> tuple[float, float]:
    """sup over unit f of max_x |d^beta f(x)| on a uniform grid: max_x ||(d^b psi_i(x))_i||_2.

    Returns ``(value, argmax)``.
    """
    L = basis_extent(basis.n + beta) if window is None else window
    x = np.linspace(-L, L, int(np.ceil(2 * L / spacing)) + 1)
    c = moment_images(subspace.vectors(), 0, beta)[0]
    best, where = -1.0, 0.0
    for i in range(0, len(x), chunk):
        xs = x[i:i + chunk]
        vals = hermite_functions(c.shape[0], xs) @ c
        nrm = np.sqrt((vals ** 2).sum(axis=1))
        j = int(np.argmax(nrm))
        if nrm[j] > best:
            best, where = float(nrm[j]), float(xs[j])
    return best, where


def sup_norm_check(basis: EigenBasis, lam_grid, beta_max: int = 4, spacing: float = 1e-3,
                   tol: float = 0.2) -> BernsteinFit:
    """Fit ||d^b f||_inf <= C''^(1+b) (b!)^(1/2sm) e^(eta' lambda^s), same protocol as :func:`bernstein_check`."""
    params = basis.params
    s = params.s
    if s > params.s_star + 1e-12:
        raise DomainError(f"s={s} exceeds s*={params.s_star}")
    lam_grid = np.sort(np.asarray(lam_grid, dtype=float))
    vals = np.zeros((1, beta_max + 1, len(lam_grid)))
    for b in range(beta_max + 1):
        for l, lam in enumerate(lam_grid):
            vals[0, b, l] = sup_norm_values(basis, SpectralSubspace.below(basis, lam), b, spacing)[0]
    P, B = np.meshgrid([0], np.arange(beta_max + 1), indexing="ij")
    logval = np.log(vals)
    pw_b = 1 / (2 * s * params.m)
    eta, C, logr = _fit_constants(lam_grid, s, logval, 0.0, pw_b, P, B)
    viol = float(np.max(logr - (1 + B)[..., None] * math.log(C)))
    half = lam_grid <= lam_grid[-1] / 2
    if half.sum() >= 2:
        _, C_half, _ = _fit_constants(lam_grid[half], s, logval[..., half], 0.0, pw_b, P, B)
        verdict = PASS if (viol <= 1e-12 and abs(C / C_half - 1) <= tol) else FAIL
    else:
        C_half, verdict = math.nan, INCONCLUSIVE
    return BernsteinFit(C, eta, logr, viol, C_half, verdict, {"values": vals[0]})


def smoothing_exponents(params: ShubinParams) -> tuple[float, float, str]:
    """(x-exponent, derivative-exponent) in the smoothing bound, and which regime applies."""
    s, k, m = params.s, params.k, params.m
    if s <= params.s_star:
        return 1 / (2 * s * k), 1 / (2 * s * m), "subcritical"
    return m / (k + m), k / (k + m), "supercritical"


@dataclass
class SmoothingTable:
    t: np.ndarray
    ratios: np.ndarray  # shape (alpha, beta, t)
    C_t: np.ndarray
    regime: str
    verdict: str


def default_probe(modes: int = 40) -> np.ndarray:
    return np.ones(modes) / math.sqrt(modes)


def smoothing_check(basis: EigenBasis, t_grid, alpha_max: int = 4, beta_max: int = 4, probe=None,
                    tol: float = 0.2) -> SmoothingTable:
    """Tabulate ||x^a d^b e^{-tH^s} g|| t^(a*ea + b*eb + s*/s) / ((a!)^ea (b!)^eb).

    ``probe`` holds eigenbasis coefficients of g.  C_s(t) is the max over (a, b)
    of ratio^(1/(1+a+b)); PASS when C_s over the smallest third of t does not
    exceed (1 + tol) times its max over the remaining t.
    """
    params = basis.params
    g = default_probe() if probe is None else np.asarray(probe, dtype=float)
    if g.size > basis.count:
        raise SizingError(f"probe uses {g.size} modes, basis holds {basis.count}")
    ea, eb, regime = smoothing_exponents(params)
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    if np.any(t_grid <= 0):
        raise ValueError("times must be positive")
    lam_s = basis.eigenvalues[: g.size] ** params.s
    v = basis.vectors[:, : g.size]
    ratios = np.zeros((alpha_max + 1, beta_max + 1, len(t_grid)))
    damped = v @ (np.exp(-np.outer(lam_s, t_grid)) * g[:, None])
    for a in range(alpha_max + 1):
        for b in range(beta_max + 1):
            y = moment_images(damped, a, b)[-1]
            nrm = np.sqrt((y ** 2).sum(axis=0))
            expo = a * ea + b * eb + params.s_star / params.s
            fact = math.exp(ea * float(log_factorial(a)) + eb * float(log_factorial(b)))
            ratios[a, b] = nrm * t_grid ** expo / fact
    A, B = np.meshgrid(np.arange(alpha_max + 1), np.arange(beta_max + 1), indexing="ij")
    with np.errstate(divide="ignore"):
        C_t = np.exp(np.max(np.log(ratios) / (1 + A + B)[..., None], axis=(0, 1)))
    cut = max(1, len(t_grid) // 3)
    small, rest = C_t[:cut], C_t[cut:]
    verdict = PASS if rest.size and small.max() <= (1 + tol) * rest.max() else (INCONCLUSIVE if not rest.size else FAIL)
    return SmoothingTable(t_grid, ratios, C_t, regime, verdict)


@dataclass
class LemmaReport:
    verdict: str
    premise_ok: bool
    worst_margin: float
    detail: str = ""


def fit_premise(table, nu: float, mu: float) -> tuple[float, float]:
    """Constants (C, A >= 1) such that table[a, b] <= C A^(a+b) (a!)^nu (b!)^mu."""
    table = np.asarray(table, dtype=float)
    a = np.arange(table.shape[0])[:, None]
    b = np.arange(table.shape[1])[None, :]
    t = np.log(table) - nu * log_factorial(a) - mu * log_factorial(b)
    order = (a + b).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.where(order > 0, (t - t[0, 0]) / order, -np.inf)
    logA = max(0.0, float(np.max(rates)))
    logC = float(np.max(t - logA * order))
    return math.exp(logC), math.exp(logA)


def lemma_implication_check(kind: str, premise, conclusion, C: float, A: float, nu: float, mu: float,
                            delta: float = 1.0, dim: int = 1, rtol: float = 1e-12) -> LemmaReport:
    """Check the conclusion of the moment lemmas on measured tables.

    ``kind="croch"``: premise table ||x^a d^b f||, conclusion table ||<x>^p d^b f||,
    bound C (d+1)^(p/2) A^(p+b) (p!)^nu (b!)^mu.
    ``kind="interpolation"``: premise ||<x>^p d^b f||, conclusion ||<x>^(delta p) d^b f||,
    bound C (8^nu e^nu A)^(p+b) (p!)^(delta nu) (b!)^mu.
    """
    premise = np.asarray(premise, dtype=float)
    conclusion = np.asarray(conclusion, dtype=float)
    a = np.arange(premise.shape[0])[:, None]
    b = np.arange(premise.shape[1])[None, :]
    lhs = np.log(premise)
    bound = math.log(C) + (a + b) * math.log(A) + nu * log_factorial(a) + mu * log_factorial(b)
    if np.any(lhs > bound + rtol * np.abs(bound) + rtol):
        return LemmaReport(INCONCLUSIVE, False, float(np.max(lhs - bound)), "premise violated by the table")
    p = np.arange(conclusion.shape[0])[:, None]
    bb = np.arange(conclusion.shape[1])[None, :]
    if kind == "croch":
        rhs = (math.log(C) + 0.5 * p * math.log(dim + 1) + (p + bb) * math.log(A)
               + nu * log_factorial(p) + mu * log_factorial(bb))
    elif kind == "interpolation":
        rhs = (math.log(C) + (p + bb) * (math.log(A) + nu * math.log(8 * math.e))
               + delta * nu * log_factorial(p) + mu * log_factorial(bb))
    else:
        raise ValueError(f"unknown lemma {kind!r}")
    margin = float(np.max(np.log(conclusion) - rhs))
    ok = margin <= rtol * float(np.max(np.abs(rhs))) + rtol
    return LemmaReport(PASS if ok else FAIL, True, margin)


def moment_table(coeffs, a_max: int, b_max: int, kind: str = "monomial", delta: float = 1.0,
                 window: float | None = None) -> np.ndarray:
    """Table of ||x^a d^b f|| (``monomial``), ||<x>^a d^b f|| (``bracket``) or, by
    quadrature, ||<x>^(delta a) d^b f|| (``fractional``)."""
    c = np.asarray(coeffs, dtype=float).reshape(-1, 1)
    out = np.zeros((a_max + 1, b_max + 1))
    for a in range(a_max + 1):
        for b in range(b_max + 1):
            if kind == "monomial":
                out[a, b] = monomial_norm(c, a, b)
            elif kind == "bracket":
                out[a, b] = weighted_norm(c, a, b)
            elif kind == "fractional":
                L = basis_extent(c.shape[0] + b) + 2 * a if window is None else window
                form = quadrature_form(c, b, lambda x: delta * a * np.log1p(x ** 2), L)
                out[a, b] = math.sqrt(float(form[0, 0]))
            else:
                raise ValueError(kind)
    return out


@dataclass
class GSProfile:
    eps: np.ndarray
    partial_sums: np.ndarray  # shape (eps, modes)
    saturated: np.ndarray


def gs_coefficient_profile(basis: EigenBasis, coeffs, t: float, eps_grid, rtol: float = 1e-6) -> GSProfile:
    """Partial sums of sum_n |<f, psi_n>|^2 exp(eps lambda_n^((k+m)/(2kmt))).

    A series counts as saturated when its value changes by less than ``rtol``
    relative between the first M/1.2 modes and all M modes.
    """
    if t < 1:
        raise DomainError("t must be >= 1")
    k, m = basis.params.k, basis.params.m
    c = np.asarray(coeffs, dtype=float)
    lam = basis.eigenvalues[: c.size]
    expo = lam ** ((k + m) / (2 * k * m * t))
    eps_grid = np.atleast_1d(np.asarray(eps_grid, dtype=float))
    with np.errstate(over="ignore"):
        terms = c[None, :] ** 2 * np.exp(np.outer(eps_grid, expo))
    sums = np.cumsum(terms, axis=1)
    base = max(1, int(round(c.size / 1.2))) - 1
    with np.errstate(invalid="ignore"):
        sat = np.isfinite(sums[:, -1]) & (np.abs(sums[:, -1] - sums[:, base]) <= rtol * np.abs(sums[:, -1]))
    return GSProfile(eps_grid, sums, sat)

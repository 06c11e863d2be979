"""Spectral inequality constants C_lambda(omega) from Gram matrices on the control region.

For f in the span of the eigenfunctions with lambda_n <= lambda, the ratio
||f||_{L^2(R)} / ||f||_{L^2(omega)} is a Rayleigh quotient of the Gram matrix
G_ij = int_omega psi_i psi_j, so its supremum is lambda_min(G)^(-1/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .geometry import LineRegion
from .operator import EigenBasis, ShubinParams, eigenbasis, hermite_functions
from .quadrature import QuadratureSpec, composite_rule

FIT_PASS, FIT_FAIL, FIT_INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"


class SingularRegionError(ValueError):
    """The region meets the window in a null set; L^2(omega) is not a norm on E_lambda."""


class IllConditionedError(ArithmeticError):
    pass


class MonotonicityError(ArithmeticError):
    """C_lambda decreased along nested subspaces: quadrature or truncation fault."""


def basis_extent(n_modes: int) -> float:
    """Half-width beyond which Phi_0..Phi_{n-1} are below ~1e-16."""
    return math.sqrt(2 * n_modes + 1) + 8.0


@dataclass(frozen=True)
class SpectralSubspace:
    basis: EigenBasis
    lam: float
    indices: np.ndarray

    @classmethod
    def below(cls, basis: EigenBasis, lam: float) -> "SpectralSubspace":
        return cls(basis, float(lam), basis.indices_below(lam))

    @classmethod
    def first(cls, basis: EigenBasis, count: int) -> "SpectralSubspace":
        return cls(basis, float(basis.eigenvalues[count - 1]), np.arange(count))

    @property
    def dim(self) -> int:
        return len(self.indices)

    def vectors(self) -> np.ndarray:
        return self.basis.vectors[:, self.indices]


@dataclass(frozen=True)
class GramOnRegion:
    """G = F^T F with F upper triangular; ``factor`` is kept because lambda_min(G)
    is resolved far more accurately as sigma_min(F)^2 than from G itself."""

    matrix: np.ndarray
    factor: np.ndarray | None
    quadrature: dict
    subspace: SpectralSubspace

    def leading(self, count: int) -> "GramOnRegion":
        """Gram of the first ``count`` subspace vectors (nested subspaces share the factor)."""
        f = None if self.factor is None else self.factor[:count, :count]
        sub = SpectralSubspace(self.subspace.basis, float(self.subspace.basis.eigenvalues[self.subspace.indices[count - 1]]),
                               self.subspace.indices[:count])
        return GramOnRegion(self.matrix[:count, :count], f, self.quadrature, sub)


def _region_samples(region: LineRegion, n_modes: int, quad: QuadratureSpec, window: float | None,
                    min_nodes: int = 0):
    L = basis_extent(n_modes) if window is None else window
    L = min(L, region.clip)
    pieces = region.intersect(-L, L)
    if sum(b - a for a, b in pieces) <= 0:
        raise SingularRegionError(
            "region has zero measure inside the quadrature window; spectral constants need |omega| > 0"
        )
    x, w = composite_rule(pieces, quad)
    # short regions: split panels until the rule cannot be rank-deficient on the subspace
    while len(x) < min_nodes:
        quad = QuadratureSpec(quad.order, quad.panel / 2)
        x, w = composite_rule(pieces, quad)
    return L, x, w, quad


def hermite_gram(region: LineRegion, n_modes: int, quad: QuadratureSpec = QuadratureSpec(),
                 window: float | None = None) -> np.ndarray:
    """int_{omega cap [-L, L]} Phi_a Phi_b for a, b < n_modes."""
    _, x, w, _ = _region_samples(region, n_modes, quad, window)
    phi = hermite_functions(n_modes, x)
    g = (phi * w[:, None]).T @ phi
    return (g + g.T) / 2


def gram_on_region(basis: EigenBasis, subspace: SpectralSubspace, region: LineRegion,
                   quad: QuadratureSpec = QuadratureSpec(), window: float | None = None) -> GramOnRegion:
    L, x, w, quad = _region_samples(region, basis.n, quad, window, min_nodes=2 * subspace.dim)
    v = subspace.vectors()[: basis.n]
    a = np.sqrt(w)[:, None] * (hermite_functions(basis.n, x) @ v)
    if a.shape[0] >= a.shape[1]:
        r = linalg.qr(a, mode="r")[0][: a.shape[1]]
    else:
        r = None
    g = a.T @ a
    g = (g + g.T) / 2
    return GramOnRegion(g, r, dict(quad.to_dict(), window=L), subspace)


@dataclass
class ConstantResult:
    C: float
    extremal: np.ndarray
    min_eig: float
    cond: float


def spectral_constant(G) -> ConstantResult:
    """C = lambda_min(G)^(-1/2) and the unit coefficient vector attaining it.

    Given a :class:`GramOnRegion` with a factor, the smallest singular value of
    the factor is used; a bare matrix goes through a symmetric eigensolve.
    """
    eps = np.finfo(float).eps
    if isinstance(G, GramOnRegion) and G.factor is not None:
        _, sv, vt = linalg.svd(G.factor)
        lo, hi, vec = sv[-1] ** 2, sv[0] ** 2, vt[-1]
        if sv[-1] <= 1e3 * eps * sv[0] * G.factor.shape[0]:
            raise IllConditionedError(f"smallest singular value {sv[-1]:.3e} of the Gram factor is at rounding level")
    else:
        g = G.matrix if isinstance(G, GramOnRegion) else np.asarray(G, dtype=float)
        w, v = linalg.eigh(g)
        lo, hi, vec = w[0], w[-1], v[:, 0]
        if lo <= 1e3 * eps * g.shape[0]:
            raise IllConditionedError(f"smallest Gram eigenvalue {lo:.3e} is at rounding level")
    nz = np.flatnonzero(np.abs(vec) > 1e-12)
    if nz.size and vec[nz[0]] < 0:
        vec = -vec
    return ConstantResult(max(1.0, lo ** -0.5), vec, float(lo), float(hi / lo))


@dataclass
class ConstantSeries:
    params: ShubinParams
    region_id: str
    lam: np.ndarray
    C: np.ndarray
    n_modes: np.ndarray
    cond: np.ndarray
    quadrature: dict
    reliability_index: int
    truncated_at: float | None = None

    @property
    def log_C(self) -> np.ndarray:
        return np.log(self.C)

    def rows(self):
        for lam, c, n, k in zip(self.lam, self.C, self.n_modes, self.cond):
            yield {"lambda": lam, "C": c, "log_C": math.log(c), "n_modes": int(n), "cond_G": k}


def constant_sweep(params: ShubinParams, region: LineRegion, lam_grid, *, n: int = 256,
                   basis: EigenBasis | None = None, quad: QuadratureSpec = QuadratureSpec(),
                   stop_on_ill_conditioned: bool = False, check_reliable: bool = True) -> ConstantSeries:
    """C_lambda(omega) along ``lam_grid``.

    With ``stop_on_ill_conditioned`` the series ends at the last lambda whose Gram
    matrix is resolvable in double precision instead of raising.
    """
    basis = basis or eigenbasis(params, n)
    lam_grid = np.sort(np.asarray(lam_grid, dtype=float))
    if check_reliable:
        top = basis.reliable_max_eigenvalue
        if lam_grid[-1] > top * (1 + 1e-12):
            raise ValueError(f"lambda grid reaches {lam_grid[-1]:.6g}; reliable range ends at {top:.6g}")
    full = gram_on_region(basis, SpectralSubspace.below(basis, lam_grid[-1]), region, quad)
    Cs, ns, conds, lams = [], [], [], []
    truncated = None
    for lam in lam_grid:
        idx = basis.indices_below(lam)
        if idx.size == 0:
            continue
        try:
            res = spectral_constant(full.leading(idx.size))
        except IllConditionedError:
            if not stop_on_ill_conditioned:
                raise
            truncated = float(lam)
            break
        lams.append(lam)
        Cs.append(res.C)
        ns.append(idx.size)
        conds.append(res.cond)
    Cs = np.asarray(Cs)
    # sigma_min of the factor is resolved to ~eps*dim absolutely, i.e. C to ~eps*dim*C relatively
    slack = 1e-9 + 10 * np.finfo(float).eps * np.asarray(ns[1:]) * Cs[1:]
    drops = np.flatnonzero(np.diff(Cs) < -slack * Cs[1:])
    if drops.size:
        bad = int(drops[0])
        raise MonotonicityError(f"C_lambda decreased between lambda={lams[bad]:.6g} and {lams[bad + 1]:.6g}")
    quad_info = dict(full.quadrature)
    if lams:
        # the window is a turning-point bound; confirm it by doubling.  Above C ~ 1e6 rounding
        # (~eps * dim * C) would swamp any tail mass, so the check runs at the last lambda below that.
        j = max(0, int(np.searchsorted(Cs, 1e6, side="right")) - 1)
        wide = gram_on_region(basis, SpectralSubspace.below(basis, lams[j]), region, quad,
                              window=2 * quad_info["window"])
        quad_info["window_doubling_lambda"] = float(lams[j])
        quad_info["window_doubling_change"] = abs(spectral_constant(wide).C / Cs[j] - 1)
    return ConstantSeries(params, region.name, np.asarray(lams), Cs, np.asarray(ns), np.asarray(conds),
                          quad_info, basis.reliability_index(), truncated)


def theoretical_exponent(params: ShubinParams, delta: float) -> float:
    """Growth exponent (delta/k + 1/m) / 2 of log C_lambda for delta-weakly thick sets."""
    return 0.5 * (delta / params.k + 1.0 / params.m)


@dataclass
class ExponentFit:
    e_fit: float
    K_fit: float
    residual: float
    verdict: str
    normalized: np.ndarray
    tail_max: float
    median: float


def fit_exponent(lam, C, e_theory: float, log_factor: bool = False, min_points: int = 8) -> ExponentFit:
    """Fit log log C = log K + e log lambda and test boundedness of log C / lambda^e_theory.

    With ``log_factor`` the normalisation also divides by |log lambda|.  The
    verdict is PASS when the max over the last third of the normalised series is
    at most twice its median; too few points with C >= 2 give INCONCLUSIVE.
    """
    lam = np.asarray(lam, dtype=float)
    C = np.asarray(C, dtype=float)
    norm = np.log(C) / lam ** e_theory
    if log_factor:
        with np.errstate(divide="ignore"):  # lambda = 1 is excluded from the fit below
            norm = norm / np.abs(np.log(lam))
    usable = C >= 2
    if log_factor:
        usable &= np.abs(np.log(lam)) > 0.1
    if usable.sum() < min_points:
        return ExponentFit(math.nan, math.nan, math.nan, FIT_INCONCLUSIVE, norm, math.nan, math.nan)
    xl, yl = np.log(lam[usable]), np.log(np.log(C[usable]))
    A = np.column_stack([xl, np.ones_like(xl)])
    (e_fit, logK), res, *_ = np.linalg.lstsq(A, yl, rcond=None)
    resid = float(np.sqrt(np.mean((A @ [e_fit, logK] - yl) ** 2)))
    series = norm[usable]
    tail = series[len(series) - max(1, len(series) // 3):]
    tail_max, med = float(tail.max()), float(np.median(series))
    verdict = FIT_PASS if tail_max <= 2 * med else FIT_FAIL
    return ExponentFit(float(e_fit), float(math.exp(logK)), resid, verdict, norm, tail_max, med)

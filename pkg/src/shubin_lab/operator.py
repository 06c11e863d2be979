"""Anisotropic Shubin operators ``(-d^2/dx^2)^m + x^(2k)`` in the Hermite-function basis.

The Hermite functions diagonalise the harmonic oscillator, and both the position
operator and the second derivative are exactly banded in that basis.  Operator
powers are formed on a padded basis and then truncated, so the retained block is
the exact Galerkin matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

PI_QUARTER = np.pi ** -0.25


class SizingError(ValueError):
    """Truncation too small for the requested operator, weight or derivative."""


class TruncationError(ValueError):
    """Requested eigenpairs lie outside the reliable part of the discrete spectrum."""


@dataclass(frozen=True)
class ShubinParams:
    k: int
    m: int
    s: float = 1.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        if not self.s > 0:
            raise ValueError(f"s must be positive, got {self.s}")

    @property
    def s_star(self) -> float:
        """Critical diffusion exponent (1/k + 1/m) / 2."""
        return 0.5 * (1.0 / self.k + 1.0 / self.m)

    def padded_size(self, n: int) -> int:
        return n + 2 * self.k + 2 * self.m + 4


def hermite_position_matrix(n_pad: int) -> np.ndarray:
    if n_pad < 2:
        raise SizingError("position matrix needs at least two modes")
    off = np.sqrt(np.arange(1, n_pad) / 2.0)
    return np.diag(off, 1) + np.diag(off, -1)


def _second_order(n_pad: int, sign: float) -> np.ndarray:
    # x^2 (sign=+1) or -d^2/dx^2 (sign=-1): diagonal (2n+1)/2, offset +-2 band
    n = np.arange(n_pad, dtype=float)
    band = sign * np.sqrt((n[:-2] + 1) * (n[:-2] + 2)) / 2.0
    return np.diag((2 * n + 1) / 2.0) + np.diag(band, 2) + np.diag(band, -2)


def position_squared_matrix(n_pad: int) -> np.ndarray:
    return _second_order(n_pad, 1.0)


def momentum_squared_matrix(n_pad: int) -> np.ndarray:
    return _second_order(n_pad, -1.0)


def derivative_matrix(n_pad: int) -> np.ndarray:
    """d/dx on Hermite coefficients: dPhi_n = sqrt(n/2) Phi_{n-1} - sqrt((n+1)/2) Phi_{n+1}."""
    off = np.sqrt(np.arange(1, n_pad) / 2.0)
    return np.diag(off, 1) - np.diag(off, -1)


def build_hamiltonian(params: ShubinParams, n: int) -> np.ndarray:
    if n < 4 * (params.k + params.m):
        raise SizingError(
            f"N={n} too small for k={params.k}, m={params.m}; need N >= {4 * (params.k + params.m)}"
        )
    n_pad = params.padded_size(n)
    p2 = momentum_squared_matrix(n_pad)
    x2 = position_squared_matrix(n_pad)
    h = np.linalg.matrix_power(p2, params.m) + np.linalg.matrix_power(x2, params.k)
    h = h[:n, :n]
    # products of symmetric banded matrices are symmetric only up to rounding
    h = np.triu(h) + np.triu(h, 1).T
    return h


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for j in range(out.shape[1]):
        nz = np.flatnonzero(np.abs(out[:, j]) > 1e-12)
        if nz.size and out[nz[0], j] < 0:
            out[:, j] = -out[:, j]
    return out


def _parity_eigh(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Diagonalise the even and odd index blocks separately and merge by eigenvalue."""
    n = h.shape[0]
    vals, vecs = [], []
    for start in (0, 1):
        idx = np.arange(start, n, 2)
        w, v = linalg.eigh(h[np.ix_(idx, idx)])
        full = np.zeros((n, len(w)))
        full[idx, :] = v
        vals.append(w)
        vecs.append(full)
    w = np.concatenate(vals)
    v = np.concatenate(vecs, axis=1)
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Lowest eigenpairs of a truncated ``H_{k,m}``.

    ``vectors`` holds one column per eigenfunction, expressed in ``n_pad`` Hermite
    coefficients (rows beyond ``n`` are zero).
    """

    params: ShubinParams
    n: int
    n_pad: int
    eigenvalues: np.ndarray
    vectors: np.ndarray
    _reliable: list = field(default_factory=list, repr=False)

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def powered(self) -> np.ndarray:
        """Eigenvalues of the fractional power ``H^s``."""
        return self.eigenvalues ** self.params.s

    def indices_below(self, lam: float) -> np.ndarray:
        return np.flatnonzero(self.eigenvalues <= lam)

    def to_hermite(self, coeffs: np.ndarray) -> np.ndarray:
        """Eigenbasis coefficients (length <= count) to padded Hermite coefficients."""
        coeffs = np.asarray(coeffs)
        return self.vectors[:, : coeffs.shape[0]] @ coeffs

    def reliability_index(self) -> int:
        """Largest n such that every lambda_j, j <= n, moves by < 1e-8 relative when N grows 25%."""
        if not self._reliable:
            bigger = int(np.ceil(1.25 * self.n))
            w, _ = _parity_eigh(build_hamiltonian(self.params, bigger))
            w = w[: self.count]
            rel = np.abs(w - self.eigenvalues) / np.abs(w)
            bad = np.flatnonzero(rel >= 1e-8)
            self._reliable.append(int(bad[0]) - 1 if bad.size else self.count - 1)
        return self._reliable[0]

    @cached_property
    def reliable_max_eigenvalue(self) -> float:
        r = self.reliability_index()
        return float(self.eigenvalues[r]) if r >= 0 else 0.0


def eigenbasis(params: ShubinParams, n: int, count: int | None = None, lam_max: float | None = None) -> EigenBasis:
    """Solve the truncated eigenproblem.

    At most ``n // 2`` eigenpairs are returned; the upper half of the discrete
    spectrum is polluted by truncation.  ``count`` and ``lam_max`` select the
    number of modes; with neither, ``n // 2`` are kept.
    """
    h = build_hamiltonian(params, n)
    w, v = _parity_eigh(h)
    limit = n // 2
    if lam_max is not None:
        count = int(np.count_nonzero(w <= lam_max))
        if count > limit:
            raise TruncationError(
                f"lambda_max={lam_max} selects {count} modes but only {limit} are exposed at N={n}; "
                f"largest exposed eigenvalue is {w[limit - 1]:.6g}"
            )
    if count is None:
        count = limit
    if count > limit:
        raise TruncationError(f"requested {count} modes but only {limit} are exposed at N={n}")
    n_pad = params.padded_size(n)
    vecs = np.zeros((n_pad, count))
    vecs[:n] = _sign_fix(v[:, :count])
    return EigenBasis(params, n, n_pad, w[:count].copy(), vecs)


def hermite_functions(nmax: int, x) -> np.ndarray:
    """Values of Phi_0 .. Phi_{nmax-1} at ``x``, shape ``(len(x), nmax)``.

    The three-term recurrence runs on a rescaled copy; the Gaussian factor is
    carried as a per-point log scale so that large ``|x|`` neither underflows
    the seed nor overflows the polynomial growth.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros((x.size, nmax))
    if nmax == 0:
        return out
    logscale = -0.5 * x ** 2
    prev = np.zeros_like(x)
    cur = np.full_like(x, PI_QUARTER)
    out[:, 0] = cur * np.exp(logscale)
    for n in range(1, nmax):
        nxt = np.sqrt(2.0 / n) * x * cur - np.sqrt((n - 1) / n) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > 1e100
        if big.any():
            cur[big] *= 1e-100
            prev[big] *= 1e-100
            logscale[big] += 100 * np.log(10.0)
        out[:, n] = cur * np.exp(logscale)
    return out


def evaluate(coeffs, grid) -> np.ndarray:
    """Evaluate ``sum_n c_n Phi_n`` on ``grid``; ``coeffs`` may be a matrix of columns."""
    coeffs = np.asarray(coeffs, dtype=float)
    phi = hermite_functions(coeffs.shape[0], grid)
    return phi @ coeffs


def derivative_coeffs(coeffs, order: int = 1) -> np.ndarray:
    """Hermite coefficients of the ``order``-th derivative.

    The input must already carry ``order`` trailing padding slots; the ladder
    rule raises the top index by one per derivative.
    """
    c = np.asarray(coeffs, dtype=float)
    if order == 0:
        return c.copy()
    top = np.flatnonzero(np.abs(c).reshape(c.shape[0], -1).max(axis=1) > 0)
    if top.size and top[-1] + order >= c.shape[0]:
        raise SizingError(f"need {top[-1] + order + 1} coefficients for derivative order {order}, have {c.shape[0]}")
    d = derivative_matrix(c.shape[0])
    for _ in range(order):
        c = d @ c
    return c

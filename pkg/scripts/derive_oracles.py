"""Recompute the reference numbers frozen into the test-suite.

Every value here comes from a method that shares no code with the package:
finite differences with Richardson extrapolation for eigenvalues, and NumPy's
Hermite polynomial module on a fine uniform grid for region integrals.

    python scripts/derive_oracles.py
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import hermite as H
from scipy import linalg


def fd_eigenvalues(k: int, m: int, L: float, h: float, count: int = 4) -> np.ndarray:
    """Lowest eigenvalues of (-d^2/dx^2)^m + x^(2k) with central differences on [-L, L], Dirichlet ends."""
    x = np.arange(-L + h, L, h)
    n = x.size
    if m == 1:
        d = 2 / h ** 2 + x ** (2 * k)
        e = -np.ones(n - 1) / h ** 2
        return linalg.eigh_tridiagonal(d, e, select="i", select_range=(0, count - 1))[0]
    if m == 2:
        # banded upper form for eig_banded: rows are superdiagonals 2, 1 and the diagonal
        ab = np.zeros((3, n))
        ab[0, 2:] = 1 / h ** 4
        ab[1, 1:] = -4 / h ** 4
        ab[2] = 6 / h ** 4 + x ** (2 * k)
        return linalg.eig_banded(ab, select="i", select_range=(0, count - 1), eigvals_only=True)
    raise ValueError("m must be 1 or 2")


def richardson(k: int, m: int, L: float, h: float, count: int = 4) -> np.ndarray:
    """Two Richardson sweeps on an O(h^2) scheme (h, h/2, h/4)."""
    a, b, c = (fd_eigenvalues(k, m, L, h / 2 ** i, count) for i in range(3))
    ab, bc = (4 * b - a) / 3, (4 * c - b) / 3
    return (16 * bc - ab) / 15


def hermite_function_values(n: int, x: np.ndarray) -> np.ndarray:
    """Phi_n(x) = (2^n n! sqrt(pi))^(-1/2) H_n(x) e^(-x^2/2), built from NumPy's hermval (n <= ~40)."""
    c = np.zeros(n + 1)
    c[n] = 1
    norm = math.exp(-0.5 * (n * math.log(2) + math.lgamma(n + 1) + 0.5 * math.log(math.pi)))
    return norm * H.hermval(x, c) * np.exp(-x ** 2 / 2)


def simpson_gram(intervals, nmodes: int, pts: int = 20001) -> np.ndarray:
    """int_omega Phi_a Phi_b by composite Simpson on each interval."""
    from scipy.integrate import simpson

    G = np.zeros((nmodes, nmodes))
    for a, b in intervals:
        x = np.linspace(a, b, pts)
        phi = np.array([hermite_function_values(j, x) for j in range(nmodes)])
        for i in range(nmodes):
            for j in range(i, nmodes):
                G[i, j] += simpson(phi[i] * phi[j], x=x)
    return np.triu(G) + np.triu(G, 1).T


def main():
    np.set_printoptions(precision=15)
    print("(-d2)+x^4      ", richardson(2, 1, 6.0, 0.02))
    print("(-d2)^2+x^2    ", richardson(1, 2, 12.0, 0.04))
    print("(-d2)^2+x^4    ", richardson(2, 2, 8.0, 0.04))
    print("(-d2)+x^2      ", richardson(1, 1, 10.0, 0.02))
    # harmonic Gram on [0, 1] for the first six Hermite functions; min eigenvalue gives C^-2
    G = simpson_gram([(0.0, 1.0)], 6)
    w = np.linalg.eigvalsh(G)
    print("harmonic C on [0,1], 6 modes:", w[0] ** -0.5)
    G = simpson_gram([(0.0, 12.0)], 10)
    print("harmonic C on [0,inf), 10 modes:", np.linalg.eigvalsh(G)[0] ** -0.5)
    iv = [(float(n), n + 0.5) for n in range(0, 12)] + [(-n - 0.5, float(-n)) for n in range(0, 12)]
    G = simpson_gram(iv, 10, 2001)
    print("harmonic C on omega_0, 10 modes:", np.linalg.eigvalsh(G)[0] ** -0.5)


if __name__ == "__main__":
    main()

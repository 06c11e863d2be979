"""Reference computations that share no numerical path with the package."""

import math

import numpy as np
from numpy.polynomial import hermite as H
from scipy import optimize
from scipy.integrate import simpson


def hermite_function(n, x):
    c = np.zeros(n + 1)
    c[n] = 1
    norm = math.exp(-0.5 * (n * math.log(2) + math.lgamma(n + 1) + 0.5 * math.log(math.pi)))
    return norm * H.hermval(x, c) * np.exp(-x ** 2 / 2)


def eigenfunction_values(coeffs, x, cut=1e-13):
    """sum_n c_n Phi_n(x) with NumPy Hermite polynomials, dropping coefficients at rounding level."""
    keep = np.flatnonzero(np.abs(coeffs) > cut)
    return sum(coeffs[n] * hermite_function(n, x) for n in keep)


def region_gram(vectors, intervals, window=14.0, pts=4001):
    """Simpson Gram matrix of the columns of ``vectors`` over ``intervals`` cut to [-window, window]."""
    d = vectors.shape[1]
    G = np.zeros((d, d))
    for a, b in intervals:
        a, b = max(a, -window), min(b, window)
        if b <= a:
            continue
        x = np.linspace(a, b, pts)
        f = np.array([eigenfunction_values(vectors[:, j], x) for j in range(d)])
        G += np.array([[simpson(f[i] * f[j], x=x) for j in range(d)] for i in range(d)])
    return G


def random_search_constant(vectors, intervals, seed=0, samples=4000):
    """sup ||f|| / ||f||_omega over span(vectors) by random search on the sphere plus Nelder-Mead."""
    d = vectors.shape[1]
    G_full = region_gram(vectors, [(-14.0, 14.0)])
    G = region_gram(vectors, intervals)
    ratio = lambda c: (c @ G_full @ c) / (c @ G @ c)
    rng = np.random.default_rng(seed)
    cands = rng.standard_normal((samples, d))
    best = max(cands, key=ratio)
    res = optimize.minimize(lambda c: -ratio(c / np.linalg.norm(c)), best / np.linalg.norm(best),
                            method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
    return math.sqrt(-res.fun)

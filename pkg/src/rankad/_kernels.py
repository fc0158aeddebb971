"""Compiled inner loops for the rank-SVM dual solver and RBF evaluation.

Every loop runs in a fixed order so results are bit-reproducible.
"""

import math

import numba
import numpy as np


@numba.njit(cache=True)
def gram_matrix(X, sigma):
    n, d = X.shape
    inv = 1.0 / (sigma * sigma)
    K = np.empty((n, n))
    for a in range(n):
        K[a, a] = 1.0
        for b in range(a + 1, n):
            s = 0.0
            for c in range(d):
                t = X[a, c] - X[b, c]
                s += t * t
            v = math.exp(-s * inv)
            K[a, b] = v
            K[b, a] = v
    return K


@numba.njit(cache=True)
def rbf_expansion(centers, beta, sigma, X):
    """sum_u beta[u] * exp(-|centers[u] - x|^2 / sigma^2) for every row x."""
    m, d = X.shape
    inv = 1.0 / (sigma * sigma)
    out = np.empty(m)
    for r in range(m):
        acc = 0.0
        for u in range(centers.shape[0]):
            s = 0.0
            for c in range(d):
                t = centers[u, c] - X[r, c]
                s += t * t
            acc += beta[u] * math.exp(-s * inv)
        out[r] = acc
    return out


@numba.njit(cache=True)
def _residual(grad, a, C):
    if a <= 0.0:
        return grad if grad > 0.0 else 0.0
    if a >= C:
        return -grad if grad < 0.0 else 0.0
    return abs(grad)


@numba.njit(cache=True)
def cd_pass_gram(K, I, J, alpha, g, C, qdiag, order):
    """One coordinate-ascent sweep over pairs in ``order`` using a cached Gram matrix.

    Returns the largest KKT residual met before each update.
    """
    n = K.shape[0]
    worst = 0.0
    for t in order:
        i = I[t]
        j = J[t]
        grad = 1.0 - (g[i] - g[j])
        a = alpha[t]
        r = _residual(grad, a, C)
        if r > worst:
            worst = r
        if r == 0.0:
            continue
        new = a + grad / qdiag[t]
        if new < 0.0:
            new = 0.0
        elif new > C:
            new = C
        delta = new - a
        if delta == 0.0:
            continue
        alpha[t] = new
        Ki = K[i]
        Kj = K[j]
        for u in range(n):
            g[u] += delta * (Ki[u] - Kj[u])
    return worst


@numba.njit(cache=True)
def cd_pass_stream(X, sigma, I, J, alpha, g, C, qdiag, order):
    """Same sweep as :func:`cd_pass_gram`, recomputing kernel rows on the fly."""
    n, d = X.shape
    inv = 1.0 / (sigma * sigma)
    worst = 0.0
    for t in order:
        i = I[t]
        j = J[t]
        grad = 1.0 - (g[i] - g[j])
        a = alpha[t]
        r = _residual(grad, a, C)
        if r > worst:
            worst = r
        if r == 0.0:
            continue
        new = a + grad / qdiag[t]
        if new < 0.0:
            new = 0.0
        elif new > C:
            new = C
        delta = new - a
        if delta == 0.0:
            continue
        alpha[t] = new
        for u in range(n):
            si = 0.0
            sj = 0.0
            for c in range(d):
                ti = X[i, c] - X[u, c]
                tj = X[j, c] - X[u, c]
                si += ti * ti
                sj += tj * tj
            g[u] += delta * (math.exp(-si * inv) - math.exp(-sj * inv))
    return worst


@numba.njit(cache=True)
def max_residual(I, J, alpha, g, C):
    worst = 0.0
    for t in range(I.shape[0]):
        r = _residual(1.0 - (g[I[t]] - g[J[t]]), alpha[t], C)
        if r > worst:
            worst = r
    return worst


def point_coefficients(I, J, alpha, n):
    """Collapse pair multipliers onto training points."""
    beta = np.zeros(n)
    np.add.at(beta, I, alpha)
    np.subtract.at(beta, J, alpha)
    return beta

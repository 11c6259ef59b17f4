"""Deliberately naive reference implementations used as test oracles.

Everything here trades efficiency for obviousness (double loops,
materialized centering matrices) and stays independent of the library's
computation paths.
"""

import numpy as np


def naive_gram(x):
    n = x.shape[0]
    k = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            k[i, j] = float(np.dot(x[i], x[j]))
    return k


def centering_matrix(n):
    return np.eye(n) - np.ones((n, n)) / n


def naive_hsic_biased(k, l):
    n = k.shape[0]
    h = centering_matrix(n)
    return float(np.trace(k @ h @ l @ h)) / (n - 1) ** 2


def naive_linear_cka(x, y):
    """Normalized alignment of centered Gram matrices, straight from the
    definition with H materialized."""
    x = x - x.mean(axis=0)
    y = y - y.mean(axis=0)
    k = x @ x.T
    l = y @ y.T
    hxy = naive_hsic_biased(k, l)
    hxx = naive_hsic_biased(k, k)
    hyy = naive_hsic_biased(l, l)
    return hxy / np.sqrt(hxx * hyy)


def double_sum_linear_hsic(x, y):
    """Sum_ij <x_i, x_j> <y_j, y_i> / (n - 1)^2 on centered data."""
    n = x.shape[0]
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += float(np.dot(x[i], x[j])) * float(np.dot(y[j], y[i]))
    return total / (n - 1) ** 2


def naive_hsic_unbiased(k, l):
    """Term-by-term scalar evaluation of the zeroed-diagonal estimator."""
    n = k.shape[0]
    kt = k.copy()
    lt = l.copy()
    for i in range(n):
        kt[i, i] = 0.0
        lt[i, i] = 0.0
    trace_term = 0.0
    for i in range(n):
        for j in range(n):
            trace_term += kt[i, j] * lt[i, j]
    sum_k = sum(kt[i, j] for i in range(n) for j in range(n))
    sum_l = sum(lt[i, j] for i in range(n) for j in range(n))
    middle = sum_k * sum_l / ((n - 1) * (n - 2))
    cross = 0.0
    for i in range(n):
        row_k = sum(kt[i, j] for j in range(n))
        row_l = sum(lt[i, j] for j in range(n))
        cross += row_k * row_l
    return (trace_term + middle - 2.0 * cross / (n - 2)) / (n * (n - 3))


def naive_median_distance(x):
    n = x.shape[0]
    dists = []
    for i in range(n):
        for j in range(i + 1, n):
            dists.append(float(np.linalg.norm(x[i] - x[j])))
    dists.sort()
    m = len(dists)
    if m % 2 == 1:
        return dists[m // 2]
    return 0.5 * (dists[m // 2 - 1] + dists[m // 2])


def central_difference_gradient(f, y, step=1e-5):
    """Entrywise central finite differences of a scalar function of a matrix."""
    grad = np.zeros_like(y)
    for i in range(y.shape[0]):
        for j in range(y.shape[1]):
            plus = y.copy()
            plus[i, j] += step
            minus = y.copy()
            minus[i, j] -= step
            grad[i, j] = (f(plus) - f(minus)) / (2 * step)
    return grad


def random_orthogonal(p, rng):
    q, r = np.linalg.qr(rng.standard_normal((p, p)))
    return q * np.sign(np.diag(r))


def random_permutation_matrix(p, rng):
    perm = rng.permutation(p)
    m = np.zeros((p, p))
    m[np.arange(p), perm] = 1.0
    return m

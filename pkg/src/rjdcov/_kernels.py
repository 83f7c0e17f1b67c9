"""Compiled inner loops for the permuted-grid statistic.

The hot path of both the observed statistic and every null draw is

    sum_{a,b} sum_s C_s e_s(E_1[p1 a, p1 b], ..., E_r[pr a, pr b])

where ``e_s`` is the elementary symmetric polynomial of degree ``s`` (so the
inner sum equals ``sum_{|S|=s} prod_{i in S}``). The loops run in a fixed
sequential order, which keeps results bitwise reproducible.
"""
from __future__ import annotations

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def esym_weighted_sum_numpy(mats, rhos, coef):
    """Reference implementation; same contract as the compiled kernel."""
    r = mats.shape[0]
    e = [np.ones(mats.shape[1:])] + [np.zeros(mats.shape[1:]) for _ in range(r)]
    for i in range(r):
        rho = rhos[i]
        x = mats[i][np.ix_(rho, rho)]
        for k in range(i + 1, 0, -1):
            e[k] = e[k] + e[k - 1] * x
    total = np.zeros(mats.shape[1:])
    for s in range(2, r + 1):
        if coef[s] != 0.0:
            total = total + coef[s] * e[s]
    return float(np.sum(total))


def _esym_weighted_sum_py(mats, rhos, coef):
    # Row a of the upper triangle is processed as one vector over b >= a;
    # the gathered row of each block fits in cache.
    r = mats.shape[0]
    n = mats.shape[1]
    e = np.empty((r + 1, n))
    x = np.empty(n)
    acc = 0.0
    for a in range(n):
        m = n - a
        for b in range(m):
            e[0, b] = 1.0
        for k in range(1, r + 1):
            for b in range(m):
                e[k, b] = 0.0
        for i in range(r):
            row = mats[i, rhos[i, a]]
            rho = rhos[i]
            for b in range(m):
                x[b] = row[rho[a + b]]
            for k in range(i + 1, 0, -1):
                for b in range(m):
                    e[k, b] += e[k - 1, b] * x[b]
        rowsum = 0.0
        for b in range(m):
            v = 0.0
            for s in range(2, r + 1):
                v += coef[s] * e[s, b]
            if b == 0:
                rowsum += v
            else:
                rowsum += 2.0 * v
        acc += rowsum
    return acc


if numba is not None:
    esym_weighted_sum = numba.njit(cache=True, nogil=True)(_esym_weighted_sum_py)
else:  # pragma: no cover
    esym_weighted_sum = esym_weighted_sum_numpy


def _logistic_ica_py(y, h, c, scale, want_grad):
    # Smoothed-CDF product statistic of the columns of y and its gradient
    # with respect to y, for the kernel G(x) = expit(scale * x), which
    # satisfies G(-x) = 1 - G(x) and has an even derivative.
    n, r = y.shape
    u = np.zeros((r, n))
    gp = np.empty((r, n, n))
    for i in range(r):
        for a in range(n):
            u[i, a] += 0.5
            gp[i, a, a] = 0.25 * scale
            for v in range(a + 1, n):
                g = 1.0 / (1.0 + np.exp(-scale * (y[a, i] - y[v, i]) / h))
                u[i, a] += g
                u[i, v] += 1.0 - g
                d = scale * g * (1.0 - g)
                gp[i, a, v] = d
                gp[i, v, a] = d
        for a in range(n):
            u[i, a] /= n

    shifted = np.empty((r, n, n))
    for i in range(r):
        m = np.zeros(n)
        for a in range(n):
            for b in range(n):
                m[a] += abs(u[i, a] - u[i, b])
        for a in range(n):
            m[a] /= n
        gm = 0.0
        for a in range(n):
            gm += m[a]
        gm /= n
        for a in range(n):
            for b in range(n):
                shifted[i, a, b] = m[a] + m[b] - abs(u[i, a] - u[i, b]) - gm + c

    total = 0.0
    for a in range(n):
        for b in range(n):
            p = 1.0
            for i in range(r):
                p *= shifted[i, a, b]
            total += p
    value = total / (n * n) - c**r

    grad = np.zeros((n, r))
    if not want_grad:
        return value, grad
    others = np.empty((n, n))
    rm = np.empty(n)
    gu = np.empty(n)
    for i in range(r):
        for a in range(n):
            for b in range(n):
                p = 1.0
                for k in range(r):
                    if k != i:
                        p *= shifted[k, a, b]
                others[a, b] = p / (n * n)
        gm = 0.0
        for a in range(n):
            s = 0.0
            for b in range(n):
                s += others[a, b]
            rm[a] = s / n
            gm += rm[a]
        gm /= n
        for a in range(n):
            s = 0.0
            for b in range(n):
                kab = -(others[a, b] - rm[a] - rm[b] + gm)
                diff = u[i, a] - u[i, b]
                if diff > 0:
                    s += kab
                elif diff < 0:
                    s -= kab
            gu[a] = 2.0 * s
        for a in range(n):
            rowsum = 0.0
            cross = 0.0
            for v in range(n):
                rowsum += gp[i, a, v]
                cross += gp[i, v, a] * gu[v]
            grad[a, i] = (gu[a] * rowsum - cross) / (n * h)
    return value, grad


if numba is not None:
    logistic_ica = numba.njit(cache=True, nogil=True)(_logistic_ica_py)
else:  # pragma: no cover
    logistic_ica = _logistic_ica_py

"""Pure-Python/NumPy twins of the compiled kernels in ``_ckernels.pyx``."""

import numpy as np


def lap_dense(cost):
    cost = np.ascontiguousarray(cost, dtype=float)
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.intp)
    way = np.zeros(n + 1, dtype=np.intp)
    # column 0 is the virtual source; pad cost so row index i0 maps to cost[i0 - 1]
    padded = np.zeros((n + 1, n + 1))
    padded[1:, 1:] = cost
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = padded[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.intp)
    col_of_row[p[1:] - 1] = np.arange(n)
    return col_of_row, u[1:].copy(), v[1:].copy()


def garch_filter(resid, alpha0, alpha, beta, lag_resid2, lag_sigma2):
    p, q, T = len(alpha), len(beta), len(resid)
    e2 = list(lag_resid2) + [0.0] * T
    s2 = list(lag_sigma2) + [0.0] * T
    alpha = list(alpha)
    beta = list(beta)
    for k in range(T):
        acc = alpha0
        for i in range(p):
            acc += alpha[i] * e2[p + k - 1 - i]
        for i in range(q):
            acc += beta[i] * s2[q + k - 1 - i]
        s2[q + k] = acc
        e2[p + k] = resid[k] * resid[k]
    return np.array(s2[q:])


def garch_unfilter(z, mu, alpha0, alpha, beta, lag_resid2, lag_sigma2):
    p, q, T = len(alpha), len(beta), len(z)
    e2 = list(lag_resid2) + [0.0] * T
    s2 = list(lag_sigma2) + [0.0] * T
    alpha = list(alpha)
    beta = list(beta)
    x = np.empty(T)
    for k in range(T):
        acc = alpha0
        for i in range(p):
            acc += alpha[i] * e2[p + k - 1 - i]
        for i in range(q):
            acc += beta[i] * s2[q + k - 1 - i]
        s2[q + k] = acc
        e = np.sqrt(acc) * z[k]
        e2[p + k] = e * e
        x[k] = mu + e
    return x, np.array(s2[q:])

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: dense linear assignment and GARCH variance recursions.

Every function here has a drop-in twin in :mod:`kernelfin._pykernels`.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, sqrt

cnp.import_array()


def lap_dense(double[:, ::1] cost):
    """Shortest-augmenting-path assignment on a square cost matrix.

    Potentials are updated lazily after each Dijkstra sweep and columns
    already labelled are compacted out of the scan.  Returns
    ``(col_of_row, u, v)`` with ``cost[i, j] - u[i] - v[j] >= 0`` and
    equality on the assignment.
    """
    cdef Py_ssize_t n = cost.shape[0]
    cdef Py_ssize_t cur_row, i, j, it, index, num_remaining, sink, tmp
    cdef double min_val, lowest, r
    u_arr = np.zeros(n)
    v_arr = np.zeros(n)
    spc_arr = np.empty(n)
    path_arr = np.full(n, -1, dtype=np.intp)
    col4row_arr = np.full(n, -1, dtype=np.intp)
    row4col_arr = np.full(n, -1, dtype=np.intp)
    remaining_arr = np.empty(n, dtype=np.intp)
    sr_arr = np.zeros(n, dtype=np.uint8)
    sc_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef double[::1] spc = spc_arr
    cdef Py_ssize_t[::1] path = path_arr
    cdef Py_ssize_t[::1] col4row = col4row_arr
    cdef Py_ssize_t[::1] row4col = row4col_arr
    cdef Py_ssize_t[::1] remaining = remaining_arr
    cdef unsigned char[::1] sr = sr_arr
    cdef unsigned char[::1] sc = sc_arr

    for cur_row in range(n):
        for j in range(n):
            remaining[j] = n - 1 - j
            spc[j] = INFINITY
            sr[j] = 0
            sc[j] = 0
        num_remaining = n
        min_val = 0.0
        sink = -1
        i = cur_row
        while sink == -1:
            sr[i] = 1
            index = -1
            lowest = INFINITY
            for it in range(num_remaining):
                j = remaining[it]
                r = min_val + cost[i, j] - u[i] - v[j]
                if r < spc[j]:
                    path[j] = i
                    spc[j] = r
                if spc[j] < lowest or (spc[j] == lowest and row4col[j] == -1):
                    lowest = spc[j]
                    index = it
            min_val = lowest
            j = remaining[index]
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            sc[j] = 1
            num_remaining -= 1
            remaining[index] = remaining[num_remaining]

        u[cur_row] += min_val
        for i in range(n):
            if sr[i] and i != cur_row:
                u[i] += min_val - spc[col4row[i]]
        for j in range(n):
            if sc[j]:
                v[j] -= min_val - spc[j]

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            tmp = col4row[i]
            col4row[i] = j
            j = tmp
            if i == cur_row:
                break

    return col4row_arr, u_arr, v_arr


def garch_filter(double[::1] resid, double alpha0, double[::1] alpha,
                 double[::1] beta, double[::1] lag_resid2, double[::1] lag_sigma2):
    """Conditional variances of a residual path.

    ``lag_resid2``/``lag_sigma2`` hold pre-sample values, oldest first,
    with lengths ``len(alpha)`` and ``len(beta)``.
    """
    cdef Py_ssize_t T = resid.shape[0]
    cdef Py_ssize_t p = alpha.shape[0]
    cdef Py_ssize_t q = beta.shape[0]
    cdef Py_ssize_t k, i
    e2_arr = np.empty(p + T)
    s2_arr = np.empty(q + T)
    cdef double[::1] e2 = e2_arr
    cdef double[::1] s2 = s2_arr
    cdef double acc
    for i in range(p):
        e2[i] = lag_resid2[i]
    for i in range(q):
        s2[i] = lag_sigma2[i]
    for k in range(T):
        acc = alpha0
        for i in range(p):
            acc += alpha[i] * e2[p + k - 1 - i]
        for i in range(q):
            acc += beta[i] * s2[q + k - 1 - i]
        s2[q + k] = acc
        e2[p + k] = resid[k] * resid[k]
    return s2_arr[q:].copy()


def garch_unfilter(double[::1] z, double mu, double alpha0, double[::1] alpha,
                   double[::1] beta, double[::1] lag_resid2, double[::1] lag_sigma2):
    """Rebuild ``x = mu + sigma * z`` running the variance recursion forward."""
    cdef Py_ssize_t T = z.shape[0]
    cdef Py_ssize_t p = alpha.shape[0]
    cdef Py_ssize_t q = beta.shape[0]
    cdef Py_ssize_t k, i
    e2_arr = np.empty(p + T)
    s2_arr = np.empty(q + T)
    x_arr = np.empty(T)
    cdef double[::1] e2 = e2_arr
    cdef double[::1] s2 = s2_arr
    cdef double[::1] x = x_arr
    cdef double acc, e
    for i in range(p):
        e2[i] = lag_resid2[i]
    for i in range(q):
        s2[i] = lag_sigma2[i]
    for k in range(T):
        acc = alpha0
        for i in range(p):
            acc += alpha[i] * e2[p + k - 1 - i]
        for i in range(q):
            acc += beta[i] * s2[q + k - 1 - i]
        s2[q + k] = acc
        e = sqrt(acc) * z[k]
        e2[p + k] = e * e
        x[k] = mu + e
    return x_arr, s2_arr[q:].copy()

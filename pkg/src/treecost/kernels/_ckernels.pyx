# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the hot inner loops.

Same contract as ``pykernels``: float64, C-contiguous arrays. The win over
the numpy fallback comes from fusing the per-node top-down recurrence and
the small-matrix products into single C loops (no per-node Python dispatch).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "c"


cdef inline void _addmul_row(double* acc, const double* row, double s, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t c
    for c in range(k):
        acc[c] += s * row[c]


def matmul(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1]
    if b.shape[0] != k:
        raise ValueError("matmul: inner dimensions disagree")
    out_arr = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(m):
            for j in range(k):
                _addmul_row(&out[i, 0], &b[j, 0], a[i, j], n)
    return out_arr


def dense_fwd(const double[:, ::1] x, const double[:, ::1] w, const double[::1] b, bint relu):
    cdef Py_ssize_t n = x.shape[0], di = x.shape[1], do = w.shape[1]
    if w.shape[0] != di or b.shape[0] != do:
        raise ValueError("dense_fwd: shape mismatch")
    out_arr = np.empty((n, do), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, c
    with nogil:
        for i in range(n):
            for c in range(do):
                out[i, c] = b[c]
            for j in range(di):
                _addmul_row(&out[i, 0], &w[j, 0], x[i, j], do)
            if relu:
                for c in range(do):
                    if out[i, c] < 0.0:
                        out[i, c] = 0.0
    return out_arr


def dense_bwd(const double[:, ::1] x, const double[:, ::1] w, const double[:, ::1] out,
              const double[:, ::1] d_out, bint relu, bint need_dx=True):
    cdef Py_ssize_t n = x.shape[0], di = x.shape[1], do = w.shape[1]
    dw_arr = np.zeros((di, do), dtype=np.float64)
    db_arr = np.zeros(do, dtype=np.float64)
    dx_arr = np.zeros((n, di), dtype=np.float64) if need_dx else None
    cdef double[:, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef double[:, ::1] dx
    cdef double[:, ::1] dz = np.empty((n, do), dtype=np.float64)
    cdef Py_ssize_t i, j, c
    cdef double g
    with nogil:
        for i in range(n):
            for c in range(do):
                g = d_out[i, c]
                if relu and out[i, c] <= 0.0:
                    g = 0.0
                dz[i, c] = g
                db[c] += g
            for j in range(di):
                _addmul_row(&dw[j, 0], &dz[i, 0], x[i, j], do)
    if need_dx:
        dx = dx_arr
        with nogil:
            for i in range(n):
                for j in range(di):
                    for c in range(do):
                        dx[i, j] += dz[i, c] * w[j, c]
    return dx_arr, dw_arr, db_arr


def tree_fwd(const long long[::1] order, const long long[::1] parent, const double[:, ::1] x,
             const double[:, ::1] w_self, const double[:, ::1] w_msg, const double[::1] b):
    cdef Py_ssize_t n = x.shape[0], di = x.shape[1], k = w_self.shape[1]
    if w_self.shape[0] != di or w_msg.shape[0] != k or w_msg.shape[1] != k or b.shape[0] != k:
        raise ValueError("tree_fwd: shape mismatch")
    h_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] h = h_arr
    cdef Py_ssize_t i, j, c
    cdef long long v, p
    with nogil:
        for i in range(n):
            v = order[i]
            for c in range(k):
                h[v, c] = b[c]
            for j in range(di):
                _addmul_row(&h[v, 0], &w_self[j, 0], x[v, j], k)
            p = parent[v]
            if p >= 0:
                for j in range(k):
                    _addmul_row(&h[v, 0], &w_msg[j, 0], h[p, j], k)
            for c in range(k):
                if h[v, c] < 0.0:
                    h[v, c] = 0.0
    return h_arr


def tree_bwd(const long long[::1] order, const long long[::1] parent, const double[:, ::1] x,
             const double[:, ::1] w_self, const double[:, ::1] w_msg, const double[:, ::1] h,
             double[:, ::1] d_h):
    """Gradients of ``tree_fwd``; ``d_h`` is consumed (mutated in place)."""
    cdef Py_ssize_t n = x.shape[0], di = x.shape[1], k = w_self.shape[1]
    dx_arr = np.zeros((n, di), dtype=np.float64)
    dws_arr = np.zeros((di, k), dtype=np.float64)
    dwm_arr = np.zeros((k, k), dtype=np.float64)
    db_arr = np.zeros(k, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr, dws = dws_arr, dwm = dwm_arr
    cdef double[::1] db = db_arr
    cdef double[:, ::1] dz = np.empty((n, k), dtype=np.float64)
    cdef Py_ssize_t i, j, c
    cdef long long v, p
    cdef double g
    with nogil:
        for i in range(n - 1, -1, -1):
            v = order[i]
            for c in range(k):
                g = d_h[v, c]
                if h[v, c] <= 0.0:
                    g = 0.0
                dz[v, c] = g
                db[c] += g
            p = parent[v]
            if p >= 0:
                # message gradient flows to the parent's updated state
                for j in range(k):
                    for c in range(k):
                        d_h[p, j] += dz[v, c] * w_msg[j, c]
                for j in range(k):
                    _addmul_row(&dwm[j, 0], &dz[v, 0], h[p, j], k)
        for i in range(n):
            for j in range(di):
                _addmul_row(&dws[j, 0], &dz[i, 0], x[i, j], k)
                for c in range(k):
                    dx[i, j] += dz[i, c] * w_self[j, c]
    return dx_arr, dws_arr, dwm_arr, db_arr


def embed_fwd(const double[:, ::1] table, const long long[::1] ids):
    cdef Py_ssize_t n = ids.shape[0], k = table.shape[1], v = table.shape[0]
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, c
    cdef long long t
    for i in range(n):
        t = ids[i]
        if t < 0 or t >= v:
            raise IndexError(f"embedding id {t} out of range [0, {v})")
        for c in range(k):
            out[i, c] = table[t, c]
    return out_arr


def embed_bwd(double[:, ::1] d_table, const long long[::1] ids, const double[:, ::1] d_rows):
    cdef Py_ssize_t n = ids.shape[0], k = d_table.shape[1]
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            _addmul_row(&d_table[ids[i], 0], &d_rows[i, 0], 1.0, k)


def adam_update(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
                long long t, double lr, double b1, double b2, double eps):
    cdef Py_ssize_t n = p.shape[0]
    cdef double c1 = 1.0 - b1 ** t
    cdef double c2 = 1.0 - b2 ** t
    cdef Py_ssize_t i
    cdef double mi, vi
    with nogil:
        for i in range(n):
            mi = b1 * m[i] + (1.0 - b1) * g[i]
            vi = b2 * v[i] + (1.0 - b2) * g[i] * g[i]
            m[i] = mi
            v[i] = vi
            p[i] -= lr * (mi / c1) / ((vi / c2) ** 0.5 + eps)

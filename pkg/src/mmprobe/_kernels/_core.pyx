# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Semantics match ``_ref`` exactly; see its docstrings."""

import numpy as np


def exact_phi_from_table(double[::1] values, int n, double[::1] size_weights,
                         unsigned char[::1] popcounts):
    cdef Py_ssize_t full = values.shape[0]
    cdef Py_ssize_t mask, bit
    cdef int t
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] phi = out
    cdef double acc
    for t in range(n):
        bit = (<Py_ssize_t>1) << t
        acc = 0.0
        for mask in range(full):
            if mask & bit:
                continue
            acc += size_weights[popcounts[mask]] * (values[mask | bit] - values[mask])
        phi[t] = acc
    return out


def patch_stats(const unsigned char[:, :] img, const long[::1] row_edges,
                const long[::1] col_edges):
    cdef Py_ssize_t nr = row_edges.shape[0] - 1
    cdef Py_ssize_t nc = col_edges.shape[0] - 1
    means_arr = np.empty(nr * nc, dtype=np.float64)
    mins_arr = np.empty(nr * nc, dtype=np.uint8)
    maxs_arr = np.empty(nr * nc, dtype=np.uint8)
    cdef double[::1] means = means_arr
    cdef unsigned char[::1] mins = mins_arr
    cdef unsigned char[::1] maxs = maxs_arr
    cdef Py_ssize_t i, j, r, c, k = 0
    cdef double total
    cdef unsigned char lo, hi, v
    cdef Py_ssize_t count
    for i in range(nr):
        for j in range(nc):
            total = 0.0
            lo = 255
            hi = 0
            count = 0
            for r in range(row_edges[i], row_edges[i + 1]):
                for c in range(col_edges[j], col_edges[j + 1]):
                    v = img[r, c]
                    total += v
                    if v < lo:
                        lo = v
                    if v > hi:
                        hi = v
                    count += 1
            means[k] = total / count
            mins[k] = lo
            maxs[k] = hi
            k += 1
    return means_arr, mins_arr, maxs_arr


def fill_patches(const unsigned char[:, :] img, const long[::1] row_edges,
                 const long[::1] col_edges, const unsigned char[::1] keep,
                 unsigned char fill):
    out_arr = np.asarray(img).copy()
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t nr = row_edges.shape[0] - 1
    cdef Py_ssize_t nc = col_edges.shape[0] - 1
    cdef Py_ssize_t i, j, r, c, k = 0
    for i in range(nr):
        for j in range(nc):
            if not keep[k]:
                for r in range(row_edges[i], row_edges[i + 1]):
                    for c in range(col_edges[j], col_edges[j + 1]):
                        out[r, c] = fill
            k += 1
    return out_arr


def fnv1a64(const unsigned char[::1] data):
    cdef unsigned long long h = 0xCBF29CE484222325ULL
    cdef Py_ssize_t i
    for i in range(data.shape[0]):
        h = (h ^ data[i]) * 0x100000001B3ULL
    return h

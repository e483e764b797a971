# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dense-layer kernels.

Mirrors uqnav._kernels_py.  Single-threaded sequential loops: summation
order is fixed, so results are bit-stable run to run.  The inner loops run
over contiguous rows and auto-vectorize under -O3.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport tanh as c_tanh

cnp.import_array()

NAME = "compiled"


def affine(const double[:, ::1] x, const double[:, ::1] w, const double[::1] b):
    cdef Py_ssize_t n = x.shape[0], k = x.shape[1], m = w.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, o, j
    cdef double acc
    for i in range(n):
        for o in range(m):
            acc = b[o]
            for j in range(k):
                acc += x[i, j] * w[o, j]
            y[i, o] = acc
    return out


def activate(const double[:, ::1] s, int code):
    cdef Py_ssize_t n = s.shape[0], m = s.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] a = out
    cdef Py_ssize_t i, o
    cdef double v
    if code == 0:
        for i in range(n):
            for o in range(m):
                v = s[i, o]
                a[i, o] = v if v > 0.0 else 0.0
    elif code == 1:
        for i in range(n):
            for o in range(m):
                a[i, o] = c_tanh(s[i, o])
    elif code == 2:
        for i in range(n):
            for o in range(m):
                a[i, o] = s[i, o]
    else:
        raise ValueError(f"unknown activation code {code}")
    return out


def activation_grad(const double[:, ::1] a, const double[:, ::1] da, int code):
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] ds = out
    cdef Py_ssize_t i, o
    cdef double v
    if code == 0:
        for i in range(n):
            for o in range(m):
                ds[i, o] = da[i, o] if a[i, o] > 0.0 else 0.0
    elif code == 1:
        for i in range(n):
            for o in range(m):
                v = a[i, o]
                ds[i, o] = da[i, o] * (1.0 - v * v)
    elif code == 2:
        for i in range(n):
            for o in range(m):
                ds[i, o] = da[i, o]
    else:
        raise ValueError(f"unknown activation code {code}")
    return out


def affine_grad_params(const double[:, ::1] ds, const double[:, ::1] x):
    cdef Py_ssize_t n = ds.shape[0], m = ds.shape[1], k = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] dw_arr = np.zeros((m, k), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] db_arr = np.zeros(m, dtype=np.float64)
    cdef double[:, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef Py_ssize_t i, o, j
    cdef double g
    for i in range(n):
        for o in range(m):
            g = ds[i, o]
            db[o] += g
            for j in range(k):
                dw[o, j] += g * x[i, j]
    return dw_arr, db_arr


def affine_grad_input(const double[:, ::1] ds, const double[:, ::1] w):
    cdef Py_ssize_t n = ds.shape[0], m = ds.shape[1], k = w.shape[1]
    cdef cnp.ndarray[double, ndim=2] dx_arr = np.zeros((n, k), dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef Py_ssize_t i, o, j
    cdef double g
    for i in range(n):
        for o in range(m):
            g = ds[i, o]
            for j in range(k):
                dx[i, j] += g * w[o, j]
    return dx_arr

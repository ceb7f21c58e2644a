# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot-loop kernels (OpenMP over flattened float64 buffers).

Same contract as ``_kern_numpy``; selected at import by ``kernels``.
The big win is the fused sincos pass: the sine layers inside the modulation
fit loop need both sin (forward value) and cos (for the backward pass), and
a single parallel sweep beats two sequential numpy ufunc calls.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel import prange
from libc.math cimport cos, sin

cnp.import_array()

IMPL = "compiled"

cdef int _NT = 0


def _num_threads():
    global _NT
    if _NT == 0:
        import os
        _NT = max(1, os.cpu_count() or 1)
    return _NT


def sincos_scale(object z, double omega):
    cdef cnp.ndarray za = np.ascontiguousarray(z, dtype=np.float64)
    cdef cnp.ndarray s = np.empty_like(za)
    cdef cnp.ndarray c = np.empty_like(za)
    cdef double[::1] zv = za.ravel()
    cdef double[::1] sv = s.ravel()
    cdef double[::1] cv = c.ravel()
    cdef Py_ssize_t i, n = zv.shape[0]
    cdef double a
    cdef int nt = _num_threads()
    with nogil:
        for i in prange(n, num_threads=nt):
            a = omega * zv[i]
            sv[i] = sin(a)
            cv[i] = cos(a)
    return s, c


def sin_scale(object z, double omega):
    cdef cnp.ndarray za = np.ascontiguousarray(z, dtype=np.float64)
    cdef cnp.ndarray s = np.empty_like(za)
    cdef double[::1] zv = za.ravel()
    cdef double[::1] sv = s.ravel()
    cdef Py_ssize_t i, n = zv.shape[0]
    cdef int nt = _num_threads()
    with nogil:
        for i in prange(n, num_threads=nt):
            sv[i] = sin(omega * zv[i])
    return s


def mul_scale(object a, object b, double s):
    cdef cnp.ndarray aa = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray ba = np.ascontiguousarray(b, dtype=np.float64)
    if aa.shape != ba.shape:
        # rare broadcast case: defer to numpy
        return np.asarray(a) * np.asarray(b) * s
    cdef cnp.ndarray out = np.empty_like(aa)
    cdef double[::1] av = aa.ravel()
    cdef double[::1] bv = ba.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = av.shape[0]
    cdef int nt = _num_threads()
    with nogil:
        for i in prange(n, num_threads=nt):
            ov[i] = av[i] * bv[i] * s
    return out


def relu(object x):
    cdef cnp.ndarray xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray out = np.empty_like(xa)
    cdef double[::1] xv = xa.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef int nt = _num_threads()
    with nogil:
        for i in prange(n, num_threads=nt):
            ov[i] = xv[i] if xv[i] > 0.0 else 0.0
    return out


def relu_mask_mul(object x, object g):
    cdef cnp.ndarray xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray ga = np.ascontiguousarray(g, dtype=np.float64)
    if xa.shape != ga.shape:
        return np.where(np.asarray(x) > 0.0, np.asarray(g), 0.0)
    cdef cnp.ndarray out = np.empty_like(xa)
    cdef double[::1] xv = xa.ravel()
    cdef double[::1] gv = ga.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef int nt = _num_threads()
    with nogil:
        for i in prange(n, num_threads=nt):
            ov[i] = gv[i] if xv[i] > 0.0 else 0.0
    return out


def clip_linf(object delta, double eps, object x, double lo, double hi):
    cdef cnp.ndarray da = np.ascontiguousarray(delta, dtype=np.float64)
    cdef cnp.ndarray xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray out = np.empty_like(da)
    cdef double[::1] dv = da.ravel()
    cdef double[::1] xv = xa.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = dv.shape[0]
    cdef double v, a, b
    cdef int nt = _num_threads()
    with nogil:
        for i in prange(n, num_threads=nt):
            v = dv[i]
            if v > eps:
                v = eps
            elif v < -eps:
                v = -eps
            a = lo - xv[i]
            b = hi - xv[i]
            if v < a:
                v = a
            elif v > b:
                v = b
            ov[i] = v
    return out

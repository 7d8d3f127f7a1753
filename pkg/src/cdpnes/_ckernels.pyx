# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops of the simulation.

Arithmetic is written in the same order as ``_pykernels`` so both backends
produce bitwise-identical results.
"""
import numpy as np

from libc.math cimport fabs, floor


def quantize_rows(const double[:, ::1] D, const double[:, ::1] U, int levels):
    cdef Py_ssize_t n = D.shape[0], m = D.shape[1], i, c
    cdef double s, a, y, lvl, scale, v
    out = np.zeros((n, m))
    cdef double[:, ::1] o = out
    for i in range(n):
        s = 0.0
        for c in range(m):
            a = fabs(D[i, c])
            if a > s:
                s = a
        if s == 0.0:
            continue
        scale = s / levels
        for c in range(m):
            a = fabs(D[i, c])
            y = (a / s) * levels
            lvl = floor(y)
            if U[i, c] < y - lvl:
                lvl = lvl + 1.0
            v = lvl * scale
            if D[i, c] < 0.0:
                o[i, c] = -v
            else:
                o[i, c] = v
    return out


def norm_sign_rows(const double[:, ::1] D):
    cdef Py_ssize_t n = D.shape[0], m = D.shape[1], i, c
    cdef double s, a, half
    out = np.zeros((n, m))
    cdef double[:, ::1] o = out
    for i in range(n):
        s = 0.0
        for c in range(m):
            a = fabs(D[i, c])
            if a > s:
                s = a
        if s == 0.0:
            continue
        half = s * 0.5
        for c in range(m):
            if D[i, c] < 0.0:
                o[i, c] = -half
            else:
                o[i, c] = half
    return out


def cdp_round(double[:, ::1] X, const double[:, ::1] Xt, double[:, ::1] H,
              double[:, ::1] Hw, const double[:, ::1] Qd,
              const int[::1] indptr, const int[::1] indices, const double[::1] data,
              const double[:, ::1] G, double gamma, double eta, double alpha,
              Py_ssize_t d, const double[::1] lo, const double[::1] hi, bint projected):
    """One synchronous round for every agent, updating X, H, Hw in place."""
    cdef Py_ssize_t n = X.shape[0], N = X.shape[1], i, c, p, j, own0
    cdef double w, xhat, xhatw, x, ge = gamma * eta, keep = 1.0 - alpha
    mix_buf = np.empty(N)
    cdef double[::1] mix = mix_buf
    for i in range(n):
        for c in range(N):
            mix[c] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            w = data[p]
            for c in range(N):
                mix[c] = mix[c] + w * Qd[j, c]
        own0 = i * d
        for c in range(N):
            xhat = H[i, c] + Qd[i, c]
            xhatw = Hw[i, c] + mix[c]
            H[i, c] = keep * H[i, c] + alpha * xhat
            Hw[i, c] = keep * Hw[i, c] + alpha * xhatw
            x = Xt[i, c] - gamma * (xhat - xhatw)
            if own0 <= c < own0 + d:
                x = x - ge * G[i, c - own0]
            if projected:
                if x < lo[c]:
                    x = lo[c]
                elif x > hi[c]:
                    x = hi[c]
            X[i, c] = x

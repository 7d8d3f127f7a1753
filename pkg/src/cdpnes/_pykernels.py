"""Numpy fallback for the compiled kernels in ``_ckernels``.

Same signatures and the same floating-point operation order, one agent at a
time.
"""
import numpy as np


def quantize_rows(D, U, levels):
    D = np.ascontiguousarray(D, dtype=float)
    out = np.zeros_like(D)
    for i in range(D.shape[0]):
        a = np.abs(D[i])
        s = a.max() if a.size else 0.0
        if s == 0.0:
            continue
        scale = s / levels
        y = (a / s) * levels
        lvl = np.floor(y)
        lvl += U[i] < y - lvl
        v = lvl * scale
        out[i] = np.where(D[i] < 0.0, -v, v)
    return out


def norm_sign_rows(D):
    D = np.ascontiguousarray(D, dtype=float)
    out = np.zeros_like(D)
    for i in range(D.shape[0]):
        s = np.abs(D[i]).max() if D.shape[1] else 0.0
        if s == 0.0:
            continue
        half = s * 0.5
        out[i] = np.where(D[i] < 0.0, -half, half)
    return out


def cdp_round(X, Xt, H, Hw, Qd, indptr, indices, data, G, gamma, eta, alpha,
              d, lo, hi, projected):
    n, N = X.shape
    ge = gamma * eta
    keep = 1.0 - alpha
    for i in range(n):
        mix = np.zeros(N)
        for p in range(indptr[i], indptr[i + 1]):
            mix = mix + data[p] * Qd[indices[p]]
        xhat = H[i] + Qd[i]
        xhatw = Hw[i] + mix
        H[i] = keep * H[i] + alpha * xhat
        Hw[i] = keep * Hw[i] + alpha * xhatw
        x = Xt[i] - gamma * (xhat - xhatw)
        own = slice(i * d, (i + 1) * d)
        x[own] = x[own] - ge * G[i]
        if projected:
            x = np.where(x < lo, lo, np.where(x > hi, hi, x))
        X[i] = x

"""Dense matrix form of one round, used as an oracle for the engine.

All agents are stacked into matrices and mixing is a dense product with
``W``.  This is slow and intentionally separate from the kernels.
"""
import numpy as np

from .games import project


def stacked_gradients(game, X):
    """Block-diagonal pseudo-gradient: row ``i`` holds agent ``i``'s own gradient
    in its own block and zeros elsewhere."""
    n, d = game.n, game.d
    F = np.zeros((n, n * d))
    for i in range(n):
        F[i, i * d:(i + 1) * d] = game.partial_gradient(i, X[i].reshape(n, d))
    return F


def compact_step(X, H, Hw, W, noise, uniforms, game, compressor, gamma, eta, alpha,
                 box=None):
    Xt = X + noise
    Q = compressor.decode_rows(Xt - H, uniforms)
    Xhat = H + Q
    Xhat_w = Hw + W @ Q
    H_next = (1 - alpha) * H + alpha * Xhat
    Hw_next = (1 - alpha) * Hw + alpha * Xhat_w
    X_next = Xt - gamma * (Xhat - Xhat_w) - gamma * eta * stacked_gradients(game, X)
    if box is not None:
        X_next = project(box, X_next)
    return X_next, H_next, Hw_next


def exact_step(X, W, game, gamma, eta):
    """Noise-free, lossless round: ``X - gamma ((I - W) X + eta F(X))``."""
    n = X.shape[0]
    return X - gamma * ((np.eye(n) - W) @ X + eta * stacked_gradients(game, X))

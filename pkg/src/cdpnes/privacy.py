"""Laplace noise, noise-scale budgets and the adjacent-game sensitivity check."""
from dataclasses import dataclass
import csv
import io

import numpy as np

SAFETY_FACTOR = 1.01


class PrivacyError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseParams:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if np.any(theta < 0) or not np.all(np.isfinite(theta)):
            raise PrivacyError("Laplace scales must be finite and non-negative")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def uniform(cls, theta, n):
        return cls(np.full(n, float(theta)))

    @property
    def theta_bar(self):
        return float(self.theta.max())

    @property
    def silent(self):
        return self.theta_bar == 0.0


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: np.ndarray
    K: int
    M: float
    gamma: float
    eta: float

    def __post_init__(self):
        eps = np.atleast_1d(np.asarray(self.epsilon, dtype=float))
        if np.any(eps <= 0):
            raise PrivacyError("privacy budgets must be positive")
        if self.K < 0 or self.M <= 0 or self.gamma < 0 or self.eta < 0:
            raise PrivacyError("K, M, gamma, eta must be non-negative (M positive)")
        object.__setattr__(self, "epsilon", eps)


def laplace_from_uniform(U, theta):
    """Inverse-CDF transform of uniforms on [0, 1) into Laplace(0, theta) draws.

    ``theta`` broadcasts against ``U``; a zero scale yields exact zeros.
    """
    u = np.asarray(U, dtype=float) - 0.5
    tail = np.maximum(1.0 - 2.0 * np.abs(u), np.finfo(float).tiny)
    return -np.asarray(theta, dtype=float) * np.sign(u) * np.log(tail)


def laplace_sample(theta, shape, rng):
    if theta < 0:
        raise PrivacyError(f"Laplace scale must be non-negative, got {theta}")
    if theta == 0:
        return np.zeros(shape)
    return laplace_from_uniform(rng.random(shape), theta)


def laplace_cdf(x, theta):
    x = np.asarray(x, dtype=float)
    return np.where(x < 0, 0.5 * np.exp(x / theta), 1.0 - 0.5 * np.exp(-x / theta))


def min_noise_scale(budget):
    """Smallest Laplace scale per agent: ``2 gamma eta K M / epsilon_i``.

    The guarantee needs a strictly larger scale; see :func:`choose_noise`.
    """
    return 2.0 * budget.gamma * budget.eta * budget.K * budget.M / budget.epsilon


def choose_noise(budget, factor=SAFETY_FACTOR):
    if factor <= 1.0:
        raise PrivacyError("the safety factor must exceed 1")
    return NoiseParams(factor * min_noise_scale(budget))


def implied_epsilon(theta, gamma, eta, K, M):
    """Budget achieved by a given scale (infinite for zero noise)."""
    theta = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(theta > 0, 2.0 * gamma * eta * K * M / np.where(theta > 0, theta, 1.0),
                        np.inf)


def budget_report(budget, noise=None):
    """CSV text with one row per agent: ``agent,epsilon,theta_min,theta_chosen``."""
    theta_min = min_noise_scale(budget)
    if noise is None:
        noise = choose_noise(budget)
    chosen = np.broadcast_to(noise.theta, theta_min.shape)
    eps = np.broadcast_to(budget.epsilon, theta_min.shape)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["agent", "epsilon", "theta_min", "theta_chosen"])
    for i, (e, tm, tc) in enumerate(zip(eps, theta_min, chosen)):
        w.writerow([i, repr(float(e)), repr(float(tm)), repr(float(tc))])
    return buf.getvalue()


@dataclass(frozen=True)
class SensitivityResult:
    i0: int | None
    max_l1: float
    bound: float
    per_step: np.ndarray

    @property
    def ok(self):
        return self.max_l1 <= self.bound + 1e-9


def step_sensitivity_check(game1, game2, W, params, M, x0=None, h0=None):
    """Largest one-step l1 gap in agent ``i0``'s state between adjacent runs.

    Both runs share every random draw except agent ``i0``'s noise, which is
    shifted so that all transmitted messages coincide.  Raises
    :class:`PrivacyError` if the gap exceeds ``2 gamma eta M``.
    """
    from .engine import run_coupled_pair

    pair = run_coupled_pair(game1, game2, W, params, x0=x0, h0=h0)
    bound = 2.0 * params.gamma * params.eta * M
    per_step = pair.state_gap_l1
    worst = float(per_step.max()) if per_step.size else 0.0
    result = SensitivityResult(pair.i0, worst, bound, per_step)
    if not result.ok:
        raise PrivacyError(f"sensitivity {worst:.6g} exceeds 2*gamma*eta*M = {bound:.6g}")
    return result

"""Convergence constants, stepsize feasibility and the predicted error floor.

All quantities follow the linear system ``V_{k+1} <= A V_k + b`` on the pair
(squared NE-seeking error, squared compression gap).  Noise-dependent terms
are returned in units of ``theta_bar^2``.  ``d`` is the action dimension;
noise terms scale with the number of noisy entries ``n * n * d``.
"""
from dataclasses import dataclass, fields
import csv
import io
import math

import numpy as np

from .graph import frob_norm_i_minus_w, lambda_min_nonzero


class AnalysisError(ValueError):
    pass


def lipschitz_LF(eta, L_m, W):
    """Lipschitz constant of the augmented mapping ``(I - W) X + eta F(X)``."""
    return eta * L_m + frob_norm_i_minus_w(W)


@dataclass(frozen=True)
class Monotonicity:
    beta: float
    b1: float
    b2: float
    mu_F: float

    @property
    def feasible(self):
        return self.mu_F > 0


def monotone_muF(eta, mu_r, L_m, n, W=None, lam=None):
    """Restricted strong-monotonicity modulus of the augmented mapping.

    ``lam`` overrides the graph's smallest nonzero eigenvalue.
    """
    if eta <= 0 or L_m <= 0:
        raise AnalysisError("beta is undefined for eta <= 0 or L_m <= 0")
    if lam is None:
        lam = lambda_min_nonzero(W)
    beta = -1.0 + math.sqrt(1.0 + mu_r / (2.0 * n * eta * L_m))
    b1 = eta * mu_r / (2.0 * n)
    b2 = beta ** 2 * lam / (beta ** 2 + 1.0) - eta ** 2 * L_m
    return Monotonicity(beta, b1, b2, min(b1, b2))


@dataclass(frozen=True)
class Contraction:
    A: np.ndarray
    b_vec: np.ndarray
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float
    c_x: float
    one_minus_cx: float
    I_minus_A: np.ndarray


def contraction_matrix(gamma, alpha, delta, r, C_c, L_F, mu_F, W=None, n=None, d=1,
                       frob=None):
    """``A`` and ``b`` (per unit ``theta_bar^2``) of the two-error linear system."""
    if frob is None:
        frob = frob_norm_i_minus_w(W)
    if n is None:
        n = W.n if hasattr(W, "n") else np.asarray(W).shape[0]
    if mu_F <= 0:
        raise AnalysisError(f"mu_F must be positive, got {mu_F:.3e}")
    if mu_F >= L_F:
        raise AnalysisError(f"degenerate constants: mu_F ({mu_F:.3e}) >= L_F ({L_F:.3e})")
    ard = alpha * r * delta
    if ard <= 0:
        raise AnalysisError("alpha * r * delta must be positive")
    nn = n * n * d
    # c1 - 1 in closed form; the subtraction cancels when mu_F << L_F
    c1m1 = mu_F ** 2 / (2 * (L_F ** 2 - mu_F ** 2))
    c1 = 1 + c1m1
    c2 = 4 * c1 * frob ** 2 * C_c / c1m1
    c3 = 8 * c1 * frob ** 2 * nn / c1m1 + 4 * c1 * nn / c1m1
    c4 = 6 * (1 + ard) / ard
    c5 = 2 * c4 * C_c * frob ** 2
    c6 = (2 * c4 + 6) * nn
    c_x = 1 - ard ** 2
    g2 = gamma ** 2
    t = L_F ** 2 * g2 - 2 * mu_F * gamma
    A = np.array([
        [c1 * (1 + t), c2 * g2],
        [c4 * g2 * L_F ** 2, c_x + c5 * g2],
    ])
    # 1 - A11 and 1 - A22 without the cancellation of subtracting from one
    I_minus_A = np.array([
        [-(c1m1 + t + c1m1 * t), -A[0, 1]],
        [-A[1, 0], ard ** 2 - c5 * g2],
    ])
    return Contraction(A, np.array([c3, c6]), c1, c2, c3, c4, c5, c6, c_x, ard ** 2, I_minus_A)


@dataclass(frozen=True)
class Feasibility:
    gamma_star: float
    eta_max: float
    eta_bound_1: float
    eta_bound_2: float
    m1: float
    m2: float
    eps1: float
    eps2: float
    eta: float

    @property
    def eta_ok(self):
        return self.eta <= self.eta_max

    @property
    def margin(self):
        return self.eta_max - self.eta


def recommend_params(eta, contraction, mu_F, L_F, mu_r, L_m, n, lam, frob, eps2=1.0):
    """``gamma* = mu_F / L_F^2`` and the largest admissible gradient stepsize.

    The constants inside the bound depend on ``eta`` itself, so the result
    says whether the supplied ``eta`` satisfies the bound computed at ``eta``.
    """
    c = contraction
    one_cx = c.one_minus_cx
    if one_cx <= 0:
        raise AnalysisError("c_x = 1: alpha, r or delta is zero")
    if frob == 0:
        raise AnalysisError("||I - W||_F = 0: no communication")
    m1 = 4 * c.c2 * c.c4 / frob ** 4 + 1 / (4 * frob ** 2) + c.c5 / frob ** 4
    m2 = -1 + math.sqrt(1 + mu_r ** 2 / (4 * n ** 2 * L_m) * math.sqrt(m1 / (one_cx * eps2)))
    bound1 = 2 * n / mu_r * math.sqrt(one_cx * eps2 / m1)
    bound2 = lam * m2 ** 2 / (L_m * (m2 ** 2 + 1))
    return Feasibility(
        gamma_star=mu_F / L_F ** 2, eta_max=min(bound1, bound2),
        eta_bound_1=bound1, eta_bound_2=bound2, m1=m1, m2=m2,
        eps1=4 * c.c2 * eps2 / L_F ** 2, eps2=eps2, eta=eta,
    )


@dataclass(frozen=True)
class RateAndFloor:
    rho: float
    rho_bound: float | None
    c7_printed: float | None
    floor_coeff: float
    floor: float


def spectral_radius_2x2(A):
    half_tr = (A[0, 0] + A[1, 1]) / 2
    # avoids the tr^2/4 - det cancellation
    disc = ((A[0, 0] - A[1, 1]) / 2) ** 2 + A[0, 1] * A[1, 0]
    if disc >= 0:
        return abs(half_tr) + math.sqrt(disc)
    return math.sqrt(half_tr * half_tr - disc)


def rate_and_floor(A, b_vec, theta_bar, mu_F=None, L_F=None, contraction=None, gamma=None):
    """Spectral radius of ``A`` and the floor ``[(I - A)^{-1} b]_1 theta_bar^2``.

    When ``contraction`` and ``gamma`` are given, the closed-form printed
    coefficient ``((1 - c_x - c5 gamma^2) c3 + c2 gamma^2) / det(I - A)`` is
    reported alongside the mechanically computed one.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b_vec, dtype=float)
    rho = spectral_radius_2x2(A)
    if rho >= 1.0:
        raise AnalysisError(f"rho(A) = {rho:.6g} >= 1: no finite floor")
    B = np.eye(2) - A if contraction is None else contraction.I_minus_A
    det = B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]
    if not det > 0:
        raise AnalysisError(f"det(I - A) = {det:.3e} is not positive at double precision")
    coeff = (B[1, 1] * b[0] - B[0, 1] * b[1]) / det
    printed = None
    if contraction is not None and gamma is not None:
        c = contraction
        printed = ((c.one_minus_cx - c.c5 * gamma ** 2) * c.c3 + c.c2 * gamma ** 2) / det
    bound = None if mu_F is None else 1 - mu_F ** 2 / (4 * L_F ** 2)
    return RateAndFloor(rho, bound, printed, coeff, coeff * theta_bar ** 2)


@dataclass(frozen=True)
class ConvergenceConstants:
    n: int
    d: int
    eta: float
    alpha: float
    gamma: float
    theta_bar: float
    mu_r: float
    L_m: float
    frob: float
    lam: float
    L_F: float
    beta: float
    b1: float
    b2: float
    mu_F: float
    C: float
    delta: float
    r: float
    c1: float = math.nan
    c2: float = math.nan
    c3: float = math.nan
    c4: float = math.nan
    c5: float = math.nan
    c6: float = math.nan
    c_x: float = math.nan
    A: np.ndarray | None = None
    b_vec: np.ndarray | None = None
    rho: float = math.nan
    rho_bound: float = math.nan
    gamma_star: float = math.nan
    eta_max: float = math.nan
    m1: float = math.nan
    m2: float = math.nan
    eps1: float = math.nan
    c7: float = math.nan
    c7_printed: float = math.nan
    floor: float = math.nan
    issues: tuple = ()

    @property
    def feasible(self):
        return not self.issues

    @property
    def alpha_ok(self):
        return 0 < self.alpha <= 1 / self.r

    @property
    def eta_ok(self):
        return self.eta <= self.eta_max

    def as_row(self):
        row = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "A":
                for (i, j), a in np.ndenumerate(v if v is not None else np.full((2, 2), math.nan)):
                    row[f"A{i + 1}{j + 1}"] = a
            elif f.name == "b_vec":
                for i, a in enumerate(v if v is not None else [math.nan, math.nan]):
                    row[f"bvec{i + 1}"] = a
            elif f.name == "issues":
                row["issues"] = "; ".join(v)
            else:
                row[f.name] = v
        row["feasible"] = self.feasible
        return row

    def lines(self):
        out = []
        for key, v in self.as_row().items():
            if isinstance(v, float):
                out.append(f"{key:<12} {v:.6g}")
            else:
                out.append(f"{key:<12} {v}")
        return out


def analyze(game_constants, W, eta, alpha, contract, theta_bar=0.0, gamma=None, d=1, eps2=1.0):
    """Every constant of the convergence analysis for one configuration.

    ``gamma`` defaults to ``gamma* = mu_F / L_F^2``.  Problems (non-positive
    ``mu_F``, ``alpha`` out of range, ``eta`` above its bound, ``rho >= 1``)
    are collected in ``issues`` rather than raised, as long as later
    quantities can still be computed.
    """
    issues = []
    n = W.n if hasattr(W, "n") else np.asarray(W).shape[0]
    mu_r, L_m = game_constants.mu_r, game_constants.L_m
    frob = frob_norm_i_minus_w(W)
    import warnings
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        lam = lambda_min_nonzero(W)
    if caught:
        issues.append("symmetric part of I - W is indefinite")
    L_F = lipschitz_LF(eta, L_m, W)
    mono = monotone_muF(eta, mu_r, L_m, n, lam=lam)
    base = dict(n=n, d=d, eta=eta, alpha=alpha, theta_bar=theta_bar, mu_r=mu_r, L_m=L_m,
                frob=frob, lam=lam, L_F=L_F, beta=mono.beta, b1=mono.b1, b2=mono.b2,
                mu_F=mono.mu_F, C=contract.C, delta=contract.delta, r=contract.r)
    if not 0 < alpha <= 1 / contract.r:
        issues.append(f"alpha outside (0, 1/r] = (0, {1 / contract.r:.6g}]")
    if mono.mu_F <= 0:
        issues.append(f"mu_F = {mono.mu_F:.3e} <= 0 (eta too large or graph unsuitable)")
        return ConvergenceConstants(gamma=math.nan if gamma is None else gamma,
                                    issues=tuple(issues), **base)
    gamma_star = mono.mu_F / L_F ** 2
    gamma = gamma_star if gamma is None else gamma
    con = contraction_matrix(gamma, alpha, contract.delta, contract.r, contract.C, L_F,
                             mono.mu_F, n=n, d=d, frob=frob)
    feas = recommend_params(eta, con, mono.mu_F, L_F, mu_r, L_m, n, lam, frob, eps2=eps2)
    if not feas.eta_ok:
        issues.append(f"eta = {eta:.3e} exceeds its bound {feas.eta_max:.3e}")
    extra = dict(c1=con.c1, c2=con.c2, c3=con.c3, c4=con.c4, c5=con.c5, c6=con.c6,
                 c_x=con.c_x, A=con.A, b_vec=con.b_vec, gamma_star=gamma_star,
                 eta_max=feas.eta_max, m1=feas.m1, m2=feas.m2, eps1=feas.eps1,
                 rho_bound=1 - mono.mu_F ** 2 / (4 * L_F ** 2))
    rho = spectral_radius_2x2(con.A)
    if rho >= 1:
        issues.append(f"rho(A) = {rho:.6g} >= 1")
        return ConvergenceConstants(gamma=gamma, rho=rho, issues=tuple(issues), **base, **extra)
    try:
        rf = rate_and_floor(con.A, con.b_vec, theta_bar, mono.mu_F, L_F, con, gamma)
    except AnalysisError as exc:
        issues.append(str(exc))
        return ConvergenceConstants(gamma=gamma, rho=rho, issues=tuple(issues), **base, **extra)
    return ConvergenceConstants(gamma=gamma, rho=rf.rho, c7=rf.floor_coeff,
                                c7_printed=rf.c7_printed, floor=rf.floor,
                                issues=tuple(issues), **base, **extra)


def feasible_eta(game_constants, W, alpha, contract, eta0=1.0, shrink=0.5, max_iter=200, d=1):
    """Largest ``eta`` on the grid ``eta0 * shrink^j`` that passes every check."""
    eta = eta0
    for _ in range(max_iter):
        cc = analyze(game_constants, W, eta, alpha, contract, d=d)
        if cc.feasible:
            return eta, cc
        eta *= shrink
    raise AnalysisError("no feasible eta found on the search grid")


def constants_csv(rows):
    """CSV text with one configuration per row."""
    rows = [r.as_row() if isinstance(r, ConvergenceConstants) else r for r in rows]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()

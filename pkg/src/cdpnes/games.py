"""Non-cooperative games described by their agents' partial gradients.

Joint action profiles are ``(n, d)`` arrays: row ``i`` is agent ``i``'s
action.  An agent's local estimate of the whole profile has the same shape.
"""
from dataclasses import dataclass
import itertools
import warnings

import numpy as np

from .rng import stream


class GameError(ValueError):
    pass


class NumericInputError(GameError):
    pass


class NoUniqueNEError(GameError):
    pass


class UnsupportedGameError(GameError):
    pass


class AssumptionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BoxConstraint:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if np.any(lo > hi):
            raise GameError("box constraint needs lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def uniform(cls, lo, hi):
        return cls(np.float64(lo), np.float64(hi))

    def bounds(self, shape):
        return (np.broadcast_to(self.lo, shape).astype(float),
                np.broadcast_to(self.hi, shape).astype(float))

    def project(self, x):
        return project(self, x)


def project(constraint, x):
    """Euclidean projection onto the box (componentwise clamp)."""
    x = np.asarray(x, dtype=float)
    if constraint is None:
        return x.copy()
    return np.clip(x, constraint.lo, constraint.hi)


@dataclass(frozen=True)
class GameConstants:
    mu_r: float
    L: np.ndarray
    M: float
    certified: bool = True
    notes: tuple = ()

    @property
    def L_m(self):
        return float(np.max(self.L))


def _check_finite(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericInputError("non-finite action profile")
    return x


class Game:
    """Base class; subclasses implement :meth:`partial_gradient`."""

    n: int
    d: int = 1
    constraint: BoxConstraint | None = None

    def partial_gradient(self, i, x_est):
        raise NotImplementedError

    def local_gradients(self, X):
        """Each agent's own gradient at its own estimate.

        ``X`` has shape ``(n, n*d)``; row ``i`` is agent ``i``'s flattened
        estimate.  Returns ``(n, d)``.
        """
        n, d = self.n, self.d
        X3 = np.asarray(X, dtype=float).reshape(n, n, d)
        return np.stack([self.partial_gradient(i, X3[i]) for i in range(n)])

    def game_mapping(self, x):
        x = _check_finite(x).reshape(self.n, self.d)
        return np.stack([self.partial_gradient(i, x) for i in range(self.n)])

    def solve_ne(self):
        raise UnsupportedGameError(f"{type(self).__name__} has no NE oracle")

    def differs_from(self, other, n_samples=16, seed=0, box=(-1.0, 1.0)):
        """Agents whose partial gradients differ between two games (sampled)."""
        if (self.n, self.d) != (other.n, other.d):
            raise GameError("games have different shapes")
        rng = stream(seed, 0, "sample")
        diff = set()
        for _ in range(n_samples):
            x = rng.uniform(box[0], box[1], size=(self.n, self.d))
            for i in range(self.n):
                if not np.array_equal(self.partial_gradient(i, x), other.partial_gradient(i, x)):
                    diff.add(i)
        return sorted(diff)


class QuadraticGame(Game):
    """Game with affine mapping ``F(x) = Q x + c`` applied per action coordinate.

    ``c`` may be a length-``n`` vector (scalar actions) or an ``(n, d)`` array.
    """

    def __init__(self, Q, c, constraint=None):
        Q = np.array(Q, dtype=float)
        c = np.array(c, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise GameError("Q must be square")
        if c.ndim == 1:
            c = c[:, None]
        if c.shape[0] != Q.shape[0]:
            raise GameError("c must have one row per agent")
        _check_finite(Q)
        _check_finite(c)
        Q.setflags(write=False)
        c.setflags(write=False)
        self.Q = Q
        self.c = c
        self.n = Q.shape[0]
        self.d = c.shape[1]
        self.constraint = constraint

    def partial_gradient(self, i, x_est):
        x = _check_finite(x_est).reshape(self.n, self.d)
        return self.Q[i] @ x + self.c[i]

    def local_gradients(self, X):
        n, d = self.n, self.d
        X3 = np.asarray(X, dtype=float).reshape(n, n, d)
        return np.einsum("ij,ijk->ik", self.Q, X3) + self.c

    def game_mapping(self, x):
        x = _check_finite(x).reshape(self.n, self.d)
        return self.Q @ x + self.c

    def solve_ne(self):
        try:
            x = np.linalg.solve(self.Q, -self.c)
        except np.linalg.LinAlgError:
            raise NoUniqueNEError("Q is singular; no unique NE") from None
        if np.linalg.cond(self.Q) > 1e12:
            raise NoUniqueNEError("Q is numerically singular; no unique NE")
        # one refinement step keeps the residual at rounding level
        x -= np.linalg.solve(self.Q, self.Q @ x + self.c)
        return x

    def exact_constants(self, box=None):
        """mu_r, L_i and (when a box is known) M, all in closed form."""
        sym = 0.5 * (self.Q + self.Q.T)
        mu_r = float(np.linalg.eigvalsh(sym)[0])
        L = np.linalg.norm(self.Q, axis=1)
        box = box if box is not None else self.constraint
        notes = []
        if box is None:
            M = float("nan")
            notes.append("no box: gradient bound M undefined")
        else:
            M = gradient_l1_bound(self.Q, self.c, box)
        certified = self.constraint is not None and box is not None and (
            np.array_equal(box.lo, self.constraint.lo) and np.array_equal(box.hi, self.constraint.hi))
        if box is not None and not certified:
            notes.append("M computed over a sampling box, not certified")
        return GameConstants(mu_r=mu_r, L=L, M=M, certified=certified, notes=tuple(notes))

    @classmethod
    def from_csv(cls, path, constraint=None):
        """Rows 1..n hold Q, row n+1 holds c."""
        rows = []
        with open(path) as fh:
            for lineno, ln in enumerate(fh, start=1):
                if not ln.strip():
                    continue
                try:
                    rows.append([float(v) for v in ln.split(",")])
                except ValueError:
                    raise GameError(f"{path}:{lineno}: non-numeric entry") from None
        n = len(rows[0]) if rows else 0
        if n == 0 or len(rows) != n + 1 or any(len(r) != n for r in rows):
            raise GameError(f"{path}: expected {n} rows of Q then one row of c, each with {n} values")
        return cls(np.array(rows[:n]), np.array(rows[n]), constraint=constraint)

    @classmethod
    def random(cls, n, seed, d=1, mu=0.5, scale=1.0, constraint=None):
        """Random Q whose symmetric part has smallest eigenvalue ``mu``."""
        rng = stream(seed, 0, "game")
        A = rng.normal(scale=scale, size=(n, n))
        sym = 0.5 * (A + A.T)
        Q = A + (mu - np.linalg.eigvalsh(sym)[0]) * np.eye(n)
        c = rng.normal(scale=scale, size=(n, d))
        return cls(Q, c, constraint=constraint)


def gradient_l1_bound(Q, c, box):
    """Max over the box of ``||Q[i] x + c[i]||_1``, maximised over agents.

    Each gradient coordinate is affine in a disjoint column of ``x``, so its
    extreme values sit at box corners and can be taken coordinatewise.
    """
    Q = np.asarray(Q, dtype=float)
    c = np.asarray(c, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    n, d = c.shape
    lo, hi = box.bounds((n, d))
    pos, neg = np.clip(Q, 0, None), np.clip(Q, None, 0)
    upper = pos @ hi + neg @ lo + c
    lower = pos @ lo + neg @ hi + c
    per_coord = np.maximum(np.abs(upper), np.abs(lower))
    return float(per_coord.sum(axis=1).max())


def gradient_l1_bound_corners(game, box):
    """Brute-force version of :func:`gradient_l1_bound` (small games only)."""
    n, d = game.n, game.d
    lo, hi = box.bounds((n, d))
    best = 0.0
    for corner in itertools.product((0, 1), repeat=n * d):
        mask = np.array(corner, dtype=bool).reshape(n, d)
        x = np.where(mask, hi, lo)
        F = game.game_mapping(x)
        best = max(best, float(np.abs(F).sum(axis=1).max()))
    return best


class ConnectivityControlGame(QuadraticGame):
    """Sensors trading off source seeking against staying near a neighbour.

    Agent ``i`` (1-based) has cost
    ``r_ii |x_i|^2 + x_i . r_i + b_i + sum_{j in S_i} c_ij |x_i - x_j|^2``
    with ``r_ii = b_i = i``, ``r_i = (i, ..., i)``, ``c_ij = 1`` and
    ``S_i = {i + 1}`` cyclically.  Only agent ``i``'s own cost enters its
    gradient, so the coupling is one-sided.
    """

    def __init__(self, n=50, d=2, box=(-10.0, 10.0)):
        if n < 2:
            raise GameError("connectivity game needs n >= 2")
        idx = np.arange(n)
        r = (idx + 1).astype(float)
        self.r_ii = r
        self.b = r.copy()
        self.r_vec = np.repeat(r[:, None], d, axis=1)
        self.neighbors = [[(i + 1) % n] for i in range(n)]
        self.c_ij = 1.0
        Q = np.diag(2.0 * r)
        for i, S in enumerate(self.neighbors):
            for j in S:
                Q[i, i] += 2.0 * self.c_ij
                Q[i, j] -= 2.0 * self.c_ij
        constraint = BoxConstraint.uniform(*box) if box is not None else None
        super().__init__(Q, self.r_vec, constraint=constraint)

    def cost(self, i, x):
        x = _check_finite(x).reshape(self.n, self.d)
        xi = x[i]
        local = self.r_ii[i] * xi @ xi + xi @ self.r_vec[i] + self.b[i]
        coupling = sum(self.c_ij * np.sum((xi - x[j]) ** 2) for j in self.neighbors[i])
        return float(local + coupling)

    def solve_ne(self):
        x = np.full((self.n, self.d), -0.5)
        resid = np.linalg.norm(self.game_mapping(x))
        if resid > 1e-10:
            raise NoUniqueNEError(f"closed-form NE residual {resid:.3e}")
        return x


def solve_ne(game):
    return game.solve_ne()


def partial_gradient(game, i, x_est):
    return game.partial_gradient(i, x_est)


def game_mapping(game, x):
    return game.game_mapping(x)


def estimate_constants(game, sample_box=None, n_samples=1000, seed=0):
    """Game constants: exact for quadratic games, Monte-Carlo otherwise.

    Monte-Carlo values are estimates from random pairs inside ``sample_box``
    and are flagged ``certified=False``.
    """
    if sample_box is not None and not isinstance(sample_box, BoxConstraint):
        sample_box = BoxConstraint.uniform(*sample_box)
    if isinstance(game, QuadraticGame):
        consts = game.exact_constants(sample_box)
    else:
        consts = _sampled_constants(game, sample_box, n_samples, seed)
    if not consts.mu_r > 0:
        warnings.warn(f"restricted strong monotonicity violated: mu_r = {consts.mu_r:.3e}",
                      AssumptionWarning, stacklevel=2)
    return consts


def _sampled_constants(game, box, n_samples, seed):
    if box is None:
        box = game.constraint
    if box is None:
        raise GameError("sampling needs a finite box")
    rng = stream(seed, 0, "sample")
    n, d = game.n, game.d
    lo, hi = box.bounds((n, d))
    try:
        x_star = game.solve_ne()
    except UnsupportedGameError:
        x_star = None
    mu = np.inf
    L = np.zeros(n)
    M = 0.0
    for _ in range(n_samples):
        x = rng.uniform(lo, hi)
        y = rng.uniform(lo, hi)
        Fx = game.game_mapping(x)
        Fy = game.game_mapping(y) if x_star is None else game.game_mapping(x_star)
        ref = y if x_star is None else x_star
        dx = x - ref
        nrm2 = float(np.sum(dx * dx))
        if nrm2 > 0:
            mu = min(mu, float(np.sum((Fx - Fy) * dx)) / nrm2)
        Gy = game.game_mapping(y)
        dxy = np.linalg.norm(x - y)
        if dxy > 0:
            L = np.maximum(L, np.linalg.norm(Fx - Gy, axis=1) / dxy)
        M = max(M, float(np.abs(Fx).sum(axis=1).max()), float(np.abs(Gy).sum(axis=1).max()))
    return GameConstants(mu_r=float(mu), L=L, M=M, certified=False,
                         notes=("Monte-Carlo estimate, not certified",))

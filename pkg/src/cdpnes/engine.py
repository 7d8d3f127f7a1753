"""Synchronous simulation of compressed, noise-perturbed NE seeking.

Each round every agent perturbs its estimate with Laplace noise, compresses
the difference to its reference point, broadcasts the compressed message,
and updates its estimate from its own and its in-neighbours' messages.  The
per-agent work runs in the kernel backend; all randomness comes from
``(seed, iteration, purpose)`` streams so runs are reproducible.
"""
from dataclasses import dataclass, field
import csv
import time

import numpy as np

from ._backend import get_kernels
from .compressors import Compressor, Identity
from .games import BoxConstraint, GameError, UnsupportedGameError
from .graph import MixingMatrix
from .privacy import NoiseParams, laplace_from_uniform
from .rng import stream

DIVERGENCE_LIMIT = 1e12


class EngineError(RuntimeError):
    pass


class ParamError(EngineError, ValueError):
    pass


class DivergenceError(EngineError):
    def __init__(self, k, reason, trace=None):
        super().__init__(f"run diverged at iteration {k}: {reason}")
        self.k = k
        self.trace = trace or []


class CouplingError(EngineError):
    pass


class NotAdjacentError(EngineError, ValueError):
    pass


@dataclass
class RunParams:
    gamma: float
    eta: float
    alpha: float
    K: int
    noise: NoiseParams | float = 0.0
    compressor: Compressor = field(default_factory=Identity)
    projected: bool = False
    box: BoxConstraint | None = None
    seed: int = 0
    backend: str | None = None

    def __post_init__(self):
        if self.gamma < 0 or self.eta < 0:
            raise ParamError("stepsizes must be non-negative")
        if self.K < 0:
            raise ParamError("horizon K must be non-negative")
        if self.projected and self.box is None:
            raise ParamError("projected runs need a box")

    def noise_for(self, n):
        if isinstance(self.noise, NoiseParams):
            if self.noise.theta.size == 1:
                return NoiseParams.uniform(self.noise.theta[0], n)
            if self.noise.theta.size != n:
                raise ParamError(f"need {n} noise scales, got {self.noise.theta.size}")
            return self.noise
        return NoiseParams.uniform(self.noise, n)

    def check_alpha(self, m):
        r = self.compressor.contract(m).r
        if not 0.0 < self.alpha <= 1.0 / r + 1e-15:
            raise ParamError(f"alpha must lie in (0, 1/r] = (0, {1.0 / r:.6g}], got {self.alpha}")


@dataclass(frozen=True)
class StepRecord:
    """What happened in round ``k``.

    ``residual`` is measured after the round; ``comp_gap`` and ``comp_error``
    describe the round's input.
    """

    k: int
    residual: float
    comp_gap: float
    comp_error: float
    cum_bits: int
    wall_time: float


@dataclass
class AgentState:
    """Agent ``i``'s estimate, reference point and weighted reference (views)."""

    x: np.ndarray
    h: np.ndarray
    hw: np.ndarray


@dataclass
class RunResult:
    trace: list
    X: np.ndarray
    H: np.ndarray
    Hw: np.ndarray
    initial_residual: float
    seed: int
    observations: list | None = None

    @property
    def final_residual(self):
        return self.trace[-1].residual if self.trace else self.initial_residual

    @property
    def residuals(self):
        return np.array([r.residual for r in self.trace])

    @property
    def cum_bits(self):
        return self.trace[-1].cum_bits if self.trace else 0

    def write_csv(self, path_or_file):
        """Trace CSV; ``k`` counts completed rounds, so the first row is ``k = 1``."""
        rows = [(r.k + 1, repr(r.residual), repr(r.comp_gap), r.cum_bits, self.seed)
                for r in self.trace]
        _write_rows(path_or_file, ["k", "residual", "comp_gap", "cum_bits", "seed"], rows)

    def write_state(self, path_or_file):
        _write_rows(path_or_file, None, [[repr(float(v)) for v in row] for row in self.X])


def _write_rows(path_or_file, header, rows):
    if hasattr(path_or_file, "write"):
        fh, close = path_or_file, False
    else:
        fh, close = open(path_or_file, "w", newline=""), True
    try:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        w.writerows(rows)
    finally:
        if close:
            fh.close()


def bootstrap(W, h0):
    """One uncompressed exchange: ``hw_i = sum_j w_ij h_j``, per agent."""
    W = W if isinstance(W, MixingMatrix) else MixingMatrix(W)
    h0 = np.asarray(h0, dtype=float)
    if h0.ndim != 2 or h0.shape[0] != W.n:
        raise ParamError(f"h0 must have {W.n} rows, got shape {h0.shape}")
    csr = W.csr
    hw = np.zeros_like(h0)
    for i in range(W.n):
        for p in range(csr.indptr[i], csr.indptr[i + 1]):
            hw[i] = hw[i] + csr.data[p] * h0[csr.indices[p]]
    return hw


class Simulation:
    """State of one run; call :meth:`step` once per round or :meth:`run`."""

    def __init__(self, game, W, params, x0=None, h0=None):
        self.game = game
        self.W = W if isinstance(W, MixingMatrix) else MixingMatrix(W)
        self.params = params
        n, d = game.n, game.d
        if self.W.n != n:
            raise ParamError(f"graph has {self.W.n} agents, game has {n}")
        self.n, self.d, self.N = n, d, n * d
        params.check_alpha(self.N)
        self.noise = params.noise_for(n)
        self.compressor = params.compressor
        self.kernels = get_kernels(params.backend)

        if x0 is None:
            x0 = stream(params.seed, 0, "init").random((n, self.N))
        self.X = np.array(np.broadcast_to(np.asarray(x0, dtype=float), (n, self.N)))
        if h0 is None:
            h0 = np.zeros((n, self.N))
        self.H = np.array(np.broadcast_to(np.asarray(h0, dtype=float), (n, self.N)))
        self.Hw = bootstrap(self.W, self.H)

        csr = self.W.csr
        self._indptr = csr.indptr.astype(np.int32)
        self._indices = csr.indices.astype(np.int32)
        self._data = csr.data.astype(float)
        if params.box is not None:
            lo, hi = params.box.bounds((n, d))
            self._lo, self._hi = lo.ravel().copy(), hi.ravel().copy()
        else:
            self._lo = np.full(self.N, -np.inf)
            self._hi = np.full(self.N, np.inf)

        try:
            self.x_star = np.asarray(game.solve_ne(), dtype=float).reshape(n, d)
        except (UnsupportedGameError, GameError):
            self.x_star = None
        self._target = None if self.x_star is None else np.tile(self.x_star.ravel(), (n, 1))
        self.cum_bits = 0
        self.k = 0

    @property
    def states(self):
        return [AgentState(self.X[i], self.H[i], self.Hw[i]) for i in range(self.n)]

    def residual(self, X=None):
        X = self.X if X is None else X
        if self._target is None:
            return float("nan")
        return float(np.linalg.norm(X - self._target))

    def draw(self, k):
        """Noise and compression uniforms for round ``k``, one row per agent."""
        shape = (self.n, self.N)
        if self.noise.silent:
            noise = np.zeros(shape)
        else:
            U = stream(self.params.seed, k, "noise").random(shape)
            noise = laplace_from_uniform(U, self.noise.theta[:, None])
        U = stream(self.params.seed, k, "compress").random(shape) if self.compressor.randomized else None
        return noise, U

    def step(self, k=None, noise=None, uniforms=None, xtilde=None):
        k = self.k if k is None else k
        t0 = time.perf_counter()
        p = self.params
        if xtilde is None and noise is None:
            noise, uniforms = self.draw(k)
        elif uniforms is None and self.compressor.randomized:
            uniforms = self.draw(k)[1]
        G = np.ascontiguousarray(self.game.local_gradients(self.X), dtype=float)
        Xt = np.ascontiguousarray(self.X + noise if xtilde is None else xtilde, dtype=float)
        D = Xt - self.H
        Qd = np.ascontiguousarray(self.compressor.decode_rows(D, uniforms, p.backend))
        comp_gap = float(np.linalg.norm(D))
        comp_error = float(np.linalg.norm(self.X - self.H - Qd))
        self.cum_bits += int(self.compressor.row_bits(D).sum())
        self.last_xtilde, self.last_decoded, self.last_diff = Xt, Qd, D
        self.kernels.cdp_round(self.X, Xt, self.H, self.Hw, Qd,
                               self._indptr, self._indices, self._data, G,
                               float(p.gamma), float(p.eta), float(p.alpha), self.d,
                               self._lo, self._hi, bool(p.projected))
        if not np.all(np.isfinite(self.X)):
            raise DivergenceError(k, "non-finite state")
        res = self.residual()
        if res > DIVERGENCE_LIMIT or (self._target is None
                                      and np.abs(self.X).max() > DIVERGENCE_LIMIT):
            raise DivergenceError(k, f"residual {res:.3e} above {DIVERGENCE_LIMIT:g}")
        self.k = k + 1
        return StepRecord(k, res, comp_gap, comp_error, self.cum_bits, time.perf_counter() - t0)

    def payloads(self):
        """Byte payloads of the last round's messages, one per agent."""
        return [self.compressor.encode(self.last_diff[i], self.last_decoded[i])
                for i in range(self.n)]

    def run(self, K=None, record_payloads=False, stop_below=None):
        K = self.params.K if K is None else K
        initial = self.residual()
        trace, observations = [], [] if record_payloads else None
        for k in range(self.k, self.k + K):
            try:
                rec = self.step(k)
            except DivergenceError as exc:
                exc.trace = trace
                raise
            trace.append(rec)
            if record_payloads:
                observations.append(self.payloads())
            if stop_below is not None and rec.residual <= stop_below:
                break
        return RunResult(trace, self.X.copy(), self.H.copy(), self.Hw.copy(), initial,
                         self.params.seed, observations)


def step(sim, k=None):
    return sim.step(k)


def run(game, W, params, x0=None, h0=None, record_payloads=False, stop_below=None):
    return Simulation(game, W, params, x0=x0, h0=h0).run(
        record_payloads=record_payloads, stop_below=stop_below)


@dataclass
class CoupledResult:
    i0: int | None
    first: RunResult
    second: RunResult
    noise_shift_l1: np.ndarray
    state_gap_l1: np.ndarray
    observations_match: bool


def adjacent_agent(game1, game2):
    """The single agent whose cost differs, ``None`` for identical games."""
    if (game1.n, game1.d) != (game2.n, game2.d):
        raise NotAdjacentError("games have different shapes")
    if hasattr(game1, "Q") and hasattr(game2, "Q"):
        diff = [i for i in range(game1.n)
                if not (np.array_equal(game1.Q[i], game2.Q[i])
                        and np.array_equal(game1.c[i], game2.c[i]))]
    else:
        diff = game1.differs_from(game2)
    if len(diff) > 1:
        raise NotAdjacentError(f"games differ in agents {diff}; adjacency allows one")
    return diff[0] if diff else None


def run_coupled_pair(game1, game2, W, params, x0=None, h0=None):
    """Run two adjacent games with coupled randomness.

    Everything random is shared, except that the second run's noise for the
    differing agent ``i0`` is shifted so that its perturbed state equals the
    first run's.  All transmitted messages then coincide, which is checked
    byte for byte.
    """
    i0 = adjacent_agent(game1, game2)
    s1 = Simulation(game1, W, params, x0=x0, h0=h0)
    s2 = Simulation(game2, W, params, x0=s1.X.copy() if x0 is None else x0, h0=h0)
    others = np.ones(s1.n, dtype=bool)
    if i0 is not None:
        others[i0] = False
    K = params.K
    shift = np.zeros(K)
    gap = np.zeros(K)
    trace1, trace2, obs = [], [], []
    init1, init2 = s1.residual(), s2.residual()
    for k in range(K):
        if not np.array_equal(s1.X[others], s2.X[others]):
            raise CouplingError(f"states of non-adjacent agents diverged at iteration {k}")
        noise, U = s1.draw(k)
        xt = s1.X + noise
        noise2 = xt - s2.X
        if i0 is not None:
            shift[k] = float(np.abs(noise[i0] - noise2[i0]).sum())
        trace1.append(s1.step(k, noise=noise, uniforms=U, xtilde=xt))
        trace2.append(s2.step(k, uniforms=U, xtilde=xt.copy()))
        p1, p2 = s1.payloads(), s2.payloads()
        if p1 != p2:
            raise CouplingError(f"transmitted messages differ at iteration {k}")
        obs.append(p1)
        if i0 is not None:
            gap[k] = float(np.abs(s1.X[i0] - s2.X[i0]).sum())
    r1 = RunResult(trace1, s1.X.copy(), s1.H.copy(), s1.Hw.copy(), init1, params.seed, obs)
    r2 = RunResult(trace2, s2.X.copy(), s2.H.copy(), s2.Hw.copy(), init2, params.seed, obs)
    return CoupledResult(i0, r1, r2, shift, gap, True)

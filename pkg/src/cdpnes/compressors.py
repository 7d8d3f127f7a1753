"""Randomised compressors with a relative-error contract ``(C, delta, r)``.

Every compressor maps ``x`` to ``C(x)`` such that

* ``E||C(x) - x||^2 <= C ||x||^2``
* ``E||C(x)/r - x||^2 <= (1 - delta) ||x||^2``

Batched decoding goes through the kernel backend; single messages add a
byte payload and an exact bit count under the ``l``-bits-per-scalar model.
"""
from dataclasses import dataclass
import math
import struct

import numpy as np

from ._backend import get_kernels

DEFAULT_SCALAR_BITS = 32
_HEADER = struct.Struct("<BI")


class CompressorError(ValueError):
    pass


class ContractViolation(CompressorError):
    pass


@dataclass(frozen=True)
class CompressorContract:
    C: float
    delta: float
    r: float

    def __post_init__(self):
        if self.C < 0 or not 0 < self.delta <= 1 or self.r <= 0:
            raise CompressorError(f"invalid contract {self}")

    @property
    def consistency_bound(self):
        """``2 r^2 (1 - delta) + 2 (1 - r)^2``, an upper bound on ``C``."""
        return 2 * self.r ** 2 * (1 - self.delta) + 2 * (1 - self.r) ** 2

    def consistent(self, tol=1e-12):
        return self.C <= self.consistency_bound + tol


@dataclass(frozen=True)
class CompressedMessage:
    payload: bytes
    decoded: np.ndarray
    bits: int


class Compressor:
    kind = "base"
    tag = 0
    randomized = False

    def __init__(self, l=DEFAULT_SCALAR_BITS):
        if l < 1:
            raise CompressorError(f"scalar width l must be >= 1, got {l}")
        self.l = int(l)

    def contract(self, m):
        raise NotImplementedError

    def message_bits(self, m, zero=False):
        raise NotImplementedError

    def decode_rows(self, D, U=None, backend=None):
        """Compress every row of ``D``; ``U`` holds the uniforms for random kinds."""
        raise NotImplementedError

    def _body(self, x, decoded):
        raise NotImplementedError

    def _decode_body(self, m, buf):
        raise NotImplementedError

    def compress(self, x, rng=None):
        x = np.asarray(x, dtype=float).ravel()
        if not np.all(np.isfinite(x)):
            raise CompressorError("cannot compress non-finite vector")
        U = None
        if self.randomized:
            if rng is None:
                raise CompressorError(f"{self.kind} compressor needs an rng")
            U = rng.random((1, x.size))
        decoded = self.decode_rows(x[None, :], U)[0]
        return CompressedMessage(self.encode(x, decoded), decoded,
                                 self.message_bits(x.size, zero=not x.any()))

    def encode(self, x, decoded):
        """Serialise an already-compressed vector: header then kind-specific body."""
        x = np.asarray(x, dtype=float).ravel()
        return _HEADER.pack(self.tag, x.size) + self._body(x, np.asarray(decoded).ravel())

    def row_bits(self, D):
        """Bits of each row's message."""
        D = np.asarray(D)
        zero = ~D.any(axis=1)
        full = self.message_bits(D.shape[1])
        empty = self.message_bits(D.shape[1], zero=True)
        return np.where(zero, empty, full).astype(np.int64)

    def describe(self):
        return self.kind

    def __repr__(self):
        return f"{type(self).__name__}({self.describe()}, l={self.l})"


class Identity(Compressor):
    kind = "identity"
    tag = 0

    def contract(self, m):
        return CompressorContract(0.0, 1.0, 1.0)

    def message_bits(self, m, zero=False):
        return m * self.l

    def decode_rows(self, D, U=None, backend=None):
        return np.array(D, dtype=float, copy=True)

    def _body(self, x, decoded):
        return decoded.astype("<f8").tobytes()

    def _decode_body(self, m, buf):
        return np.frombuffer(buf, dtype="<f8", count=m).astype(float)


class StochasticQuantizer(Compressor):
    """Unbiased stochastic rounding of ``|x_j| / ||x||_inf`` onto ``2^(b-1)`` steps.

    Each coordinate costs ``b`` level bits plus one sign bit; the norm costs
    ``l`` bits.
    """

    kind = "quantize"
    tag = 1
    randomized = True

    def __init__(self, b=2, l=DEFAULT_SCALAR_BITS):
        super().__init__(l)
        if int(b) != b or b < 1:
            raise CompressorError(f"quantizer needs b >= 1, got {b}")
        self.b = int(b)
        self.levels = 2 ** (self.b - 1)

    def variance_bound(self, m):
        L = self.levels
        return min(m / (4.0 * L * L), math.sqrt(m) / L)

    def contract(self, m):
        C = self.variance_bound(m)
        return CompressorContract(C, 1.0 / (1.0 + C), 1.0 + C)

    def message_bits(self, m, zero=False):
        return self.l if zero else (self.b + 1) * m + self.l

    def decode_rows(self, D, U=None, backend=None):
        D = np.ascontiguousarray(D, dtype=float)
        if U is None:
            raise CompressorError("quantizer needs uniform draws")
        U = np.ascontiguousarray(U, dtype=float)
        return get_kernels(backend).quantize_rows(D, U, self.levels)

    def _body(self, x, decoded):
        s = float(np.abs(x).max()) if x.size else 0.0
        head = struct.pack("<d", s)
        if s == 0.0:
            return head
        scale = s / self.levels
        level = np.rint(np.abs(decoded) / scale).astype(np.uint64)
        bits = np.zeros((x.size, self.b + 1), dtype=np.uint8)
        bits[:, 0] = decoded < 0
        for k in range(self.b):
            bits[:, k + 1] = (level >> np.uint64(self.b - 1 - k)) & np.uint64(1)
        return head + np.packbits(bits.ravel()).tobytes()

    def _decode_body(self, m, buf):
        (s,) = struct.unpack_from("<d", buf)
        out = np.zeros(m)
        if s == 0.0:
            return out
        bits = np.unpackbits(np.frombuffer(buf[8:], dtype=np.uint8))[: m * (self.b + 1)]
        bits = bits.reshape(m, self.b + 1).astype(np.int64)
        level = np.zeros(m)
        for k in range(self.b):
            level = level * 2 + bits[:, k + 1]
        scale = s / self.levels
        v = level * scale
        return np.where(bits[:, 0] == 1, -v, v)

    def describe(self):
        return f"quantize b={self.b}"


class TopK(Compressor):
    """Keep the ``k`` largest-magnitude coordinates (lowest index wins ties)."""

    kind = "top_k"
    tag = 2

    def __init__(self, k=1, l=DEFAULT_SCALAR_BITS):
        super().__init__(l)
        if int(k) != k or k < 1:
            raise CompressorError(f"top_k needs k >= 1, got {k}")
        self.k = int(k)

    def _k(self, m):
        return min(self.k, m)

    def contract(self, m):
        frac = self._k(m) / m
        return CompressorContract(1.0 - frac, frac, 1.0)

    def message_bits(self, m, zero=False):
        k = self._k(m)
        return k * (self.l + math.ceil(math.log2(m))) if m > 0 else 0

    def _indices(self, D):
        k = self._k(D.shape[1])
        order = np.argsort(-np.abs(D), axis=1, kind="stable")
        return order[:, :k]

    def decode_rows(self, D, U=None, backend=None):
        D = np.asarray(D, dtype=float)
        out = np.zeros_like(D)
        if D.shape[1] == 0:
            return out
        idx = self._indices(D)
        rows = np.arange(D.shape[0])[:, None]
        out[rows, idx] = D[rows, idx]
        return out

    def _body(self, x, decoded):
        idx = np.sort(self._indices(x[None, :])[0]).astype("<u4")
        return struct.pack("<I", idx.size) + idx.tobytes() + x[idx].astype("<f8").tobytes()

    def _decode_body(self, m, buf):
        (k,) = struct.unpack_from("<I", buf)
        idx = np.frombuffer(buf, dtype="<u4", count=k, offset=4)
        vals = np.frombuffer(buf, dtype="<f8", count=k, offset=4 + 4 * k)
        out = np.zeros(m)
        out[idx] = vals
        return out

    def describe(self):
        return f"top_k k={self.k}"


class NormSign(Compressor):
    """``(||x||_inf / 2) * sign(x)``; zero coordinates get the positive sign."""

    kind = "norm_sign"
    tag = 3

    def contract(self, m):
        # worst case is one dominant coordinate with the rest vanishing:
        # ratio (1 - c)^2 + (m - 1) c^2 for C(x)/r = c ||x||_inf sign(x),
        # minimised at c = 1/m, i.e. r = m/2, giving 1 - delta = (m - 1)/m
        return CompressorContract(m / 4.0, 1.0 / m, m / 2.0)

    def message_bits(self, m, zero=False):
        return self.l if zero else m + self.l

    def decode_rows(self, D, U=None, backend=None):
        D = np.ascontiguousarray(D, dtype=float)
        return get_kernels(backend).norm_sign_rows(D)

    def _body(self, x, decoded):
        s = float(np.abs(x).max()) if x.size else 0.0
        head = struct.pack("<d", s)
        if s == 0.0:
            return head
        return head + np.packbits((x < 0).astype(np.uint8)).tobytes()

    def _decode_body(self, m, buf):
        (s,) = struct.unpack_from("<d", buf)
        if s == 0.0:
            return np.zeros(m)
        neg = np.unpackbits(np.frombuffer(buf[8:], dtype=np.uint8))[:m]
        half = s * 0.5
        return np.where(neg == 1, -half, half)


KINDS = {
    "identity": Identity,
    "quantize": StochasticQuantizer,
    "top_k": TopK,
    "norm_sign": NormSign,
}
_BY_TAG = {cls.tag: cls for cls in KINDS.values()}


def make_compressor(kind, **params):
    try:
        cls = KINDS[kind]
    except KeyError:
        raise CompressorError(f"unknown compressor kind {kind!r} "
                              f"(choose from {', '.join(KINDS)})") from None
    return cls(**params)


def compress(kind, x, rng=None, **params):
    comp = kind if isinstance(kind, Compressor) else make_compressor(kind, **params)
    return comp.compress(x, rng)


def decode_payload(payload, compressor):
    """Reconstruct the dense vector a receiver sees from a payload."""
    tag, m = _HEADER.unpack_from(payload)
    if tag != compressor.tag:
        raise CompressorError(f"payload tag {tag} does not match {compressor.kind}")
    return compressor._decode_body(m, payload[_HEADER.size:])


def bits_per_round(compressor, m, n_agents):
    """Payload bits sent by all agents in one round (one broadcast each)."""
    return n_agents * compressor.message_bits(m)


@dataclass(frozen=True)
class ContractReport:
    kind: str
    dim: int
    declared: CompressorContract
    C_hat: float
    C_se: float
    r_hat: float
    one_minus_delta_hat: float
    one_minus_delta_at_r: float
    one_minus_delta_se: float
    n_directions: int
    draws_per_direction: int

    @property
    def delta_hat(self):
        return 1.0 - self.one_minus_delta_hat

    def lines(self):
        d = self.declared
        return [
            f"compressor       {self.kind} (dim {self.dim})",
            f"declared         C={d.C:.6g} delta={d.delta:.6g} r={d.r:.6g}",
            f"estimated C      {self.C_hat:.6g} (se {self.C_se:.2g})",
            f"at declared r    1-delta={self.one_minus_delta_at_r:.6g} (se {self.one_minus_delta_se:.2g})",
            f"best r on grid   r={self.r_hat:.6g} 1-delta={self.one_minus_delta_hat:.6g}",
        ]


def estimate_contract(compressor, dim, n_trials=1000, seed=0, n_directions=32,
                      r_grid=None, sigmas=3.0):
    """Monte-Carlo check of a compressor's declared contract.

    Random Gaussian directions are compressed repeatedly; for each direction
    the mean relative errors must stay within ``sigmas`` standard errors of
    the declared bounds, otherwise :class:`ContractViolation` is raised.
    """
    from .rng import stream

    if n_trials < 1:
        raise CompressorError("n_trials must be positive")
    rng = stream(seed, 0, "sample")
    dirs = rng.normal(size=(n_directions, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    draws = max(1, math.ceil(n_trials / n_directions)) if compressor.randomized else 1
    X = np.repeat(dirs, draws, axis=0)
    U = rng.random(X.shape) if compressor.randomized else None
    Y = compressor.decode_rows(X, U)
    declared = compressor.contract(dim)

    def per_direction(err):
        err = err.reshape(n_directions, draws)
        mean = err.mean(axis=1)
        se = err.std(axis=1, ddof=1) / math.sqrt(draws) if draws > 1 else np.zeros(n_directions)
        return mean, se

    c_mean, c_se = per_direction(np.sum((Y - X) ** 2, axis=1))
    r_mean, r_se = per_direction(np.sum((Y / declared.r - X) ** 2, axis=1))

    if r_grid is None:
        r_grid = declared.r * np.geomspace(0.25, 4.0, 41)
    r_grid = np.union1d(np.asarray(r_grid, dtype=float), [declared.r])
    worst = np.array([per_direction(np.sum((Y / r - X) ** 2, axis=1))[0].max() for r in r_grid])
    best = int(np.argmin(worst))

    tol = 1e-12
    bad_c = c_mean - sigmas * c_se > declared.C + tol
    bad_r = r_mean - sigmas * r_se > (1.0 - declared.delta) + tol
    report = ContractReport(
        kind=compressor.describe(), dim=dim, declared=declared,
        C_hat=float(c_mean.max()), C_se=float(c_se[np.argmax(c_mean)]),
        r_hat=float(r_grid[best]), one_minus_delta_hat=float(worst[best]),
        one_minus_delta_at_r=float(r_mean.max()),
        one_minus_delta_se=float(r_se[np.argmax(r_mean)]),
        n_directions=n_directions, draws_per_direction=draws,
    )
    if bad_c.any() or bad_r.any():
        raise ContractViolation(
            f"{compressor.describe()} at dim {dim} violates its declared contract: "
            f"C_hat={report.C_hat:.6g} vs C={declared.C:.6g}, "
            f"1-delta_hat={report.one_minus_delta_at_r:.6g} vs {1 - declared.delta:.6g}")
    return report

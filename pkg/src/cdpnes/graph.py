"""Directed communication graphs with row-stochastic mixing matrices."""
from dataclasses import dataclass, field
import warnings

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .rng import stream

ROW_SUM_TOL = 1e-12
ZERO_EIG_TOL = 1e-9


class GraphError(ValueError):
    """Raised for malformed graphs or spectral quantities that do not exist."""


class InvalidMixingMatrix(GraphError):
    """A well-formed matrix that fails a stochasticity or connectivity check."""


class IndefiniteWarning(UserWarning):
    """The symmetric part of I - W has a negative eigenvalue."""


@dataclass(frozen=True)
class MixingMatrix:
    """Row-stochastic weights of a directed graph.

    ``W[i, j] > 0`` means agent ``i`` receives from agent ``j`` (edge ``(j, i)``)
    or ``i == j``.
    """

    W: np.ndarray
    _csr: csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise GraphError(f"mixing matrix must be square, got shape {W.shape}")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "_csr", csr_matrix(W))

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def csr(self):
        """CSR view; row ``i`` lists agent ``i``'s in-neighbours (self included)."""
        return self._csr

    def in_neighbors(self, i):
        row = self._csr
        return row.indices[row.indptr[i]:row.indptr[i + 1]].tolist()

    def out_neighbors(self, j):
        return np.flatnonzero(self.W[:, j]).tolist()

    @property
    def edges(self):
        """Directed edges ``(j, i)`` for every nonzero off-diagonal ``W[i, j]``."""
        rows, cols = np.nonzero(self.W)
        return [(int(j), int(i)) for i, j in zip(rows, cols) if i != j]

    def validate(self):
        return validate(self)

    def __eq__(self, other):
        if not isinstance(other, MixingMatrix):
            return NotImplemented
        return self.W.shape == other.W.shape and np.array_equal(self.W, other.W)

    def __hash__(self):
        return hash(self.W.tobytes())


@dataclass(frozen=True)
class ValidationReport:
    n: int
    max_row_sum_deviation: float
    min_entry: float
    max_entry: float
    min_diagonal: float
    scc_count: int

    @property
    def row_stochastic(self):
        return self.max_row_sum_deviation <= ROW_SUM_TOL

    @property
    def entries_in_range(self):
        return self.min_entry >= 0.0 and self.max_entry <= 1.0

    @property
    def self_loops(self):
        return self.min_diagonal > 0.0

    @property
    def strongly_connected(self):
        return self.scc_count == 1

    @property
    def ok(self):
        return (self.row_stochastic and self.entries_in_range
                and self.self_loops and self.strongly_connected)

    def failures(self):
        out = []
        if not self.row_stochastic:
            out.append(f"row sums deviate from 1 by up to {self.max_row_sum_deviation:.3e}")
        if not self.entries_in_range:
            out.append(f"entries outside [0, 1]: min {self.min_entry:g}, max {self.max_entry:g}")
        if not self.self_loops:
            out.append("a diagonal entry is not positive")
        if not self.strongly_connected:
            out.append(f"graph has {self.scc_count} strongly connected components")
        return out


def validate(W):
    """Check the mixing-matrix assumptions and report every failure found."""
    M = W.W if isinstance(W, MixingMatrix) else np.asarray(W, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise GraphError(f"mixing matrix must be square, got shape {M.shape}")
    n = M.shape[0]
    adjacency = csr_matrix((M != 0).astype(np.int8))
    n_scc, _ = connected_components(adjacency, directed=True, connection="strong")
    return ValidationReport(
        n=n,
        max_row_sum_deviation=float(np.max(np.abs(M.sum(axis=1) - 1.0))),
        min_entry=float(M.min()),
        max_entry=float(M.max()),
        min_diagonal=float(np.diag(M).min()),
        scc_count=int(n_scc),
    )


def build_ring(n, self_weight=0.5):
    """Directed ring: agent ``i`` listens to itself and to agent ``i + 1``."""
    if int(n) != n or n < 2:
        raise GraphError(f"ring needs n >= 2 agents, got {n}")
    if not 0.0 < self_weight < 1.0:
        raise GraphError(f"self_weight must lie in (0, 1), got {self_weight}")
    n = int(n)
    W = np.zeros((n, n))
    idx = np.arange(n)
    W[idx, idx] = self_weight
    W[idx, (idx + 1) % n] = 1.0 - self_weight
    return MixingMatrix(W)


def build_random_strongly_connected(n, edge_prob, seed):
    """Ring backbone plus i.i.d. extra directed edges, uniform row weights.

    The backbone makes strong connectivity hold by construction.
    """
    if int(n) != n or n < 2:
        raise GraphError(f"graph needs n >= 2 agents, got {n}")
    if not 0.0 <= edge_prob <= 1.0:
        raise GraphError(f"edge_prob must lie in [0, 1], got {edge_prob}")
    n = int(n)
    rng = stream(seed, 0, "graph")
    support = rng.random((n, n)) < edge_prob
    idx = np.arange(n)
    support[idx, idx] = True
    support[idx, (idx + 1) % n] = True
    W = support / support.sum(axis=1, keepdims=True)
    return MixingMatrix(W)


def frob_norm_i_minus_w(W):
    M = W.W if isinstance(W, MixingMatrix) else np.asarray(W, dtype=float)
    return float(np.linalg.norm(np.eye(M.shape[0]) - M, "fro"))


def lambda_min_nonzero(W):
    """Smallest nonzero eigenvalue of the symmetric part of ``I - W``.

    Eigenvalues below ``1e-9`` times the spectral radius count as zero.  For a
    row-stochastic ``W`` that is not column-stochastic the symmetric part is
    indefinite; the most negative eigenvalue is then returned and an
    :class:`IndefiniteWarning` is emitted.
    """
    M = W.W if isinstance(W, MixingMatrix) else np.asarray(W, dtype=float)
    L = np.eye(M.shape[0]) - M
    eig = np.linalg.eigvalsh(0.5 * (L + L.T))
    scale = np.max(np.abs(eig))
    if scale == 0.0:
        raise GraphError("I - W has no nonzero eigenvalue")
    nonzero = eig[np.abs(eig) >= ZERO_EIG_TOL * scale]
    if nonzero.size == 0:
        raise GraphError("I - W has no nonzero eigenvalue")
    if nonzero[0] < 0.0:
        warnings.warn(
            f"symmetric part of I - W is indefinite (eigenvalue {nonzero[0]:.3e})",
            IndefiniteWarning,
            stacklevel=2,
        )
    return float(nonzero[0])


def save_csv(W, path):
    M = W.W if isinstance(W, MixingMatrix) else np.asarray(W, dtype=float)
    with open(path, "w") as fh:
        fh.write(f"{M.shape[0]}\n")
        for row in M:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_csv(path, check=True):
    """Load ``n`` then ``n`` comma-separated rows of ``n`` reals."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise GraphError(f"{path}: empty file")
    try:
        n = int(lines[0])
    except ValueError:
        raise GraphError(f"{path}:1: expected agent count, got {lines[0]!r}") from None
    if len(lines) != n + 1:
        raise GraphError(f"{path}: expected {n} matrix rows, found {len(lines) - 1}")
    rows = []
    for lineno, ln in enumerate(lines[1:], start=2):
        try:
            row = [float(v) for v in ln.split(",")]
        except ValueError:
            raise GraphError(f"{path}:{lineno}: non-numeric entry") from None
        if len(row) != n:
            raise GraphError(f"{path}:{lineno}: expected {n} entries, got {len(row)}")
        rows.append(row)
    return _checked(MixingMatrix(np.array(rows)), check, path)


def load_edge_list(path, n=None, normalize=False, check=True):
    """Load lines ``i j weight`` meaning ``W[i, j] = weight`` (0-based).

    Agent ``i`` receives from ``j``.  With ``normalize`` each row is rescaled
    to sum to one; otherwise weights are taken as given.
    """
    entries = []
    with open(path) as fh:
        for lineno, ln in enumerate(fh, start=1):
            ln = ln.split("#", 1)[0].strip()
            if not ln:
                continue
            parts = ln.split()
            if len(parts) != 3:
                raise GraphError(f"{path}:{lineno}: expected 'i j weight'")
            try:
                entries.append((int(parts[0]), int(parts[1]), float(parts[2])))
            except ValueError:
                raise GraphError(f"{path}:{lineno}: malformed entry {ln!r}") from None
    if not entries:
        raise GraphError(f"{path}: no edges")
    size = n if n is not None else 1 + max(max(i, j) for i, j, _ in entries)
    W = np.zeros((size, size))
    for i, j, w in entries:
        W[i, j] += w
    if normalize:
        sums = W.sum(axis=1, keepdims=True)
        if np.any(sums <= 0):
            raise GraphError(f"{path}: a row has no positive weight")
        W = W / sums
    return _checked(MixingMatrix(W), check, path)


def _checked(W, check, path):
    if check:
        report = validate(W)
        if not report.ok:
            raise InvalidMixingMatrix(f"{path}: invalid mixing matrix: " + "; ".join(report.failures()))
    return W

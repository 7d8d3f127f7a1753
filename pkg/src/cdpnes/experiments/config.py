"""Experiment configuration files.

INI-style text with one section per component::

    [game]
    kind = connectivity
    n = 50
    d = 2
    box = -10, 10

    [graph]
    kind = random
    edge_prob = 0.1
    seed = 0

    [compressor]
    kind = quantize
    b = 2
    l = 32

    [run]
    gamma = 0.01
    eta = 0.01
    alpha = 0.01
    K = 8000
    projected = true

    [privacy]
    epsilon = 1, 2, 5

    [seeds]
    list = 0, 1, 2

    [output]
    dir = out/fig1

Unknown sections or keys are rejected with the offending line number.
"""
import ast
from configparser import ConfigParser, Error as _CPError
from dataclasses import dataclass, field
import os
import re


from ..compressors import make_compressor
from ..games import BoxConstraint, ConnectivityControlGame, QuadraticGame
from ..graph import (InvalidMixingMatrix, build_random_strongly_connected, build_ring,
                     load_csv, load_edge_list)

OUTPUT_ENV = "CDPNES_OUTPUT_DIR"


class ConfigError(ValueError):
    def __init__(self, message, line=None, path=None):
        self.line, self.path = line, path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


SCHEMA = {
    "game": {"kind", "n", "d", "box", "path", "seed", "mu", "scale"},
    "graph": {"kind", "n", "self_weight", "edge_prob", "seed", "path", "normalize"},
    "compressor": {"kind", "b", "k", "l"},
    "run": {"gamma", "eta", "alpha", "k", "projected", "box", "backend", "x0", "h0",
            "workers"},
    "privacy": {"epsilon", "theta", "m"},
    "seeds": {"list"},
    "output": {"dir", "trace", "summary"},
}
REQUIRED = {"game": {"kind"}, "graph": {"kind"}, "run": {"gamma", "eta", "alpha", "k"}}


@dataclass
class ExperimentConfig:
    game: object
    W: object
    compressor: object
    gamma: float | None  # None: use the recommended stepsize
    eta: float
    alpha: float
    K: int
    projected: bool = False
    box: BoxConstraint | None = None
    backend: str | None = None
    x0: float | None = None
    h0: float = 0.0
    epsilons: list | None = None
    thetas: list = field(default_factory=lambda: [0.0])
    M: float | None = None
    seeds: list = field(default_factory=lambda: [0])
    out_dir: str = "out"
    trace_name: str = "trace_eps{epsilon}_seed{seed}.csv"
    summary_name: str = "summary.csv"
    workers: int = 1
    source: str | None = None

    @property
    def output_dir(self):
        return os.environ.get(OUTPUT_ENV) or self.out_dir

    def sample_box(self):
        """Box over which the gradient bound M is taken."""
        if self.box is not None:
            return self.box
        return getattr(self.game, "constraint", None)


def _line_index(text):
    """Map (section, key) and section names to 1-based line numbers."""
    index, section = {}, None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), no)
            continue
        key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
        index.setdefault((section, key), no)
    return index


class _Reader:
    def __init__(self, cp, index, path):
        self.cp, self.index, self.path = cp, index, path

    def error(self, section, key, msg):
        return ConfigError(msg, self.index.get((section, key), self.index.get((section, None))),
                           self.path)

    def has(self, section, key):
        return self.cp.has_option(section, key)

    def get(self, section, key, conv=str, default=None):
        if not self.cp.has_option(section, key):
            return default
        raw = self.cp.get(section, key).strip()
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise self.error(section, key, f"[{section}] {key}: {exc}") from None

    def floats(self, section, key, default=None):
        return self.get(section, key, lambda s: [float(v) for v in s.split(",") if v.strip()],
                        default)


def _bool(s):
    v = s.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _float_or_auto(s):
    return None if s.lower() == "auto" else float(s)


def _box(s):
    parts = [float(v) for v in s.split(",")]
    if len(parts) != 2:
        raise ValueError("box needs 'lo, hi'")
    return BoxConstraint.uniform(*parts)


def _seeds(s):
    out = []
    for tok in s.split(","):
        tok = tok.strip()
        if ".." in tok:
            a, b = tok.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif tok:
            out.append(int(tok))
    if not out:
        raise ValueError("empty seed list")
    return out


def _resolve(base, path):
    if path is None or os.path.isabs(path) or base is None:
        return path
    return os.path.join(os.path.dirname(os.path.abspath(base)), path)


def parse_config(text, path=None):
    """Build an :class:`ExperimentConfig` from configuration text."""
    cp = ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=path or "<config>")
    except _CPError as exc:
        line = getattr(exc, "lineno", None)
        msg = exc.message.splitlines()[0] if hasattr(exc, "message") else str(exc)
        if line is None and getattr(exc, "errors", None):
            line, bad = exc.errors[0]
            try:
                bad = ast.literal_eval(bad)
            except (ValueError, SyntaxError):
                pass
            msg = f"cannot parse {bad.strip()!r}: expected 'key = value' or [section]"
        raise ConfigError(msg, line, path) from None
    index = _line_index(text)
    rd = _Reader(cp, index, path)
    for section in cp.sections():
        if section not in SCHEMA:
            raise rd.error(section, None, f"unknown section [{section}]")
        for key in cp.options(section):
            if key not in SCHEMA[section]:
                raise rd.error(section, key, f"unknown key '{key}' in [{section}]")
    for section, keys in REQUIRED.items():
        if not cp.has_section(section):
            raise ConfigError(f"missing section [{section}]", None, path)
        for key in keys:
            if not cp.has_option(section, key):
                raise rd.error(section, None, f"[{section}] is missing '{key}'")

    game = _build_game(rd, path)
    W = _build_graph(rd, path, game.n)
    if cp.has_section("compressor"):
        kind = rd.get("compressor", "kind", default="identity")
        kw = {"l": rd.get("compressor", "l", int, 32)}
        if kind == "quantize":
            kw["b"] = rd.get("compressor", "b", int, 2)
        elif kind == "top_k":
            if not rd.has("compressor", "k"):
                raise rd.error("compressor", None, "top_k needs 'k'")
            kw["k"] = rd.get("compressor", "k", int)
        try:
            comp = make_compressor(kind, **kw)
        except (ValueError, TypeError) as exc:
            raise rd.error("compressor", "kind", str(exc)) from None
    else:
        comp = make_compressor("identity")

    cfg = ExperimentConfig(
        game=game, W=W, compressor=comp,
        gamma=rd.get("run", "gamma", _float_or_auto), eta=rd.get("run", "eta", float),
        alpha=rd.get("run", "alpha", float), K=rd.get("run", "k", int),
        projected=rd.get("run", "projected", _bool, False),
        box=rd.get("run", "box", _box), backend=rd.get("run", "backend"),
        x0=rd.get("run", "x0", float), h0=rd.get("run", "h0", float, 0.0),
        workers=rd.get("run", "workers", int, 1), source=path,
    )
    if cfg.K < 0:
        raise rd.error("run", "k", "K must be non-negative")
    if cfg.projected and cfg.box is None:
        cfg.box = getattr(game, "constraint", None)
        if cfg.box is None:
            raise rd.error("run", "projected", "projected run needs a box")

    if cp.has_section("privacy"):
        has_eps, has_theta = rd.has("privacy", "epsilon"), rd.has("privacy", "theta")
        if has_eps and has_theta:
            raise rd.error("privacy", "theta", "give either epsilon or theta, not both")
        if has_eps:
            cfg.epsilons = rd.floats("privacy", "epsilon")
            if not cfg.epsilons or min(cfg.epsilons) <= 0:
                raise rd.error("privacy", "epsilon", "epsilon values must be positive")
        if has_theta:
            cfg.thetas = rd.floats("privacy", "theta")
            if not cfg.thetas or min(cfg.thetas) < 0:
                raise rd.error("privacy", "theta", "theta values must be non-negative")
        m = rd.get("privacy", "m", default="auto")
        if m.lower() != "auto":
            cfg.M = rd.get("privacy", "m", float)
    if cp.has_section("seeds"):
        cfg.seeds = rd.get("seeds", "list", _seeds, [0])
    if cp.has_section("output"):
        cfg.out_dir = rd.get("output", "dir", default="out")
        cfg.trace_name = rd.get("output", "trace", default=cfg.trace_name)
        cfg.summary_name = rd.get("output", "summary", default=cfg.summary_name)
    return cfg


def _build_game(rd, path):
    kind = rd.get("game", "kind")
    box = rd.get("game", "box", _box)
    if kind == "connectivity":
        n, d = rd.get("game", "n", int, 50), rd.get("game", "d", int, 2)
        lohi = (box.lo, box.hi) if box is not None else (-10.0, 10.0)
        return ConnectivityControlGame(n=n, d=d, box=lohi)
    if kind == "quadratic":
        src = rd.get("game", "path")
        if src is None:
            raise rd.error("game", "kind", "quadratic game needs 'path'")
        try:
            return QuadraticGame.from_csv(_resolve(path, src), constraint=box)
        except (OSError, ValueError) as exc:
            raise rd.error("game", "path", str(exc)) from None
    if kind == "random_quadratic":
        n = rd.get("game", "n", int, 3)
        return QuadraticGame.random(n, seed=rd.get("game", "seed", int, 0),
                                    d=rd.get("game", "d", int, 1),
                                    mu=rd.get("game", "mu", float, 0.5),
                                    scale=rd.get("game", "scale", float, 1.0),
                                    constraint=box)
    raise rd.error("game", "kind", f"unknown game kind {kind!r}")


def _build_graph(rd, path, n_game):
    kind = rd.get("graph", "kind")
    n = rd.get("graph", "n", int, n_game)
    if n != n_game:
        raise rd.error("graph", "n", f"graph has {n} agents but game has {n_game}")
    try:
        if kind == "ring":
            return build_ring(n, rd.get("graph", "self_weight", float, 0.5))
        if kind == "random":
            return build_random_strongly_connected(n, rd.get("graph", "edge_prob", float, 0.1),
                                                   rd.get("graph", "seed", int, 0))
        if kind in ("csv", "edges"):
            src = _resolve(path, rd.get("graph", "path"))
            if src is None:
                raise rd.error("graph", "kind", f"graph kind {kind!r} needs 'path'")
            if kind == "csv":
                return load_csv(src)
            return load_edge_list(src, n=n, normalize=rd.get("graph", "normalize", _bool, False))
    except (OSError, ValueError) as exc:
        if isinstance(exc, (ConfigError, InvalidMixingMatrix)):
            raise
        raise rd.error("graph", "kind", str(exc)) from None
    raise rd.error("graph", "kind", f"unknown graph kind {kind!r}")


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(str(exc), None, path) from None
    return parse_config(text, path)

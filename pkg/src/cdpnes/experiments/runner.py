"""Run configured experiments and write trace/summary CSVs."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
import csv
import math
import os
import warnings

import numpy as np

from .. import analysis
from ..compressors import Identity, bits_per_round
from ..engine import RunParams, Simulation
from ..games import AssumptionWarning, GameError, estimate_constants
from ..privacy import NoiseParams, PrivacyBudget, choose_noise, implied_epsilon
from .config import ConfigError

SUMMARY_HEADER = ["epsilon", "seed", "k", "mean_residual", "std_residual", "cum_bits"]


class InfeasibleParamsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PrivacyLevel:
    epsilon: float
    noise: NoiseParams

    @property
    def theta_bar(self):
        return self.noise.theta_bar


def game_constants(cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AssumptionWarning)
        return estimate_constants(cfg.game, cfg.sample_box())


def gradient_bound(cfg):
    if cfg.M is not None:
        return cfg.M
    try:
        M = game_constants(cfg).M
    except GameError as exc:
        raise ConfigError(f"cannot compute M automatically: {exc}") from None
    if not math.isfinite(M):
        raise ConfigError("M = auto needs a box ([run] box or a constrained game)")
    return M


def resolve_gamma(cfg):
    """``cfg`` with ``gamma = auto`` replaced by ``mu_F / L_F^2``."""
    if cfg.gamma is not None:
        return cfg
    contract = cfg.compressor.contract(cfg.game.n * cfg.game.d)
    cc = analysis.analyze(game_constants(cfg), cfg.W, cfg.eta, cfg.alpha, contract,
                          d=cfg.game.d)
    if not cc.mu_F > 0:
        raise ConfigError(f"gamma = auto needs mu_F > 0, got {cc.mu_F:.3e}")
    return replace(cfg, gamma=cc.gamma_star)


def privacy_levels(cfg):
    """Noise settings to run, one per configured epsilon or theta."""
    cfg = resolve_gamma(cfg)
    if cfg.epsilons is not None:
        M = gradient_bound(cfg)
        return [PrivacyLevel(eps, choose_noise(PrivacyBudget(eps, cfg.K, M, cfg.gamma, cfg.eta)))
                for eps in cfg.epsilons]
    levels = []
    for theta in cfg.thetas:
        if theta == 0:
            eps = math.inf
        else:
            eps = float(implied_epsilon(theta, cfg.gamma, cfg.eta, cfg.K, gradient_bound(cfg)))
        levels.append(PrivacyLevel(eps, NoiseParams.uniform(theta, cfg.game.n)))
    return levels


def run_params(cfg, level, seed, compressor=None, K=None):
    return RunParams(gamma=cfg.gamma, eta=cfg.eta, alpha=cfg.alpha,
                     K=cfg.K if K is None else K, noise=level.noise,
                     compressor=cfg.compressor if compressor is None else compressor,
                     projected=cfg.projected, box=cfg.box, seed=seed, backend=cfg.backend)


def make_simulation(cfg, level, seed, compressor=None, K=None):
    return Simulation(cfg.game, cfg.W, run_params(cfg, level, seed, compressor, K),
                      x0=cfg.x0, h0=cfg.h0)


def analyze_config(cfg, levels=None):
    """Convergence constants for each privacy level of a configuration."""
    cfg = resolve_gamma(cfg)
    levels = privacy_levels(cfg) if levels is None else levels
    consts = game_constants(cfg)
    contract = cfg.compressor.contract(cfg.game.n * cfg.game.d)
    return [analysis.analyze(consts, cfg.W, cfg.eta, cfg.alpha, contract,
                             theta_bar=lv.theta_bar, gamma=cfg.gamma, d=cfg.game.d)
            for lv in levels]


def _warn_infeasible(cfg, levels):
    try:
        reports = analyze_config(cfg, levels)
    except (ValueError, ArithmeticError) as exc:
        warnings.warn(f"convergence analysis unavailable: {exc}", InfeasibleParamsWarning,
                      stacklevel=3)
        return
    issues = sorted({i for r in reports for i in r.issues})
    if issues:
        warnings.warn("parameters outside the analysed regime: " + "; ".join(issues),
                      InfeasibleParamsWarning, stacklevel=3)


def _run_cell(args):
    cfg, level, seed = args
    return make_simulation(cfg, level, seed).run()


def _fmt_eps(eps):
    return "inf" if math.isinf(eps) else f"{eps:g}"


@dataclass
class ExperimentResult:
    levels: list
    seeds: list
    runs: dict
    summary: list
    trace_paths: dict
    summary_path: str | None

    def tail_means(self, epsilon, frac=0.1):
        """Per-seed mean residual over the last ``frac`` of iterations."""
        out = []
        for seed in self.seeds:
            res = self.runs[(epsilon, seed)].residuals
            tail = max(1, int(math.ceil(frac * len(res)))) if len(res) else 0
            out.append(float(res[-tail:].mean()) if tail else math.nan)
        return np.array(out)


def run_experiment(cfg, write=True):
    """Every (privacy level, seed) cell of ``cfg``; CSVs go to ``cfg.output_dir``."""
    cfg = resolve_gamma(cfg)
    levels = privacy_levels(cfg)
    _warn_infeasible(cfg, levels)
    cells = [(lv, seed) for lv in levels for seed in cfg.seeds]
    if cfg.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_cell, [(cfg, lv, s) for lv, s in cells]))
    else:
        results = [_run_cell((cfg, lv, s)) for lv, s in cells]
    runs = {(lv.epsilon, s): r for (lv, s), r in zip(cells, results)}

    summary = []
    for lv in levels:
        per_seed = [runs[(lv.epsilon, s)] for s in cfg.seeds]
        curves = np.array([[r.initial_residual, *r.residuals] for r in per_seed])
        bits = np.array([[0, *(t.cum_bits for t in r.trace)] for r in per_seed])
        ddof = 1 if len(per_seed) > 1 else 0
        mean, std = curves.mean(axis=0), curves.std(axis=0, ddof=ddof)
        for k in range(curves.shape[1]):
            col = bits[:, k]
            cb = int(col[0]) if np.all(col == col[0]) else float(col.mean())
            summary.append((_fmt_eps(lv.epsilon), "all", k, float(mean[k]), float(std[k]), cb))

    trace_paths, summary_path = {}, None
    if write:
        out = cfg.output_dir
        os.makedirs(out, exist_ok=True)
        for (lv, seed), r in zip(cells, results):
            name = cfg.trace_name.format(epsilon=_fmt_eps(lv.epsilon), theta=f"{lv.theta_bar:g}",
                                         seed=seed)
            path = os.path.join(out, name)
            r.write_csv(path)
            trace_paths[(lv.epsilon, seed)] = path
        summary_path = os.path.join(out, cfg.summary_name)
        write_summary(summary, summary_path)
    return ExperimentResult(levels, list(cfg.seeds), runs, summary, trace_paths, summary_path)


def write_summary(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for eps, seed, k, m, s, cb in rows:
            w.writerow([eps, seed, k, repr(m), repr(s), cb])


def sweep(cfg, epsilons, write=True):
    return run_experiment(replace(cfg, epsilons=list(epsilons)), write=write)


@dataclass(frozen=True)
class BitsRow:
    variant: str
    seed: str
    reached: bool
    iterations: int
    total_bits: float
    bits_per_round: int
    final_residual: float
    floor_estimate: float

    def cells(self):
        status = "reached" if self.reached else "unreachable"
        total = self.total_bits if self.reached else ""
        floor = "" if self.reached else repr(self.floor_estimate)
        return [self.variant, self.seed, status, self.iterations, total, self.bits_per_round,
                repr(self.final_residual), floor]


BITS_HEADER = ["variant", "seed", "status", "iterations", "total_bits", "bits_per_round",
               "final_residual", "floor_estimate"]


def _variant_rows(cfg, name, compressor, level, target):
    sims = [make_simulation(cfg, level, s, compressor=compressor) for s in cfg.seeds]
    n, m = cfg.game.n, cfg.game.n * cfg.game.d
    per_round = bits_per_round(compressor, m, n)
    hit = {s: None for s in cfg.seeds}
    mean_hit = None
    means = []
    for k in range(cfg.K):
        recs = [sim.step(k) for sim in sims]
        for s, rec in zip(cfg.seeds, recs):
            if hit[s] is None and rec.residual <= target:
                hit[s] = (k + 1, rec.cum_bits, rec.residual)
        mean_res = float(np.mean([r.residual for r in recs]))
        means.append(mean_res)
        if mean_hit is None and mean_res <= target:
            mean_hit = (k + 1, float(np.mean([r.cum_bits for r in recs])), mean_res)
        if mean_hit is not None and all(v is not None for v in hit.values()):
            break
    tail = max(1, len(means) // 10)
    floor = float(np.mean(means[-tail:])) if means else float(np.mean([s.residual() for s in sims]))
    rows = []
    for s, sim in zip(cfg.seeds, sims):
        if hit[s] is not None:
            it, bits, res = hit[s]
            rows.append(BitsRow(name, str(s), True, it, int(bits), per_round, res, floor))
        else:
            rows.append(BitsRow(name, str(s), False, len(means), math.nan, per_round,
                                sim.residual(), floor))
    if mean_hit is not None:
        it, bits, res = mean_hit
        rows.append(BitsRow(name, "mean", True, it, bits, per_round, res, floor))
    else:
        rows.append(BitsRow(name, "mean", False, len(means), math.nan, per_round,
                            means[-1] if means else floor, floor))
    return rows


@dataclass
class BitsResult:
    target: float
    rows: list
    path: str | None

    def mean_row(self, variant):
        return next(r for r in self.rows if r.variant == variant and r.seed == "mean")

    @property
    def ratio(self):
        """Uncompressed over compressed total bits at the target (nan if either misses)."""
        a, b = self.mean_row("uncompressed"), self.mean_row("compressed")
        if not (a.reached and b.reached):
            return math.nan
        return a.total_bits / b.total_bits


def bits_to_target(cfg, target, write=True):
    """Cumulative bits each variant sends before the mean residual reaches ``target``.

    Variants are the configured compressor and the identity compressor with
    the same word length.  The first privacy level is used.  A variant that
    never reaches the target within ``K`` rounds is marked unreachable and the
    mean residual over its last 10% of rounds is reported as a floor estimate.
    """
    if target <= 0:
        raise ConfigError("target residual must be positive")
    cfg = resolve_gamma(cfg)
    level = privacy_levels(cfg)[0]
    _warn_infeasible(cfg, [level])
    variants = [("compressed", cfg.compressor), ("uncompressed", Identity(l=cfg.compressor.l))]
    rows = []
    for name, comp in variants:
        rows.extend(_variant_rows(cfg, name, comp, level, target))
    path = None
    if write:
        os.makedirs(cfg.output_dir, exist_ok=True)
        path = os.path.join(cfg.output_dir, "bits_to_target.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(BITS_HEADER)
            for r in rows:
                w.writerow(r.cells())
    return BitsResult(target, rows, path)

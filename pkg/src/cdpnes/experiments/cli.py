"""Command-line entry point ``cdpnes``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error,
3 an assumption or contract check failed.
"""
import argparse
import math
import sys
import warnings

import numpy as np

from ..analysis import AnalysisError, constants_csv
from ..compressors import ContractViolation, CompressorError, estimate_contract, make_compressor
from ..engine import EngineError
from ..games import GameError
from ..graph import GraphError
from ..privacy import PrivacyBudget, PrivacyError, budget_report
from .config import ConfigError, load_config
from .runner import (analyze_config, bits_to_target, gradient_bound, privacy_levels,
                     resolve_gamma, run_experiment, sweep)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ASSUMPTION = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _epsilon_list(s):
    try:
        vals = [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {s!r}")
    if not vals or min(vals) <= 0:
        raise argparse.ArgumentTypeError("epsilon values must be positive")
    return vals


def build_parser():
    p = _Parser(prog="cdpnes", description="Compressed, differentially private "
                "distributed Nash-equilibrium seeking.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("run", help="run an experiment configuration")
    s.add_argument("config")
    s = sub.add_parser("analyze", help="convergence constants and feasibility")
    s.add_argument("config")
    s.add_argument("--csv", help="also write the constants table to this file")
    s = sub.add_parser("sweep", help="run the configuration for several privacy budgets")
    s.add_argument("--epsilon", type=_epsilon_list, required=True)
    s.add_argument("config")
    s = sub.add_parser("validate-compressor", help="Monte-Carlo check of a compressor contract")
    s.add_argument("kind")
    s.add_argument("--dim", type=int, default=10)
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--b", type=int, default=2, help="quantizer bits")
    s.add_argument("--k", type=int, help="top_k sparsity (default dim // 2)")
    s.add_argument("--l", type=int, default=32, help="bits per real number")
    s.add_argument("--seed", type=int, default=0)
    s = sub.add_parser("privacy-budget", help="per-agent noise scales for each budget")
    s.add_argument("config")
    s = sub.add_parser("bits-to-target", help="bits needed to reach a residual")
    s.add_argument("config")
    s.add_argument("--target", type=float, required=True)
    return p


def _cmd_run(args, out):
    res = run_experiment(load_config(args.config))
    _report_runs(res, out)
    return EXIT_OK


def _cmd_sweep(args, out):
    res = sweep(load_config(args.config), args.epsilon)
    _report_runs(res, out)
    return EXIT_OK


def _report_runs(res, out):
    for lv in res.levels:
        tails = res.tail_means(lv.epsilon)
        print(f"epsilon={lv.epsilon:g} theta={lv.theta_bar:.6g} "
              f"tail_mean_residual={tails.mean():.6g} seeds={len(tails)}", file=out)
    if res.summary_path:
        print(f"summary written to {res.summary_path}", file=out)


def _cmd_analyze(args, out):
    cfg = load_config(args.config)
    rows = analyze_config(cfg)
    for lv, cc in zip(privacy_levels(cfg), rows):
        print(f"# epsilon={lv.epsilon:g} theta_bar={lv.theta_bar:.6g}", file=out)
        for line in cc.lines():
            print(line, file=out)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(constants_csv(rows))
    bad = [cc for cc in rows if not cc.feasible]
    if bad:
        print("assumption check failed: " + "; ".join(bad[0].issues), file=out)
        return EXIT_ASSUMPTION
    return EXIT_OK


def _cmd_validate(args, out):
    kw = {"l": args.l}
    if args.kind == "quantize":
        kw["b"] = args.b
    elif args.kind == "top_k":
        kw["k"] = args.k if args.k is not None else max(1, args.dim // 2)
    comp = make_compressor(args.kind, **kw)
    try:
        rep = estimate_contract(comp, args.dim, n_trials=args.trials, seed=args.seed)
    except ContractViolation as exc:
        print(f"contract violated: {exc}", file=out)
        return EXIT_ASSUMPTION
    for line in rep.lines():
        print(line, file=out)
    print("contract holds", file=out)
    return EXIT_OK


def _cmd_privacy(args, out):
    cfg = resolve_gamma(load_config(args.config))
    M = gradient_bound(cfg)
    if cfg.epsilons is None:
        for lv in privacy_levels(cfg):
            eps = "inf" if math.isinf(lv.epsilon) else f"{lv.epsilon:.6g}"
            print(f"theta={lv.theta_bar:.6g} implied_epsilon={eps} M={M:.6g}", file=out)
        return EXIT_OK
    first = True
    for eps in cfg.epsilons:
        text = budget_report(PrivacyBudget(np.full(cfg.game.n, eps), cfg.K, M, cfg.gamma, cfg.eta))
        lines = text.splitlines()
        out.write("\n".join(lines if first else lines[1:]) + "\n")
        first = False
    return EXIT_OK


def _cmd_bits(args, out):
    res = bits_to_target(load_config(args.config), args.target)
    for r in res.rows:
        if r.seed != "mean":
            continue
        if r.reached:
            print(f"{r.variant}: reached {args.target:g} after {r.iterations} rounds, "
                  f"{r.total_bits:.6g} bits ({r.bits_per_round} per round)", file=out)
        else:
            print(f"{r.variant}: unreachable within {r.iterations} rounds, "
                  f"floor estimate {r.floor_estimate:.6g}", file=out)
    if math.isfinite(res.ratio):
        print(f"uncompressed/compressed bits ratio: {res.ratio:.4g}", file=out)
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "analyze": _cmd_analyze, "sweep": _cmd_sweep,
            "validate-compressor": _cmd_validate, "privacy-budget": _cmd_privacy,
            "bits-to-target": _cmd_bits}


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_CONFIG
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                return COMMANDS[args.command](args, out)
            finally:
                for w in caught:
                    print(f"warning: {w.message}", file=sys.stderr)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GraphError as exc:
        print(f"graph check failed: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except CompressorError as exc:
        print(f"compressor error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EngineError, AnalysisError, GameError, PrivacyError, OSError,
            ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

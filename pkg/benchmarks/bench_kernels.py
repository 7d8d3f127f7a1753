"""Compare the compiled and pure-Python kernels on full rounds and on the quantizer.

    python benchmarks/bench_kernels.py [--n 50] [--steps 2000]
"""
import argparse
import time

import numpy as np

from cdpnes import ConnectivityControlGame, RunParams, Simulation, StochasticQuantizer
from cdpnes._backend import BACKENDS, get_kernels
from cdpnes.graph import build_random_strongly_connected


def time_rounds(backend, n, steps):
    game = ConnectivityControlGame(n=n)
    W = build_random_strongly_connected(n, 0.1, 0)
    params = RunParams(gamma=0.01, eta=0.01, alpha=0.01, K=steps, noise=1.0,
                       compressor=StochasticQuantizer(2), projected=True, box=game.constraint,
                       backend=backend)
    sim = Simulation(game, W, params)
    t0 = time.perf_counter()
    res = sim.run()
    return time.perf_counter() - t0, res.X


def time_quantizer(backend, n, reps):
    k = get_kernels(backend)
    rng = np.random.default_rng(0)
    D, U = rng.standard_normal((n, 2 * n)), rng.random((n, 2 * n))
    t0 = time.perf_counter()
    for _ in range(reps):
        k.quantize_rows(D, U, 2.0)
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args()
    names = [b for b in ("cython", "python") if BACKENDS.get(b) is not None]
    states = {}
    print(f"{'backend':<8} {'rounds/s':>10} {'quantize/s':>11}")
    for name in names:
        t, X = time_rounds(name, args.n, args.steps)
        states[name] = X
        tq = time_quantizer(name, args.n, 200)
        print(f"{name:<8} {args.steps / t:>10.0f} {200 / tq:>11.0f}")
    if len(states) == 2:
        same = np.array_equal(states["cython"], states["python"])
        print(f"final states identical: {same}")


if __name__ == "__main__":
    main()

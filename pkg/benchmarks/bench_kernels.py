"""Time the compiled kernels against their numpy twins, plus one end-to-end run.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--skip-sim]

The end-to-end timings run the ex72-stable preset simulation in fresh interpreters,
once with the compiled kernels and once with SIZESTRUCT_DISABLE_NUMBA=1.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from sizestruct import kernels
from sizestruct._jit import NUMBA_AVAILABLE


def cases(rng):
    ns = 2001
    p = rng.random(ns)
    gamma = 1 + rng.random(ns)
    mu = rng.random(ns)
    return {
        "cumtrapz_rows (128 x 2001)": ("cumtrapz_rows", (rng.random((128, ns)), 0.004)),
        "upwind (2001)": ("upwind", (p, gamma, mu, 0.004, 0.02)),
        "delay_trapezoid (51 x 401)": ("delay_trapezoid", (rng.random((51, 401)), 17, 0.02, 0.01)),
        "damped_prefix (128 x 2001)": ("damped_prefix", (rng.random((128, ns)) * 0.01, rng.random(ns), 0.004)),
    }


SIM_SNIPPET = """
import time
from sizestruct import config
from sizestruct.simulator import SimConfig, run
cfg = config.load_preset("ex72-stable")
sim = SimConfig(cfg.rates(), cfg.sim_grid(), cfg.sim.t_end, cfg.parse(("sim", "history_init")))
run(SimConfig(sim.rates, sim.grid, 0.5, sim.history_init))  # warm-up (JIT cache load)
t0 = time.perf_counter()
run(sim)
print(time.perf_counter() - t0)
"""


def time_simulation(disable_numba):
    env = dict(os.environ)
    if disable_numba:
        env["SIZESTRUCT_DISABLE_NUMBA"] = "1"
    else:
        env.pop("SIZESTRUCT_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", SIM_SNIPPET], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-sim", action="store_true")
    args = parser.parse_args(argv)

    if not NUMBA_AVAILABLE:
        print("numba is not installed; both columns use the numpy kernels")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'numba [ms]':>12s} {'numpy [ms]':>12s} {'speed-up':>9s}")
    for label, (name, call_args) in cases(rng).items():
        fast = getattr(kernels.numba_kernels, name)
        slow = getattr(kernels.numpy_kernels, name)
        fast(*call_args)  # compile outside the timing
        number = 20
        t_fast = min(timeit.repeat(lambda: fast(*call_args), number=number, repeat=args.repeat)) / number
        t_slow = min(timeit.repeat(lambda: slow(*call_args), number=number, repeat=args.repeat)) / number
        print(f"{label:32s} {t_fast * 1e3:12.4f} {t_slow * 1e3:12.4f} {t_slow / t_fast:8.1f}x")

    if not args.skip_sim:
        t_fast = time_simulation(False)
        t_slow = time_simulation(True)
        print(f"\nex72-stable simulation, t_end=60, ns=401: numba {t_fast:.2f} s, numpy {t_slow:.2f} s")


if __name__ == "__main__":
    main()

"""Compare the compiled and pure-Python event kernels.

    python benchmarks/bench_kernels.py [--events N]

Both backends consume the same uniform stream, so the final configurations
must agree exactly; the script checks that before timing.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from glauber import kernels
from glauber.dynamics import ChainState, run
from glauber.geometry import Box, ModelParams
from glauber.potentials import HardCore, SoftGaussian, Strauss, Zero

CASES = [
    ("zero", Zero(), 50.0),
    ("strauss", Strauss(1.0, 0.1), 50.0),
    ("hardcore", HardCore(0.05), 50.0),
    ("softgaussian", SoftGaussian(1.0, 0.03), 50.0),
]


def time_backend(params, backend, events, seed=0):
    state = ChainState.start(params, seed)
    t0 = time.perf_counter()
    traj = run(state, params, events=events, record=False, backend=backend)
    return time.perf_counter() - t0, state.config.points.copy(), traj.final_time


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=int, default=200_000)
    args = ap.parse_args(argv)
    if not kernels.compiled_available():
        print("compiled extension not built; only the Python backend is available")
        return 1
    box = Box((1.0, 1.0))
    print(f"{'potential':14s} {'python ev/s':>12s} {'compiled ev/s':>14s} {'speedup':>8s}")
    for name, pot, z in CASES:
        params = ModelParams(z, pot, box)
        n_py = max(args.events // 20, 1000)
        tp, pts_p, tf_p = time_backend(params, "python", n_py)
        tc, pts_c, tf_c = time_backend(params, "compiled", n_py)
        if not (np.array_equal(pts_p, pts_c) and tf_p == tf_c):
            raise SystemExit(f"{name}: backends disagree")
        tc, _, _ = time_backend(params, "compiled", args.events)
        rp, rc = n_py / tp, args.events / tc
        print(f"{name:14s} {rp:12.0f} {rc:14.0f} {rc / rp:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

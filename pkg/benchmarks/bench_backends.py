"""Compare the JIT and pure-numpy kernel backends.

Runs the three hot ODE right-hand-side kernels and one full adaptive
integration per system under ``MULTIFLAT_BACKEND=numba`` and
``MULTIFLAT_BACKEND=numpy`` in separate interpreter processes (the
backend is fixed at import time), then prints a timing table.

Usage: python benchmarks/bench_backends.py [--reps 20000] [--loops 5]
"""

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json
import sys
import time

import numpy as np

from multiflat import biflat6, regular

reps = int(sys.argv[1])
loops = int(sys.argv[2])

CASES = {
    "mainsys_rhs": (biflat6._mainsys_kernel, 1.7,
                    np.array([0.2, -0.1, 0.3, 0.15, -0.25, 0.1])),
    "j3_rhs": (regular._j3_kernel, 1.7,
               np.array([1.0, 0.3, -0.2, 0.5, 0.1, -0.4])),
    "j21_rhs": (regular._j21_kernel, 1.7,
                np.array([0.4, -0.3, 1.2, 0.2, 0.5, -0.1])),
}

INTEGRATIONS = {
    "mainsys_integrate": lambda: biflat6.integrate(
        biflat6.BiflatState.from_vector(
            [0.2, -0.1, 0.3, 0.15, -0.25, 0.1], 1.5), 3.0),
    "j3_integrate": lambda: regular.integrate_j3(
        regular.J3State.from_vector([1.0, 0.3, -0.2, 0.5, 0.1, -0.4], 1.5),
        2.5),
    "j21_integrate": lambda: regular.integrate_j21(
        regular.J21State.from_vector([0.4, -0.3, 1.2, 0.2, 0.5, -0.1], 1.5),
        2.5),
}

out = {}
for name, (kernel, z, y) in CASES.items():
    kernel(z, y)  # warm up (JIT compilation happens here)
    best = float("inf")
    for _ in range(loops):
        t0 = time.perf_counter()
        for _ in range(reps):
            kernel(z, y)
        best = min(best, (time.perf_counter() - t0) / reps)
    out[name] = best
for name, run in INTEGRATIONS.items():
    run()  # warm up
    best = float("inf")
    for _ in range(max(1, loops // 2)):
        t0 = time.perf_counter()
        run()
        best = min(best, time.perf_counter() - t0)
    out[name] = best
print(json.dumps(out))
"""


def measure(backend, reps, loops):
    env = dict(os.environ, MULTIFLAT_BACKEND=backend)
    proc = subprocess.run(
        [sys.executable, "-c", _WORKER, str(reps), str(loops)],
        env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=20000,
                    help="kernel calls per timing loop")
    ap.add_argument("--loops", type=int, default=5,
                    help="timing loops (best is kept)")
    args = ap.parse_args()

    print("timing numba backend (includes one-off JIT warm-up)...")
    numba_times = measure("numba", args.reps, args.loops)
    print("timing numpy backend...")
    numpy_times = measure("numpy", args.reps, args.loops)

    width = max(len(k) for k in numba_times)
    print(f"\n{'case':<{width}}  {'numba':>12}  {'numpy':>12}  {'speedup':>8}")
    for name in numba_times:
        tn, tp = numba_times[name], numpy_times[name]
        print(f"{name:<{width}}  {tn * 1e6:>10.2f}us  {tp * 1e6:>10.2f}us  "
              f"{tp / tn:>7.1f}x")


if __name__ == "__main__":
    main()

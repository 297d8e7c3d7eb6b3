"""Time the held-input RK4 kernel: numba vs the numpy fallback.

    python3 benchmarks/bench_kernels.py [--seconds 60] [--repeat 5]

Simulates the default 15-state plant at 1 ms steps and reports wall time per
simulated second for each backend, plus the largest state difference.
"""

import argparse
import time

import numpy as np

from safeagc import kernels
from safeagc.config import load_config


def bench(backend, model, c, x0, nsteps, repeat):
    kernels.integrate_linear(model.A, c, x0, 1e-3, 10, model.freq_index, backend=backend)  # warm-up / compile
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = kernels.integrate_linear(model.A, c, x0, 1e-3, nsteps, model.freq_index, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seconds", type=float, default=60.0, help="simulated seconds per run")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    model = load_config().model
    rng = np.random.default_rng(0)
    x0 = rng.normal(0, 0.01, model.n)
    c = model.B1 @ np.array([0.05, 0.0]) + model.B2 @ rng.uniform(-0.05, 0.05, model.g)
    nsteps = int(round(args.seconds / 1e-3))

    backends = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])
    results = {}
    for b in backends:
        results[b] = bench(b, model, c, x0, nsteps, args.repeat)
        print(f"{b:6s}  {results[b][0]:8.4f} s for {args.seconds:g} s simulated "
              f"({results[b][0] / args.seconds * 1e3:.3f} ms per simulated s)")
    if len(results) == 2:
        diff = np.abs(results["numba"][1][0] - results["numpy"][1][0]).max()
        print(f"speed-up {results['numpy'][0] / results['numba'][0]:.1f}x, max |dx| = {diff:.2e}")
    else:
        print("numba unavailable (or disabled via SAFEAGC_DISABLE_NUMBA); only the numpy path was timed")


if __name__ == "__main__":
    main()

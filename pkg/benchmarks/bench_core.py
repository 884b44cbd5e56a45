"""Compiled core versus NumPy fallback on the two hot paths.

Run ``python3 benchmarks/bench_core.py [--repeat N]``.  Prints one line per
(kernel, backend) with the best-of-N wall time and the speedup.
"""

import argparse
import time

import numpy as np

from harnesslab import _backend
from harnesslab.kernel import KernelAnalysis, lazy_kernel
from harnesslab.noise import NoiseModel, NoiseSource
from harnesslab.process import evolve_1d


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_noise(backend, family, n, repeat):
    src = NoiseSource(NoiseModel(family, 1.0), 1, 0, backend=backend)
    return _best(lambda: src.row(7, -n // 2, n), repeat)


def bench_cone(backend, steps, repeat):
    an = KernelAnalysis(lazy_kernel())
    src = NoiseSource(NoiseModel("gaussian", 1.0), 1, 0, backend=backend)

    def go():
        h = np.zeros(steps + 1)
        evolve_1d(h, 0, 0, steps, an, src, [(steps, 0)], backend=backend)

    return _best(go, repeat)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--n", type=int, default=1_000_000, help="noise values per row")
    ap.add_argument("--steps", type=int, default=1000, help="cone depth (n²/2 site updates)")
    args = ap.parse_args(argv)
    backends = sorted(_backend.BACKENDS)
    if "cython" not in backends:
        print("compiled core not built; only the fallback is available")
    cases = [(f"noise {fam} x{args.n}", lambda b, fam=fam: bench_noise(b, fam, args.n, args.repeat))
             for fam in ("gaussian", "rademacher")]
    cases.append((f"cone lazy {args.steps} steps", lambda b: bench_cone(b, args.steps, args.repeat)))
    print(f"{'case':32s} {'backend':8s} {'seconds':>10s} {'speedup':>8s}")
    for name, fn in cases:
        res = {b: fn(b) for b in backends}
        for b in backends:
            print(f"{name:32s} {b:8s} {res[b]:10.4f} {res['numpy'] / res[b]:8.1f}")


if __name__ == "__main__":
    main()

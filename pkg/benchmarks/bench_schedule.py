"""Compare the compiled and pure-Python schedule kernels.

    python benchmarks/bench_schedule.py [--repeat N]
"""

import argparse
import time

from plan3d.pipeline import KERNELS, StageTiming, simulate

CASES = [(4, 64), (16, 100), (32, 512)]


def bench(backend, pp, m, repeat):
    t = StageTiming(1.0, 2.0, 0.05)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        simulate(pp, m, t, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if "cython" not in KERNELS:
        print("compiled kernel not built; only the Python fallback is available")
    print(f"{'pp':>4} {'m':>5} " + " ".join(f"{b:>12}" for b in KERNELS) + "   speedup")
    for pp, m in CASES:
        times = {b: bench(b, pp, m, args.repeat) for b in KERNELS}
        speed = times["python"] / times["cython"] if "cython" in times else 1.0
        cells = " ".join(f"{1e3 * times[b]:10.3f}ms" for b in KERNELS)
        print(f"{pp:>4} {m:>5} {cells}   {speed:6.1f}x")


if __name__ == "__main__":
    main()

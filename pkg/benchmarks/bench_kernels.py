"""Timing comparison of the compiled and pure-Python correlation kernels.

Run as:  python3 benchmarks/bench_kernels.py [--frames N] [--repeat K]
"""

import argparse
import time

import numpy as np

from mtdmom import kernels


def time_call(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--side", type=int, default=600, help="frame side")
    ap.add_argument("--shifts", type=int, default=6, help="shift range L")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    frame = rng.normal(size=(args.side, args.side))
    small = rng.random((args.shifts, args.shifts))
    w2 = rng.normal(size=(args.shifts, args.shifts))
    w3 = rng.normal(size=(args.shifts,) * 4)

    names = kernels.available_backends()
    print(f"backends: {', '.join(names)}   frame {args.side}^2, L={args.shifts}")
    header = f"{'kernel':<28}" + "".join(f"{n:>12}" for n in names)
    print(header)
    print("-" * len(header))

    rows = [
        ("frame_sums (full frame)",
         lambda impl: kernels.frame_sums(frame, args.side, args.side,
                                         args.shifts, impl=impl)),
        ("frame_sums (target-sized)",
         lambda impl: kernels.frame_sums(small, args.shifts, args.shifts,
                                         args.shifts, impl=impl)),
        ("ac2_adjoint",
         lambda impl: kernels.ac2_adjoint(small, w2, impl=impl)),
        ("ac3_adjoint",
         lambda impl: kernels.ac3_adjoint(small, w3, impl=impl)),
    ]
    for label, call in rows:
        cells = []
        for name in names:
            impl = kernels.get_impl(name)
            dt = time_call(lambda: call(impl), args.repeat)
            cells.append(f"{dt * 1e3:>10.2f}ms")
        print(f"{label:<28}" + "".join(f"{c:>12}" for c in cells))


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Benchmark the brute-force round-trip sweep backends.

Runs the same batch of sweeps on the compiled kernel, the vectorized numpy
path, and the plain-Python reference, and prints the timings.  The numpy
path is what ``MQSIM_NO_NUMBA=1`` selects at runtime.

    python benchmarks/bench_oracle.py [--trials 60] [--max 500]
"""

import argparse
import random
import time

from mqsim.bounds import oracle


def batch(trials, max_ticks, seed=20260810):
    rng = random.Random(seed)
    out = []
    for _ in range(trials):
        c_s = rng.randint(1, max_ticks)
        t_s = rng.randint(c_s, max_ticks)
        c_d = rng.randint(1, max_ticks)
        t_d = rng.randint(c_d, max_ticks)
        n = rng.randint(1, max_ticks)
        m = rng.randint(0, max_ticks)
        out.append((c_s, t_s, c_d, t_d, n, m))
    return out


def run(fn, inputs):
    acc = 0
    t0 = time.perf_counter()
    for args in inputs:
        acc ^= fn(*args, 1)
    return time.perf_counter() - t0, acc


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=60)
    ap.add_argument("--max", type=int, default=500)
    args = ap.parse_args()

    inputs = batch(args.trials, args.max)
    points = sum((t_d) * (c_s) for c_s, _, _, t_d, _, _ in inputs)
    print(f"{args.trials} sweeps, {points:,} grid points total")

    # warm the JIT outside the timed region
    oracle._sweep_numba(2, 10, 3, 15, 5, 4, 1)

    rows = []
    for name, fn in (("numba", lambda *a: int(oracle._sweep_numba(*a))),
                     ("numpy", oracle._sweep_numpy),
                     ("python", oracle._sweep_python)):
        elapsed, check = run(fn, inputs)
        rows.append((name, elapsed, check))
        print(f"{name:<7} {elapsed:8.3f} s   (checksum {check})")

    checks = {c for _, _, c in rows}
    assert len(checks) == 1, f"backends disagree: {checks}"
    base = dict((n, e) for n, e, _ in rows)
    print(f"speedup numba vs numpy:  {base['numpy'] / base['numba']:6.1f}x")
    print(f"speedup numba vs python: {base['python'] / base['numba']:6.1f}x")


if __name__ == "__main__":
    main()

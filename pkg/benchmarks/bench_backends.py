#!/usr/bin/env python3
"""Benchmark the compiled kernels against their pure Python/NumPy fallbacks.

Both backends consume the same pre-drawn random arrays, so outputs must agree
(exactly for the tree kernels, to rounding for the vectorized grid step); the
script asserts that before timing.

Run:  python3 benchmarks/bench_backends.py [--paths 20000] [--t 10.0]
"""
import argparse
import time

import numpy as np

from presence_lab._kernels import implementations
from presence_lab.backend import active_backend


def time_call(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_tree_kernel(n_paths: int, t: float):
    impls = implementations()["frag_counts_block"]
    rng = np.random.default_rng(42)
    cap = n_paths * max(64, int(16 * t))
    exp_d = rng.standard_exponential(cap)
    split_d = rng.random(cap)
    x = -t / 8.0
    args = (exp_d, split_d, n_paths, t, 1.0, 0, x, x + 1.0, x - 2.0)

    outs, times = {}, {}
    for name, fn in impls.items():
        out = np.zeros(8)
        stack = (np.empty(8192), np.empty(8192))
        fn(*args, *stack, out)            # warm-up / compile
        assert out[0] == 1.0, f"{name}: buffers exhausted, enlarge cap"
        outs[name] = out.copy()
        times[name] = time_call(lambda: fn(*args, *stack, np.zeros(8)))
    ref = outs["python"]
    for name, out in outs.items():
        np.testing.assert_array_equal(out, ref, err_msg=name)
    events = ref[4]
    return times, events


def _u_step_problem(rng, cells, pairs, configs):
    u_prev = rng.random(cells) * 0.3
    fidx = rng.integers(-cells // 4, 1, pairs).astype(np.int64)
    frac = rng.random(pairs)
    cuts = np.sort(rng.choice(np.arange(1, pairs), configs - 1, replace=False))
    cfg_start = np.concatenate([[0], cuts, [pairs]]).astype(np.int64)
    return u_prev, fidx, frac, cfg_start


def bench_u_step(cells: int, pairs: int, configs: int, steps: int):
    impls = implementations()["emp_u_step"]
    rng = np.random.default_rng(7)

    # correctness: all implementations (incl. the raw Python loop) on a small case
    small = _u_step_problem(rng, 60, 300, 200)
    outs = {}
    for name, fn in impls.items():
        out = np.empty(60)
        fn(*small, out)
        outs[name] = out
    ref = next(iter(outs.values()))
    for name, out in outs.items():
        np.testing.assert_allclose(out, ref, rtol=0, atol=1e-13, err_msg=name)

    # timing: production backends only (the raw loop is for equivalence checks)
    prob = _u_step_problem(rng, cells, pairs, configs)
    times = {}
    for name, fn in impls.items():
        if name == "python" and "numba" in impls:
            continue
        out = np.empty(cells)
        fn(*prob, out)                    # warm-up / compile

        def run(fn=fn):
            cur = prob[0].copy()
            buf = np.empty(cells)
            for _ in range(steps):
                fn(cur, *prob[1:], buf)
                cur, buf = buf, cur
        times[name] = time_call(run, repeat=2)
    return times


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--t", type=float, default=10.0)
    ap.add_argument("--cells", type=int, default=400)
    ap.add_argument("--pairs", type=int, default=13_000)
    ap.add_argument("--configs", type=int, default=10_000)
    ap.add_argument("--steps", type=int, default=20)
    args = ap.parse_args()

    print(f"active backend: {active_backend()}")
    print(f"\n== fragmentation tree walk ({args.paths} paths, t={args.t}) ==")
    times, events = bench_tree_kernel(args.paths, args.t)
    print(f"   total split events: {events:.3g}")
    base = times.get("python")
    for name, dt in sorted(times.items(), key=lambda kv: kv[1]):
        print(f"   {name:8s} {dt * 1e3:9.1f} ms   x{base / dt:.1f}")

    print(f"\n== empirical presence step ({args.cells} cells x {args.pairs} pairs "
          f"x {args.steps} steps) ==")
    times = bench_u_step(args.cells, args.pairs, args.configs, args.steps)
    base = times.get("numpy", max(times.values()))
    for name, dt in sorted(times.items(), key=lambda kv: kv[1]):
        print(f"   {name:8s} {dt * 1e3:9.1f} ms   x{base / dt:.1f} vs numpy")


if __name__ == "__main__":
    main()

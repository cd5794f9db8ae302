"""Benchmark the numba kernels against the pure-numpy fallback.

Runs the hot training-path kernels at a configurable scale (default: the
full-scale head, d=1024, hidden=1024, on a few thousand examples) and
prints per-kernel timings for both backends.

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --d 256 --n 2000 --repeats 5
"""

import argparse
import time

import numpy as np

from bbclf import kernels


def time_fn(fn, repeats):
    fn()  # warm-up (includes JIT compilation for the numba path)
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def build_cases(d, hidden, classes, n, batch_size, rng):
    x = rng.standard_normal((n, d))
    y = np.eye(classes)[rng.integers(0, classes, n)]
    w1 = rng.standard_normal((hidden, d)) * 0.03
    b1 = np.zeros(hidden)
    w2 = rng.standard_normal((classes, hidden)) * 0.03
    b2 = np.zeros(classes)
    xb = np.ascontiguousarray(x[:batch_size])
    yb = np.ascontiguousarray(y[:batch_size])
    layers = rng.standard_normal((4, d))

    def batch_grads(backend):
        return lambda: backend.loss_and_grads(xb, yb, w1, b1, w2, b2)

    def full_forward(backend):
        return lambda: backend.forward_probs(x, w1, b1, w2, b2)

    def epoch(backend):
        def run():
            m = [np.zeros_like(p) for p in (w1, b1, w2, b2)]
            v = [np.zeros_like(p) for p in (w1, b1, w2, b2)]
            t = 0
            for start in range(0, n, batch_size):
                xs = np.ascontiguousarray(x[start : start + batch_size])
                ys = np.ascontiguousarray(y[start : start + batch_size])
                _, *grads = backend.loss_and_grads(xs, ys, w1, b1, w2, b2)
                t += 1
                for p, g, mm, vv in zip((w1, b1, w2, b2), grads, m, v):
                    backend.adam_step(p, g, mm, vv, t, 1e-3, 0.9, 0.999, 1e-8)

        return run

    def pooling(backend):
        return lambda: [backend.max_pool(layers) for _ in range(1000)]

    return {
        f"loss+grads (batch {batch_size})": batch_grads,
        f"forward ({n} rows)": full_forward,
        f"adam epoch ({n} rows)": epoch,
        "max_pool (1000 calls)": pooling,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--d", type=int, default=1024)
    parser.add_argument("--hidden", type=int, default=None)
    parser.add_argument("--classes", type=int, default=2)
    parser.add_argument("--n", type=int, default=4096)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if kernels.numba_backend is None:
        raise SystemExit(
            "numba backend unavailable (BBCLF_DISABLE_NUMBA set or numba missing); "
            "nothing to compare"
        )

    hidden = args.hidden or args.d
    rng = np.random.default_rng(0)
    cases = build_cases(args.d, hidden, args.classes, args.n, args.batch_size, rng)

    print(
        f"d={args.d} hidden={hidden} classes={args.classes} "
        f"n={args.n} batch={args.batch_size} (best of {args.repeats})"
    )
    header = f"{'kernel':<28} {'numpy':>10} {'numba':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, make in cases.items():
        t_np = time_fn(make(kernels.numpy_backend), args.repeats)
        t_nb = time_fn(make(kernels.numba_backend), args.repeats)
        print(f"{name:<28} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms {t_np / t_nb:>7.2f}x")


if __name__ == "__main__":
    main()

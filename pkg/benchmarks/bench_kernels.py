"""Benchmark the compiled kernels against the pure-numpy fallback.

Usage:
    python benchmarks/bench_kernels.py [--classes 19] [--height 1024]
                                       [--width 2048] [--passes 5] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from seguq import kernels


def _random_probs(rng, k, h, w):
    r = rng.random((k, h, w), dtype=np.float32)
    return np.ascontiguousarray((r / r.sum(axis=0, dtype=np.float64)).astype(np.float32))


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--classes", type=int, default=19)
    parser.add_argument("--height", type=int, default=1024)
    parser.add_argument("--width", type=int, default=2048)
    parser.add_argument("--passes", type=int, default=5)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    probs = _random_probs(rng, args.classes, args.height, args.width)
    stack = np.ascontiguousarray(
        np.stack([_random_probs(rng, args.classes, args.height // 4, args.width // 4)
                  for _ in range(args.passes)])
    )

    names = kernels.available_backends()
    print(f"tensor: ({args.classes}, {args.height}, {args.width}) float32; "
          f"stack: {stack.shape}; best of {args.repeat}")
    header = f"{'kernel':<16}" + "".join(f"{n:>12}" for n in names)
    print(header)
    print("-" * len(header))

    cases = [
        ("base_stats", lambda impl: impl.base_stats(probs)),
        ("entropy64", lambda impl: impl.entropy64(probs)),
        ("top2_argmax", lambda impl: impl.top2_argmax(probs)),
        ("stack_mean", lambda impl: impl.stack_mean(stack)),
        ("stack_variance", lambda impl: impl.stack_variance(stack)),
        ("bald_raw", lambda impl: impl.bald_raw(stack)),
    ]
    for label, call in cases:
        row = f"{label:<16}"
        for name in names:
            impl = kernels.get_backend(name)
            call(impl)  # warm-up
            row += f"{_time(lambda: call(impl), args.repeat):>11.3f}s"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

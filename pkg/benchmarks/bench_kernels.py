"""Benchmark the compiled kernels against the pure-Python fallback.

Run from the repository root:

    python benchmarks/bench_kernels.py [--repeat N]

Times each kernel on representative workloads and reports the speedup of
the compiled extension over the fallback, plus one end-to-end exact
attribution under the active backend.
"""

import argparse
import time

import numpy as np

from mmprobe import KERNEL_BACKEND
from mmprobe._kernels import _ref, popcount_table
from mmprobe.shapley import shapley_size_weights

try:
    from mmprobe._kernels import _core
except ImportError:
    _core = None


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_exact_phi(impl, n=14):
    rng = np.random.default_rng(0)
    values = rng.random(1 << n)
    weights = shapley_size_weights(n)
    pc = popcount_table(n)
    return lambda: impl.exact_phi_from_table(values, n, weights, pc)


def bench_patch_stats(impl, calls=2000):
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, (32, 32), dtype=np.uint8)
    re = np.array([0, 8, 16, 24, 32], dtype=np.int64)
    ce = np.array([0, 8, 16, 24, 32], dtype=np.int64)

    def run():
        for _ in range(calls):
            impl.patch_stats(img, re, ce)

    return run


def bench_fill(impl, calls=2000):
    rng = np.random.default_rng(2)
    img = rng.integers(0, 256, (32, 32), dtype=np.uint8)
    re = np.array([0, 8, 16, 24, 32], dtype=np.int64)
    ce = np.array([0, 8, 16, 24, 32], dtype=np.int64)
    keep = np.array([1, 0] * 8, dtype=np.uint8)

    def run():
        for _ in range(calls):
            impl.fill_patches(img, re, ce, keep, 128)

    return run


def bench_fnv(impl, calls=20000):
    tokens = [f"token-{i}".encode() for i in range(64)]

    def run():
        for _ in range(calls // 64):
            for t in tokens:
                impl.fnv1a64(t)

    return run


def bench_end_to_end():
    from mmprobe import GrayImage, Meme, exact_shapley, lexicon_predictor

    img = GrayImage(np.full((16, 16), 200, dtype=np.uint8))
    meme = Meme(id="b", text="love goes viral fast", image=img, label=1)
    handle = lexicon_predictor({"love": 1.0, "viral": -2.0, "fast": 0.5})
    return lambda: exact_shapley(handle, meme)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5, help="timing repetitions")
    args = parser.parse_args()

    benches = [
        ("exact_phi_from_table (n=14)", bench_exact_phi),
        ("patch_stats (32x32, 2000 calls)", bench_patch_stats),
        ("fill_patches (32x32, 2000 calls)", bench_fill),
        ("fnv1a64 (20k hashes)", bench_fnv),
    ]
    print(f"active package backend: {KERNEL_BACKEND}")
    print(f"{'kernel':<34}{'python':>12}{'cython':>12}{'speedup':>10}")
    for name, make in benches:
        t_py = timeit(make(_ref), args.repeat)
        if _core is not None:
            t_c = timeit(make(_core), args.repeat)
            print(f"{name:<34}{t_py * 1e3:>10.2f}ms{t_c * 1e3:>10.2f}ms{t_py / t_c:>9.1f}x")
        else:
            print(f"{name:<34}{t_py * 1e3:>10.2f}ms{'n/a':>12}{'':>10}")

    t = timeit(bench_end_to_end(), args.repeat)
    print(f"\nend-to-end exact attribution (n=8, {KERNEL_BACKEND} backend): {t * 1e3:.2f}ms")


if __name__ == "__main__":
    main()

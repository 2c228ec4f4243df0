"""Time the compiled kernels against the numpy fallback.

    python benchmarks/compare_backends.py [--reps 7]

Prints one line per kernel and shape with the median seconds of each backend
and the speed-up. BLAS is pinned to one thread.
"""

import argparse

import numpy as np
from threadpoolctl import threadpool_limits

from kedformer.bench import time_call
from kedformer.numerics import kernels

SHAPES = [(32, 96, 32), (256, 96, 4), (8, 1024, 64)]


def cases(shape, rng):
    n, length, c = shape
    x = rng.standard_normal(shape)
    k = max(1, int(np.ceil(3 * np.log(length))))
    lags = rng.integers(0, length, size=(n, k))
    w = rng.random((n, k))
    return {
        "moving_average": lambda: kernels.moving_average(x, 25),
        "moving_average_grad": lambda: kernels.moving_average_grad(x, 25),
        "delay_aggregate": lambda: kernels.delay_aggregate(x, lags, w),
        "delay_aggregate_grad": lambda: kernels.delay_aggregate_grad(x, x, lags, w),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--reps", type=int, default=7)
    args = parser.parse_args(argv)
    if "compiled" not in kernels.available_backends():
        print("compiled kernels are not built; only the python backend is available")
        return 1
    rng = np.random.default_rng(0)
    previous = kernels.backend()
    print(f"{'kernel':<22} {'shape':<16} {'python s':>10} {'compiled s':>11} {'speed-up':>9}")
    with threadpool_limits(limits=1):
        try:
            for shape in SHAPES:
                for name, fn in cases(shape, rng).items():
                    timings = {}
                    for backend in ("python", "compiled"):
                        kernels.use_backend(backend)
                        timings[backend] = time_call(fn, args.reps)
                    print(f"{name:<22} {str(shape):<16} {timings['python']:>10.2e} {timings['compiled']:>11.2e}"
                          f" {timings['python'] / timings['compiled']:>8.1f}x")
        finally:
            kernels.use_backend(previous)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

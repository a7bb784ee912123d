"""Time the compiled kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--rows 4096]

Prints one line per kernel with the median time of each backend and the
speedup.  Also checks the two backends agree on the benchmark inputs.
"""
import argparse
import timeit

import numpy as np

from mirrorfree import _kernels_py as py

try:
    from mirrorfree import _ckernels as cy
except ImportError:
    cy = None


def cases(rows, n, seed=0):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((rows, 2 * n))
    E, A, C, B = (rng.standard_normal((n, n)) for _ in range(4))
    b, d = rng.standard_normal(n), rng.standard_normal(n)
    V = rng.standard_normal((rows // 16, 16, 2 * n))
    dz = rng.standard_normal((rows // 16, 2 * n))
    w = np.polynomial.legendre.leggauss(16)[1] / 2
    return {
        "cubic_blocks": (Z, n, 1.0, 1.0),
        "quartic_saddle": (Z, E, A, b, C, d, B),
        "quartic_game": (Z, A),
        "segment_sums": (V, dz, w),
    }


def median_time(fn, args, repeat):
    return float(np.median(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--rows", type=int, default=4096)
    ap.add_argument("--n", type=int, default=10)
    args = ap.parse_args(argv)
    if cy is None:
        print("compiled kernels not built; only the NumPy backend is available")
    print(f"{'kernel':<16}{'numpy [ms]':>12}{'cython [ms]':>13}{'speedup':>9}  max |diff|")
    for name, inputs in cases(args.rows, args.n).items():
        t_py = median_time(getattr(py, name), inputs, args.repeat)
        if cy is None:
            print(f"{name:<16}{1e3 * t_py:>12.3f}")
            continue
        t_cy = median_time(getattr(cy, name), inputs, args.repeat)
        diff = np.max(np.abs(getattr(py, name)(*inputs) - getattr(cy, name)(*inputs)))
        print(f"{name:<16}{1e3 * t_py:>12.3f}{1e3 * t_cy:>13.3f}{t_py / t_cy:>9.2f}  {diff:.2e}")


if __name__ == "__main__":
    main()

"""Compare the compiled and pure-Python Jacobi kernels.

Run ``python benchmarks/bench_linalg.py``.  Times are best-of-``--repeat``
per call, in microseconds, plus one end-to-end certification of the pH-1
example with each kernel.
"""
import argparse
import timeit

import numpy as np

from phturnpike import linalg, manifold
from phturnpike.linalg import _jacobi_py
from phturnpike.phsys import builtin_ph1

try:
    from phturnpike.linalg import _jacobi
except ImportError:
    _jacobi = None


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number * 1e6


def kernel_table(sizes, repeat, rng):
    kernels = {"python": _jacobi_py}
    if _jacobi is not None:
        kernels["cython"] = _jacobi
    rows = []
    for n in sizes:
        g = rng.standard_normal((n, n))
        sym = g + g.T
        number = max(10, 2000 // (n * n))
        for op, arg in (("eigh", sym), ("svd", g)):
            times = {name: best_of(lambda k=k: getattr(k, op)(arg.copy()), repeat, number) for name, k in kernels.items()}
            rows.append((op, n, times))
    return rows


def certify_times(samples):
    dm = manifold.DissipationMap(builtin_ph1())
    box = ([-3.0, -3.0], [3.0, 3.0])
    out = {}
    for name in ("python", "cython"):
        if name == "cython" and _jacobi is None:
            continue
        linalg.use_kernel(name)
        out[name] = min(timeit.repeat(lambda: manifold.certify(dm, box, samples), repeat=1, number=1))
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[2, 3, 6, 12])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--samples", type=int, default=2000, help="certification sample count")
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)

    print(f"{'op':<6}{'n':>4}{'python us':>14}{'cython us':>14}{'speedup':>10}")
    for op, n, t in kernel_table(args.sizes, args.repeat, rng):
        cy = t.get("cython", np.nan)
        print(f"{op:<6}{n:>4}{t['python']:>14.1f}{cy:>14.1f}{t['python'] / cy:>10.1f}")

    previous = linalg.BACKEND
    try:
        times = certify_times(args.samples)
    finally:
        linalg.use_kernel(previous)
    print(f"\ncertify pH-1, {args.samples} samples:")
    for name, sec in times.items():
        print(f"  {name:<7}{sec:8.2f} s")


if __name__ == "__main__":
    main()

"""Compare the numba and numpy kernel families.

    python benchmarks/bench_kernels.py [--repeat 200] [--dims 3 5 9]

Compilation happens in a warm-up call and is excluded from the timings.
"""

import argparse
import time

import numpy as np

from oneway_locc import kernels


def _frame(rng, d1, d2, k=3):
    z = rng.standard_normal((d1 * d2, k)) + 1j * rng.standard_normal((d1 * d2, k))
    return np.linalg.qr(z)[0].T.reshape(k, d1, d2).copy()


def _best_of(fn, repeat):
    fn()  # warm-up (and JIT compile)
    best = np.inf
    for _ in range(5):
        start = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - start) / repeat)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--dims", type=int, nargs="+", default=[3, 5, 9])
    args = ap.parse_args(argv)

    if not kernels.HAVE_NUMBA:
        print("numba unavailable or disabled: the _nb_ kernels run as plain Python")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'n':>4}{'numba [us]':>14}{'numpy [us]':>14}{'speed-up':>10}")
    for n in args.dims:
        t = _frame(rng, 3, n)
        p = rng.normal(size=18)
        pairs = {
            "h_value": (lambda: kernels._nb_h_value(t, p, 3),
                        lambda: kernels._np_h_value(t, p, 3)),
            "h_and_grad": (lambda: kernels._nb_h_and_grad(t, p, 3),
                           lambda: kernels._np_h_and_grad(t, p, 3)),
        }
        for name, (nb, npy) in pairs.items():
            a, b = _best_of(nb, args.repeat), _best_of(npy, args.repeat)
            print(f"{name:<14}{n:>4}{a * 1e6:>14.1f}{b * 1e6:>14.1f}{b / a:>10.1f}")

    # one full local descent from the same start, both families
    for n in args.dims:
        t = _frame(rng, 3, n)
        p0 = rng.normal(size=18)
        nb = lambda: kernels._descend(t, p0, 3, 2000, 1e-6, 1e-9, 200, 12)  # noqa: E731
        npy = lambda: kernels._descend_np(t, p0, 3, 2000, 1e-6, 1e-9, 200, 12)  # noqa: E731
        reps = max(1, args.repeat // 50)
        a, b = _best_of(nb, reps), _best_of(npy, reps)
        iters = nb()[2]
        print(f"{'descend':<14}{n:>4}{a * 1e3:>11.2f} ms{b * 1e3:>11.2f} ms{b / a:>10.1f}"
              f"   ({iters} iterations)")


if __name__ == "__main__":
    main()

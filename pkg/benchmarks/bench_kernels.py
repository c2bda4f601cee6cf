"""Time the compiled aggregation kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--samples S] [--clients N] [--classes C] [--repeat R]

Both backends get the same inputs and the script also reports the largest
difference between their outputs.
"""

import argparse
import time

import numpy as np

from bdsim import _kernels_py

try:
    from bdsim import _kernels
except ImportError:  # extension not built
    _kernels = None


def best_time(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=1680)
    ap.add_argument("--clients", type=int, default=20)
    ap.add_argument("--classes", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    Y = rng.dirichlet(np.ones(args.classes), size=(args.samples, args.clients))
    # a byzantine block, so the kernels see the kind of input they get in a run
    nb = int(0.45 * args.clients)
    Y[:, args.clients - nb :] = np.eye(args.classes)[rng.integers(0, args.classes, size=args.samples)][:, None, :]
    mask = np.ones(Y.shape[:2], dtype=bool)

    print(f"S={args.samples} N={args.clients} c={args.classes}, best of {args.repeat}")
    print(f"{'kernel':<18}{'numpy ms':>12}{'cython ms':>12}{'speedup':>10}{'max diff':>12}")
    for name, py_args in (("geometric_median", (Y,)), ("filter_stats", (Y, mask))):
        t_py, out_py = best_time(getattr(_kernels_py, name), py_args, args.repeat)
        if _kernels is None:
            print(f"{name:<18}{t_py * 1e3:>12.2f}{'n/a':>12}{'n/a':>10}{'n/a':>12}")
            continue
        t_cy, out_cy = best_time(getattr(_kernels, name), py_args, args.repeat)
        diff = max(float(np.max(np.abs(np.asarray(a, float) - np.asarray(b, float)))) for a, b in zip(out_py, out_cy))
        print(f"{name:<18}{t_py * 1e3:>12.2f}{t_cy * 1e3:>12.2f}{t_py / t_cy:>10.1f}{diff:>12.1e}")


if __name__ == "__main__":
    main()

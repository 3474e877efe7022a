"""Compare the compiled and pure-Python banded kernels.

Usage: python3 benchmarks/bench_kernels.py [--sizes 256 1024 4096] [--columns 1 50] [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from wittenlab import _backend, _fallback
from wittenlab.operators import HeatPropagator, evolve
from wittenlab.scenarios import ou_soliton


def _bands(n, periodic, rng):
    lo, up = rng.uniform(0.5, 1.5, (2, n))
    if not periodic:
        lo[0] = up[-1] = 0.0
    return lo, -(lo + up), up


def _time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(sizes, columns, repeat):
    from wittenlab import _kernels

    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        for k in columns:
            for periodic in (False, True):
                lo, dg, up = _bands(n, periodic, rng)
                U = rng.normal(size=(n, k))
                for name, mod in (("compiled", _kernels), ("python", _fallback)):
                    step = _time(lambda: mod.theta_step(lo, dg, up, periodic, U, 1e-3, 0.5), repeat)
                    app = _time(lambda: mod.apply_tridiag(lo, dg, up, periodic, U), repeat)
                    rows.append((n, k, periodic, name, step, app))
    return rows


def flow_table(points, repeat):
    out = []
    for backend in ("compiled", "python"):
        _backend.use(backend)
        sc = ou_soliton(points=points)
        f = np.stack([sc.initial] * 50)

        def run():
            evolve(HeatPropagator(sc), f, 0.0, 1.0)

        out.append((backend, _time(run, repeat)))
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[256, 1024, 4096])
    p.add_argument("--columns", type=int, nargs="+", default=[1, 50])
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args(argv)
    if not _backend.compiled_available():
        raise SystemExit("compiled kernels are not built; run pip install -e . --no-build-isolation")
    previous = _backend.name()
    print(f"{'n':>6} {'cols':>5} {'periodic':>8} {'backend':>9} {'theta_step us':>14} {'apply us':>10}")
    for n, k, periodic, name, step, app in kernel_table(args.sizes, args.columns, args.repeat):
        print(f"{n:6d} {k:5d} {str(periodic):>8} {name:>9} {step * 1e6:14.1f} {app * 1e6:10.1f}")
    print("\n50-field flow on the 256-node soliton, t in [0, 1]:")
    flows = dict(flow_table(256, max(3, args.repeat // 5)))
    for name, sec in flows.items():
        print(f"  {name:9s} {sec * 1e3:8.1f} ms")
    print(f"  speed-up  {flows['python'] / flows['compiled']:8.2f}x")
    _backend.use(previous)


if __name__ == "__main__":
    main()

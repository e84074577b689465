"""Benchmark the compiled RK4 kernel against the pure-Python fallback.

Times ``rk4_solve`` for each registered non-delay model with the compiled
per-step kernel (when built) and with the Python fallback, and reports the
speedup plus the maximum state discrepancy between the two paths.

Usage: python3 benchmarks/bench_rk4.py [--n-grid 401] [--substeps 8] [--repeats 20]
"""

import argparse
import dataclasses
import time

import numpy as np

from ocestim import get_model, rk4_solve
from ocestim.models import MODELS
from ocestim.odesim import HAVE_FASTRK


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-grid", type=int, default=401)
    ap.add_argument("--substeps", type=int, default=8)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    print(f"compiled kernel available: {HAVE_FASTRK}")
    header = f"{'model':<20} {'python':>10} {'compiled':>10} {'speedup':>8} {'max diff':>10}"
    print(header)
    print("-" * len(header))

    for name in sorted(MODELS):
        m = get_model(name)
        if m.is_delayed:
            continue
        grid = np.linspace(*m.t_span, args.n_grid)
        vf_fast = m.field
        vf_py = dataclasses.replace(vf_fast, fast_kind=None, fast_pack=None)

        t_py = timeit(
            lambda: rk4_solve(vf_py, m.theta_star, m.x0, grid, substeps=args.substeps),
            args.repeats,
        )
        if HAVE_FASTRK and vf_fast.fast_kind is not None:
            t_c = timeit(
                lambda: rk4_solve(vf_fast, m.theta_star, m.x0, grid, substeps=args.substeps),
                args.repeats,
            )
            a = rk4_solve(vf_fast, m.theta_star, m.x0, grid, substeps=args.substeps)
            b = rk4_solve(vf_py, m.theta_star, m.x0, grid, substeps=args.substeps)
            diff = float(np.max(np.abs(a.states - b.states)))
            print(f"{name:<20} {t_py * 1e3:>8.2f}ms {t_c * 1e3:>8.2f}ms "
                  f"{t_py / t_c:>7.1f}x {diff:>10.2e}")
        else:
            print(f"{name:<20} {t_py * 1e3:>8.2f}ms {'n/a':>10} {'n/a':>8} {'n/a':>10}")


if __name__ == "__main__":
    main()

"""Numba loop kernels against their vectorized numpy twins.

Run ``python benchmarks/bench_kernels.py [--reps N] [--steps M]``. Both
backends are imported side by side, so one process times both; outputs are
compared before timings are reported.
"""

import argparse
import time

import numpy as np

from mvldp import _loops, _vec
from mvldp.examples import load_example
from mvldp.model import build_problem


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _scheme_args(p, n, steps, eps, seed):
    rng = np.random.default_rng(seed)
    T = 1.0
    dts = np.full(steps, T / steps)
    nm = len(p.nu)
    h = np.zeros((1, steps, p.l))
    jcoef = np.ascontiguousarray(np.broadcast_to(-p.nu.weights, (1, steps, nm))) if nm else np.zeros((1, steps, 0))
    dW = rng.standard_normal((n, steps, p.l)) * np.sqrt(dts)[None, :, None]
    rates = p.nu.weights / eps if nm else np.zeros(0)
    counts = rng.poisson(np.broadcast_to(rates * dts[:, None], (n, steps, nm))).astype(float)
    x0 = np.full((n, p.d), 0.5)
    dp, sp, jp, marks, opp = p.packed()
    return (x0, dts, h, jcoef, dW, counts, eps, True, 0.0, steps, dp, sp, jp, marks, opp)


def bench_scheme(name, p, n, steps, repeat):
    args = _scheme_args(p, n, steps, 0.1, 0)
    _loops.euler_paths(*args)  # compile
    t_nb, out_nb = _best(lambda: _loops.euler_paths(*args), repeat)
    t_np, out_np = _best(lambda: _vec.euler_paths(*args), repeat)
    err = float(np.max(np.abs(out_nb[0] - out_np[0])))
    print(f"{name:<24} n={n:<7} steps={steps:<5} numba {t_nb:8.3f}s  numpy {t_np:8.3f}s  "
          f"ratio {t_np / t_nb:6.1f}  max|diff| {err:.1e}")


def bench_resolvent(name, p, n, repeat):
    X = np.random.default_rng(1).normal(scale=2.0, size=(n, p.d))
    opp = p.packed()[4]
    _loops.resolvent_rows(opp, 0.3, X[:2])
    t_nb, (a, _, _) = _best(lambda: _loops.resolvent_rows(opp, 0.3, X), repeat)
    t_np, (b, _, _) = _best(lambda: _vec.resolvent_rows(opp, 0.3, X), repeat)
    err = float(np.max(np.abs(a - b)))
    print(f"{name:<24} n={n:<7} {'':<11} numba {t_nb:8.3f}s  numpy {t_np:8.3f}s  "
          f"ratio {t_np / t_nb:6.1f}  max|diff| {err:.1e}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=20000)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args(argv)
    ball = build_problem({"d": 2, "operator": {"kind": "subdiff_indicator",
                                               "domain": {"kind": "ball", "radius": 1.0}}})
    halfspaces = build_problem({"d": 3, "operator": {"kind": "subdiff_indicator", "domain": {
        "kind": "halfspaces", "normals": [[1, 0, 0], [0, 1, 0], [1, 1, 1]], "offsets": [1, 1, 1.5]}}})
    convex = build_problem({"d": 2, "operator": {"kind": "subdiff_convex", "potential": "logcosh",
                                                 "scale": 1.0}})
    for name in ("ou", "strict_reflected", "jump_ou", "box_2d"):
        bench_scheme(name, load_example(name), a.reps, a.steps, a.repeat)
    # optimizer-shaped batches: few replicas, long grids
    for name in ("ou", "box_2d"):
        bench_scheme(name, load_example(name), 41, 50 * a.steps, a.repeat)
    for name, p in (("resolvent ball", ball), ("resolvent halfspaces", halfspaces),
                    ("resolvent logcosh", convex)):
        bench_resolvent(name, p, 10 * a.reps, a.repeat)


if __name__ == "__main__":
    main()

"""Time the compiled kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py --n 128 --repeat 3

Each case is run once per backend to warm up (numba compiles on first call)
and then timed ``--repeat`` times; the best time is reported. The results of
both backends are compared so a speed-up never hides a discrepancy.
"""
import argparse
import json
import time

import numpy as np

from fracfb import set_backend
from fracfb._accel import HAVE_NUMBA
from fracfb.curvature import curvature_at_points, interface_arrays
from fracfb.energy import FlipCache, NonlinearityProfile
from fracfb.field import AdmissiblePair, IndicatorSet, ScalarField, build_grid, omega_ball
from fracfb.minimizer import MinimizeOptions, _sweep
from fracfb.tails import tails_at


def _setup(n):
    g = build_grid(n, 1.0, 0.01)
    X, Y = g.centers()
    om = omega_ball(g, 0.5)
    u = ScalarField.from_values(g, X * Y, om)
    e = IndicatorSet.from_mask(g, X * Y > 0, om)
    return g, om, AdmissiblePair(u, e)


def case_sweep(sigma):
    def run(g, om, pair):
        cache = FlipCache.build(pair, om, NonlinearityProfile("identity"), sigma)
        rng = np.random.default_rng(0)
        m = cache.omega.ncells
        acc = _sweep(cache, rng.permutation(m).astype(np.int64), rng.random(m), 1e-3, 0.0, True)
        return np.array([acc, cache.perimeter, cache.dirichlet])

    return run


def case_tails(g, om, pair):
    X, Y = g.centers()
    sel = om.mask
    te, ta = tails_at(g, pair.e.inside, X[sel][:2000], Y[sel][:2000], 0.5, 1024)
    return np.concatenate([te, ta])


def case_curvature(g, om, pair):
    r = np.hypot(*g.centers())
    E = IndicatorSet.from_mask(g, r < 0.4)
    ia = interface_arrays(E)
    k = slice(0, None, max(1, len(ia) // 32))
    return curvature_at_points(E, ia.x[k], ia.y[k], 0.5)


CASES = {
    "sweep_fractional": case_sweep(0.5),
    "sweep_classical": case_sweep(1.0),
    "exterior_tails": case_tails,
    "nonlocal_curvature": case_curvature,
}


def time_case(fn, args, repeat):
    out = fn(*args)
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default="", help="optional path for machine-readable results")
    args = ap.parse_args()
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    setup = _setup(args.n)
    rows = []
    print(f"{'case':<22}" + "".join(f"{b:>12}" for b in backends) + f"{'speed-up':>10}{'max diff':>12}")
    for name, fn in CASES.items():
        times, outs = {}, {}
        for b in backends:
            set_backend(b)
            times[b], outs[b] = time_case(fn, setup, args.repeat)
        diff = float(np.max(np.abs(outs[backends[0]] - outs[backends[-1]])))
        speed = times["numpy"] / times["numba"] if len(backends) == 2 else 1.0
        rows.append({"case": name, "seconds": times, "speedup": speed, "max_abs_diff": diff})
        print(f"{name:<22}" + "".join(f"{times[b]:>12.4f}" for b in backends) + f"{speed:>10.1f}{diff:>12.2e}")
    set_backend(backends[0])
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"n": args.n, "rows": rows}, fh, indent=2)


if __name__ == "__main__":
    main()

"""Compare the numba and numpy kernel backends on pipeline-sized inputs.

    python3 benchmarks/bench_kernels.py [--names 1400] [--points 3000] [--repeat 3]

The first numba call per kernel includes JIT compilation (or cache load);
it is timed separately and excluded from the steady-state numbers.
"""

import argparse
import time

import numpy as np

from gridmap import kernels
from gridmap.kernels import numba_impl, numpy_impl
from gridmap.synth import _station_names


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--names", type=int, default=1400, help="strings per side of the similarity matrix")
    ap.add_argument("--points", type=int, default=3000, help="points for the distance / components kernels")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    names = _station_names(args.names, rng)
    codes, lens = kernels.encode(names)
    pts = np.column_stack([rng.uniform(-67.3, -65.6, args.points), rng.uniform(17.9, 18.5, args.points)])

    if numba_impl is None:
        print("numba unavailable; nothing to compare")
        return

    cases = {
        "similarity_matrix": lambda m: m.similarity_matrix(codes, lens, codes, lens),
        "pairwise_distance": lambda m: m.pairwise_distance(pts, True),
    }
    dist = numpy_impl.pairwise_distance(pts, True)
    cases["eps_components"] = lambda m: m.eps_components(dist, 2000.0)

    print(f"{'kernel':<20} {'numpy_s':>10} {'numba_s':>10} {'jit_s':>8} {'speedup':>8} match")
    for name, run in cases.items():
        t0 = time.perf_counter()
        run(numba_impl)
        jit = time.perf_counter() - t0
        t_np, r_np = best_of(lambda: run(numpy_impl), args.repeat)
        t_nb, r_nb = best_of(lambda: run(numba_impl), args.repeat)
        same = np.array_equal(r_np, r_nb) if name != "pairwise_distance" else np.allclose(r_np, r_nb, rtol=1e-12)
        print(f"{name:<20} {t_np:>10.4f} {t_nb:>10.4f} {jit:>8.2f} {t_np / t_nb:>7.1f}x {same}")


if __name__ == "__main__":
    main()

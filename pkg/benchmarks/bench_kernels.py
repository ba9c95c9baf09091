"""Time the numba and numpy kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Also runs one desk-scale FTP estimate per backend by swapping the
log-means kernel. PDE solves are cached before timing, so that line
compares the cubature work only.
"""

import argparse
import time

import numpy as np

from qmceig import kernels
from qmceig.cubature import estimate
from qmceig.fem import Design
from qmceig.problems import pde_problem


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    if "numba" not in kernels.BACKENDS:
        print("numba not available; nothing to compare")
        return

    n = 2 ** 13
    table = kernels.bernoulli2_table(n)
    weights = rng.random(n)
    cand = np.arange(1, n, 2)
    yw = rng.standard_normal((2048, 3))
    gw = rng.standard_normal((4096, 3))
    strides = np.array([1, 2, 4, 8], dtype=np.int64)

    cases = {
        f"cbc_scores n={n}": lambda f: f(table, weights, cand, n),
        "log_means 2048x4096x3": lambda f: f(yw, gw, 1, strides, 0.0),
    }
    print(f"{'kernel':28s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s} {'max rel diff':>13s}")
    for name, call in cases.items():
        idx = 0 if name.startswith("cbc") else 1
        f_np, f_nb = kernels.BACKENDS["numpy"][idx], kernels.BACKENDS["numba"][idx]
        call(f_nb)  # compile
        t_np, a = best_of(lambda: call(f_np), args.repeat)
        t_nb, b = best_of(lambda: call(f_nb), args.repeat)
        rel = float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))
        print(f"{name:28s} {1e3 * t_np:12.2f} {1e3 * t_nb:12.2f} {t_np / t_nb:8.1f} {rel:13.2e}")

    problem = pde_problem("affine", s=10, q=4)
    design = Design(((0.25, 0.5), (0.5, 0.5), (0.75, 0.5)))
    cfg = problem.config("ftp", 7, R=8, seed=7)
    for backend in ("numpy", "numba"):
        f = problem.integrand(design)
        f.log_means_fn = kernels.BACKENDS[backend][1]
        estimate(cfg, f)  # compile and fill the forward cache, so only cubature is timed
        t, res = best_of(lambda: estimate(cfg, f), 1)
        print(f"FTP level 7, R=8, {backend:5s}: {t:7.3f} s  estimate {res.mean:.12f}")


if __name__ == "__main__":
    main()

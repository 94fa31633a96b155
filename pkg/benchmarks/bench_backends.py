"""Time the numba kernels against their pure-numpy twins on identical inputs.

    python3 benchmarks/bench_backends.py [--runs R] [--steps C] [--repeat K]

Each kernel is called once untimed (numba compiles on first use), then
``--repeat`` times; the best wall time is reported with the speed-up and a
check that both backends produced the same chain.
"""

import argparse
import time

import numpy as np

from jante.kernels import get_impl
from jante.process import DistributionSpec
from jante.topology import cycle


def discrete_case(impl, R, C, seed):
    t = cycle(20)
    dist = DistributionSpec.discrete(10)
    rng = np.random.default_rng(seed)
    x = (1 + rng.integers(0, 10, size=(R, 20))).astype(np.int64)
    draws = rng.random((R, C, 2))
    indptr, indices = t.csr
    deg = t.degrees
    weight = (t.degree_lcm // deg).astype(np.int64)
    outs = [np.zeros((R, C), dtype=np.int64) for _ in range(5)]
    steps = np.zeros(R, dtype=np.int64)
    status = np.zeros(R, dtype=np.int64)
    limits = np.full(R, C, dtype=np.int64)

    def call():
        xx = x.copy()
        impl.discrete_advance(xx, indptr, indices, deg, weight, np.asarray(dist.values, dtype=np.int64),
                              dist.cdf, draws, limits, False, -1, *outs, steps, status)
        return xx

    return call


def continuous_case(impl, R, C, seed):
    t = cycle(20)
    rng = np.random.default_rng(seed)
    x = rng.random((R, 20))
    draws = rng.random((R, C, 2))
    indptr, indices = t.csr
    degf = t.degrees.astype(np.float64)
    outs = [np.zeros((R, C), dtype=dt) for dt in (np.int64, float, float, float, np.int64)]
    steps = np.zeros(R, dtype=np.int64)
    status = np.zeros(R, dtype=np.int64)
    limits = np.full(R, C, dtype=np.int64)

    def call():
        xx = x.copy()
        impl.continuous_advance(xx, indptr, indices, degf, draws, limits, False, -1.0, *outs, steps, status)
        return xx

    return call


def embedded_case(impl, R, C, seed):
    rng = np.random.default_rng(seed)
    z0 = rng.random((R, 20))
    draws = rng.random((R, C, 2))

    def call():
        z = z0.copy()
        c = np.zeros(R)
        e = np.zeros(R, dtype=np.int64)
        outs = [np.zeros((R, C)) for _ in range(3)] + [np.zeros((R, C), dtype=np.int64)]
        impl.embedded_advance(z, c, e, draws, *outs)
        return outs[3]

    return call


def best_of(call, repeat):
    out = call()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        call()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--runs", type=int, default=64)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"R={args.runs} chains x C={args.steps} steps, N=20 cycle, best of {args.repeat}")
    print(f"{'kernel':<12}{'numba [s]':>12}{'numpy [s]':>12}{'speed-up':>10}  same chain")
    for name, case in (("discrete", discrete_case), ("continuous", continuous_case),
                       ("embedded", embedded_case)):
        res = {}
        for backend in ("numba", "numpy"):
            res[backend] = best_of(case(get_impl(backend), args.runs, args.steps, args.seed), args.repeat)
        (tn, on), (tp, op) = res["numba"], res["numpy"]
        print(f"{name:<12}{tn:>12.4f}{tp:>12.4f}{tp / tn:>10.1f}  {np.array_equal(on, op)}")


if __name__ == "__main__":
    main()

"""Compare the compiled kernels with the pure-Python fallback.

Both backends consume the same Philox stream, so besides timing each run the
script checks that they return identical arrays.

    python3 benchmarks/bench_kernels.py [--reps 3] [--size 200]
"""

from __future__ import annotations

import argparse
import time
from fractions import Fraction

import numpy as np

from shyver import data_path, kernels
from shyver.casestudy import CaseStudy
from shyver.model import load_model
from shyver.reduction import build_grid_partition, reduce_ct


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def ssa_case(size):
    model = load_model(data_path("two_mode.json"))
    chain = reduce_ct(model, build_grid_partition(model, Fraction(1, 30)))
    off = chain.off_diagonal()
    exit_rates = np.asarray(off.sum(axis=1)).ravel()
    init = np.zeros(size, dtype=np.int64)
    times = np.array([0.1, 0.5, 1.0])
    args = (off.indptr.astype(np.int64), off.indices.astype(np.int64), off.data.astype(float), exit_rates, init, times)

    def run(backend, seed):
        return kernels.get(backend).ssa_csr(*args, _rng(seed))

    return run


def casestudy_case(size, n=5, horizon=100.0):
    cs = CaseStudy(n=n)

    def run(backend, seed):
        return cs.simulate([horizon], size, _rng(seed), backend)[0]

    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--size", type=int, default=200)
    args = ap.parse_args(argv)
    backends = sorted(kernels.available())
    cases = {"ssa_csr (two-mode, N=30)": ssa_case(args.size * 10), "casestudy_run (n=5, T=100)": casestudy_case(args.size)}
    print(f"backends: {', '.join(backends)}")
    print(f"{'kernel':32s} {'backend':8s} {'best s':>10s} {'speedup':>8s} identical")
    for name, run in cases.items():
        best = {}
        outs = {}
        for b in backends:
            times = []
            for r in range(args.reps):
                t0 = time.perf_counter()
                outs[b] = run(b, 12345)
                times.append(time.perf_counter() - t0)
            best[b] = min(times)
        ref = best["python"]
        same = all(np.array_equal(outs[b], outs["python"]) for b in backends)
        for b in backends:
            print(f"{name:32s} {b:8s} {best[b]:10.4f} {ref / best[b]:8.1f} {same}")


if __name__ == "__main__":
    main()

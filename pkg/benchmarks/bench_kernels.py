"""Time the compiled and pure-Python kernels on GA-sized inputs.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from nmfsga import _fallback, data
from nmfsga.ga import FitnessEvaluator
from nmfsga.loss import LossSpec

try:
    from nmfsga import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    spec = data.dataset_a_spec(seed=0)
    ds = data.inject_label_noise(data.generate_synthetic(spec, 100), data.NoiseSpec.symmetric(0.1, 1))
    ev = FitnessEvaluator(ds, LossSpec("CWD"), data.stratified_kfold(ds, 10, 0))
    gen = np.random.default_rng(0)
    objs = np.c_[gen.random(240), gen.integers(1, 30, 240)]

    cases = []
    for p in (5, 20, 60):
        cols = np.sort(gen.choice(500, p, replace=False)).astype(np.int64)
        call = (ev.cross, ev.sums, ev.counts, ev.Xc, cols, ev.fold, 0.1)
        cases.append((f"cv_lda p={p}", lambda m, c=call: m.cv_lda(*c)))
    cases.append(("nondominated_ranks n=240", lambda m: m.nondominated_ranks(objs)))

    print(f"{'kernel':28s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for name, run in cases:
        py = best_of(lambda: run(_fallback), args.repeat, 20)
        if _kernels is None:
            print(f"{name:28s} {py * 1e6:10.1f}us {'n/a':>12s}")
            continue
        cy = best_of(lambda: run(_kernels), args.repeat, 200)
        print(f"{name:28s} {py * 1e6:10.1f}us {cy * 1e6:10.1f}us {py / cy:7.1f}x")


if __name__ == "__main__":
    main()

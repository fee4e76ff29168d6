"""Time each kernel under the compiled and pure-Python backends.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel with the best-of-N time per call for every
available backend and the resulting speed-up.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from gmmmap import _accel
from gmmmap.core import Gaussian3, Kind
from gmmmap.free_space import ray_bases
from gmmmap.fusion import GaussianMap


def _workloads(rng):
    row = np.cumsum(rng.normal(0, 0.01, 640)) + 3.0
    row[rng.random(640) < 0.02] = 0.0
    row = np.maximum(row, 0.0)

    o = rng.normal(size=(300, 3)) * 0.1
    e = rng.normal(size=(300, 3)) * 0.5 + [0, 0, 3]
    bases = ray_bases(o, e, rng.uniform(1, 4, 300), 4, 0.2)

    gm = GaussianMap()
    for _ in range(2000):
        a = rng.normal(size=(3, 3)) * 0.3
        gm.add(Gaussian3(Kind(int(rng.integers(2))), float(rng.uniform(1, 10)),
                         rng.uniform(-3, 3, 3), a @ a.T + 1e-3 * np.eye(3)))
    ids = np.array(sorted(gm.store), dtype=np.int64)
    arrays = gm.kernel_arrays()
    cov = np.array([0.1, 0.0, 0.0, 0.1, 0.0, 0.1])
    m = np.array([0.5, 0.5, 0.5])

    return {
        "segment_row (640 px)": lambda k: k.segment_row(row, 0.05, 0.02, True),
        "hellinger_sq": lambda k: k.hellinger_sq(m, cov, m + 0.1, cov * 1.5),
        f"refine_greedy ({len(bases)} bases)":
            lambda k: k.refine_greedy(bases.means, bases.covs, bases.weights, 2.0, 0.6),
        f"pdf_sums ({len(ids)} ids)": lambda k: k.pdf_sums(0.1, 0.2, 0.3, ids, *arrays),
        f"best_match ({len(ids)} ids)":
            lambda k: k.best_match(ids, gm._means, gm._covs, gm._kinds, 0, m, cov),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    work = _workloads(rng)
    names = _accel.available_backends()
    backends = {n: _accel.get_backend(n) for n in names}
    print(f"{'kernel':32s}" + "".join(f"{n + ' (us)':>16s}" for n in names) + f"{'speed-up':>12s}")
    for label, fn in work.items():
        times = {}
        for n, k in backends.items():
            timer = timeit.Timer(lambda: fn(k))
            number, _ = timer.autorange()
            times[n] = min(timer.repeat(args.repeat, number)) / number * 1e6
        ratio = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:32s}" + "".join(f"{times[n]:16.2f}" for n in names) + f"{ratio:11.1f}x")


if __name__ == "__main__":
    main()

"""Compiled vs pure-Python kernels on detector-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeats 5]

Prints one row per kernel with the best-of-N wall time for each backend.
"""

import argparse
import timeit

import numpy as np

from pvanomaly import _kernels_py
from pvanomaly.detectors.iforest import iforest_fit
from pvanomaly.detectors.ocsvm import rbf_kernel

try:
    from pvanomaly import _kernels as _compiled
except ImportError:
    _compiled = None


def cases(rng):
    X = rng.normal(size=(500, 5))
    K = rbf_kernel(X, X, 1 / 5)
    yield "smo_one_class (n=500)", "smo_one_class", (K, 1 / (0.05 * 500), 1e-6, 100_000)

    forest = iforest_fit(rng.normal(size=(2000, 3)), n_trees=200, seed=1)
    arrs = tuple(getattr(forest, k) for k in ("feature", "threshold", "left", "right", "value", "roots"))
    yield "forest_apply (1440 rows, 200 trees)", "forest_apply", (rng.normal(size=(1440, 3)), *arrs)

    V = rng.normal(size=(2000, 3))
    yield "min_norm_point (2000 vertices, d=3)", "min_norm_point", (V, np.array([3.0, 0.0, 0.0]))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; only the Python backend is available")
    print(f"{'kernel':40s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for label, name, call_args in cases(np.random.default_rng(0)):
        times = []
        for mod in (_kernels_py, _compiled):
            if mod is None:
                times.append(float("nan"))
                continue
            fn = getattr(mod, name)
            times.append(min(timeit.repeat(lambda: fn(*call_args), number=1, repeat=args.repeats)) * 1e3)
        print(f"{label:40s} {times[0]:10.2f} {times[1]:10.2f} {times[0] / times[1]:7.1f}x")


if __name__ == "__main__":
    main()

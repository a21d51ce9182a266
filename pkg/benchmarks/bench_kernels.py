"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--n 20000] [--m 20] [--repeat 20]

Both backends are called directly, so the environment flag does not matter
here.  The first numba call (compilation or cache load) is excluded.
"""

import argparse
import json
import timeit

import numpy as np

from multidefer._kernels import NUMBA_KERNELS, NUMPY_KERNELS


def _inputs(n, m, c, k, trials, seed=0):
    rng = np.random.default_rng(seed)
    weights = rng.uniform(0, 1, (n, m))
    preds = rng.integers(0, c, (n, m - 1))
    active = rng.random((n, m - 1)) > 0.2
    identity = rng.dirichlet(np.ones(c), n)
    grad = rng.normal(size=(n, c))
    uniforms = rng.random((n, trials, k))
    votes = rng.integers(0, c, (n * trials, k))
    return {
        "class_scores": (weights, preds, active, identity),
        "score_backward": (grad, weights, preds, active, identity),
        "draw_members": (weights, uniforms),
        "vote_counts": (votes, c),
    }


def run(n, m, c, k, trials, repeat):
    args = _inputs(n, m, c, k, trials)
    rows = []
    for name, a in args.items():
        NUMBA_KERNELS[name](*a)  # warm up
        t_numba = min(timeit.repeat(lambda: NUMBA_KERNELS[name](*a), number=1, repeat=repeat))
        t_numpy = min(timeit.repeat(lambda: NUMPY_KERNELS[name](*a), number=1, repeat=repeat))
        rows.append({"kernel": name, "numba_ms": 1e3 * t_numba, "numpy_ms": 1e3 * t_numpy,
                     "speedup": t_numpy / t_numba})
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")
    a = p.parse_args()
    rows = run(a.n, a.m, a.classes, a.k, a.trials, a.repeat)
    if a.json:
        print(json.dumps(rows, indent=1))
        return
    print(f"n={a.n} m={a.m} C={a.classes} k={a.k} trials={a.trials} (best of {a.repeat})")
    print(f"{'kernel':<16}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for r in rows:
        print(f"{r['kernel']:<16}{r['numba_ms']:>12.3f}{r['numpy_ms']:>12.3f}{r['speedup']:>9.1f}x")


if __name__ == "__main__":
    main()

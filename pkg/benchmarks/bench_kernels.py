"""Compiled vs numpy kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the trajectory walk on the reference model (desk protocol and a longer
run) and the pairwise lumping search on a larger augmented chain, checking
that both backends return identical results.
"""
import argparse
import time

import numpy as np

from satrisk import _kernels
from satrisk.instances import load_fixture, random_instance
from satrisk.lumping import lump_all
from satrisk.model import induce
from satrisk.sat import transform_process
from satrisk.simulator import run_groups


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels.compiled_backend is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")

    proc = induce(*load_fixture("ref2"))
    mdp, policy = random_instance(np.random.default_rng(3), max_states=6, max_actions=3, max_rewards=3,
                                  n_states=6, full_support=True)
    big = transform_process(mdp, policy)
    cases = [
        ("walk L=20 M=500 N=200", lambda be: run_groups(proc, 20, 500, 200, 42, backend=be).returns),
        ("walk L=20 M=5000 N=400", lambda be: run_groups(proc, 20, 5000, 400, 42, backend=be).returns),
        (f"lump_all n={big.n}", lambda be: lump_all(big, backend=be).merged_chain.P),
    ]
    print(f"{'case':<26}{'cython s':>11}{'python s':>11}{'speedup':>9}  identical")
    for name, fn in cases:
        tc, a = best_of(lambda: fn("cython"), args.repeat)
        tp, b = best_of(lambda: fn("python"), args.repeat)
        print(f"{name:<26}{tc:>11.4f}{tp:>11.4f}{tp / tc:>8.1f}x  {np.array_equal(a, b)}")


if __name__ == "__main__":
    main()

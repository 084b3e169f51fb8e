"""Compiled kernels against the interpreted fallback.

Runs itself twice, once with ``BBTUNE_DISABLE_JIT=1``, and prints a table of
median wall times. Compile time is excluded by a warm-up call.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
from __future__ import annotations

import argparse
import json
import os
import statistics
import subprocess
import sys
import time


def _time(fn, repeat):
    fn()  # warm-up (compilation or cache load)
    runs = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        runs.append(time.perf_counter() - t)
    return statistics.median(runs)


def measure(repeat: int) -> dict:
    import numpy as np

    from bbtune import fixtures
    from bbtune.grammar import parse
    from bbtune.numeric import constraint_rhs
    from bbtune.sampler import build_tables, interruptible_counts, sample_many
    from bbtune.sampler.random import POISSON, draw_many
    from bbtune.tiling import random_automaton_spec
    from bbtune.tuner import tune

    out = {}
    result = tune(parse(random_automaton_spec(1000, 60, seed=3)), size=1000)
    mat = result.program.matrices()
    s = mat.B @ result.x + mat.term_const
    out["constraint rhs, 1000-state automaton"] = _time(
        lambda: constraint_rhs(s, mat.starts, mat.is_lse), repeat)

    gen = np.random.default_rng(0)
    out["Poisson(12) x 20000"] = _time(lambda: draw_many(gen, POISSON, 12.0, 20000), repeat)

    motzkin = build_tables(tune(fixtures.load("motzkin"), singular=True))
    out["Motzkin, 20 samples in [1000, 1100]"] = _time(
        lambda: sample_many(motzkin, 20, gen, (1000, 1100), trees=False), repeat)

    words = build_tables(tune(fixtures.load("even_a"), singular=True))
    out["interruptible walk, 20 x n=2000"] = _time(
        lambda: interruptible_counts(words, 2000, 20, gen), repeat)
    return out


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        import warnings

        warnings.simplefilter("ignore")
        print(json.dumps(measure(args.repeat)))
        return
    results = {}
    for label, flag in (("numba", "0"), ("fallback", "1")):
        env = dict(os.environ, BBTUNE_DISABLE_JIT=flag)
        proc = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(args.repeat)],
                              env=env, capture_output=True, text=True, check=True)
        results[label] = json.loads(proc.stdout.strip().splitlines()[-1])
    width = max(map(len, results["numba"]))
    print(f"{'kernel':<{width}}  {'numba (s)':>10}  {'fallback (s)':>12}  {'speed-up':>8}")
    for name, fast in results["numba"].items():
        slow = results["fallback"][name]
        print(f"{name:<{width}}  {fast:>10.5f}  {slow:>12.5f}  {slow / fast:>8.1f}")


if __name__ == "__main__":
    main()

"""The ten acceptance criteria, each at its stated tolerance and time budget."""
import math
import time
import warnings
from collections import Counter, defaultdict

import numpy as np
from scipy import stats as sps

from bbtune import fixtures
from bbtune.grammar import parse
from bbtune.numeric import logsumexp_kernel
from bbtune.sampler import (
    build_tables,
    default_window,
    interruptible_counts,
    sample,
    sample_many,
)
from bbtune.sampler import kernels
from bbtune.tiling import random_automaton_spec
from bbtune.tuner import OPTIMAL, tune


def quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return fn(*args, **kw)


def timed(fn, *args, **kw):
    t = time.perf_counter()
    out = quiet(fn, *args, **kw)
    return out, time.perf_counter() - t


def shares(structure):
    return {name: c / structure.size for name, c in zip(structure.names[1:], structure.counts[1:])}


def test_1_closed_form_tuning(report):
    worst, slowest = 0.0, 0.0
    for n in (10, 100, 1000):
        r, dt = timed(tune, fixtures.load("seqz"), size=n)
        worst = max(worst, abs(r.z["size"] - n / (n + 1)) / (n / (n + 1)))
        slowest = max(slowest, dt)
    ok = worst <= 1e-6 and slowest < 1.0
    assert report(1, ok, f"max rel error {worst:.2e}, slowest {slowest:.3f}s")


def test_2_singular_tuning(report):
    t0 = time.perf_counter()
    binary = quiet(tune, fixtures.load("binary"), singular=True)
    err = abs(binary.z["size"] - 0.5)
    table = build_tables(quiet(tune, fixtures.load("motzkin"), singular=True))
    rows = sample_many(table, 200, 2024, window=(10_000, 10_500), trees=False)
    share = rows[:, 1].sum() / rows[:, 0].sum()
    dt = time.perf_counter() - t0
    ok = err <= 1e-4 and abs(share - 0.30) <= 0.01 and dt < 120
    assert report(2, ok, f"|z*-1/2| = {err:.1e}, binary share {share:.4f} over 200, {dt:.1f}s")


def test_3_lambda_index_table(report):
    t0 = time.perf_counter()
    table = build_tables(quiet(tune, fixtures.load("lambda"), singular=True))
    term = sample(table, 3, window=(10_000, 10_050))
    freq = shares(term)
    dt = time.perf_counter() - t0
    lo, hi = min(freq.values()), max(freq.values())
    ok = len(freq) == 9 and 0.065 <= lo and hi <= 0.095 and dt < 300
    assert report(3, ok, f"size {term.size}, index shares in [{lo:.4f}, {hi:.4f}], {dt:.1f}s")


def test_4_tree_degree_table(report):
    t0 = time.perf_counter()
    table = build_tables(quiet(tune, fixtures.load("degrees"), singular=True))
    tree = sample(table, 4, window=(10_000, 10_050))
    freq = shares(tree)
    dt = time.perf_counter() - t0
    lo, hi = min(freq.values()), max(freq.values())
    ok = len(freq) == 8 and 0.007 <= lo and hi <= 0.013 and dt < 300
    assert report(4, ok, f"size {tree.size}, degree shares in [{lo:.4f}, {hi:.4f}], {dt:.1f}s")


def test_5_weighted_partitions(report):
    t0 = time.perf_counter()
    r = quiet(tune, fixtures.load("partitions"), size=1000)
    table = build_tables(r)
    parts = sample_many(table, 5, 5, window=default_window(1000))
    dt = time.perf_counter() - t0
    targets = {"C1": 0.03, "C2": 0.07, "C3": 0.10, "C4": 0.30}
    worst = 0.0
    for p in parts:
        f = shares(p)
        f["C5"] = 1 - sum(f.values())
        for name, t in {**targets, "C5": 0.50}.items():
            worst = max(worst, abs(f[name] - t))
    sizes = [p.size for p in parts]
    ok = all(900 <= s <= 1100 for s in sizes) and worst <= 0.05 and dt < 120
    assert report(5, ok, f"sizes {sizes}, max colour deviation {worst:.4f}, {dt:.1f}s")


def _trees(n, weights, memo):
    """Every tree of size n as its preorder tuple of alternative indices.

    ``weights`` gives the sizes of the leaf, unary and binary alternatives.
    """
    if n in memo:
        return memo[n]
    leaf, unary, binary = weights
    out = [(0,)] if n == leaf else []
    if n > unary:
        out += [(1,) + t for t in _trees(n - unary, weights, memo)]
    for left in range(1, n - binary):
        for a in _trees(left, weights, memo):
            for b in _trees(n - binary - left, weights, memo):
                out.append((2,) + a + b)
    memo[n] = out
    return out


def _uniformity(spec, weights, seed):
    """Min chi-square p-value over composition classes with enough samples."""
    table = build_tables(quiet(tune, parse(spec), singular=True))
    status, done, flat, offsets, _, _ = kernels.sample_batch(
        table.kernel, np.random.default_rng(seed), table.root, 0, 10, 10**6, 10**8)
    assert status == kernels.OK and done == 10**6
    seen = Counter(flat[offsets[i]:offsets[i + 1]].tobytes() for i in range(done))
    classes = defaultdict(list)   # (size, binary nodes) -> trees
    memo = {}
    for n in range(11):
        for t in _trees(n, weights, memo):
            classes[n, t.count(2)].append(np.array(t, np.int64).tobytes())
    enumerated = {k for ks in classes.values() for k in ks}
    worst, tested = 1.0, 0
    for keys in classes.values():
        obs = [seen.get(k, 0) for k in keys]
        if len(keys) < 2 or sum(obs) / len(keys) < 5:
            continue
        worst = min(worst, sps.chisquare(obs).pvalue)
        tested += 1
    return worst, tested, set(seen) <= enumerated


def test_6_conditional_uniformity(report):
    w1, t1, ok1 = _uniformity(fixtures.MOTZKIN, (3, 1, 2), 6)
    w2, t2, ok2 = _uniformity("M = Leaf | Unary M | Binary M M.", (1, 1, 1), 60)
    ok = ok1 and ok2 and t1 >= 1 and t2 >= 10 and min(w1, w2) > 1e-3
    assert report(6, ok, f"weighted Motzkin: {t1} classes, min p {w1:.3g}; "
                         f"unit Motzkin: {t2} classes, min p {w2:.3g}")


def test_7_interruptible_sampler(report):
    t0 = time.perf_counter()
    table = build_tables(quiet(tune, fixtures.load("even_a"), singular=True))
    rng = np.random.default_rng(7)
    letter = {k: table.alt_tag(int(table.kernel.sa_alt[k])) for k in range(len(table.kernel.sa_alt))}
    rows, traces = interruptible_counts(table, 8, 100_000, rng, traces=True)
    words = defaultdict(Counter)
    for tr in traces:
        w = "".join(letter[int(k)] for k in tr[:-1])
        words[len(w)][w] += 1
    worst, tested = 1.0, 0
    for length, counter in sorted(words.items()):
        if length > 14:   # the oracle enumerates all 2^length words
            break
        # words of that length with an even number of A whose last proper
        # prefix of length >= 8 never revisits the final state before the end
        support = _interruptible_support(length, 8)
        if len(support) < 2 or sum(counter.values()) / len(support) < 5:
            continue
        assert set(counter) <= support
        worst = min(worst, sps.chisquare([counter.get(w, 0) for w in support]).pvalue)
        tested += 1
    excess = {n: interruptible_counts(table, n, 4000, rng)[:, 0].mean() - n for n in (100, 1000, 10_000)}
    spread = max(excess.values()) / min(excess.values()) - 1
    dt = time.perf_counter() - t0
    ok = tested >= 2 and worst > 1e-3 and spread <= 0.2 and dt < 120
    desc = ", ".join(f"n={n}: {e:.3f}" for n, e in excess.items())
    assert report(7, ok, f"{tested} lengths, min p-value {worst:.3g}; mean excess {desc}; {dt:.1f}s")


def _interruptible_support(length, n):
    out = set()
    for bits in range(1 << length):
        w = "".join("A" if bits >> i & 1 else "B" for i in range(length))
        parity = [w[:k].count("A") % 2 for k in range(length + 1)]
        stops = [k for k in range(n, length + 1) if parity[k] == 0]
        if stops and stops[0] == length:
            out.add(w)
    return out


def test_8_numerics(report):
    rng = np.random.default_rng(8)
    h, worst_grad, worst_eig = 1e-5, 0.0, 0.0
    for _ in range(100):
        m, n = rng.integers(2, 9), rng.integers(1, 7)
        A, b, x = rng.normal(size=(m, n)) * 2, rng.normal(size=m), rng.normal(size=n)
        _, g, H = logsumexp_kernel(A, b, x)
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            fd = (logsumexp_kernel(A, b, x + e)[0] - logsumexp_kernel(A, b, x - e)[0]) / (2 * h)
            worst_grad = max(worst_grad, abs(fd - g[i]) / max(1.0, abs(g[i])))
        worst_eig = min(worst_eig, np.linalg.eigvalsh(H).min())
    ok = worst_grad <= 1e-6 and worst_eig >= -1e-9
    assert report(8, ok, f"max gradient error {worst_grad:.2e}, min Hessian eigenvalue {worst_eig:.2e}")


def test_9_precision_scaling(report):
    ns = np.array([1e2, 1e3, 1e4])
    seq = [1 - quiet(tune, fixtures.load("seqz"), size=n).z["size"] for n in ns]
    tree = [0.5 - quiet(tune, fixtures.load("binary"), size=n).z["size"] for n in ns]
    s1 = np.polyfit(np.log(ns), np.log(seq), 1)[0]
    s2 = np.polyfit(np.log(ns), np.log(tree), 1)[0]
    ok = abs(s1 + 1) <= 0.15 and abs(s2 + 2) <= 0.15
    assert report(9, ok, f"Seq(Z) slope {s1:.4f}, binary-tree slope {s2:.4f}")


def test_10_scale(report):
    ast = parse(random_automaton_spec(1000, 60, seed=3))
    freqs = {f"M{m}": 0.015 for m in range(50)}
    r, dt = timed(tune, ast, size=1000, freqs=freqs)
    ok = len(ast.classes) >= 1000 and len(freqs) >= 50 and r.status == OPTIMAL and dt < 600
    assert report(10, ok, f"{len(ast.classes)} classes, {len(freqs)} tuned markers, "
                          f"status {r.status}, {dt:.1f}s")

import math
import warnings
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from bbtune import fixtures
from bbtune.grammar import euler_totient, parse
from bbtune.sampler import (
    Exhausted,
    NonRational,
    NotStronglyConnected,
    RandomSource,
    build_tables,
    colored_mset1_dp,
    colour_subsets,
    decode,
    interruptible_counts,
    interruptible_sample,
    sample,
    sample_colored_mset1,
    sample_cycle,
    sample_many,
    sample_mset,
    stats,
    tally,
)
from bbtune.sampler.tables import DegenerateBranch
from bbtune.tuner import expectations, tune


def tuned_table(text, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        r = tune(parse(text), **kw)
    return r, build_tables(r)


# -- tables -------------------------------------------------------------------

@pytest.mark.parametrize("name, kw", [
    ("motzkin", dict(singular=True)), ("running", dict(size=100, freqs={"U": 0.4})),
    ("lambda", dict(singular=True)), ("words", dict(size=20)),
])
def test_table_invariants(tuned, name, kw):
    T = build_tables(tuned(name, **kw)).kernel
    for s in range(len(T.state_alt_start)):
        lo, n = T.state_alt_start[s], T.state_alt_len[s]
        probs = np.diff(np.concatenate([[0.0], T.sa_cum[lo:lo + n]]))
        assert abs(probs.sum() - 1) <= 1e-12 and probs.min() >= 0
    assert np.all((T.seq_param > 0) & (T.seq_param < 1))
    assert np.all(T.m1_cval < 1)


def test_symmetric_union_is_fair():
    _, tab = tuned_table("F = Seq(L). L = A | B.", size=10)
    assert np.allclose(tab.alternative_probabilities("L"), [0.5, 0.5], atol=1e-12)


def test_mset_of_atoms_empty_probability():
    r, tab = tuned_table("P = MSet(Z).", size=3)
    z = r.z["size"]
    T = tab.kernel
    kmax = T.ms_len[0]
    assert math.isclose(T.ms_kcdf[0], math.exp(-sum(z**j / j for j in range(1, kmax + 1))), rel_tol=1e-9)
    assert abs(T.ms_kcdf[0] - (1 - z)) <= 2 * z ** (kmax + 1) / (1 - z)
    assert np.all(np.diff(T.ms_kcdf[: kmax + 1]) >= 0) and T.ms_kcdf[kmax] == 1.0
    rs = RandomSource(4)
    empty = np.mean([len(sample_mset(tab, None, rs)) == 0 for _ in range(20000)])
    assert abs(empty - (1 - z)) < 4 * math.sqrt(z * (1 - z) / 20000)


def test_cycle_order_distribution_and_shape():
    r, tab = tuned_table("N = Cycle(Z).", size=1.3)
    z = r.z["size"]
    T = tab.kernel
    n = T.cy_len[0]
    mass = np.array([-euler_totient(k) / k * math.log1p(-z**k) for k in range(1, n + 1)])
    assert np.allclose(T.cy_cum[:n], np.cumsum(mass / mass.sum()))
    assert T.cy_cum[0] > 0.5 and z < 0.5
    rs = RandomSource(1)
    for _ in range(200):
        pattern, k = sample_cycle(tab, None, rs)
        assert len(pattern) >= 1 and k >= 1


def test_cycle_blocks_repeat():
    _, tab = tuned_table("N = Cycle(B). B = Leaf | Node B B.", size=20)
    for s in sample_many(tab, 100, 9):
        (cyc,) = s.root.children
        assert len(cyc.expanded()) == cyc.repeat * len(cyc.children)


def test_dp_small_identity():
    p, q = colored_mset1_dp([1.0, 1.0])
    assert q[0, 0] == 2 and q[1, 1] == 1 and np.trace(q) == 3


@given(st.lists(st.floats(0.01, 5.0), min_size=1, max_size=7))
@settings(max_examples=50, deadline=None)
def test_dp_sum_is_product_formula(s):
    p, q = colored_mset1_dp(s)
    assert math.isclose(np.trace(q), np.prod(1 + np.array(s)) - 1, rel_tol=1e-10)
    d = len(s)
    for k in range(d):
        for j in range(d - 1):
            if j >= k:
                assert q[k, j] == p[k, j] + q[k, j + 1]


def test_dp_sparsity_is_upper_triangular():
    p, _ = colored_mset1_dp(np.arange(1.0, 6.0))
    assert np.array_equal(p != 0, np.triu(np.ones((5, 5), bool)))


def test_single_colour_is_geometric():
    p, q = colored_mset1_dp([0.5 / 0.5])
    rs = RandomSource(2)
    draws = [sample_colored_mset1(p, q, [0.5], rs) for _ in range(20000)]
    assert all(list(d) == [0] for d in draws)
    counts = np.array([d[0] for d in draws])
    assert abs(counts.mean() - 2.0) < 4 * math.sqrt(2.0 / 20000)


def test_two_colour_split():
    p, q = colored_mset1_dp([1.0, 1.0])
    masks = colour_subsets(p, q, 60000, 3)
    one = np.mean((masks == 1) | (masks == 2))
    assert abs(one - 2 / 3) < 4 * math.sqrt(2 / 9 / 60000)


def test_three_colour_choice_matches_expansion():
    s = np.array([0.4, 1.3, 2.2])
    p, q = colored_mset1_dp(s)
    n = 10**6
    freq = np.bincount(colour_subsets(p, q, n, 8), minlength=8)[1:] / n
    exact = np.array([np.prod(s[[i for i in range(3) if m >> i & 1]]) for m in range(1, 8)])
    exact /= exact.sum()
    assert np.all(np.abs(freq - exact) <= 4 * np.sqrt(exact * (1 - exact) / n))


def test_python_colour_sampler_agrees_with_kernel_law():
    s = np.array([0.7, 1.5])
    p, q = colored_mset1_dp(s)
    rs = RandomSource(5)
    sets = Counter(frozenset(sample_colored_mset1(p, q, [0.4, 0.6], rs)) for _ in range(20000))
    exact = {frozenset([0]): 0.7, frozenset([1]): 1.5, frozenset([0, 1]): 1.05}
    total = sum(exact.values())
    for key, w in exact.items():
        assert abs(sets[key] / 20000 - w / total) < 0.015


# -- windowed sampling --------------------------------------------------------

def test_minimal_window_gives_leaf(motzkin_table):
    for seed in range(5):
        s = sample(motzkin_table, seed, window=(3, 3))
        assert s.text() == "Leaf" and s.size == 3


def test_binary_size_five_is_uniform(binary_table):
    keys = Counter(s.key() for s in sample_many(binary_table, 4000, 12, window=(5, 5)))
    assert len(keys) == 2
    assert sps.chisquare(list(keys.values())).pvalue > 1e-3


@given(st.integers(0, 2**32))
@settings(max_examples=20, deadline=None)
def test_counts_equal_tally(seed):
    tab = _running_table()
    for s in sample_many(tab, 5, seed, window=(10, 300)):
        assert np.array_equal(tally(tab, s.root), s.counts)


_CACHE = {}


def _running_table():
    if "running" not in _CACHE:
        _CACHE["running"] = tuned_table(fixtures.RUNNING_EXAMPLE, size=100, freqs={"U": 0.4})[1]
    return _CACHE["running"]


def test_sample_respects_window_and_decodes(motzkin_table):
    for s in sample_many(motzkin_table, 20, 1, window=(200, 260)):
        assert 200 <= s.size <= 260
        assert np.array_equal(tally(motzkin_table, s.root), s.counts)


def test_same_seed_same_stream(motzkin_table):
    a = [s.dumps() for s in sample_many(motzkin_table, 10, 77, window=(50, 80))]
    b = [s.dumps() for s in sample_many(motzkin_table, 10, 77, window=(50, 80))]
    assert a == b
    c = [sample(motzkin_table, np.random.default_rng(3), (50, 80)).dumps() for _ in range(1)]
    d = [sample(motzkin_table, np.random.default_rng(3), (50, 80)).dumps() for _ in range(1)]
    assert c == d


def test_exhausted_after_max_attempts(motzkin_table):
    with pytest.raises(Exhausted) as err:
        sample(motzkin_table, 0, window=(10**5, 10**5), max_attempts=5)
    assert err.value.attempts == 5
    with pytest.raises(ValueError):
        sample(motzkin_table, 0, window=(10, 5))


def test_deep_structure_serialises_without_recursion(motzkin_table):
    s = sample(motzkin_table, 3, window=(100000, 110000))
    assert s.dumps().count('"tag"') > 50000
    assert len(s.text()) > 100000
    assert s.key()


def test_expectation_consistency(tuned):
    cases = [("seqz", dict(size=30)), ("words", dict(size=40)),
             ("running", dict(size=100, freqs={"U": 0.4})), ("motzkin", dict(size=60)),
             ("lambda", dict(size=80))]
    for name, kw in cases:
        r = tuned(name, **kw)
        rows = sample_many(build_tables(r), 20000, 21, trees=False)
        mom = expectations(r.program, r.x)
        sd = np.sqrt(np.diag(mom.cov))
        emp = rows.mean(axis=0)
        for i, label in enumerate(mom.names):
            assert abs(emp[i] - mom.mean[i]) <= 3 * sd[i] / math.sqrt(len(rows)), (name, label)


def test_mset_truncation_doubling_changes_little(tuned):
    r1 = tuned("running", size=100, freqs={"U": 0.4})
    J = r1.program.truncation
    r2 = tuned("running", size=100, freqs={"U": 0.4}, J=2 * J)
    k1, k2 = build_tables(r1).kernel, build_tables(r2).kernel
    pk1 = np.diff(np.concatenate([[0.0], k1.ms_kcdf[: J + 1]]))
    pk2 = np.diff(np.concatenate([[0.0], k2.ms_kcdf[: 2 * J + 1]]))
    pk1 = np.concatenate([pk1, np.zeros(J)])
    assert 0.5 * np.abs(pk1 - pk2).sum() <= 1e-3


def test_degenerate_tables_are_refused(tuned):
    r = tuned("even_a", singular=True)
    r.status = "Infeasible"
    with pytest.raises(DegenerateBranch):
        build_tables(r)
    r.status = "Optimal"


# -- interruptible sampling ---------------------------------------------------

def test_single_state_loop_is_exact():
    _, tab = tuned_table("F = Z F | Eps (0).", singular=True)
    for n in (1, 10, 137):
        assert interruptible_sample(tab, n, n).size == n


def test_even_length_overshoot(even_length_table):
    for n in (10, 11, 500, 501):
        sizes = interruptible_counts(even_length_table, n, 200, n)[:, 0]
        assert set(sizes) == {n + n % 2}


def test_interruptible_output_is_a_word(even_a_table):
    s = interruptible_sample(even_a_table, 40, 6)
    assert np.array_equal(tally(even_a_table, s.root), s.counts)
    assert s.text().count("A") % 2 == 0
    assert s.size >= 40


def test_interruptible_rejects_algebraic(binary_table):
    with pytest.raises(NonRational):
        interruptible_sample(binary_table, 10, 0)


def test_interruptible_rejects_disconnected():
    _, tab = tuned_table("S = A S | B T. T = B T | Eps (0).", singular=True)
    with pytest.raises(NotStronglyConnected):
        interruptible_sample(tab, 10, 1)


# -- stats ---------------------------------------------------------------------

def test_stats_single_structure_is_exact(motzkin_table):
    s = sample(motzkin_table, 2, window=(40, 60))
    rep = stats([s])
    assert rep["samples"] == 1 and rep["mean_size"] == s.size
    assert rep["shares"]["Binary"]["share"] == s.counts[1] / s.counts[0]


def test_stats_needs_samples():
    with pytest.raises(ValueError):
        stats([])


def test_decode_rejects_wrong_length(motzkin_table):
    s = sample_many(motzkin_table, 1, 4, window=(10, 20))[0]
    with pytest.raises(ValueError):
        decode(motzkin_table, np.zeros(5, np.int64), 0, 3)
    assert s.size >= 10

"""User-facing sampling entry points over a :class:`BranchTable`."""
from __future__ import annotations

import math
from typing import Iterable, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ..grammar.spec import SpecError
from . import kernels
from .random import RandomSource
from .structure import Node, Structure, decode
from .tables import CLASS, BranchTable

DEFAULT_MAX_ATTEMPTS = 10**6
SIZE_TOLERANCE = 0.1
MAX_POST_TARGET = 10**6


class Exhausted(RuntimeError):
    def __init__(self, attempts: int, window=None):
        super().__init__(f"no structure in window {window} after {attempts} attempts")
        self.attempts = attempts
        self.window = window


class NonRational(SpecError):
    """The walk needs every alternative to carry at most one class and no operator."""


class NotStronglyConnected(SpecError):
    """Some reachable state cannot return to the start."""


class FinalStateUnreachable(RuntimeError):
    """The post-target walk did not hit the final state within its step cap."""


def generator(rng=None) -> np.random.Generator:
    """Accept a :class:`RandomSource`, a numpy ``Generator`` or a seed."""
    if isinstance(rng, RandomSource):
        return rng.gen
    if isinstance(rng, np.random.Generator):
        return rng
    return RandomSource(rng).gen


def default_window(n: int, eps: float = SIZE_TOLERANCE) -> tuple[int, int]:
    return int(math.floor((1 - eps) * n)), int(math.ceil((1 + eps) * n))


def _bounds(window) -> tuple[int, int]:
    if window is None:
        return 0, kernels.UNBOUNDED
    lo, hi = int(window[0]), int(window[1])
    if lo > hi:
        raise ValueError(f"empty size window [{lo}, {hi}]")
    return lo, hi


def _buffers(table: BranchTable):
    n_counts = 1 + max(1, len(table.markers))
    return ([np.empty(256, np.int64) for _ in range(4)],
            np.zeros(n_counts, np.int64))


def sample(table: BranchTable, rng=None, window=None, name: Optional[str] = None,
           depth: int = 1, max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> Structure:
    """One structure of class ``name`` (the root by default) with size in ``window``.

    Oversized attempts are abandoned as soon as they leave the window and the
    generator retries; ``Exhausted`` is raised after ``max_attempts`` tries.
    """
    state = table.root if name is None else table.state_index(name, depth)
    return _sample_state(table, generator(rng), state, window, max_attempts)


def _sample_state(table, gen, state, window=None, max_attempts=DEFAULT_MAX_ATTEMPTS):
    lo, hi = _bounds(window)
    (trace, sk, sr, sm), counts = _buffers(table)
    status, attempts, tl, trace, *_ = kernels.sample_window(
        table.kernel, gen, state, lo, hi, max_attempts, trace, sk, sr, sm, counts)
    if status != kernels.OK:
        raise Exhausted(attempts, (lo, hi))
    root = decode(table, trace, 0, tl, root=state)
    n = 1 + len(table.markers)
    return Structure(root, counts[:n].copy(), table.count_names, attempts)


def sample_many(table: BranchTable, count: int, rng=None, window=None,
                max_attempts: int = DEFAULT_MAX_ATTEMPTS, trees: bool = True) -> list:
    """``count`` structures in one compiled call.

    With ``trees=False`` only the count vectors are returned (one row each),
    which skips decoding when only frequencies are needed.
    """
    gen = generator(rng)
    lo, hi = _bounds(window)
    status, done, flat, offsets, rows, attempts = kernels.sample_batch(
        table.kernel, gen, table.root, lo, hi, int(count), max_attempts)
    if status != kernels.OK:
        raise Exhausted(attempts, (lo, hi))
    rows = rows[:, : 1 + len(table.markers)]
    if not trees:
        return rows
    names = table.count_names
    return [Structure(decode(table, flat, offsets[i], offsets[i + 1]), rows[i].copy(), names)
            for i in range(done)]


def _op_ref(table: BranchTable, code: int, arg: Optional[str]) -> int:
    """Operator over class ``arg``; ``None`` picks the only one of that kind."""
    refs = [ref for (c, ref), a in table.op_kind.items() if c == code and arg in (None, a)]
    if len(refs) != 1:
        raise KeyError(f"expected one operator over {arg!r} of that kind, found {len(refs)}")
    return refs[0]


def _child(table: BranchTable, gen, state: int) -> Node:
    return _sample_state(table, gen, state).root


def state_name(table: BranchTable, state: int) -> str:
    return table.states[state][0]


def sample_mset(table: BranchTable, arg: Optional[str] = None, rng=None) -> list:
    """A multiset over ``arg`` as ``(node, multiplicity)`` groups.

    Draw the largest index ``K`` from its CDF, then Poisson group counts for
    ``i < K`` and a zero-truncated count at ``i = K``. A component of group
    ``i`` is generated at ``z^i`` and repeated ``i`` times.
    """
    gen = generator(rng)
    K = table.kernel
    ref = _op_ref(table, kernels.MSET, arg)
    off, koff, n = K.ms_off[ref], K.ms_koff[ref], K.ms_len[ref]
    big = int(kernels.categorical(gen, K.ms_kcdf[koff: koff + n + 1]))
    out = []
    for i in range(1, big + 1):
        lam = K.ms_lam[off + i - 1]
        q = kernels.zero_truncated_poisson(gen, lam) if i == big else kernels.poisson(gen, lam)
        for _ in range(int(q)):
            out.append((_child(table, gen, int(K.ms_child[off + i - 1])), i))
    return out


def sample_cycle(table: BranchTable, arg: Optional[str] = None, rng=None) -> tuple[list, int]:
    """A cycle over ``arg`` as ``(pattern, k)``; the cycle is ``pattern * k``."""
    gen = generator(rng)
    K = table.kernel
    ref = _op_ref(table, kernels.CYCLE, arg)
    off = K.cy_off[ref]
    k = 1 + int(kernels.categorical(gen, K.cy_cum[off: off + K.cy_len[ref]]))
    length = int(kernels.log_series(gen, K.cy_param[off + k - 1]))
    child = int(K.cy_child[off + k - 1])
    return [_child(table, gen, child) for _ in range(length)], k


def sample_colored_mset1(p, q, colour_values, rng=None) -> dict:
    """A non-empty multiset of colours as ``{colour index: count}``.

    ``p``/``q`` come from :func:`~bbtune.sampler.tables.colored_mset1_dp`;
    ``colour_values[i]`` is the weight of colour ``i``, whose count is drawn
    from ``Seq>=1`` at that weight.
    """
    gen = generator(rng)
    p, q = np.asarray(p), np.asarray(q)
    d = p.shape[0]
    kk = np.diag(q)
    cum = np.cumsum(kk / kk.sum())
    cum[-1] = 1.0
    remaining = 1 + int(kernels.categorical(gen, cum))
    j = remaining
    out = {}
    while remaining > 0:
        if gen.random() * q[remaining - 1, j - 1] < p[remaining - 1, j - 1]:
            colour = j - remaining
            out[colour] = 1 + int(kernels.geometric(gen, colour_values[colour]))
            remaining -= 1
        else:
            j += 1
        if j > d:
            raise AssertionError("colour selection ran past the last colour")
    return out


def colour_subsets(p, q, count: int, rng=None) -> np.ndarray:
    """Only the colour sets of ``count`` draws, as bitmasks, in one compiled loop."""
    return kernels.colour_subsets(generator(rng), np.ascontiguousarray(p, dtype=float),
                                  np.ascontiguousarray(q, dtype=float), int(count))


def _walk_graph(table: BranchTable):
    """Successor of every state-alternative, ``-1`` when it ends the word."""
    K = table.kernel
    nxt = np.full(len(K.sa_alt), -1, np.int64)
    for k in range(len(K.sa_alt)):
        first, n = int(K.sa_item_start[k]), int(K.sa_item_len[k])
        if n > 1 or (n == 1 and K.item_kind[first] != CLASS):
            cls = table.alts[int(K.sa_alt[k])][0]
            raise NonRational(f"alternative of {cls!r} is not a single automaton transition")
        if n == 1:
            nxt[k] = K.item_ref[first]
    return nxt


def _terminal(table: BranchTable, nxt, state: int) -> int:
    K = table.kernel
    lo, n = int(K.state_alt_start[state]), int(K.state_alt_len[state])
    for k in range(lo, lo + n):
        if nxt[k] < 0:
            return k
    raise SpecError(f"state {state_name(table, state)!r} has no terminal alternative")


def _walk_setup(table: BranchTable, start, final):
    cache = table.__dict__.setdefault("_walks", {})
    if (start, final) in cache:
        return cache[start, final]
    nxt = _walk_graph(table)
    s0 = table.root if start is None else table.state_index(start)
    s1 = s0 if final is None else table.state_index(final)
    K = table.kernel
    owner = np.repeat(np.arange(len(K.state_alt_len)), K.state_alt_len)
    live = nxt >= 0
    graph = csr_matrix((np.ones(int(live.sum())), (owner[live], nxt[live])),
                       shape=(len(table.states),) * 2)
    _, labels = connected_components(graph, connection="strong")
    if np.any(labels != labels[s0]):
        raise NotStronglyConnected("the automaton is not strongly connected")
    cache[start, final] = out = (nxt, s0, s1, _terminal(table, nxt, s1))
    return out


def _walk(table, gen, n, start, final, max_post, max_restarts, trace, counts):
    nxt, s0, s1, fk = _walk_setup(table, start, final)
    status, restarts, tl, trace = kernels.interruptible_walk(
        table.kernel, gen, s0, s1, int(n), int(max_post), int(max_restarts), nxt, fk,
        trace, counts)
    if status == kernels.REJECTED:
        raise FinalStateUnreachable(f"final state not reached {max_post} steps after the target")
    if status != kernels.OK:
        raise Exhausted(max_restarts)
    return s0, restarts, tl, trace


def interruptible_sample(table: BranchTable, n: int, rng=None, start: Optional[str] = None,
                         final: Optional[str] = None, max_post: int = MAX_POST_TARGET,
                         max_restarts: int = DEFAULT_MAX_ATTEMPTS) -> Structure:
    """Walk a rational automaton until size ``n``, then on to the next visit of ``final``.

    ``start`` defaults to the root and ``final`` to the start. Conditioned on
    its size the output is uniform; the overshoot is bounded in probability.
    """
    (trace, *_), counts = _buffers(table)
    s0, restarts, tl, trace = _walk(table, generator(rng), n, start, final, max_post,
                                    max_restarts, trace, counts)
    root = decode(table, trace, 0, tl, root=s0)
    return Structure(root, counts[: 1 + len(table.markers)].copy(), table.count_names,
                     restarts + 1)


def interruptible_counts(table: BranchTable, n: int, count: int, rng=None,
                         start: Optional[str] = None, final: Optional[str] = None,
                         max_post: int = MAX_POST_TARGET,
                         max_restarts: int = DEFAULT_MAX_ATTEMPTS, traces: bool = False):
    """Count rows (size first) of ``count`` interruptible runs, without building trees.

    With ``traces=True`` also return each run's sequence of state-alternative
    indices, which identifies the word.
    """
    gen = generator(rng)
    (trace, *_), counts = _buffers(table)
    rows = np.empty((count, 1 + len(table.markers)), np.int64)
    kept = []
    for i in range(count):
        _, _, tl, trace = _walk(table, gen, n, start, final, max_post, max_restarts, trace, counts)
        rows[i] = counts[: rows.shape[1]]
        if traces:
            kept.append(trace[:tl].copy())
    return (rows, kept) if traces else rows


def stats(structures: Iterable, names: Optional[list] = None) -> dict:
    """Pooled size-shares of every atom and marker.

    Accepts :class:`Structure` objects or raw count rows (size first), in
    which case ``names`` labels the columns.
    """
    rows, labels = [], names
    for s in structures:
        if isinstance(s, Structure):
            rows.append(s.counts)
            labels = labels or s.names
        else:
            rows.append(np.asarray(s))
    if not rows:
        raise ValueError("no structures to summarise")
    M = np.asarray(rows, dtype=float)
    sizes = M[:, 0]
    total = sizes.sum()
    per = M[:, 1:] / np.where(sizes > 0, sizes, 1)[:, None]
    shares = {}
    for i, name in enumerate(labels[1:]):
        shares[name] = {
            "share": float(M[:, 1 + i].sum() / total) if total else 0.0,
            "mean": float(M[:, 1 + i].mean()),
            "min_share": float(per[:, i].min()),
            "max_share": float(per[:, i].max()),
        }
    return {
        "samples": len(rows),
        "mean_size": float(sizes.mean()),
        "std_size": float(sizes.std(ddof=1)) if len(rows) > 1 else 0.0,
        "min_size": int(sizes.min()),
        "max_size": int(sizes.max()),
        "shares": shares,
    }


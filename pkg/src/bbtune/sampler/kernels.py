"""Sampling kernels over :class:`~bbtune.sampler.tables.KernelTables`.

A structure is generated depth first with an explicit task stack; each task
is ``(kind, ref, multiplicity)`` where the multiplicity counts how many times
the enclosing Pólya operators replicate it. The random choices are written to
an integer trace that :mod:`bbtune.sampler.structure` decodes:

* class state: the chosen state-alternative index;
* Seq: the length;
* MSet: the largest group index ``K`` then the group counts ``q_1 .. q_K``;
* Cycle: the replication order ``k`` then the pattern length;
* MSet1: the number of distinct colours, then ``(colour, count)`` pairs.

Generation is abandoned as soon as the running size exceeds ``n_max``.
"""
from __future__ import annotations

import numpy as np

from .._jit import njit
from .random import categorical, geometric, log_series, poisson, zero_truncated_poisson

OK, REJECTED, EXHAUSTED = 0, 1, 2
CLASS, SEQ, MSET, CYCLE, MSET1 = 0, 1, 2, 3, 4
UNBOUNDED = np.iinfo(np.int64).max // 4


@njit
def _grow(a, need):
    n = a.shape[0]
    while n < need:
        n *= 2
    out = np.empty(n, a.dtype)
    out[: a.shape[0]] = a
    return out


@njit
def sample_once(T, gen, root, n_max, trace, sk, sr, sm, counts):
    """One generation attempt. Returns ``(status, trace_len, trace, sk, sr, sm)``;
    the buffers are returned because they may have been reallocated."""
    counts[:] = 0
    n_marks = T.alt_markers.shape[1]
    size = 0
    tl = 0
    sp = 0
    sk[0] = CLASS
    sr[0] = root
    sm[0] = 1
    sp = 1
    while sp > 0:
        sp -= 1
        kind = sk[sp]
        ref = sr[sp]
        mult = sm[sp]
        if tl + 2 >= trace.shape[0]:
            trace = _grow(trace, tl + 2)
        if kind == CLASS:
            lo = T.state_alt_start[ref]
            k = lo + categorical(gen, T.sa_cum[lo: lo + T.state_alt_len[ref]])
            trace[tl] = k
            tl += 1
            a = T.sa_alt[k]
            size += T.alt_weight[a] * mult
            if size > n_max:
                return REJECTED, tl, trace, sk, sr, sm
            for m in range(n_marks):
                counts[1 + m] += T.alt_markers[a, m] * mult
            n_items = T.sa_item_len[k]
            if sp + n_items >= sk.shape[0]:
                sk = _grow(sk, sp + n_items + 1)
                sr = _grow(sr, sp + n_items + 1)
                sm = _grow(sm, sp + n_items + 1)
            first = T.sa_item_start[k]
            for it in range(first + n_items - 1, first - 1, -1):
                sk[sp] = T.item_kind[it]
                sr[sp] = T.item_ref[it]
                sm[sp] = mult
                sp += 1
        elif kind == SEQ:
            length = geometric(gen, T.seq_param[ref])
            trace[tl] = length
            tl += 1
            if sp + length >= sk.shape[0]:
                sk = _grow(sk, sp + length + 1)
                sr = _grow(sr, sp + length + 1)
                sm = _grow(sm, sp + length + 1)
            child = T.seq_child[ref]
            for _ in range(length):
                sk[sp] = CLASS
                sr[sp] = child
                sm[sp] = mult
                sp += 1
        elif kind == MSET:
            off = T.ms_off[ref]
            koff = T.ms_koff[ref]
            big = categorical(gen, T.ms_kcdf[koff: koff + T.ms_len[ref] + 1])
            if tl + big + 1 >= trace.shape[0]:
                trace = _grow(trace, tl + big + 2)
            trace[tl] = big
            tl += 1
            total = 0
            for i in range(1, big + 1):
                lam = T.ms_lam[off + i - 1]
                q = zero_truncated_poisson(gen, lam) if i == big else poisson(gen, lam)
                trace[tl + i - 1] = q
                total += q
            if sp + total >= sk.shape[0]:
                sk = _grow(sk, sp + total + 1)
                sr = _grow(sr, sp + total + 1)
                sm = _grow(sm, sp + total + 1)
            for i in range(big, 0, -1):
                child = T.ms_child[off + i - 1]
                for _ in range(trace[tl + i - 1]):
                    sk[sp] = CLASS
                    sr[sp] = child
                    sm[sp] = mult * i
                    sp += 1
            tl += big
        elif kind == CYCLE:
            off = T.cy_off[ref]
            k = 1 + categorical(gen, T.cy_cum[off: off + T.cy_len[ref]])
            length = log_series(gen, T.cy_param[off + k - 1])
            trace[tl] = k
            trace[tl + 1] = length
            tl += 2
            if sp + length >= sk.shape[0]:
                sk = _grow(sk, sp + length + 1)
                sr = _grow(sr, sp + length + 1)
                sm = _grow(sm, sp + length + 1)
            child = T.cy_child[off + k - 1]
            for _ in range(length):
                sk[sp] = CLASS
                sr[sp] = child
                sm[sp] = mult * k
                sp += 1
        else:
            d = T.m1_d[ref]
            off = T.m1_off[ref]
            coff = T.m1_coff[ref]
            n_colours = 1 + categorical(gen, T.m1_kcum[coff: coff + d])
            if tl + 2 * n_colours + 1 >= trace.shape[0]:
                trace = _grow(trace, tl + 2 * n_colours + 2)
            trace[tl] = n_colours
            tl += 1
            remaining = n_colours
            j = n_colours
            while remaining > 0:
                p = T.m1_p[off + (remaining - 1) * d + j - 1]
                q = T.m1_q[off + (remaining - 1) * d + j - 1]
                if gen.random() * q < p:
                    colour = j - remaining
                    count = 1 + geometric(gen, T.m1_cval[coff + colour])
                    trace[tl] = colour
                    trace[tl + 1] = count
                    tl += 2
                    a = T.m1_calt[coff + colour]
                    size += T.alt_weight[a] * count * mult
                    for m in range(n_marks):
                        counts[1 + m] += T.alt_markers[a, m] * count * mult
                    remaining -= 1
                else:
                    j += 1
            if size > n_max:
                return REJECTED, tl, trace, sk, sr, sm
    counts[0] = size
    return OK, tl, trace, sk, sr, sm


@njit
def sample_window(T, gen, root, n_min, n_max, max_attempts, trace, sk, sr, sm, counts):
    """Repeat attempts until the size lands in ``[n_min, n_max]``.

    Returns ``(status, attempts, trace_len, trace, sk, sr, sm)``.
    """
    for attempt in range(1, max_attempts + 1):
        status, tl, trace, sk, sr, sm = sample_once(T, gen, root, n_max, trace, sk, sr, sm, counts)
        if status == OK and counts[0] >= n_min:
            return OK, attempt, tl, trace, sk, sr, sm
    return EXHAUSTED, max_attempts, 0, trace, sk, sr, sm


@njit
def sample_batch(T, gen, root, n_min, n_max, count, max_attempts):
    """``count`` windowed samples as flat traces with offsets and count rows."""
    n_counts = 1 + T.alt_markers.shape[1]
    trace = np.empty(256, np.int64)
    sk = np.empty(256, np.int64)
    sr = np.empty(256, np.int64)
    sm = np.empty(256, np.int64)
    counts = np.zeros(n_counts, np.int64)
    flat = np.empty(1024, np.int64)
    offsets = np.zeros(count + 1, np.int64)
    rows = np.zeros((count, n_counts), np.int64)
    attempts = 0
    for i in range(count):
        status, used, tl, trace, sk, sr, sm = sample_window(
            T, gen, root, n_min, n_max, max_attempts, trace, sk, sr, sm, counts)
        attempts += used
        if status != OK:
            return status, i, flat[: offsets[i]], offsets[: i + 1], rows[:i], attempts
        if offsets[i] + tl > flat.shape[0]:
            flat = _grow(flat, offsets[i] + tl)
        flat[offsets[i]: offsets[i] + tl] = trace[:tl]
        offsets[i + 1] = offsets[i] + tl
        rows[i] = counts
    return OK, count, flat[: offsets[count]], offsets, rows, attempts


@njit
def interruptible_walk(T, gen, start, final, n, max_post, max_restarts, next_state, final_k,
                       trace, counts):
    """Run a rational automaton past size ``n`` until it first sits in ``final``.

    ``next_state[k]`` is the successor of state-alternative ``k`` (``-1`` for a
    terminal alternative) and ``final_k`` the terminal alternative taken on
    stopping. A terminal alternative drawn before stopping restarts the walk.
    Returns ``(status, restarts, trace_len, trace)`` with status ``OK``,
    ``EXHAUSTED`` (restarts used up) or ``REJECTED`` (post-target cap hit).
    """
    n_marks = T.alt_markers.shape[1]
    for attempt in range(max_restarts):
        counts[:] = 0
        size = 0
        tl = 0
        post = 0
        s = start
        while True:
            if tl + 1 >= trace.shape[0]:
                trace = _grow(trace, tl + 2)
            if size >= n and s == final:
                k = final_k
            else:
                if size >= n:
                    post += 1
                    if post > max_post:
                        return REJECTED, attempt, tl, trace
                lo = T.state_alt_start[s]
                k = lo + categorical(gen, T.sa_cum[lo: lo + T.state_alt_len[s]])
            trace[tl] = k
            tl += 1
            a = T.sa_alt[k]
            size += T.alt_weight[a]
            for m in range(n_marks):
                counts[1 + m] += T.alt_markers[a, m]
            if size >= n and s == final and k == final_k:
                counts[0] = size
                return OK, attempt, tl, trace
            nxt = next_state[k]
            if nxt < 0:
                break
            s = nxt
    return EXHAUSTED, max_restarts, 0, trace


@njit
def colour_subsets(gen, p, q, count):
    """``count`` colour sets of a non-empty multiset as bitmasks (colour ``i`` -> bit ``i``)."""
    d = p.shape[0]
    kk = np.empty(d)
    for k in range(d):
        kk[k] = q[k, k]
    cum = np.cumsum(kk / kk.sum())
    cum[-1] = 1.0
    out = np.zeros(count, np.int64)
    for n in range(count):
        remaining = 1 + categorical(gen, cum)
        j = remaining
        mask = 0
        while remaining > 0:
            if gen.random() * q[remaining - 1, j - 1] < p[remaining - 1, j - 1]:
                mask |= 1 << (j - remaining)
                remaining -= 1
            else:
                j += 1
        out[n] = mask
    return out

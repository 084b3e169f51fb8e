"""Branching tables compiled from a tuning result.

All probabilities come from the tuned class values stored in the result;
nothing is re-evaluated from the series. The tables are flat numpy arrays so
the sampling kernels can run under numba.
"""
from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from ..grammar.series import euler_totient
from ..grammar.spec import ClassRef, MarkerRef, Op, SpecError

CLASS, SEQ, MSET, CYCLE, MSET1 = 0, 1, 2, 3, 4
_KIND = {"Seq": SEQ, "MSet": MSET, "Cycle": CYCLE, "MSet1": MSET1}


class DegenerateBranch(ValueError):
    """A class value is zero or a geometric/log-series parameter reaches 1."""


KernelTables = namedtuple("KernelTables", [
    # per state: slice of state-alternatives
    "state_alt_start", "state_alt_len",
    # per state-alternative
    "sa_alt", "sa_cum", "sa_item_start", "sa_item_len",
    # per item of a state-alternative
    "item_kind", "item_ref",
    # per alternative of the specification
    "alt_weight", "alt_markers",
    # Seq operators
    "seq_param", "seq_child",
    # MSet operators: K in 0..len, lambda_i and child state for i = 1..len
    "ms_off", "ms_len", "ms_lam", "ms_child", "ms_koff", "ms_kcdf",
    # Cycle operators: k in 1..len
    "cy_off", "cy_len", "cy_cum", "cy_param", "cy_child",
    # MSet1 operators over d atomic colours
    "m1_d", "m1_off", "m1_coff", "m1_p", "m1_q", "m1_kcum", "m1_cval", "m1_calt",
])


def colored_mset1_dp(s) -> tuple[np.ndarray, np.ndarray]:
    """Arrays ``p[k-1, j-1]`` and ``q[k-1, j-1]`` for the elementary symmetric
    polynomials of ``s``; ``q[k-1, k-1]`` is the ``k``-th one.

    ``p[k, j]`` sums the ``k``-subsets whose smallest index is ``j - k + 1``
    (1-based) and ``q[k, j] = p[k, j] + q[k, j + 1]``.
    """
    s = np.asarray(s, dtype=float)
    d = len(s)
    p = np.zeros((d, d))
    q = np.zeros((d, d))
    for k in range(1, d + 1):
        for j in range(d, k - 1, -1):
            p[k - 1, j - 1] = s[j - 1] if k == 1 else s[j - k] * q[k - 2, j - 1]
            q[k - 1, j - 1] = p[k - 1, j - 1] + (q[k - 1, j] if j < d else 0.0)
    return p, q


@dataclass
class BranchTable:
    kernel: KernelTables
    root: int
    states: list
    alts: list                 # (class, index, Alternative)
    markers: list
    op_kind: dict = field(default_factory=dict)   # (kind code, ref) -> arg class
    result: object = field(default=None, repr=False)
    tail_mass: dict = field(default_factory=dict)

    @property
    def count_names(self) -> list:
        from ..grammar.spec import SIZE

        return [SIZE] + list(self.markers)

    def state_index(self, name: str, depth: int = 1) -> int:
        return self.states.index((name, depth))

    def alt_tag(self, a: int) -> str:
        cls, _, alt = self.alts[a]
        return alt.constructor or cls

    def alternative_probabilities(self, name: str, depth: int = 1) -> np.ndarray:
        k = self.kernel
        s = self.state_index(name, depth)
        lo, n = k.state_alt_start[s], k.state_alt_len[s]
        cum = k.sa_cum[lo:lo + n]
        return np.diff(np.concatenate([[0.0], cum]))


class _Builder:
    def __init__(self, result):
        self.result = result
        self.prog = prog = result.program
        self.ast = prog.ast
        self.x = np.asarray(result.x, dtype=float)
        mat = prog.matrices()
        self.mat = mat
        self.s_terms = mat.B @ self.x + mat.term_const
        self.markers = list(self.ast.markers)
        self.alts = []
        self.alt_id = {}
        for name, i, alt in self.ast.alternatives():
            self.alt_id[name, i] = len(self.alts)
            self.alts.append((name, i, alt))
        self.states = []
        self.state_id = {}
        self.queue = []
        self.ops = {}                      # (kind, arg, j) -> (code, ref)
        self.seq = ([], [])
        self.ms = {k: [] for k in ("off", "len", "lam", "child", "koff", "kcdf")}
        self.cy = {k: [] for k in ("off", "len", "cum", "param", "child")}
        self.m1 = {k: [] for k in ("d", "off", "coff", "p", "q", "kcum", "cval", "calt")}
        self.tail_mass = {}
        self.op_arg = {}

    def value(self, name, j):
        key = (name, j)
        if key not in self.prog.vars.c:
            raise DegenerateBranch(f"no tuned value for {name} at depth {j}")
        return math.exp(self.x[self.prog.vars.c[key]])

    def state(self, name, j):
        key = (name, j)
        if key not in self.state_id:
            if key not in self.prog.vars.c:
                raise DegenerateBranch(f"depth {j} of {name} exceeds the truncation")
            self.state_id[key] = len(self.states)
            self.states.append(key)
            self.queue.append(key)
        return self.state_id[key]

    def term_probabilities(self, var):
        mat = self.mat
        i = int(np.searchsorted(mat.lhs, var))
        lo = mat.starts[i]
        hi = mat.starts[i + 1] if i + 1 < len(mat.starts) else len(self.s_terms)
        logs = self.s_terms[lo:hi] - self.x[var]
        if not np.all(np.isfinite(logs)):
            raise DegenerateBranch(f"non-finite branch weight for {self.prog.vars.names[var]}")
        w = np.exp(logs - logs.max())
        total = w.sum()
        if not total > 0:
            raise DegenerateBranch(f"zero class value for {self.prog.vars.names[var]}")
        return w / total

    def op(self, op: Op, j: int):
        key = (op.kind, op.arg, j)
        if key in self.ops:
            return self.ops[key]
        code = _KIND[op.kind]
        if code == SEQ:
            a = self.value(op.arg, j)
            if not a < 1.0:
                raise DegenerateBranch(f"Seq parameter {a} >= 1 for {op.arg}")
            ref = len(self.seq[0])
            self.seq[0].append(a)
            self.seq[1].append(self.state(op.arg, j))
        elif code == MSET:
            ref = self.mset(op.arg, j)
        elif code == CYCLE:
            ref = self.cycle(op.arg, j)
        else:
            ref = self.mset1(op.arg, j)
        self.ops[key] = (code, ref)
        self.op_arg[code, ref] = op.arg
        return code, ref

    def mset(self, arg, j):
        ms = self.ms
        ref = len(ms["off"])
        kmax = self.prog.truncation // j
        lam = [self.value(arg, i * j) / i for i in range(1, kmax + 1)]
        ms["off"].append(len(ms["lam"]))
        ms["len"].append(kmax)
        ms["lam"].extend(lam)
        ms["child"].extend(self.state(arg, i * j) for i in range(1, kmax + 1))
        suffix = np.concatenate([np.cumsum(lam[::-1])[::-1], [0.0]])
        kcdf = np.exp(-suffix)  # P(K <= k) for k = 0..kmax
        kcdf[-1] = 1.0
        ms["koff"].append(len(ms["kcdf"]))
        ms["kcdf"].extend(kcdf)
        self.tail_mass["MSet", arg, j] = lam[-1]
        return ref

    def cycle(self, arg, j):
        cy = self.cy
        ref = len(cy["off"])
        kmax = self.prog.truncation // j
        params, masses = [], []
        for k in range(1, kmax + 1):
            a = self.value(arg, k * j)
            if not a < 1.0:
                raise DegenerateBranch(f"log-series parameter {a} >= 1 for {arg}")
            params.append(a)
            masses.append(-euler_totient(k) / k * math.log1p(-a))
        masses = np.asarray(masses)
        cum = np.cumsum(masses / masses.sum())
        cum[-1] = 1.0
        cy["off"].append(len(cy["cum"]))
        cy["len"].append(kmax)
        cy["cum"].extend(cum)
        cy["param"].extend(params)
        cy["child"].extend(self.state(arg, k * j) for k in range(1, kmax + 1))
        self.tail_mass["Cycle", arg, j] = masses[-1] / masses.sum()
        return ref

    def mset1(self, arg, j):
        info = self.prog.mset1[arg, j]
        m1 = self.m1
        ref = len(m1["d"])
        s = np.exp(self.x[info["S"]])
        d = len(s)
        p, q = colored_mset1_dp(s)
        kk = np.diag(q)
        cum = np.cumsum(kk / kk.sum())
        cum[-1] = 1.0
        cval = [math.exp(f.evaluate(self.x)) for f in info["colors"]]
        if not all(c < 1.0 for c in cval):
            raise DegenerateBranch(f"colour weight >= 1 in MSet1({arg})")
        m1["d"].append(d)
        m1["off"].append(len(m1["p"]))
        m1["coff"].append(len(m1["cval"]))
        m1["p"].extend(p.ravel())
        m1["q"].extend(q.ravel())
        m1["kcum"].extend(cum)
        m1["cval"].extend(cval)
        m1["calt"].extend(self.alt_id[arg, i] for i in range(d))
        return ref

    def build(self) -> BranchTable:
        root = self.state(self.ast.root, 1)
        state_rows = {}
        while self.queue:
            name, j = self.queue.pop(0)
            var = self.prog.vars.c[name, j]
            probs = self.term_probabilities(var)
            rows = []
            for i, alt in enumerate(self.ast.classes[name].alternatives):
                items = []
                for f in alt.factors:
                    if isinstance(f, ClassRef):
                        items.append((CLASS, self.state(f.name, j)))
                    elif isinstance(f, Op):
                        items.append(self.op(f, j))
                rows.append((self.alt_id[name, i], probs[i], items))
            state_rows[self.state_id[name, j]] = rows
        n_states = len(self.states)
        st_start, st_len = np.zeros(n_states, np.int64), np.zeros(n_states, np.int64)
        sa_alt, sa_cum, sa_is, sa_il, it_kind, it_ref = [], [], [], [], [], []
        for s in range(n_states):
            rows = state_rows[s]
            st_start[s] = len(sa_alt)
            st_len[s] = len(rows)
            cum = np.cumsum([r[1] for r in rows])
            cum[-1] = 1.0
            for (a, _, items), c in zip(rows, cum):
                sa_alt.append(a)
                sa_cum.append(c)
                sa_is.append(len(it_kind))
                sa_il.append(len(items))
                for kind, ref in items:
                    it_kind.append(kind)
                    it_ref.append(ref)
        n_alts = len(self.alts)
        weights = np.array([alt.weight for _, _, alt in self.alts], dtype=np.int64)
        marks = np.zeros((n_alts, max(1, len(self.markers))), dtype=np.int64)
        for a, (_, _, alt) in enumerate(self.alts):
            if alt.marker is not None:
                marks[a, self.markers.index(alt.marker)] += alt.marker_exponent
            for f in alt.factors:
                if isinstance(f, MarkerRef):
                    marks[a, self.markers.index(f.name)] += 1
        i64 = lambda v: np.asarray(v, dtype=np.int64)  # noqa: E731
        f64 = lambda v: np.asarray(v, dtype=np.float64)  # noqa: E731
        ms, cy, m1 = self.ms, self.cy, self.m1
        kernel = KernelTables(
            st_start, st_len,
            i64(sa_alt), f64(sa_cum), i64(sa_is), i64(sa_il),
            i64(it_kind), i64(it_ref),
            weights, marks,
            f64(self.seq[0]), i64(self.seq[1]),
            i64(ms["off"]), i64(ms["len"]), f64(ms["lam"]), i64(ms["child"]),
            i64(ms["koff"]), f64(ms["kcdf"]),
            i64(cy["off"]), i64(cy["len"]), f64(cy["cum"]), f64(cy["param"]), i64(cy["child"]),
            i64(m1["d"]), i64(m1["off"]), i64(m1["coff"]), f64(m1["p"]), f64(m1["q"]),
            f64(m1["kcum"]), f64(m1["cval"]), i64(m1["calt"]),
        )
        return BranchTable(kernel, root, list(self.states), list(self.alts), list(self.markers),
                           dict(self.op_arg), self.result, dict(self.tail_mass))


def build_tables(result) -> BranchTable:
    """Compile branching tables from an optimal :class:`~bbtune.tuner.TuningResult`."""
    if result.status != "Optimal":
        raise DegenerateBranch(f"cannot sample from a {result.status} tuning result")
    if result.program.ast is None:
        raise SpecError("tuning result carries no specification")
    return _Builder(result).build()

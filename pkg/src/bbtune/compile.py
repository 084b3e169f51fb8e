"""Lowering of specifications to convex programs in log-exp coordinates.

Every class ``C`` at diagonal depth ``j`` (the value ``C(z^j, u^j)``) owns a
variable ``c = log C``. Size and marker weights become ``xi = log z`` and
``eta = log u``. Each variable gets exactly one constraint of one of two
shapes::

    lse:     c >= log sum_t mult_t * exp(form_t(x))
    expsum:  c >= affine(x) + sum_t mult_t * exp(form_t(x))

Both right-hand sides are convex. ``expsum`` only encodes the exponent of a
multiset, ``MSet(A)(z^j) = exp(sum_i A(z^(ij)) / i)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .grammar.series import euler_totient
from .grammar.spec import SIZE, ClassRef, MarkerRef, Op, SpecAst, SpecError

DEFAULT_BOUND = 40.0
CYCLE_TERMS = 64


@dataclass
class AffineForm:
    constant: float = 0.0
    coeffs: dict = field(default_factory=dict)

    def add(self, index: int, value: float) -> None:
        self.coeffs[index] = self.coeffs.get(index, 0.0) + value

    def __add__(self, other: "AffineForm") -> "AffineForm":
        out = AffineForm(self.constant + other.constant, dict(self.coeffs))
        for k, v in other.coeffs.items():
            out.add(k, v)
        return out

    def evaluate(self, x) -> float:
        return self.constant + sum(v * x[k] for k, v in self.coeffs.items())


@dataclass
class Term:
    mult: float
    form: AffineForm


@dataclass
class Constraint:
    lhs: int
    terms: list
    kind: str = "lse"
    affine: Optional[AffineForm] = None

    def rhs(self, x) -> float:
        """Right-hand side at ``x``, the quantity ``x[lhs]`` must dominate."""
        vals = [math.log(t.mult) + t.form.evaluate(x) for t in self.terms]
        if self.kind == "lse":
            top = max(vals)
            return top + math.log(sum(math.exp(v - top) for v in vals))
        return self.affine.evaluate(x) + sum(math.exp(v) for v in vals)


@dataclass
class VarIndex:
    names: list = field(default_factory=list)
    xi: dict = field(default_factory=dict)
    eta: dict = field(default_factory=dict)
    c: dict = field(default_factory=dict)

    def _new(self, label) -> int:
        self.names.append(label)
        return len(self.names) - 1

    def __len__(self):
        return len(self.names)

    @property
    def theta(self) -> list:
        """Indices of the weight variables, size first."""
        return list(self.xi.values()) + list(self.eta.values())


@dataclass
class ConvexProgram:
    vars: VarIndex
    constraints: list
    root: int
    size_var: int
    targets: dict
    truncation: int
    bound: float = DEFAULT_BOUND
    ast: Optional[SpecAst] = field(default=None, repr=False)
    ops: dict = field(default_factory=dict, repr=False)
    mset1: dict = field(default_factory=dict, repr=False)
    _matrices: object = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.vars)

    def ordinary_objective(self, nu: dict) -> np.ndarray:
        """Coefficients of ``c_root - nu . (xi, eta)``; ``nu`` keyed by atom/marker name."""
        q = np.zeros(self.n)
        q[self.root] = 1.0
        for name, value in nu.items():
            q[self._weight_index(name)] -= value
        return q

    def singular_objective(self, alpha: dict) -> np.ndarray:
        """Coefficients of ``-(xi + alpha . eta)`` (minimised)."""
        q = np.zeros(self.n)
        q[self.size_var] = -1.0
        for name, value in alpha.items():
            q[self._weight_index(name)] -= value
        return q

    def _weight_index(self, name: str) -> int:
        if name in self.vars.xi:
            return self.vars.xi[name]
        if name in self.vars.eta:
            return self.vars.eta[name]
        raise KeyError(f"unknown atom or marker {name!r}")

    def matrices(self) -> "ProgramMatrices":
        if self._matrices is None:
            self._matrices = ProgramMatrices.build(self)
        return self._matrices

    def to_json(self) -> dict:
        def form(f):
            return {"const": f.constant, "coeffs": {str(k): v for k, v in sorted(f.coeffs.items())}}

        return {
            "variables": [str(v) for v in self.vars.names],
            "constraints": [
                {
                    "lhs": con.lhs,
                    "kind": con.kind,
                    **({"affine": form(con.affine)} if con.affine is not None else {}),
                    "terms": [{"mult": t.mult, **form(t.form)} for t in con.terms],
                }
                for con in self.constraints
            ],
            "objective_ordinary": {"root": self.root, "nu": sorted(self.vars.theta)},
            "objective_singular": {"size": self.size_var, "alpha": self.targets},
            "J": self.truncation,
            "M": self.bound,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


@dataclass
class ProgramMatrices:
    """Flat sparse form of all constraints, terms grouped by constraint."""

    B: sp.csr_matrix        # terms x vars
    term_const: np.ndarray  # form constant + log(mult)
    term_con: np.ndarray    # owning constraint of each term
    starts: np.ndarray      # first term of each constraint
    is_lse: np.ndarray
    lhs: np.ndarray
    A0: sp.csr_matrix       # affine parts of expsum constraints
    a0: np.ndarray
    L: sp.csr_matrix        # constraints x terms, ones

    @classmethod
    def build(cls, prog: ConvexProgram) -> "ProgramMatrices":
        rows, cols, vals, const, owner, starts = [], [], [], [], [], []
        arow, acol, aval = [], [], []
        a0 = np.zeros(len(prog.constraints))
        t = 0
        for i, con in enumerate(prog.constraints):
            starts.append(t)
            for term in con.terms:
                for k, v in term.form.coeffs.items():
                    if v != 0.0:
                        rows.append(t)
                        cols.append(k)
                        vals.append(v)
                const.append(term.form.constant + math.log(term.mult))
                owner.append(i)
                t += 1
            if con.kind == "expsum":
                a0[i] = con.affine.constant
                for k, v in con.affine.coeffs.items():
                    arow.append(i)
                    acol.append(k)
                    aval.append(v)
        n, m = prog.n, len(prog.constraints)
        owner = np.asarray(owner, dtype=np.int64)
        return cls(
            B=sp.csr_matrix((vals, (rows, cols)), shape=(t, n)),
            term_const=np.asarray(const),
            term_con=owner,
            starts=np.asarray(starts, dtype=np.int64),
            is_lse=np.array([c.kind == "lse" for c in prog.constraints]),
            lhs=np.array([c.lhs for c in prog.constraints], dtype=np.int64),
            A0=sp.csr_matrix((aval, (arow, acol)), shape=(m, n)),
            a0=a0,
            L=sp.csr_matrix((np.ones(t), (owner, np.arange(t))), shape=(m, t)),
        )


class _Lowering:
    def __init__(self, ast: SpecAst, depth: int, cycle_terms: int):
        self.ast = ast
        self.depth = depth
        self.cycle_terms = cycle_terms
        self.vars = VarIndex()
        self.vars.xi[SIZE] = self.vars._new(SIZE)
        for name in ast.markers:
            self.vars.eta[name] = self.vars._new(name)
        self.constraints: dict = {}
        self.queue: list = []
        self.ops: dict = {}
        self.mset1: dict = {}

    def cvar(self, name: str, j: int) -> int:
        key = (name, j)
        if key not in self.vars.c:
            self.vars.c[key] = self.vars._new(key)
            if name in self.ast.classes:
                self.queue.append(key)
        return self.vars.c[key]

    def alt_form(self, alt, j: int) -> AffineForm:
        f = AffineForm()
        if alt.weight:
            f.add(self.vars.xi[SIZE], alt.weight * j)
        if alt.marker is not None:
            f.add(self.vars.eta[alt.marker], alt.marker_exponent * j)
        for factor in alt.factors:
            if isinstance(factor, ClassRef):
                f.add(self.cvar(factor.name, j), 1.0)
            elif isinstance(factor, MarkerRef):
                f.add(self.vars.eta[factor.name], j)
            else:
                f.add(self.op_var(factor, j), 1.0)
        return f

    def add(self, var: int, terms, kind="lse", affine=None):
        self.constraints[var] = Constraint(var, terms, kind, affine)

    def op_var(self, op: Op, j: int) -> int:
        key = (op.kind, op.arg, j)
        if key in self.ops:
            return self.ops[key]
        var = self.cvar(f"{op.kind}({op.arg})", j)
        self.ops[key] = var
        if op.kind == "Seq":
            a = self.cvar(op.arg, j)
            self.add(var, [Term(1.0, AffineForm()), Term(1.0, AffineForm(0.0, {a: 1.0, var: 1.0}))])
        elif op.kind == "MSet":
            terms = [Term(1.0 / i, AffineForm(0.0, {self.cvar(op.arg, i * j): 1.0}))
                     for i in range(1, self.depth // j + 1)]
            self.add(var, terms, kind="expsum", affine=AffineForm())
        elif op.kind == "Cycle":
            terms = []
            for m in range(1, self.depth // j + 1):
                a = self.cvar(op.arg, m * j)
                phi = euler_totient(m)
                for ell in range(1, self.cycle_terms + 1):
                    terms.append(Term(phi / (m * ell), AffineForm(0.0, {a: float(ell)})))
            self.add(var, terms)
        elif op.kind == "MSet1":
            self.lower_mset1(op.arg, j, var)
        else:
            raise SpecError(f"unknown operator {op.kind}")
        return var

    def lower_mset1(self, arg: str, j: int, var: int) -> None:
        cdef = self.ast.classes[arg]
        if not all(alt.is_atomic() for alt in cdef.alternatives):
            raise SpecError(f"MSet1 argument {arg!r} must be a union of atomic alternatives")
        colors = [self.alt_form(alt, j) for alt in cdef.alternatives]
        label = f"MSet1({arg})"
        s_vars = lower_colored_mset1(self, label, j, colors)
        d = len(colors)
        self.mset1[arg, j] = {"var": var, "S": s_vars["S"], "colors": colors}
        self.add(var, [Term(1.0, AffineForm(0.0, {s_vars["Q"][k, k]: 1.0})) for k in range(1, d + 1)])


def lower_colored_mset1(low: _Lowering, label: str, j: int, colors: list) -> dict:
    """Slack classes for ``MSet1(C_1 + ... + C_d)`` without expanding monomials.

    ``S_i = C_i + S_i C_i`` stands for ``Seq>=1(C_i)``; ``P[k, i]`` collects
    the ``k``-subsets whose smallest colour is ``i - k + 1`` and ``Q[k, i]``
    their suffix sums, so ``Q[k, k]`` is the ``k``-th elementary symmetric
    polynomial of the ``S_i``. Returns the variable maps ``S``, ``P``, ``Q``.
    """
    d = len(colors)
    S = {}
    for i, color in enumerate(colors, start=1):
        s = low.cvar(f"{label}.S{i}", j)
        low.add(s, [Term(1.0, color), Term(1.0, color + AffineForm(0.0, {s: 1.0}))])
        S[i] = s
    P, Q = {}, {}
    for k in range(1, d + 1):
        for i in range(d, k - 1, -1):
            if k == 1:
                P[k, i] = S[i]
            else:
                p = low.cvar(f"{label}.P{k},{i}", j)
                low.add(p, [Term(1.0, AffineForm(0.0, {S[i - k + 1]: 1.0, Q[k - 1, i]: 1.0}))])
                P[k, i] = p
            if i == d:
                Q[k, i] = P[k, i]
            else:
                q = low.cvar(f"{label}.Q{k},{i}", j)
                low.add(q, [Term(1.0, AffineForm(0.0, {P[k, i]: 1.0})),
                            Term(1.0, AffineForm(0.0, {Q[k, i + 1]: 1.0}))])
                Q[k, i] = q
    return {"S": [S[i] for i in range(1, d + 1)], "P": P, "Q": Q}


def lower(ast: SpecAst, J: int = 1, bound: float = DEFAULT_BOUND,
          cycle_terms: int = CYCLE_TERMS) -> ConvexProgram:
    """Lower a well-founded specification to a :class:`ConvexProgram`."""
    if J < 1:
        raise ValueError("truncation depth must be at least 1")
    low = _Lowering(ast, J, cycle_terms)
    root = low.cvar(ast.root, 1)
    while low.queue:
        name, j = low.queue.pop()
        var = low.vars.c[name, j]
        low.add(var, [Term(1.0, low.alt_form(alt, j)) for alt in ast.classes[name].alternatives])
    constraints = [low.constraints[v] for v in sorted(low.constraints)]
    if len(constraints) != len(low.vars.c):
        raise AssertionError("every class variable must own exactly one constraint")
    return ConvexProgram(
        vars=low.vars,
        constraints=constraints,
        root=root,
        size_var=low.vars.xi[SIZE],
        targets=ast.targets(),
        truncation=J,
        bound=bound,
        ast=ast,
        ops=low.ops,
        mset1=low.mset1,
    )

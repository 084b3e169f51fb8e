"""Direct evaluation of the generating functions of a specification.

Two evaluators live here, both reading the AST and nothing else:

* :func:`evaluate` computes numeric values ``C(z^j, u^j)`` by Kleene
  iteration from zero, with Pólya series truncated at combined depth ``J``.
* :func:`count_series` computes exact counting coefficients ``[z^n] C`` with
  markers set to one.

They serve as independent oracles for the convex lowering and the samplers.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from typing import Optional

from .spec import ClassRef, MarkerRef, Op, SpecAst, SpecError


@lru_cache(maxsize=None)
def euler_totient(m: int) -> int:
    if m < 1:
        raise ValueError("totient is defined for positive integers")
    result, n, p = m, m, 2
    while p * p <= n:
        if n % p == 0:
            while n % p == 0:
                n //= p
            result -= result // p
        p += 1
    if n > 1:
        result -= result // n
    return result


_HUGE = 1e200


def _alt_value(ast, alt, values, z, u, j, depth):
    v = z ** (alt.weight * j)
    if alt.marker is not None:
        v *= u.get(alt.marker, 1.0) ** (alt.marker_exponent * j)
    for f in alt.factors:
        if isinstance(f, ClassRef):
            v *= values[f.name, j]
        elif isinstance(f, MarkerRef):
            v *= u.get(f.name, 1.0) ** j
        else:
            v *= _op_value(ast, f, values, z, u, j, depth)
        if v == 0.0:
            return 0.0
    return v


def _op_value(ast, op: Op, values, z, u, j, depth):
    a = values[op.arg, j]
    if op.kind == "Seq":
        return math.inf if a >= 1.0 else 1.0 / (1.0 - a)
    if op.kind == "MSet":
        return math.exp(sum(values[op.arg, i * j] / i for i in range(1, depth // j + 1)))
    if op.kind == "MSet1":
        cdef = ast.classes[op.arg]
        if all(alt.is_atomic() for alt in cdef.alternatives):
            prod = 1.0
            for alt in cdef.alternatives:
                c = _alt_value(ast, alt, values, z, u, j, depth)
                if c >= 1.0:
                    return math.inf
                prod /= 1.0 - c
            return prod - 1.0
        return math.expm1(sum(values[op.arg, i * j] / i for i in range(1, depth // j + 1)))
    if op.kind == "Cycle":
        total = 0.0
        for m in range(1, depth // j + 1):
            am = values[op.arg, m * j]
            if am >= 1.0:
                return math.inf
            total -= euler_totient(m) / m * math.log1p(-am)
        return total
    raise SpecError(f"unknown operator {op.kind}")


def evaluate(ast: SpecAst, z: float, u: Optional[dict] = None, depth: int = 1,
             max_iter: int = 10_000, rtol: float = 1e-15):
    """Least solution of the truncated system at ``(z, u)``.

    Returns ``(values, converged)`` where ``values`` maps ``(class, j)`` for
    ``j = 1..depth`` to ``C(z^j, u^j)``. Divergence shows up as ``inf``
    entries or ``converged == False``.
    """
    u = u or {}
    values = {(name, j): 0.0 for name in ast.classes for j in range(1, depth + 1)}
    for _ in range(max_iter):
        new = {}
        for (name, j) in values:
            total = 0.0
            for alt in ast.classes[name].alternatives:
                total += _alt_value(ast, alt, values, z, u, j, depth)
            new[name, j] = total if total < _HUGE else math.inf
        delta = 0.0
        for key, v in new.items():
            old = values[key]
            if math.isinf(v):
                return new, False
            delta = max(delta, abs(v - old) / max(abs(v), 1e-300))
        values = new
        if delta <= rtol:
            return values, True
    return values, False


# -- exact counting ---------------------------------------------------------


def _mul(a, b, n):
    out = [0] * (n + 1)
    for i, x in enumerate(a):
        if x:
            for k in range(0, n + 1 - i):
                if b[k]:
                    out[i + k] += x * b[k]
    return out


def _subst_power(a, m, n):
    """Coefficients of A(z^m) truncated at n."""
    out = [0] * (n + 1)
    for i, x in enumerate(a):
        if i * m > n:
            break
        out[i * m] = x
    return out


def _log_series(a, n):
    """log 1/(1 - A) for A with zero constant term, as Fractions."""
    out = [Fraction(0)] * (n + 1)
    power = [Fraction(1)] + [Fraction(0)] * n
    for ell in range(1, n + 1):
        power = _mul(power, a, n)
        if not any(power):
            break
        for i in range(n + 1):
            out[i] += power[i] / ell
    return out


def _exp_series(a, n):
    """exp(A) for A with zero constant term."""
    out = [Fraction(0)] * (n + 1)
    out[0] = Fraction(1)
    # n * e_n = sum_k k a_k e_{n-k}
    for m in range(1, n + 1):
        out[m] = sum(k * a[k] * out[m - k] for k in range(1, m + 1)) / m
    return out


def _op_series(ast, op, series, n):
    a = series[op.arg]
    if a[0] != 0 and op.kind != "Seq":
        raise SpecError(f"{op.kind} argument {op.arg!r} contains the empty structure")
    if op.kind == "Seq":
        if a[0] != 0:
            raise SpecError(f"Seq argument {op.arg!r} contains the empty structure")
        out = [1] + [0] * n
        power = [1] + [0] * n
        for _ in range(n):
            power = _mul(power, a, n)
            if not any(power):
                break
            out = [x + y for x, y in zip(out, power)]
        return out
    if op.kind in ("MSet", "MSet1"):
        s = [Fraction(0)] * (n + 1)
        for m in range(1, n + 1):
            am = _subst_power(a, m, n)
            for i in range(n + 1):
                s[i] += Fraction(am[i], m)
        e = _exp_series(s, n)
        out = [int(x) for x in e]
        if op.kind == "MSet1":
            out[0] -= 1
        return out
    if op.kind == "Cycle":
        total = [Fraction(0)] * (n + 1)
        for m in range(1, n + 1):
            lg = _log_series(_subst_power(a, m, n), n)
            for i in range(n + 1):
                total[i] += Fraction(euler_totient(m), m) * lg[i]
        return [int(x) for x in total]
    raise SpecError(f"unknown operator {op.kind}")


def count_series(ast: SpecAst, n: int, name: Optional[str] = None,
                 max_rounds: Optional[int] = None) -> list[int]:
    """Number of structures of each size ``0..n`` (markers ignored)."""
    series = {c: [0] * (n + 1) for c in ast.classes}
    rounds = max_rounds or (n + 2) * (len(ast.classes) + 1)
    for _ in range(rounds):
        new = {}
        for cname, cdef in ast.classes.items():
            total = [0] * (n + 1)
            for alt in cdef.alternatives:
                term = [0] * (n + 1)
                if alt.weight <= n:
                    term[alt.weight] = 1
                for f in alt.factors:
                    if isinstance(f, ClassRef):
                        term = _mul(term, series[f.name], n)
                    elif isinstance(f, Op):
                        term = _mul(term, _op_series(ast, f, series, n), n)
                total = [x + y for x, y in zip(total, term)]
            new[cname] = total
        if new == series:
            return series[name or ast.root]
        series = new
    raise SpecError("counting sequence does not stabilise (weightless cycle)")

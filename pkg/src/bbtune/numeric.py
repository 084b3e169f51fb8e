"""Log-sum-exp evaluation shared by the tuner."""
from __future__ import annotations

import numpy as np

from ._jit import njit


def logsumexp_kernel(A, b, x):
    """Value, gradient and Hessian of ``x -> log sum_t exp(A[t] @ x + b[t])``.

    The exponents are shifted by their maximum before exponentiation, so only
    non-finite exponents can overflow; those raise ``FloatingPointError``
    naming the offending term.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    s = A @ np.asarray(x, dtype=float) + np.asarray(b, dtype=float)
    bad = np.flatnonzero(~np.isfinite(s))
    if bad.size:
        raise FloatingPointError(f"term {bad[0]} has non-finite exponent {s[bad[0]]}")
    top = s.max()
    e = np.exp(s - top)
    total = e.sum()
    p = e / total
    grad = p @ A
    hess = A.T @ (p[:, None] * A) - np.outer(grad, grad)
    return top + np.log(total), grad, hess


@njit
def grouped_lse(s, starts, is_lse):
    """Right-hand sides of all constraints from their term exponents ``s``.

    For a log-sum-exp group the returned weights are the softmax
    probabilities; for an exp-sum group they are the raw exponentials.
    """
    m = starts.shape[0]
    n_terms = s.shape[0]
    out = np.empty(m)
    w = np.empty(n_terms)
    for i in range(m):
        lo = starts[i]
        hi = starts[i + 1] if i + 1 < m else n_terms
        if is_lse[i]:
            top = -np.inf
            for t in range(lo, hi):
                if s[t] > top:
                    top = s[t]
            total = 0.0
            for t in range(lo, hi):
                w[t] = np.exp(s[t] - top)
                total += w[t]
            for t in range(lo, hi):
                w[t] /= total
            out[i] = top + np.log(total)
        else:
            total = 0.0
            for t in range(lo, hi):
                w[t] = np.exp(s[t])
                total += w[t]
            out[i] = total
    return out, w


def grouped_lse_numpy(s, starts, is_lse):
    """Vectorised equivalent of :func:`grouped_lse` (no per-term loop)."""
    owner = np.repeat(np.arange(len(starts)), np.diff(np.append(starts, len(s))))
    top = np.maximum.reduceat(s, starts)
    top = np.where(is_lse, top, 0.0)
    e = np.exp(s - top[owner])
    total = np.add.reduceat(e, starts)
    w = np.where(is_lse[owner], e / total[owner], e)
    out = np.where(is_lse, top + np.log(total), total)
    return out, w


def constraint_rhs(s, starts, is_lse):
    """Dispatch to the compiled kernel, or the numpy path when JIT is off."""
    from ._jit import jit_enabled

    if jit_enabled():
        return grouped_lse(s, starts, is_lse)
    return grouped_lse_numpy(s, starts, is_lse)

"""Random variates drawn by inversion from a single uniform stream.

Every primitive consumes only ``gen.random()``, so a ``numpy.random.Generator``
yields the same variates whether the code runs compiled or interpreted.
"""
from __future__ import annotations

import math

import numpy as np

from .._jit import njit

POISSON_INVERSION_LIMIT = 30.0


@njit
def open_uniform(gen):
    """Uniform on (0, 1]."""
    return 1.0 - gen.random()


@njit
def bernoulli(gen, p):
    return gen.random() < p


@njit
def categorical(gen, cumulative):
    """Index drawn from a cumulative probability vector ending at 1."""
    u = gen.random()
    last = cumulative.shape[0] - 1
    for i in range(last):
        if u < cumulative[i]:
            return i
    return last


@njit
def geometric(gen, a):
    """``P(l) = (1 - a) a^l`` for ``l >= 0``."""
    if a <= 0.0:
        return 0
    return int(math.floor(math.log(open_uniform(gen)) / math.log(a)))


@njit
def _poisson_ptrs(gen, lam):
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = gen.random() - 0.5
        v = gen.random()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return int(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(inv_alpha) - math.log(a / (us * us) + b)
                <= -lam + k * loglam - math.lgamma(k + 1.0)):
            return int(k)


@njit
def _poisson_inversion(u, lam, k, p, total):
    while u > total and p > 0.0:
        k += 1
        p *= lam / k
        total += p
    return k


@njit
def poisson(gen, lam):
    if lam <= 0.0:
        return 0
    if lam >= POISSON_INVERSION_LIMIT:
        return _poisson_ptrs(gen, lam)
    p = math.exp(-lam)
    return _poisson_inversion(gen.random(), lam, 0, p, p)


@njit
def zero_truncated_poisson(gen, lam):
    """Poisson conditioned on being positive."""
    if lam >= POISSON_INVERSION_LIMIT:
        while True:
            k = _poisson_ptrs(gen, lam)
            if k > 0:
                return k
    p0 = math.exp(-lam)
    # P(K = 1 | K > 0) without cancellation for small lam
    p1 = lam * p0 / -math.expm1(-lam)
    u = open_uniform(gen)
    return _poisson_inversion(u, lam, 1, p1, p1)


@njit
def log_series(gen, a):
    """``P(l) = -a^l / (l log(1 - a))`` for ``l >= 1``."""
    u = open_uniform(gen)
    p = -a / math.log1p(-a)
    total = p
    k = 1
    while u > total and p > 0.0:
        p *= a * k / (k + 1.0)
        k += 1
        total += p
    return k


GEOMETRIC, POISSON, ZT_POISSON, LOG_SERIES = 0, 1, 2, 3


@njit
def draw_many(gen, kind, param, n):
    """``n`` integer variates of one family; ``param`` as in the single draws."""
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        if kind == GEOMETRIC:
            out[i] = geometric(gen, param)
        elif kind == POISSON:
            out[i] = poisson(gen, param)
        elif kind == ZT_POISSON:
            out[i] = zero_truncated_poisson(gen, param)
        else:
            out[i] = log_series(gen, param)
    return out


class RandomSource:
    """Seedable stream exposing the primitives used by the samplers."""

    def __init__(self, seed=None):
        self.seed = seed
        self.gen = np.random.Generator(np.random.PCG64(seed))

    def uniform(self) -> float:
        return self.gen.random()

    def bernoulli(self, p: float) -> bool:
        return bool(bernoulli(self.gen, p))

    def categorical(self, weights) -> int:
        w = np.asarray(weights, dtype=float)
        cum = np.cumsum(w / w.sum())
        cum[-1] = 1.0
        return int(categorical(self.gen, cum))

    def geometric(self, q: float) -> int:
        """Failures before the first success, ``P(l) = (1 - q)^l q``."""
        return int(geometric(self.gen, 1.0 - q))

    def poisson(self, lam: float) -> int:
        return int(poisson(self.gen, lam))

    def zero_truncated_poisson(self, lam: float) -> int:
        return int(zero_truncated_poisson(self.gen, lam))

    def log_series(self, a: float) -> int:
        return int(log_series(self.gen, a))

    def many(self, kind: int, param: float, n: int) -> np.ndarray:
        return draw_many(self.gen, kind, float(param), int(n))

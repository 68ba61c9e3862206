"""Independent reference arithmetic: truncated tensor series as {word: Fraction} dicts.

Nothing here touches the numpy kernels, so agreement with the package is a
genuine two-route check.
"""

from __future__ import annotations

import math
from fractions import Fraction

from sigcum import TensorSeries


def to_dict(x: TensorSeries) -> dict:
    return {w: Fraction(c) for w, c in x.items() if c != 0}


def from_dict(d: dict, dim: int, level: int) -> TensorSeries:
    return TensorSeries.from_dict(dim, level, d)


def add(a: dict, b: dict, scale=1) -> dict:
    out = dict(a)
    for w, c in b.items():
        out[w] = out.get(w, 0) + scale * c
    return {w: c for w, c in out.items() if c != 0}


def mul(a: dict, b: dict, level: int) -> dict:
    out: dict = {}
    for u, cu in a.items():
        for v, cv in b.items():
            if len(u) + len(v) <= level:
                out[u + v] = out.get(u + v, 0) + cu * cv
    return {w: c for w, c in out.items() if c != 0}


def scale(a: dict, s) -> dict:
    return {w: c * s for w, c in a.items() if c * s != 0}


def exp(x: dict, level: int) -> dict:
    out = {(): Fraction(1)}
    power = {(): Fraction(1)}
    for k in range(1, level + 1):
        power = mul(power, x, level)
        out = add(out, scale(power, Fraction(1, math.factorial(k))))
    return out


def log(s: dict, level: int) -> dict:
    y = add(s, {(): Fraction(1)}, -1)
    out: dict = {}
    power = {(): Fraction(1)}
    for k in range(1, level + 1):
        power = mul(power, y, level)
        out = add(out, scale(power, Fraction((-1) ** (k + 1), k)))
    return out


def bracket(a: dict, b: dict, level: int) -> dict:
    return add(mul(a, b, level), mul(b, a, level), -1)


def letter(i: int) -> dict:
    return {(i,): Fraction(1)}


def bernoulli_minus(n: int) -> Fraction:
    """B_n with B_1 = -1/2 from sum_{j<=k} C(k+1, j) B_j = 0."""
    b = [Fraction(1)]
    for k in range(1, n + 1):
        b.append(-sum(math.comb(k + 1, j) * b[j] for j in range(k)) / (k + 1))
    return b[n]

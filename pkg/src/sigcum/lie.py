"""Lie-theoretic tools inside T^N: ad-series operators, BCH, Lyndon basis, Dynkin test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .algebra import (
    OuterElement,
    TensorSeries,
    UsageError,
    ad_pow,
    apply_outer,
    bracket,
    exp_series,
    log_series,
)


@lru_cache(maxsize=None)
def bernoulli(k: int) -> Fraction:
    """Bernoulli number B_k with the convention B_1 = -1/2."""
    if k < 0:
        raise UsageError("bernoulli index must be nonnegative")
    if k == 0:
        return Fraction(1)
    # sum_{j=0..k} C(k+1, j) B_j = 0
    acc = sum(math.comb(k + 1, j) * bernoulli(j) for j in range(k))
    return -acc / (k + 1)


def _check_T0(*xs: TensorSeries) -> None:
    for x in xs:
        if x.scalar_part != 0:
            raise UsageError("operand must lie in T_0")
    for x in xs[1:]:
        xs[0]._check(x)


@dataclass(frozen=True)
class AdSeries:
    """Power series sum_k a_k (ad x)^k; only the first N coefficients ever matter."""

    coefficients: tuple[Fraction, ...]

    @classmethod
    def from_function(cls, coeff, terms: int) -> AdSeries:
        return cls(tuple(Fraction(coeff(k)) for k in range(terms)))

    def apply(self, x: TensorSeries, v: TensorSeries) -> TensorSeries:
        _check_T0(x, v)
        out = TensorSeries.zero(v.dim, v.level, v.scalar)
        term = v
        for k in range(min(len(self.coefficients), v.level)):
            if term.is_zero():
                break
            a = self.coefficients[k]
            if a != 0:
                out = out + term * (a if v.exact else float(a))
            term = bracket(x, term)
        return out


def g_series(level: int) -> AdSeries:
    return AdSeries.from_function(lambda k: Fraction(1, math.factorial(k + 1)), max(level, 1))


def h_series(level: int) -> AdSeries:
    return AdSeries.from_function(lambda k: bernoulli(k) / math.factorial(k), max(level, 1))


def apply_G(x: TensorSeries, v: TensorSeries) -> TensorSeries:
    """sum_k (ad x)^k v / (k+1)!"""
    return g_series(v.level).apply(x, v)


def apply_H(x: TensorSeries, v: TensorSeries) -> TensorSeries:
    """sum_k B_k/k! (ad x)^k v, the inverse of apply_G(x, .)."""
    return h_series(v.level).apply(x, v)


def q_coefficient(n: int, m: int) -> Fraction:
    return Fraction(2, math.factorial(n + 1) * math.factorial(m) * (n + m + 2))


def apply_Q(x: TensorSeries, u: OuterElement) -> TensorSeries:
    """sum_{n,m} 2/((n+1)! m! (n+m+2)) (ad x)^n (.) (ad x)^m applied to u."""
    if not u.terms:
        return TensorSeries.zero(x.dim, x.level, x.scalar)
    _check_T0(x, *[t for pair in u.terms for t in pair])
    out = TensorSeries.zero(x.dim, x.level, x.scalar)
    for n in range(x.level):
        for m in range(x.level - n):
            c = q_coefficient(n, m)
            term = apply_outer(lambda a, n=n: ad_pow(x, n, a), lambda b, m=m: ad_pow(x, m, b), u, like=x)
            out = out + term * (c if x.exact else float(c))
    return out


# ---------------------------------------------------------------------------
# BCH


def bch_exact(x: TensorSeries, y: TensorSeries) -> TensorSeries:
    _check_T0(x, y)
    return log_series(exp_series(x) * exp_series(y))


# A "t-polynomial" is a list of series, entry k being the coefficient of t^k.
TPoly = list[TensorSeries]


def _tpoly_add(p: TPoly, q: TPoly) -> TPoly:
    if len(p) < len(q):
        p, q = q, p
    return [a + b for a, b in zip(p, q)] + p[len(q):]


def _exp_ad_t(x: TensorSeries, p: TPoly) -> TPoly:
    """exp(ad t x) applied to a t-polynomial."""
    out: TPoly = list(p)
    for k in range(1, x.level):
        fk = Fraction(1, math.factorial(k))
        shifted: TPoly = [TensorSeries.zero(x.dim, x.level, x.scalar)] * k
        shifted += [ad_pow(x, k, c) * fk for c in p]
        out = _tpoly_add(out, shifted)
    return out


def _exp_ad(y: TensorSeries, p: TPoly) -> TPoly:
    """exp(ad y) applied coefficientwise."""
    res = []
    for c in p:
        acc = c
        for k in range(1, y.level):
            acc = acc + ad_pow(y, k, c) * Fraction(1, math.factorial(k))
        res.append(acc)
    return res


def bch_psi(x: TensorSeries, y: TensorSeries) -> TensorSeries:
    """y + int_0^1 Psi(exp(ad t x) exp(ad y))(x) dt with Psi(z) = log(z)/(z - 1).

    The integrand is a polynomial in t once grading truncates every series,
    so the integral is evaluated exactly.
    """
    _check_T0(x, y)
    if not x.exact:
        raise UsageError("bch_psi requires rational scalars")

    def z_minus_id(p: TPoly) -> TPoly:
        zp = _exp_ad_t(x, _exp_ad(y, p))
        return _tpoly_add(zp, [-c for c in p])

    total: TPoly = [x]
    power: TPoly = [x]
    for n in range(1, x.level):
        power = z_minus_id(power)
        total = _tpoly_add(total, [c * Fraction((-1) ** n, n + 1) for c in power])
    integral = TensorSeries.zero(x.dim, x.level, x.scalar)
    for k, c in enumerate(total):
        integral = integral + c * Fraction(1, k + 1)
    return y + integral


def bch_log_signature(increments: Sequence[TensorSeries]) -> TensorSeries:
    """log of the product of exp(increment) via the backward BCH recursion."""
    if not increments:
        raise UsageError("need at least one increment")
    omega = TensorSeries.zero(increments[0].dim, increments[0].level, increments[0].scalar)
    for inc in reversed(increments):
        omega = bch_psi(inc, omega)
    return omega


# ---------------------------------------------------------------------------
# Lyndon basis and Dynkin test


def lyndon_words(dim: int, max_len: int) -> list[tuple[int, ...]]:
    """Lyndon words over {1..dim} of length <= max_len in lexicographic order (Duval)."""
    out = []
    w = [0]
    while w:
        w[-1] += 1
        out.append(tuple(w))
        m = len(w)
        while len(w) < max_len:
            w.append(w[len(w) - m])
        while w and w[-1] == dim:
            w.pop()
    return out


def _is_lyndon(w: tuple[int, ...]) -> bool:
    return all(w < w[i:] for i in range(1, len(w)))


def standard_factorization(w: tuple[int, ...]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split a Lyndon word of length >= 2 as u.v with v its longest proper Lyndon suffix."""
    for i in range(1, len(w)):
        if _is_lyndon(w[i:]):
            return w[:i], w[i:]
    raise UsageError(f"{w} has no proper Lyndon suffix")


def lyndon_bracket(w: tuple[int, ...], dim: int, level: int, scalar: str = "rational") -> TensorSeries:
    if len(w) == 1:
        return TensorSeries.letter(w[0], dim, level, scalar)
    u, v = standard_factorization(w)
    return bracket(lyndon_bracket(u, dim, level, scalar), lyndon_bracket(v, dim, level, scalar))


def bracket_string(w: tuple[int, ...]) -> str:
    if len(w) == 1:
        return str(w[0])
    u, v = standard_factorization(w)
    return f"[{bracket_string(u)},{bracket_string(v)}]"


@dataclass(frozen=True)
class LyndonBasisElement:
    word: tuple[int, ...]
    bracketing: TensorSeries


def lyndon_basis(dim: int, level: int, scalar: str = "rational") -> list[LyndonBasisElement]:
    if dim < 1 or level < 1:
        raise UsageError("need dim >= 1 and level >= 1")
    words = sorted(lyndon_words(dim, level), key=lambda w: (len(w), w))
    return [LyndonBasisElement(w, lyndon_bracket(w, dim, level, scalar)) for w in words]


def witt_dimension(dim: int, n: int) -> int:
    """Number of Lyndon words of length n over dim letters."""
    def mobius(k: int) -> int:
        res, p = 1, 2
        while p * p <= k:
            if k % p == 0:
                k //= p
                if k % p == 0:
                    return 0
                res = -res
            p += 1
        return -res if k > 1 else res

    return sum(mobius(n // k) * dim ** k for k in range(1, n + 1) if n % k == 0) // n


def _dynkin_level(c: np.ndarray, dim: int, n: int) -> np.ndarray:
    """Left-nested bracketing map on a degree-n coefficient array."""
    if n == 1:
        return c
    cols = c.reshape(-1, dim)
    out = np.zeros_like(c)
    for i in range(dim):
        v = _dynkin_level(np.ascontiguousarray(cols[:, i]), dim, n - 1)
        if not np.any(v != 0):
            continue
        e = np.zeros(dim, dtype=c.dtype)
        if c.dtype == object:
            e[:] = Fraction(0)
            e[i] = Fraction(1)
        else:
            e[i] = 1.0
        out = out + np.outer(v, e).ravel() - np.outer(e, v).ravel()
    return out


def dynkin_map(x: TensorSeries) -> TensorSeries:
    levels = [x.levels[0] * 0] + [_dynkin_level(x.levels[n], x.dim, n) for n in range(1, x.level + 1)]
    return TensorSeries(x.dim, x.level, levels, x.scalar)


def dynkin_is_lie(x: TensorSeries, atol: float = 0.0) -> dict[int, bool]:
    """Per degree n >= 1: whether D(x^(n)) = n x^(n)."""
    if x.scalar_part != 0:
        raise UsageError("dynkin_is_lie needs an element of T_0")
    result = {}
    for n in range(1, x.level + 1):
        diff = _dynkin_level(x.levels[n], x.dim, n) - n * x.levels[n]
        if x.exact:
            result[n] = not np.any(diff != 0)
        else:
            result[n] = bool(np.max(np.abs(diff), initial=0.0) <= atol)
    return result


__all__ = [
    "AdSeries", "LyndonBasisElement", "apply_G", "apply_H", "apply_Q", "bch_exact", "bch_log_signature",
    "bch_psi", "bernoulli", "bracket_string", "dynkin_is_lie", "dynkin_map", "g_series", "h_series",
    "lyndon_basis", "lyndon_bracket", "lyndon_words", "q_coefficient", "standard_factorization",
    "witt_dimension",
]

"""Truncated tensor algebra T^N(R^d).

A :class:`TensorSeries` stores one dense coefficient array per degree, the
degree-k array holding the d**k coefficients of the words of length k in
big-endian order (the first letter is the most significant base-d digit).
Coefficients are either exact rationals (``gmpy2.mpq`` in numpy object arrays;
they compare and hash equal to ``fractions.Fraction``) or float64. A series
carries exactly one kind and the two are never mixed implicitly.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from numbers import Integral, Rational, Real
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import gmpy2
import numpy as np

RATIONAL = "rational"
FLOAT = "float64"

Word = tuple[int, ...]

MPQ = type(gmpy2.mpq(0))


class UsageError(ValueError):
    """Operands violate an operation's preconditions."""


# ---------------------------------------------------------------------------
# words


def word_index(word: Sequence[int], dim: int) -> int:
    idx = 0
    for letter in word:
        if not 1 <= letter <= dim:
            raise UsageError(f"letter {letter} outside alphabet 1..{dim}")
        idx = idx * dim + (letter - 1)
    return idx


def index_word(index: int, length: int, dim: int) -> Word:
    letters = []
    for _ in range(length):
        index, r = divmod(index, dim)
        letters.append(r + 1)
    return tuple(reversed(letters))


def words(dim: int, length: int) -> Iterator[Word]:
    """Words of a given length in dense-index order."""
    return itertools.product(range(1, dim + 1), repeat=length)


def compositions(n: int) -> Iterator[tuple[int, ...]]:
    """Compositions of n into positive parts, in lexicographic order."""
    if n == 0:
        yield ()
        return
    for first in range(1, n + 1):
        for rest in compositions(n - first):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# level kernels; they act on the trailing axis so callers may batch


def _zeros(shape, exact: bool) -> np.ndarray:
    if exact:
        out = np.empty(shape, dtype=object)
        out.fill(gmpy2.mpq(0))
        return out
    return np.zeros(shape, dtype=np.float64)


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    prod = a[..., :, None] * b[..., None, :]
    return prod.reshape(prod.shape[:-2] + (-1,))


def mul_levels(a: Sequence[np.ndarray], b: Sequence[np.ndarray], level: int,
               exact: bool, lo_a: int = 0, lo_b: int = 0) -> list[np.ndarray]:
    """Truncated concatenation product of level lists.

    ``lo_a``/``lo_b`` are lower bounds on the lowest nonzero degree of each
    factor, used to skip products that are known to vanish.
    """
    batch = a[0].shape[:-1]
    dim = a[1].shape[-1] if level >= 1 else 1
    out = []
    for n in range(level + 1):
        acc = None
        for ell in range(lo_a, n - lo_b + 1):
            term = _outer(a[ell], b[n - ell])
            acc = term if acc is None else acc + term
        if acc is None:
            acc = _zeros(batch + (dim ** n,), exact)
        out.append(acc)
    return out


# ---------------------------------------------------------------------------
# scalars


def _as_rational(value):
    if type(value) is MPQ:
        return value
    if isinstance(value, Fraction):
        return gmpy2.mpq(value.numerator, value.denominator)
    if isinstance(value, (Integral, Rational, np.integer)) and not isinstance(value, bool):
        return gmpy2.mpq(int(value.numerator), int(value.denominator)) if isinstance(value, Rational) \
            else gmpy2.mpq(int(value))
    raise UsageError(f"rational series need rational scalars, got {type(value).__name__}")


def _as_float(value) -> float:
    if isinstance(value, (Real, np.floating, np.integer)):
        return float(value)
    raise UsageError(f"expected a real scalar, got {type(value).__name__}")


def parse_rational(text) -> Fraction:
    """Parse "num/den", an integer, or a decimal string into a Fraction."""
    if isinstance(text, (int, Fraction)):
        return Fraction(text)
    if isinstance(text, str):
        return Fraction(text.strip())
    raise UsageError(f"cannot read {text!r} as a rational")


# ---------------------------------------------------------------------------
# series


class TensorSeries:
    """Element of the truncated tensor algebra T^N(R^d).

    Instances are immutable. ``a * b`` is the truncated concatenation product
    when both operands are series and scalar multiplication otherwise.
    """

    __slots__ = ("dim", "level", "scalar", "_levels")

    def __init__(self, dim: int, level: int, levels: Sequence, scalar: str = RATIONAL):
        if dim < 1 or level < 0:
            raise UsageError("need dim >= 1 and level >= 0")
        if scalar not in (RATIONAL, FLOAT):
            raise UsageError(f"unknown scalar kind {scalar!r}")
        if len(levels) != level + 1:
            raise UsageError(f"expected {level + 1} level arrays, got {len(levels)}")
        exact = scalar == RATIONAL
        arrays = []
        for k, arr in enumerate(levels):
            if exact:
                arr = np.asarray(arr, dtype=object)
                if arr.size and not all(type(v) is MPQ for v in arr.flat):
                    arr = np.array([_as_rational(v) for v in arr.flat], dtype=object).reshape(arr.shape)
            else:
                arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != (dim ** k,):
                raise UsageError(f"degree {k} needs {dim ** k} coefficients, got shape {arr.shape}")
            arr.flags.writeable = False
            arrays.append(arr)
        self.dim = dim
        self.level = level
        self.scalar = scalar
        self._levels = tuple(arrays)

    # -- constructors -----------------------------------------------------

    @classmethod
    def _wrap(cls, dim: int, level: int, levels: Sequence[np.ndarray], scalar: str) -> TensorSeries:
        # Trusted fast path for arrays produced by the kernels.
        obj = cls.__new__(cls)
        for arr in levels:
            arr.flags.writeable = False
        obj.dim, obj.level, obj.scalar, obj._levels = dim, level, scalar, tuple(levels)
        return obj

    @classmethod
    def zero(cls, dim: int, level: int, scalar: str = RATIONAL) -> TensorSeries:
        exact = scalar == RATIONAL
        return cls._wrap(dim, level, [_zeros((dim ** k,), exact) for k in range(level + 1)], scalar)

    @classmethod
    def one(cls, dim: int, level: int, scalar: str = RATIONAL) -> TensorSeries:
        return cls.from_dict(dim, level, {(): 1}, scalar)

    @classmethod
    def letter(cls, i: int, dim: int, level: int, scalar: str = RATIONAL) -> TensorSeries:
        return cls.from_dict(dim, level, {(i,): 1}, scalar)

    @classmethod
    def from_dict(cls, dim: int, level: int, coeffs: Mapping[Sequence[int], object],
                  scalar: str = RATIONAL) -> TensorSeries:
        """Build from ``{word: coefficient}``; words longer than ``level`` are dropped."""
        exact = scalar == RATIONAL
        levels = [_zeros((dim ** k,), exact) for k in range(level + 1)]
        conv = _as_rational if exact else _as_float
        for w, c in coeffs.items():
            w = tuple(w)
            if len(w) > level:
                continue
            levels[len(w)][word_index(w, dim)] += conv(c)
        return cls._wrap(dim, level, levels, scalar)

    @classmethod
    def from_vector(cls, vec: Sequence, level: int, scalar: str = RATIONAL) -> TensorSeries:
        """Embed a point of R^d as a degree-1 element."""
        return cls.from_dict(len(vec), level, {(i + 1,): v for i, v in enumerate(vec)}, scalar)

    # -- access -----------------------------------------------------------

    @property
    def levels(self) -> tuple[np.ndarray, ...]:
        return self._levels

    @property
    def exact(self) -> bool:
        return self.scalar == RATIONAL

    def __getitem__(self, word) -> object:
        word = tuple(word) if not isinstance(word, int) else (word,)
        if len(word) > self.level:
            return gmpy2.mpq(0) if self.exact else 0.0
        return self._levels[len(word)][word_index(word, self.dim)]

    def coeff(self, word: Sequence[int]):
        return self[tuple(word)]

    @property
    def scalar_part(self):
        return self._levels[0][0]

    def items(self) -> Iterator[tuple[Word, object]]:
        """Nonzero coefficients, sorted by (length, dense index)."""
        for k, arr in enumerate(self._levels):
            for idx in np.flatnonzero(arr != 0):
                yield index_word(int(idx), k, self.dim), arr[idx]

    def to_dict(self) -> dict[Word, object]:
        return dict(self.items())

    def component(self, k: int) -> TensorSeries:
        """The homogeneous degree-k part, as a series of the same shape."""
        levels = [arr if j == k else _zeros(arr.shape, self.exact) for j, arr in enumerate(self._levels)]
        return TensorSeries._wrap(self.dim, self.level, levels, self.scalar)

    def min_degree(self) -> int:
        """Lowest degree with a nonzero coefficient (level + 1 for zero)."""
        for k, arr in enumerate(self._levels):
            if np.any(arr != 0):
                return k
        return self.level + 1

    def truncate(self, level: int) -> TensorSeries:
        """Projection to T^level; with level > self.level, pads with zeros."""
        if level <= self.level:
            return TensorSeries._wrap(self.dim, level, list(self._levels[: level + 1]), self.scalar)
        extra = [_zeros((self.dim ** k,), self.exact) for k in range(self.level + 1, level + 1)]
        return TensorSeries._wrap(self.dim, level, list(self._levels) + extra, self.scalar)

    def to_float(self) -> TensorSeries:
        if not self.exact:
            return self
        return TensorSeries._wrap(self.dim, self.level,
                                  [np.array([float(v) for v in arr], dtype=np.float64) for arr in self._levels],
                                  FLOAT)

    def to_rational(self) -> TensorSeries:
        """Exact conversion of float coefficients (every float is a dyadic rational)."""
        if self.exact:
            return self
        return TensorSeries(self.dim, self.level,
                            [np.array([gmpy2.mpq(float(v)) for v in arr], dtype=object) for arr in self._levels],
                            RATIONAL)

    def flat(self) -> np.ndarray:
        return np.concatenate(self._levels)

    def is_zero(self) -> bool:
        return all(not np.any(arr != 0) for arr in self._levels)

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other: TensorSeries) -> None:
        if not isinstance(other, TensorSeries):
            raise UsageError(f"expected TensorSeries, got {type(other).__name__}")
        if (self.dim, self.level, self.scalar) != (other.dim, other.level, other.scalar):
            raise UsageError(
                f"incompatible series: (d={self.dim}, N={self.level}, {self.scalar}) vs "
                f"(d={other.dim}, N={other.level}, {other.scalar})")

    def _scalar(self, c):
        return _as_rational(c) if self.exact else _as_float(c)

    def __add__(self, other):
        if isinstance(other, TensorSeries):
            self._check(other)
            return TensorSeries._wrap(self.dim, self.level, [a + b for a, b in zip(self._levels, other._levels)],
                                      self.scalar)
        return self + TensorSeries.one(self.dim, self.level, self.scalar) * other

    __radd__ = __add__

    def __neg__(self):
        return TensorSeries._wrap(self.dim, self.level, [-a for a in self._levels], self.scalar)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, TensorSeries):
            return concat_mul(self, other)
        c = self._scalar(other)
        return TensorSeries._wrap(self.dim, self.level, [a * c for a in self._levels], self.scalar)

    def __rmul__(self, other):
        if isinstance(other, TensorSeries):
            return concat_mul(other, self)
        return self * other

    def __truediv__(self, other):
        c = self._scalar(other)
        return TensorSeries._wrap(self.dim, self.level, [a / c for a in self._levels], self.scalar)

    def __eq__(self, other):
        if not isinstance(other, TensorSeries):
            return NotImplemented
        if (self.dim, self.level, self.scalar) != (other.dim, other.level, other.scalar):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self._levels, other._levels))

    __hash__ = None

    def __repr__(self):
        terms = []
        for w, c in self.items():
            name = "1" if not w else "e" + "".join(map(str, w)) if self.dim < 10 else "e" + str(list(w))
            terms.append(f"{c}*{name}")
        body = " + ".join(terms) if terms else "0"
        return f"TensorSeries(d={self.dim}, N={self.level}, {self.scalar}: {body})"


# ---------------------------------------------------------------------------
# operations


def concat_mul(a: TensorSeries, b: TensorSeries) -> TensorSeries:
    a._check(b)
    levels = mul_levels(a.levels, b.levels, a.level, a.exact, a.min_degree(), b.min_degree())
    return TensorSeries._wrap(a.dim, a.level, levels, a.scalar)


def _require_T0(x: TensorSeries, what: str) -> None:
    if x.scalar_part != 0:
        raise UsageError(f"{what} needs an element of T_0 (scalar part {x.scalar_part})")


def _require_T1(s: TensorSeries, what: str) -> None:
    if s.scalar_part != 1:
        raise UsageError(f"{what} needs an element of T_1 (scalar part {s.scalar_part})")


def _horner(y: TensorSeries, coeffs: Sequence[Fraction]) -> TensorSeries:
    """Sum_k coeffs[k] * y^k for y in T_0, truncated at y.level."""
    result = TensorSeries.zero(y.dim, y.level, y.scalar)
    one = TensorSeries.one(y.dim, y.level, y.scalar)
    for c in reversed(coeffs):
        result = one * c + y * result if not result.is_zero() else one * c
    return result


def exp_series(x: TensorSeries) -> TensorSeries:
    _require_T0(x, "exp")
    return _horner(x, [Fraction(1, math.factorial(k)) for k in range(x.level + 1)])


def log_series(s: TensorSeries) -> TensorSeries:
    _require_T1(s, "log")
    y = s - 1
    coeffs = [Fraction(0)] + [Fraction((-1) ** (k + 1), k) for k in range(1, s.level + 1)]
    return _horner(y, coeffs)


def bracket(x: TensorSeries, y: TensorSeries) -> TensorSeries:
    return concat_mul(x, y) - concat_mul(y, x)


def ad_pow(y: TensorSeries, k: int, x: TensorSeries) -> TensorSeries:
    if k < 0:
        raise UsageError("ad power must be nonnegative")
    y._check(x)
    out = x
    for _ in range(k):
        if out.is_zero():
            break
        out = bracket(y, out)
    return out


def group_inverse(s: TensorSeries) -> TensorSeries:
    _require_T1(s, "group_inverse")
    return _horner(1 - s, [Fraction(1)] * (s.level + 1))


def dilate(x: TensorSeries, lam) -> TensorSeries:
    lam = x._scalar(lam)
    return TensorSeries._wrap(x.dim, x.level, [arr * lam ** k for k, arr in enumerate(x.levels)], x.scalar)


def norm_max(x: TensorSeries) -> float:
    x = x.to_float()
    return max(float(np.linalg.norm(arr)) for arr in x.levels)


def level_norms(x: TensorSeries) -> list[float]:
    """Euclidean norm of each degree's coefficient array."""
    return [float(np.linalg.norm(arr)) for arr in x.to_float().levels]


class OuterElement:
    """Finite sum of outer tensors x_i (x) y_i of series."""

    __slots__ = ("terms",)

    def __init__(self, terms: Iterable[tuple[TensorSeries, TensorSeries]] = ()):
        terms = tuple((x, y) for x, y in terms)
        if terms:
            ref = terms[0][0]
            for x, y in terms:
                ref._check(x)
                ref._check(y)
        self.terms = terms

    def __add__(self, other: OuterElement) -> OuterElement:
        return OuterElement(self.terms + other.terms)

    def __len__(self):
        return len(self.terms)


SeriesOp = Callable[[TensorSeries], TensorSeries]


def apply_outer(g: SeriesOp, f: SeriesOp, u: OuterElement,
                like: TensorSeries | None = None) -> TensorSeries:
    """(g . f)(sum x_i (x) y_i) = sum g(x_i) f(y_i).

    An empty ``u`` yields zero; ``like`` then fixes the shape (defaults to
    the rational T^0(R^1) zero when omitted).
    """
    if not u.terms:
        if like is None:
            return TensorSeries.zero(1, 0)
        return TensorSeries.zero(like.dim, like.level, like.scalar)
    total = None
    for x, y in u.terms:
        term = concat_mul(g(x), f(y))
        total = term if total is None else total + term
    return total


# ---------------------------------------------------------------------------
# JSON


def series_to_json(x: TensorSeries) -> dict:
    data = []
    for w, c in x.items():
        rec = {"word": list(w)}
        if x.exact:
            rec["num"] = str(c.numerator)
            rec["den"] = str(c.denominator)
        else:
            rec["value"] = float(c)
        data.append(rec)
    return {"dim": x.dim, "level": x.level, "scalar": x.scalar, "data": data}


def series_from_json(obj: Mapping) -> TensorSeries:
    try:
        dim, level, scalar = int(obj["dim"]), int(obj["level"]), obj.get("scalar", RATIONAL)
        coeffs: dict[Word, object] = {}
        for rec in obj.get("data", []):
            w = tuple(int(i) for i in rec["word"])
            if scalar == RATIONAL:
                if "num" in rec:
                    c = Fraction(int(rec["num"]), int(rec["den"]))
                else:
                    c = parse_rational(rec["value"])
            else:
                c = float(rec["value"])
            if len(w) > level:
                raise UsageError(f"word {list(w)} longer than level {level}")
            coeffs[w] = coeffs.get(w, 0) + c
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"malformed TensorSeries JSON: {exc}") from exc
    return TensorSeries.from_dict(dim, level, coeffs, scalar)

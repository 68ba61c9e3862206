"""Symmetric algebra S^N(R^d): multivariate moments and cumulants.

A :class:`SymSeries` is a sparse map from multidegrees (exponent vectors) to
coefficients against the monomials e^m = e_1^{m_1} ... e_d^{m_d}. With this
convention the coefficient of e^m in exp(X.e) is E[X^m] / m!, where
m! = m_1! ... m_d!; :meth:`SymSeries.moment` undoes that scaling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

import gmpy2
import numpy as np

from .algebra import (
    FLOAT,
    RATIONAL,
    TensorSeries,
    UsageError,
    _as_float,
    _as_rational,
    compositions,
    index_word,
    parse_rational,
)
from .filtration import FiltrationTree

Degree = tuple[int, ...]


def multidegrees(dim: int, total: int) -> Iterator[Degree]:
    """Exponent vectors of a given total degree, in lexicographic order of the sorted word."""
    for combo in itertools.combinations_with_replacement(range(dim), total):
        deg = [0] * dim
        for i in combo:
            deg[i] += 1
        yield tuple(deg)


def degree_factorial(m: Degree) -> int:
    return math.prod(math.factorial(k) for k in m)


class SymSeries:
    """Truncated element of S^N(R^d); immutable."""

    __slots__ = ("dim", "level", "scalar", "_coeffs")

    def __init__(self, dim: int, level: int, coeffs: Mapping[Sequence[int], object] | None = None,
                 scalar: str = RATIONAL):
        if dim < 1 or level < 0:
            raise UsageError("need dim >= 1 and level >= 0")
        if scalar not in (RATIONAL, FLOAT):
            raise UsageError(f"unknown scalar kind {scalar!r}")
        conv = _as_rational if scalar == RATIONAL else _as_float
        data: dict[Degree, object] = {}
        for m, c in (coeffs or {}).items():
            m = tuple(int(k) for k in m)
            if len(m) != dim or any(k < 0 for k in m):
                raise UsageError(f"bad multidegree {list(m)} for dimension {dim}")
            if sum(m) > level:
                continue
            c = conv(c)
            if c != 0:
                data[m] = data.get(m, 0) + c
        self.dim, self.level, self.scalar = dim, level, scalar
        self._coeffs = {m: c for m, c in data.items() if c != 0}

    @classmethod
    def _wrap(cls, dim, level, scalar, coeffs) -> SymSeries:
        obj = cls.__new__(cls)
        obj.dim, obj.level, obj.scalar = dim, level, scalar
        obj._coeffs = {m: c for m, c in coeffs.items() if c != 0}
        return obj

    @classmethod
    def zero(cls, dim: int, level: int, scalar: str = RATIONAL) -> SymSeries:
        return cls._wrap(dim, level, scalar, {})

    @classmethod
    def one(cls, dim: int, level: int, scalar: str = RATIONAL) -> SymSeries:
        return cls(dim, level, {(0,) * dim: 1}, scalar)

    @classmethod
    def from_vector(cls, vec: Sequence, level: int, scalar: str = RATIONAL) -> SymSeries:
        d = len(vec)
        return cls(d, level, {tuple(int(i == k) for i in range(d)): v for k, v in enumerate(vec)}, scalar)

    @property
    def exact(self) -> bool:
        return self.scalar == RATIONAL

    def __getitem__(self, m: Sequence[int]):
        return self._coeffs.get(tuple(m), gmpy2.mpq(0) if self.exact else 0.0)

    def items(self) -> list[tuple[Degree, object]]:
        """Nonzero coefficients sorted by (total degree, exponent vector descending)."""
        return sorted(self._coeffs.items(), key=lambda kv: (sum(kv[0]), tuple(-k for k in kv[0])))

    def to_dict(self) -> dict[Degree, object]:
        return dict(self._coeffs)

    @property
    def scalar_part(self):
        return self[(0,) * self.dim]

    def component(self, n: int) -> SymSeries:
        return SymSeries._wrap(self.dim, self.level, self.scalar,
                               {m: c for m, c in self._coeffs.items() if sum(m) == n})

    def moment(self, m: Sequence[int]):
        """Coefficient rescaled by m!: the raw moment when self = E[exp(X.e)]."""
        return self[m] * degree_factorial(tuple(m))

    def to_float(self) -> SymSeries:
        if not self.exact:
            return self
        return SymSeries._wrap(self.dim, self.level, FLOAT, {m: float(c) for m, c in self._coeffs.items()})

    def is_zero(self) -> bool:
        return not self._coeffs

    def max_abs(self) -> float:
        return max((abs(float(c)) for c in self._coeffs.values()), default=0.0)

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other: SymSeries) -> None:
        if not isinstance(other, SymSeries):
            raise UsageError(f"expected SymSeries, got {type(other).__name__}")
        if (self.dim, self.level, self.scalar) != (other.dim, other.level, other.scalar):
            raise UsageError("incompatible symmetric series")

    def _scalar(self, c):
        return _as_rational(c) if self.exact else _as_float(c)

    def __add__(self, other):
        if not isinstance(other, SymSeries):
            return self + SymSeries.one(self.dim, self.level, self.scalar) * other
        self._check(other)
        out = dict(self._coeffs)
        for m, c in other._coeffs.items():
            out[m] = out.get(m, 0) + c
        return SymSeries._wrap(self.dim, self.level, self.scalar, out)

    __radd__ = __add__

    def __neg__(self):
        return SymSeries._wrap(self.dim, self.level, self.scalar, {m: -c for m, c in self._coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, SymSeries):
            self._check(other)
            out: dict[Degree, object] = {}
            for m1, c1 in self._coeffs.items():
                s1 = sum(m1)
                for m2, c2 in other._coeffs.items():
                    if s1 + sum(m2) > self.level:
                        continue
                    m = tuple(a + b for a, b in zip(m1, m2))
                    out[m] = out.get(m, 0) + c1 * c2
            return SymSeries._wrap(self.dim, self.level, self.scalar, out)
        c = self._scalar(other)
        return SymSeries._wrap(self.dim, self.level, self.scalar, {m: v * c for m, v in self._coeffs.items()})

    __rmul__ = __mul__

    def __truediv__(self, other):
        c = self._scalar(other)
        return SymSeries._wrap(self.dim, self.level, self.scalar, {m: v / c for m, v in self._coeffs.items()})

    def __eq__(self, other):
        if not isinstance(other, SymSeries):
            return NotImplemented
        return ((self.dim, self.level, self.scalar) == (other.dim, other.level, other.scalar)
                and self._coeffs == other._coeffs)

    __hash__ = None

    def __repr__(self):
        body = " + ".join(f"{c}*e{list(m)}" for m, c in self.items()) or "0"
        return f"SymSeries(d={self.dim}, N={self.level}, {self.scalar}: {body})"


# ---------------------------------------------------------------------------
# projection and power series


def project_sym(x: TensorSeries) -> SymSeries:
    """Abelianize: the coefficient of e^m sums x over all words with letter counts m."""
    out: dict[Degree, object] = {}
    for k, arr in enumerate(x.levels):
        nz = np.flatnonzero(arr != 0)
        for idx in nz:
            w = index_word(int(idx), k, x.dim)
            m = [0] * x.dim
            for letter in w:
                m[letter - 1] += 1
            m = tuple(m)
            out[m] = out.get(m, 0) + arr[idx]
    return SymSeries._wrap(x.dim, x.level, x.scalar, out)


def _horner(y: SymSeries, coeffs: Sequence[Fraction]) -> SymSeries:
    one = SymSeries.one(y.dim, y.level, y.scalar)
    result = SymSeries.zero(y.dim, y.level, y.scalar)
    for c in reversed(coeffs):
        result = one * c + y * result
    return result


def sym_exp(x: SymSeries) -> SymSeries:
    if x.scalar_part != 0:
        raise UsageError("sym_exp needs an element of S_0")
    return _horner(x, [Fraction(1, math.factorial(k)) for k in range(x.level + 1)])


def sym_log(s: SymSeries) -> SymSeries:
    if s.scalar_part != 1:
        raise UsageError("sym_log needs an element of S_1")
    coeffs = [Fraction(0)] + [Fraction((-1) ** (k + 1), k) for k in range(1, s.level + 1)]
    return _horner(s - 1, coeffs)


def sym_dilate(x: SymSeries, a) -> SymSeries:
    """Scale e^m by a^{|m|} (scalar a) or by prod a_i^{m_i} (vector a)."""
    if isinstance(a, (list, tuple, np.ndarray)):
        if len(a) != x.dim:
            raise UsageError("dilation vector must have length d")
        vec = [x._scalar(v) for v in a]
        return SymSeries._wrap(x.dim, x.level, x.scalar,
                               {m: c * math.prod(v ** k for v, k in zip(vec, m)) for m, c in x._coeffs.items()})
    s = x._scalar(a)
    return SymSeries._wrap(x.dim, x.level, x.scalar, {m: c * s ** sum(m) for m, c in x._coeffs.items()})


# ---------------------------------------------------------------------------
# moments and cumulants on trees


def _terminal_increments(tree: FiltrationTree, j: int) -> dict[int, SymSeries]:
    """For each leaf, the projected increment X_J - X_{j-ancestor}."""
    for nid, node in tree.nodes.items():
        if any(np.any(node.value.levels[k] != 0) for k in range(2, node.value.level + 1)):
            raise UsageError(f"node {nid} has components above degree 1")
    anc = {}
    for leaf in tree.levels[tree.depth]:
        a = leaf
        while tree.nodes[a].depth > j:
            a = tree.nodes[a].parent
        anc[leaf] = a
    return {leaf: project_sym(tree.nodes[leaf].value - tree.nodes[anc[leaf]].value) for leaf in anc}


def _sym_cond_expect(tree: FiltrationTree, j: int, field: Mapping[int, SymSeries], k: int) -> dict[int, SymSeries]:
    current = dict(field)
    for lvl in range(k - 1, j - 1, -1):
        nxt = {}
        for nid in tree.levels[lvl]:
            acc = None
            for c in tree.children[nid]:
                term = current[c] * tree.nodes[c].prob
                acc = term if acc is None else acc + term
            nxt[nid] = acc
        current = nxt
    return {n: current[n] for n in tree.levels[j]}


def multivariate_moments(tree: FiltrationTree, j: int = 0) -> dict[int, SymSeries]:
    """E[exp(Xi) | node] for Xi = projected X_J - X_j, at every level-j node."""
    xi = _terminal_increments(tree, j)
    return _sym_cond_expect(tree, j, {leaf: sym_exp(v) for leaf, v in xi.items()}, tree.depth)


def multivariate_cumulants(tree: FiltrationTree, j: int = 0) -> dict[int, SymSeries]:
    return {n: sym_log(m) for n, m in multivariate_moments(tree, j).items()}


# ---------------------------------------------------------------------------
# set-partition oracle


def set_partitions(items: Sequence) -> Iterator[list[list]]:
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def classical_cumulant_oracle(moments: Mapping[Degree, object], dim: int, level: int) -> dict[Degree, object]:
    """Joint cumulants from raw moments E[X^m] by the set-partition (Moebius) formula.

    kappa(S) = sum over partitions pi of S of (-1)^{|pi|-1} (|pi|-1)! prod_B m(B),
    where S lists the coordinates of m with multiplicity.
    """
    zero = (0,) * dim
    if moments.get(zero, 1) != 1:
        raise UsageError("moment of the empty degree must be 1")
    out: dict[Degree, object] = {}
    for n in range(1, level + 1):
        for m in multidegrees(dim, n):
            letters = [i for i, k in enumerate(m) for _ in range(k)]
            total = 0
            for part in set_partitions(letters):
                prod = 1
                for block in part:
                    bd = [0] * dim
                    for i in block:
                        bd[i] += 1
                    prod = prod * moments.get(tuple(bd), 0)
                    if prod == 0:
                        break
                b = len(part)
                total += (-1) ** (b - 1) * math.factorial(b - 1) * prod
            out[m] = total
    return out


def cumulants_from_sym(k: SymSeries) -> dict[Degree, object]:
    """Classical cumulants read off a cumulant series (coefficient times m!)."""
    return {m: k.moment(m) for n in range(1, k.level + 1) for m in multidegrees(k.dim, n)}


def moments_from_sym(mu: SymSeries) -> dict[Degree, object]:
    return {m: mu.moment(m) for n in range(0, mu.level + 1) for m in multidegrees(mu.dim, n)}


# ---------------------------------------------------------------------------
# discrete cumulant recursion


@dataclass
class KRecursionReport:
    """K_j = log E[exp(Xi) | G_j] on every node, and residuals of the identities it satisfies."""

    K: dict[int, SymSeries]
    recursion_rhs: dict[int, SymSeries]
    residual_recursion: dict[int, SymSeries]
    residual_energy: dict[int, SymSeries]
    residual_third: dict[int, SymSeries]

    def all_zero(self) -> bool:
        fields = (self.residual_recursion, self.residual_energy, self.residual_third)
        return all(v.is_zero() for f in fields for v in f.values())

    def max_residual(self) -> float:
        fields = (self.residual_recursion, self.residual_energy, self.residual_third)
        return max((v.max_abs() for f in fields for v in f.values()), default=0.0)


def _composition_correction(dk: SymSeries, n: int) -> SymSeries:
    """Degree-n part of exp(dk) - 1 - dk, summed over compositions with >= 2 parts."""
    parts = {k: dk.component(k) for k in range(1, n + 1)}
    out = SymSeries.zero(dk.dim, dk.level, dk.scalar)
    for comp in compositions(n):
        if len(comp) < 2:
            continue
        term = parts[comp[0]]
        for p in comp[1:]:
            term = term * parts[p]
        out = out + term * Fraction(1, math.factorial(len(comp)))
    return out


def discrete_K_recursion(tree: FiltrationTree, xi: Mapping[int, SymSeries]) -> KRecursionReport:
    """Check K_j = E[Xi | G_j] + E[sum_{i>=j} exp(dK_i) - 1 - dK_i | G_j] degree by degree.

    Also checks the degree-2 energy identity
    K^(2)_j = E[Xi^(2) | G_j] + 1/2 E[sum (dK^(1))^2 | G_j]
    and its degree-3 analogue with (dK^(1))^3 / 6 + dK^(1) dK^(2).
    """
    leaves = tree.levels[tree.depth]
    ref = xi[leaves[0]]
    for leaf in leaves:
        ref._check(xi[leaf])
        if xi[leaf].scalar_part != 0:
            raise UsageError("Xi must lie in S_0")
    # K by direct conditional expectation at every level.
    ex = {leaf: sym_exp(xi[leaf]) for leaf in leaves}
    K: dict[int, SymSeries] = {}
    cond_xi: dict[int, SymSeries] = {}
    for j in range(tree.depth + 1):
        for nid, v in _sym_cond_expect(tree, j, ex, tree.depth).items():
            K[nid] = sym_log(v)
        cond_xi.update(_sym_cond_expect(tree, j, dict(xi), tree.depth))

    zero = SymSeries.zero(ref.dim, ref.level, ref.scalar)
    corr: dict[int, SymSeries] = {}
    energy: dict[int, SymSeries] = {}
    third: dict[int, SymSeries] = {}
    for lvl in range(tree.depth, -1, -1):
        for nid in tree.levels[lvl]:
            c_acc, e_acc, t_acc = zero, zero, zero
            for c in tree.children[nid]:
                p = tree.nodes[c].prob
                dk = K[c] - K[nid]
                step = zero
                for n in range(2, ref.level + 1):
                    step = step + _composition_correction(dk, n)
                d1, d2 = dk.component(1), dk.component(2)
                c_acc = c_acc + (step + corr[c]) * p
                e_acc = e_acc + (d1 * d1 * Fraction(1, 2) + energy[c]) * p
                t_acc = t_acc + (d1 * d1 * d1 * Fraction(1, 6) + d1 * d2 + third[c]) * p
            corr[nid], energy[nid], third[nid] = c_acc, e_acc, t_acc

    rhs = {nid: cond_xi[nid] + corr[nid] for nid in tree.nodes}
    res = {nid: K[nid] - rhs[nid] for nid in tree.nodes}
    res2 = {nid: K[nid].component(2) - cond_xi[nid].component(2) - energy[nid].component(2) for nid in tree.nodes}
    res3 = {nid: K[nid].component(3) - cond_xi[nid].component(3) - third[nid].component(3) for nid in tree.nodes}
    return KRecursionReport(K, rhs, res, res2, res3)


# ---------------------------------------------------------------------------
# Gaussian diamond recursion


def gaussian_diamond_cumulants(spec, xi_extra: SymSeries | None = None, t: float = 0.0,
                               step: float | None = None) -> SymSeries:
    """K_t for Xi = (M_T - M_t) + xi_extra with M a Gaussian martingale, xi_extra deterministic.

    K^(n) = E_t(Xi^(n)) + 1/2 sum_{k=1}^{n-1} (K^(k) <> K^(n-k)), where the
    diamond is the expected quadratic covariation over [t, T]. K^(1) is the
    Gaussian martingale E_u(M_T - M_t) and every K^(k), k >= 2, is
    deterministic; brackets involving a deterministic process vanish, so
    only K^(1) <> K^(1) = int_t^T sigma sigma^T(u) du (as sum_ij a_ij e_i e_j)
    survives. That integral is taken by trapezoid quadrature on the model's cells.
    """
    from .models import covariation_element

    d, N = spec.dim, spec.level
    if xi_extra is None:
        xi_extra = SymSeries.zero(d, N, FLOAT)
    xi_extra = xi_extra.to_float()
    if (xi_extra.dim, xi_extra.level) != (d, N):
        raise UsageError("xi_extra shape does not match the model")
    if xi_extra.component(1).max_abs() or xi_extra.scalar_part:
        raise UsageError("xi_extra must have degree >= 2")
    cells = spec.cells(t, step)
    a_pieces = [s @ s.T for s in spec.sigmas]
    # the cells never straddle a breakpoint, so each trapezoid panel is w * a
    integral = np.zeros((d, d))
    for c, w in enumerate(cells.widths):
        integral += w * a_pieces[cells.piece[c]]
    bracket11 = project_sym(covariation_element(integral, d, N))

    def diamond(k: int, m: int) -> SymSeries:
        if k == 1 and m == 1:
            return bracket11
        return SymSeries.zero(d, N, FLOAT)

    K = SymSeries.zero(d, N, FLOAT)
    for n in range(1, N + 1):
        kn = xi_extra.component(n)  # E_t of the martingale part is zero
        for k in range(1, n):
            kn = kn + diamond(k, n - k).component(n) * 0.5
        K = K + kn
    return K


def quadratic_variation_correction(spec, t: float = 0.0, step: float | None = None) -> SymSeries:
    """-1/2 sum_{i,j} <X^i, X^j>_{t,T} e_i e_j: the level-2 term making exp(X) a martingale."""
    from .models import covariation_element

    cells = spec.cells(t, step)
    integral = sum(w * (spec.sigmas[p] @ spec.sigmas[p].T) for w, p in zip(cells.widths, cells.piece))
    return project_sym(covariation_element(integral, spec.dim, spec.level)) * -0.5


# ---------------------------------------------------------------------------
# JSON


def sym_to_json(x: SymSeries) -> dict:
    data = []
    for m, c in x.items():
        rec = {"degree": list(m)}
        if x.exact:
            rec["num"], rec["den"] = str(c.numerator), str(c.denominator)
        else:
            rec["value"] = float(c)
        data.append(rec)
    return {"dim": x.dim, "level": x.level, "scalar": x.scalar, "data": data}


def sym_from_json(obj: Mapping) -> SymSeries:
    try:
        dim, level, scalar = int(obj["dim"]), int(obj["level"]), obj.get("scalar", RATIONAL)
        coeffs = {}
        for rec in obj.get("data", []):
            m = tuple(int(k) for k in rec["degree"])
            if scalar == RATIONAL:
                c = Fraction(int(rec["num"]), int(rec["den"])) if "num" in rec else parse_rational(rec["value"])
            else:
                c = float(rec["value"])
            coeffs[m] = coeffs.get(m, 0) + c
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"malformed SymSeries JSON: {exc}") from exc
    return SymSeries(dim, level, coeffs, scalar)


__all__ = [
    "KRecursionReport", "SymSeries", "classical_cumulant_oracle", "cumulants_from_sym",
    "discrete_K_recursion", "gaussian_diamond_cumulants", "moments_from_sym", "multidegrees",
    "multivariate_cumulants", "multivariate_moments", "project_sym", "quadratic_variation_correction",
    "set_partitions", "sym_dilate", "sym_exp", "sym_from_json", "sym_log", "sym_to_json",
]

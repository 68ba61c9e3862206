from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

import oracle
from sigcum import (
    FLOAT,
    OuterElement,
    TensorSeries,
    UsageError,
    apply_G,
    apply_H,
    apply_Q,
    bch_exact,
    bch_log_signature,
    bch_psi,
    bernoulli,
    bracket,
    dynkin_is_lie,
    exp_series,
    log_series,
    lyndon_basis,
)
from sigcum.lie import bracket_string, dynkin_map, lyndon_bracket, lyndon_words, q_coefficient, witt_dimension
from sigcum.randgen import random_lie, random_series

seeds = st.integers(0, 2**32 - 1)

# Duval's algorithm emits Lyndon words in lexicographic order
LYNDON_2_3 = [(1,), (1, 1, 2), (1, 2), (1, 2, 2), (2,)]


def e(i, dim=2, level=3):
    return TensorSeries.letter(i, dim, level)


def test_bernoulli_values():
    assert bernoulli(0) == 1
    assert bernoulli(1) == Fraction(-1, 2)
    assert bernoulli(2) == Fraction(1, 6)
    assert bernoulli(3) == 0
    for k in range(15):
        assert bernoulli(k) == oracle.bernoulli_minus(k)


def test_apply_G_examples(rng):
    v = random_series(rng, 2, 4)
    assert apply_G(TensorSeries.zero(2, 4), v) == v
    assert apply_G(v, v) == v
    o1, o2 = oracle.letter(1), oracle.letter(2)
    b = oracle.bracket(o1, o2, 3)
    want = oracle.add(oracle.add(o2, oracle.scale(b, Fraction(1, 2))),
                      oracle.scale(oracle.bracket(o1, b, 3), Fraction(1, 6)))
    assert oracle.to_dict(apply_G(e(1), e(2))) == want


def test_apply_H_examples(rng):
    v = random_series(rng, 2, 4)
    assert apply_H(TensorSeries.zero(2, 4), v) == v
    got = apply_H(e(1, level=2), e(2, level=2))
    assert got == e(2, level=2) - bracket(e(1, level=2), e(2, level=2)) * Fraction(1, 2)


@given(seeds)
def test_H_inverts_G(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    N = int(rng.integers(1, 6 if d == 3 else 7))
    x, v = random_series(rng, d, N), random_series(rng, d, N)
    assert apply_H(x, apply_G(x, v)) == v
    assert apply_G(x, apply_H(x, v)) == v


def test_q_coefficient_and_trivial_cases(rng):
    assert q_coefficient(0, 0) == 1
    assert q_coefficient(1, 2) == Fraction(2, 2 * 2 * 5)
    y, z = random_series(rng, 2, 4), random_series(rng, 2, 4)
    zero = TensorSeries.zero(2, 4)
    assert apply_Q(zero, OuterElement([(y, z)])) == y * z
    assert apply_Q(y, OuterElement()).is_zero()


def _eps_coefficients(fn, degree):
    """Exact coefficients in eps of a TensorSeries-valued polynomial of given degree."""
    eps = [Fraction(k + 1, 3) for k in range(degree + 1)]
    vals = [fn(t) for t in eps]
    vinv = sympy.Matrix([[sympy.Rational(t.numerator, t.denominator) ** p for p in range(degree + 1)]
                         for t in eps]).inv()
    like = vals[0]
    out = []
    for p in range(degree + 1):
        acc = TensorSeries.zero(like.dim, like.level)
        for k, v in enumerate(vals):
            c = vinv[p, k]
            acc = acc + v * Fraction(int(c.p), int(c.q))
        out.append(acc)
    return out


def _taylor_residual(x, v, q_scale):
    def residual(t):
        h = v * t
        ex = exp_series(x)
        return (exp_series(x + h) - ex - apply_G(x, h) * ex
                - apply_Q(x, OuterElement([(h, h)])) * ex * q_scale)
    return residual


@pytest.mark.parametrize("seed", range(4))
def test_exponential_second_order_expansion(seed):
    # exp(x + h) = exp(x) + G(ad x)(h) e^x + (1/2) Q(ad x)(h (x) h) e^x + O(h^3)
    rng = np.random.default_rng(seed)
    x, v = random_series(rng, 2, 4), random_series(rng, 2, 4)
    coeffs = _eps_coefficients(_taylor_residual(x, v, Fraction(1, 2)), 4)
    assert all(c.is_zero() for c in coeffs[:3])


def test_unhalved_Q_misses_second_order():
    # Q itself reproduces h^2 at x = 0, twice the second-order Taylor term.
    x = TensorSeries.zero(2, 4)
    v = e(1, level=4) + e(2, level=4)
    coeffs = _eps_coefficients(_taylor_residual(x, v, 1), 4)
    assert coeffs[2] == (v * v) * Fraction(-1, 2)


def test_bch_examples(rng):
    x = random_series(rng, 2, 4)
    zero = TensorSeries.zero(2, 4)
    assert bch_exact(x, zero) == x
    assert bch_exact(x, -x).is_zero()
    e1, e2 = e(1), e(2)
    b12 = bracket(e1, e2)
    want = (e1 + e2 + b12 * Fraction(1, 2) + bracket(e1, b12) * Fraction(1, 12)
            + bracket(e2, bracket(e2, e1)) * Fraction(1, 12))
    assert bch_exact(e1, e2) == want
    o = oracle.log(oracle.mul(oracle.exp(oracle.letter(1), 3), oracle.exp(oracle.letter(2), 3), 3), 3)
    assert oracle.to_dict(want) == o


def test_bch_psi_agrees_at_level5():
    e1, e2 = e(1, level=5), e(2, level=5)
    assert bch_psi(e1, e2) == bch_exact(e1, e2)
    x = random_series(np.random.default_rng(1), 2, 5)
    assert bch_psi(x, TensorSeries.zero(2, 5)) == x


@given(seeds)
def test_bch_routes_agree(seed):
    rng = np.random.default_rng(seed)
    x, y = random_series(rng, 2, 4), random_series(rng, 2, 4)
    ref = bch_exact(x, y)
    assert bch_psi(x, y) == ref
    assert bch_log_signature([x, y]) == ref


def test_bch_psi_rejects_float():
    with pytest.raises(UsageError):
        bch_psi(e(1).to_float(), e(2).to_float())


@given(seeds)
def test_bch_associative(seed):
    rng = np.random.default_rng(seed)
    x, y, z = (random_series(rng, 2, 4) for _ in range(3))
    assert bch_exact(bch_exact(x, y), z) == bch_exact(x, bch_exact(y, z))


def test_bch_log_signature_cases(rng):
    x = random_series(rng, 2, 4)
    assert bch_log_signature([x]) == x
    assert bch_log_signature([e(1), e(2)]) == bch_exact(e(1), e(2))
    incs = [random_series(rng, 2, 4) for _ in range(5)]
    prod = TensorSeries.one(2, 4)
    for inc in incs:
        prod = prod * exp_series(inc)
    assert bch_log_signature(incs) == log_series(prod)


def test_lyndon_words_and_brackets():
    assert lyndon_words(2, 3) == LYNDON_2_3
    deg3 = sorted(bracket_string(w) for w in lyndon_words(2, 3) if len(w) == 3)
    assert deg3 == ["[1,[1,2]]", "[[1,2],2]"]
    assert lyndon_bracket((1, 2), 2, 2) == bracket(e(1, level=2), e(2, level=2))


@pytest.mark.parametrize("d,N,expected", [(2, 2, [2, 1]), (2, 3, [2, 1, 2]), (3, 2, [3, 3]), (2, 5, [2, 1, 2, 3, 6])])
def test_lyndon_counts_match_witt(d, N, expected):
    basis = lyndon_basis(d, N)
    counts = [sum(1 for b in basis if len(b.word) == n) for n in range(1, N + 1)]
    assert counts == expected == [witt_dimension(d, n) for n in range(1, N + 1)]


def test_lyndon_basis_independent_and_lie():
    basis = lyndon_basis(3, 3)
    mat = sympy.Matrix([[sympy.Rational(str(c)) for c in b.bracketing.flat()] for b in basis])
    assert mat.rank() == len(basis)
    for b in basis:
        assert all(dynkin_is_lie(b.bracketing).values())


def test_dynkin_examples():
    b = bracket(e(1, level=2), e(2, level=2))
    assert dynkin_is_lie(b)[2]
    word = TensorSeries.from_dict(2, 2, {(1, 2): 1})
    assert not dynkin_is_lie(word)[2]
    assert dynkin_map(word) == b


@given(seeds)
def test_bch_of_lie_elements_is_lie(seed):
    rng = np.random.default_rng(seed)
    x, y = random_lie(rng, 2, 4), random_lie(rng, 2, 4)
    assert all(dynkin_is_lie(bch_exact(x, y)).values())


def test_dynkin_float_tolerance():
    x = random_lie(np.random.default_rng(3), 2, 4).to_float()
    assert all(dynkin_is_lie(x, atol=1e-12).values())
    assert x.scalar == FLOAT

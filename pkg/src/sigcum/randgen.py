"""Random exact-rational inputs for tests, verification suites and fixtures."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .algebra import RATIONAL, TensorSeries, words
from .lie import lyndon_basis


def random_rational(rng: np.random.Generator, num: int = 5, den: int = 4) -> Fraction:
    return Fraction(int(rng.integers(-num, num + 1)), int(rng.integers(1, den + 1)))


def random_probabilities(rng: np.random.Generator, k: int, max_weight: int = 4) -> list[Fraction]:
    """k strictly positive rationals summing exactly to 1."""
    weights = [int(w) for w in rng.integers(1, max_weight + 1, size=k)]
    total = sum(weights)
    return [Fraction(w, total) for w in weights]


def random_series(rng: np.random.Generator, dim: int, level: int, min_degree: int = 1,
                  density: float = 0.6, max_degree: int | None = None) -> TensorSeries:
    """Random rational element with support in degrees min_degree..max_degree."""
    top = level if max_degree is None else min(max_degree, level)
    coeffs = {}
    for k in range(min_degree, top + 1):
        for w in words(dim, k):
            if rng.random() < density:
                coeffs[w] = random_rational(rng)
    return TensorSeries.from_dict(dim, level, coeffs, RATIONAL)


def random_vector_series(rng: np.random.Generator, dim: int, level: int) -> TensorSeries:
    return random_series(rng, dim, level, 1, 1.0, max_degree=1)


def random_lie(rng: np.random.Generator, dim: int, level: int, max_degree: int | None = None,
               density: float = 0.7) -> TensorSeries:
    """Random rational combination of Lyndon brackets."""
    top = level if max_degree is None else max_degree
    out = TensorSeries.zero(dim, level)
    for el in lyndon_basis(dim, level):
        if len(el.word) <= top and rng.random() < density:
            out = out + el.bracketing * random_rational(rng)
    return out

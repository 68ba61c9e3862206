"""Expected signatures and signature cumulants of named models.

Discrete models (random walks, Markov chains) are evaluated exactly; the
continuous ones (Gaussian martingales, Levy processes with compound Poisson
jumps) go through fixed-step quadrature on a grid aligned with the
breakpoints of their piecewise-constant characteristics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .algebra import (
    FLOAT,
    RATIONAL,
    TensorSeries,
    UsageError,
    _outer,
    _zeros,
    compositions,
    exp_series,
    level_norms,
    log_series,
    norm_max,
    parse_rational,
    series_from_json,
)
from .filtration import FiltrationTree, Node
from .lie import apply_H, bernoulli, dynkin_is_lie, lyndon_bracket

# ---------------------------------------------------------------------------
# random walks


@dataclass(frozen=True)
class AtomDistribution:
    """Finite law on T_0: (probability, value) pairs."""

    atoms: tuple[tuple[object, TensorSeries], ...]

    def __post_init__(self):
        atoms = tuple((p, v) for p, v in self.atoms)
        if not atoms:
            raise UsageError("distribution needs at least one atom")
        ref = atoms[0][1]
        for p, v in atoms:
            ref._check(v)
            if v.scalar_part != 0:
                raise UsageError("atoms must lie in T_0")
            if p <= 0:
                raise UsageError("atom probabilities must be positive")
        total = sum(p for p, _ in atoms)
        if ref.exact and total != 1:
            raise UsageError(f"probabilities sum to {total}, not 1")
        if not ref.exact and abs(float(total) - 1.0) > 1e-12:
            raise UsageError(f"probabilities sum to {total}, not 1")
        object.__setattr__(self, "atoms", atoms)

    @property
    def like(self) -> TensorSeries:
        return self.atoms[0][1]

    def probabilities(self) -> list:
        return [p for p, _ in self.atoms]

    @classmethod
    def uniform(cls, values: Sequence[TensorSeries]) -> AtomDistribution:
        p = Fraction(1, len(values)) if values[0].exact else 1.0 / len(values)
        return cls(tuple((p, v) for v in values))


def simple_walk(dim: int, level: int, scalar: str = RATIONAL) -> AtomDistribution:
    """Uniform over the 2^d sign vectors (+-1, ..., +-1): unit variance per coordinate."""
    import itertools

    vals = [TensorSeries.from_vector(list(signs), level, scalar)
            for signs in itertools.product((1, -1), repeat=dim)]
    return AtomDistribution.uniform(vals)


def axis_walk(dim: int, level: int, scalar: str = RATIONAL) -> AtomDistribution:
    """Uniform over +-e_i."""
    vals = []
    for i in range(1, dim + 1):
        e = TensorSeries.letter(i, dim, level, scalar)
        vals += [e, -e]
    return AtomDistribution.uniform(vals)


def area_walk(dim: int, level: int, scalar: str = RATIONAL) -> AtomDistribution:
    """Uniform over the d(d-1) signed brackets +-[e_i, e_j], i < j."""
    vals = []
    for i in range(1, dim + 1):
        for j in range(i + 1, dim + 1):
            b = lyndon_bracket((i, j), dim, level, scalar)
            vals += [b, -b]
    return AtomDistribution.uniform(vals)


def rw_step_expectation(dist: AtomDistribution) -> TensorSeries:
    """M = E[exp(g)]."""
    out = TensorSeries.zero(dist.like.dim, dist.like.level, dist.like.scalar)
    for p, v in dist.atoms:
        out = out + exp_series(v) * p
    return out


def series_power(x: TensorSeries, k: int) -> TensorSeries:
    if k < 0:
        raise UsageError("power must be nonnegative")
    result = TensorSeries.one(x.dim, x.level, x.scalar)
    base = x
    while k:
        if k & 1:
            result = result * base
        k >>= 1
        if k:
            base = base * base
    return result


def rw_expected_signature(dist: AtomDistribution, J: int, j: int = 0) -> TensorSeries:
    """mu_j = M^(J - j) for an IID walk."""
    if not 0 <= j <= J:
        raise UsageError(f"need 0 <= j <= J, got j={j}, J={J}")
    return series_power(rw_step_expectation(dist), J - j)


# ---------------------------------------------------------------------------
# Markov chains


@dataclass(frozen=True)
class MarkovChainSpec:
    """Finite chain with values in R^d; ``kernels[j]`` moves the chain from time j to j+1."""

    states: tuple[tuple, ...]
    kernels: tuple[tuple[tuple[Fraction, ...], ...], ...]
    level: int
    scalar: str = RATIONAL

    def __post_init__(self):
        states = tuple(tuple(s) for s in self.states)
        if not states:
            raise UsageError("need at least one state")
        dim = len(states[0])
        if dim < 1 or any(len(s) != dim for s in states):
            raise UsageError("all states need the same positive dimension")
        kernels = tuple(tuple(tuple(row) for row in k) for k in self.kernels)
        for j, k in enumerate(kernels):
            if len(k) != len(states) or any(len(row) != len(states) for row in k):
                raise UsageError(f"kernel {j} must be {len(states)}x{len(states)}")
            for a, row in enumerate(k):
                if any(p < 0 for p in row) or sum(row) != 1:
                    raise UsageError(f"kernel {j} row {a} is not a probability vector")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "kernels", kernels)

    @property
    def dim(self) -> int:
        return len(self.states[0])

    @property
    def horizon(self) -> int:
        return len(self.kernels)

    def value(self, a: int) -> TensorSeries:
        return TensorSeries.from_vector(self.states[a], self.level, self.scalar)


def markov_expected_signature(spec: MarkovChainSpec) -> list[list[TensorSeries]]:
    """table[j][a] = mu_j on {X_j = state a}, by a backward dynamic program.

    f_J = 1 and, for level-1 increments dX = x_b - x_a,
    f_j^n(a) = sum_b p_j(a, b) [ f_{j+1}^n(b) + sum_{k<n} dX^{(n-k)} f_{j+1}^k(b) / (n-k)! ].
    """
    J, S, N, d = spec.horizon, len(spec.states), spec.level, spec.dim
    exact = spec.scalar == RATIONAL
    one = TensorSeries.one(d, N, spec.scalar)
    table: list[list[TensorSeries]] = [[one] * S for _ in range(J + 1)]
    values = [spec.value(a) for a in range(S)]
    for j in range(J - 1, -1, -1):
        nxt = table[j + 1]
        row = []
        for a in range(S):
            levels = [one.levels[0]]
            for n in range(1, N + 1):
                acc = _zeros((d ** n,), exact)
                for b in range(S):
                    p = spec.kernels[j][a][b]
                    if p == 0:
                        continue
                    dx = (values[b] - values[a]).levels[1]
                    f_b = nxt[b].levels
                    term = f_b[n]
                    power = None
                    for m in range(1, n + 1):
                        power = dx if power is None else _outer(power, dx)
                        scale = Fraction(1, math.factorial(m))
                        term = term + _outer(power, f_b[n - m]) * (scale if exact else float(scale))
                    acc = acc + term * (p if exact else float(p))
                levels.append(acc)
            row.append(TensorSeries(d, N, levels, spec.scalar))
        table[j] = row
    return table


def markov_tree(spec: MarkovChainSpec, initial: int) -> FiltrationTree:
    """Enumerate the chain started in state ``initial`` as a filtration tree."""
    vals = [spec.value(a) for a in range(len(spec.states))]
    nodes = [Node(0, None, Fraction(1), vals[initial], 0)]
    frontier = [(0, initial)]
    for j in range(spec.horizon):
        nxt = []
        for nid, a in frontier:
            for b, p in enumerate(spec.kernels[j][a]):
                if p > 0:
                    nodes.append(Node(len(nodes), nid, Fraction(p), vals[b], j + 1))
                    nxt.append((len(nodes) - 1, b))
        frontier = nxt
    return FiltrationTree(nodes)


# ---------------------------------------------------------------------------
# quadrature grids


@dataclass(frozen=True)
class Cells:
    """Quadrature cells [nodes[c], nodes[c+1]] and the piece each one lies in."""

    nodes: np.ndarray
    piece: np.ndarray

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)


def quadrature_cells(breakpoints: Sequence[float], t: float, T: float, step: float) -> Cells:
    """Uniform cells of size about ``step`` inside each piece of [t, T]."""
    if step <= 0:
        raise UsageError("quadrature step must be positive")
    bp = [float(b) for b in breakpoints]
    if not t >= bp[0] - 1e-15 or not T <= bp[-1] + 1e-15 or t > T:
        raise UsageError(f"need {bp[0]} <= t <= T <= {bp[-1]}")
    nodes = [t]
    piece = []
    for k in range(len(bp) - 1):
        lo, hi = max(bp[k], t), min(bp[k + 1], T)
        if hi <= lo:
            continue
        n = max(1, int(math.ceil((hi - lo) / step - 1e-9)))
        inner = np.linspace(lo, hi, n + 1)[1:]
        nodes.extend(inner.tolist())
        piece.extend([k] * n)
    return Cells(np.array(nodes), np.array(piece, dtype=int))


def _stack(series: Sequence[TensorSeries]) -> list[np.ndarray]:
    """Per-degree batched arrays (batch, d^k) from a list of float series."""
    return [np.stack([s.to_float().levels[k] for s in series]) for k in range(series[0].level + 1)]


def _bracket_batch(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    return _outer(a, y) - _outer(y, a)


def linear_backward_quadrature(cells: Cells, etas: Sequence[TensorSeries]) -> list[np.ndarray]:
    """Trapezoid solution of mu_t = 1 + int_t^T eta(u) mu_u du at every node.

    ``etas[k]`` is the value on piece k. Degree n only needs degrees < n, so
    each degree is one backward cumulative sum. Returns per-degree arrays
    of shape (nodes, d^n).
    """
    ref = etas[0]
    eta = [arr[cells.piece] for arr in _stack(etas)]
    w = cells.widths[:, None]
    nnodes = len(cells.nodes)
    mu = [np.ones((nnodes, 1))]
    for n in range(1, ref.level + 1):
        left = np.zeros((len(w), ref.dim ** n))
        right = np.zeros_like(left)
        for m in range(1, n + 1):
            if not np.any(eta[m]):
                continue
            left += _outer(eta[m], mu[n - m][:-1])
            right += _outer(eta[m], mu[n - m][1:])
        incr = 0.5 * w * (left + right)
        deg = np.zeros((nnodes, ref.dim ** n))
        deg[:-1] = np.cumsum(incr[::-1], axis=0)[::-1]
        mu.append(deg)
    return mu


def _h_terms(kappa: Sequence[np.ndarray], eta: Sequence[np.ndarray], n: int, dim: int) -> np.ndarray:
    """Degree-n part of H(ad kappa)(eta), batched; uses kappa degrees < n only."""
    batch = eta[0].shape[0]
    out = np.zeros((batch, dim ** n))
    for m in range(1, n + 1):
        if not np.any(eta[m]):
            continue
        for comp in compositions(n - m):
            coef = bernoulli(len(comp)) / math.factorial(len(comp))
            if coef == 0 or any(not np.any(kappa[p]) for p in comp):
                continue
            y = eta[m]
            for p in reversed(comp):
                y = _bracket_batch(kappa[p], y)
            out += float(coef) * y
    return out


def magnus_backward_quadrature(cells: Cells, etas: Sequence[TensorSeries]) -> list[np.ndarray]:
    """Trapezoid solution of kappa_t = int_t^T H(ad kappa_u)(eta(u)) du, degree by degree."""
    ref = etas[0]
    eta = [arr[cells.piece] for arr in _stack(etas)]
    w = cells.widths[:, None]
    nnodes = len(cells.nodes)
    kappa = [np.zeros((nnodes, 1))]
    for n in range(1, ref.level + 1):
        left = _h_terms([k[:-1] for k in kappa], eta, n, ref.dim)
        right = _h_terms([k[1:] for k in kappa], eta, n, ref.dim)
        incr = 0.5 * w * (left + right)
        deg = np.zeros((nnodes, ref.dim ** n))
        deg[:-1] = np.cumsum(incr[::-1], axis=0)[::-1]
        kappa.append(deg)
    return kappa


def _node_series(levels: Sequence[np.ndarray], node: int, dim: int) -> TensorSeries:
    return TensorSeries(dim, len(levels) - 1, [arr[node] for arr in levels], FLOAT)


def magnus_ode_cumulants(cells: Cells, etas: Sequence[TensorSeries]) -> TensorSeries:
    """kappa at cells.nodes[0] by explicit midpoint steps of -d kappa = H(ad kappa)(eta) dt.

    Stepping runs backward from kappa_T = 0 and uses the eta of each cell at
    its midpoint.
    """
    ref = etas[0].to_float()
    kappa = TensorSeries.zero(ref.dim, ref.level, FLOAT)
    etas = [e.to_float() for e in etas]
    for c in range(len(cells.piece) - 1, -1, -1):
        h = float(cells.widths[c])
        eta = etas[cells.piece[c]]
        mid = kappa + apply_H(kappa, eta) * (0.5 * h)
        kappa = kappa + apply_H(mid, eta) * h
    return kappa


# ---------------------------------------------------------------------------
# Gaussian martingales


def covariation_element(a: np.ndarray | Sequence[Sequence], dim: int, level: int,
                        scalar: str = FLOAT, directions: Sequence[TensorSeries] | None = None) -> TensorSeries:
    """sum_ij a_ij u_i u_j with u_i = e_i unless ``directions`` are given."""
    if directions is None:
        directions = [TensorSeries.letter(i + 1, dim, level, scalar) for i in range(dim)]
    out = TensorSeries.zero(dim, level, scalar)
    for i, ui in enumerate(directions):
        for j, uj in enumerate(directions):
            if a[i][j] != 0:
                out = out + (ui * uj) * a[i][j]
    return out


@dataclass(frozen=True)
class GaussianMartingaleSpec:
    """M_t = int_0^t sigma(s) dB_s with sigma constant on each grid piece."""

    grid: tuple[float, ...]
    sigmas: tuple[np.ndarray, ...]
    level: int
    step: float | None = None

    def __post_init__(self):
        grid = tuple(float(g) for g in self.grid)
        if len(grid) < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise UsageError("grid must be strictly increasing with at least two points")
        sigmas = tuple(np.atleast_2d(np.asarray(s, dtype=float)) for s in self.sigmas)
        if len(sigmas) != len(grid) - 1:
            raise UsageError("need one volatility matrix per grid piece")
        if len({s.shape[0] for s in sigmas}) != 1:
            raise UsageError("volatility matrices must share their row count")
        if self.step is not None and self.step <= 0:
            raise UsageError("quadrature step must be positive")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "sigmas", sigmas)

    @property
    def dim(self) -> int:
        return self.sigmas[0].shape[0]

    @property
    def horizon(self) -> float:
        return self.grid[-1]

    def default_step(self) -> float:
        return self.step if self.step is not None else (self.grid[-1] - self.grid[0]) / 1024

    def generators(self) -> list[TensorSeries]:
        """Per piece, the generator eta = (1/2) sum_ij (sigma sigma^T)_ij e_i e_j."""
        return [covariation_element(0.5 * (s @ s.T), self.dim, self.level) for s in self.sigmas]

    def cells(self, t: float, step: float | None) -> Cells:
        return quadrature_cells(self.grid, t, self.horizon, self.default_step() if step is None else step)


def gaussian_moments(spec: GaussianMartingaleSpec, t: float = 0.0, step: float | None = None,
                     method: str = "quadrature") -> TensorSeries:
    """Expected signature mu_t of a Gaussian martingale.

    ``quadrature`` integrates mu^(n)_t = (1/2) int_t^T sigma sigma^T(u) mu^(n-2)_u du
    with the trapezoid rule; ``signature`` multiplies exp((1/2) int sigma sigma^T) over
    the pieces, which is exact for piecewise-constant volatility.
    """
    cells = spec.cells(t, step)
    etas = spec.generators()
    if method == "quadrature":
        return _node_series(linear_backward_quadrature(cells, etas), 0, spec.dim)
    if method == "signature":
        return _piecewise_signature(cells, etas)
    raise UsageError(f"unknown method {method!r}")


def _piecewise_signature(cells: Cells, etas: Sequence[TensorSeries]) -> TensorSeries:
    """Signature of the path with increments eta(cell) * width."""
    ref = etas[0].to_float()
    out = TensorSeries.one(ref.dim, ref.level, FLOAT)
    for c, w in enumerate(cells.widths):
        out = out * exp_series(etas[cells.piece[c]].to_float() * float(w))
    return out


def gaussian_magnus_cumulants(spec: GaussianMartingaleSpec, t: float = 0.0,
                              step: float | None = None) -> TensorSeries:
    """kappa_t = int_t^T H(ad kappa_u)((1/2) sigma sigma^T(u)) du by the degree recursion."""
    cells = spec.cells(t, step)
    return _node_series(magnus_backward_quadrature(cells, spec.generators()), 0, spec.dim)


# ---------------------------------------------------------------------------
# Brownian rough paths


@dataclass(frozen=True)
class BrownianRoughPathSpec:
    """Brownian motion developed along Lie directions u_i, plus a Lie drift.

    The tensor level is 2N so that the quadratic term of the expected
    signature is represented.
    """

    dim: int
    N: int
    directions: tuple[tuple[int, ...], ...]
    corr: tuple[tuple[Fraction, ...], ...]
    drift: TensorSeries | None = None
    horizon: Fraction = Fraction(1)

    def __post_init__(self):
        dirs = tuple(tuple(w) for w in self.directions)
        corr = tuple(tuple(row) for row in self.corr)
        if len(corr) != len(dirs) or any(len(r) != len(dirs) for r in corr):
            raise UsageError("correlation matrix must be square over the directions")
        if any(corr[i][j] != corr[j][i] for i in range(len(dirs)) for j in range(len(dirs))):
            raise UsageError("correlation matrix must be symmetric")
        if dirs and np.linalg.eigvalsh(np.array(corr, dtype=float)).min() < -1e-12:
            raise UsageError("correlation matrix must be positive semidefinite")
        for w in dirs:
            if not 1 <= len(w) <= self.N:
                raise UsageError(f"direction {list(w)} must have length 1..N")
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "corr", corr)
        if self.drift is not None:
            if (self.drift.dim, self.drift.level) != (self.dim, self.level):
                raise UsageError(f"drift must live in T^{self.level}(R^{self.dim})")
            if self.drift.scalar_part != 0 or not all(dynkin_is_lie(self.drift, atol=1e-12).values()):
                raise UsageError("drift must be a Lie element")

    @property
    def level(self) -> int:
        return 2 * self.N

    @property
    def scalar(self) -> str:
        return FLOAT if self.drift is not None and not self.drift.exact else RATIONAL

    def direction_series(self) -> list[TensorSeries]:
        return [lyndon_bracket(w, self.dim, self.level, self.scalar) for w in self.directions]

    def sigma_element(self) -> TensorSeries:
        return covariation_element(self.corr, self.dim, self.level, self.scalar, self.direction_series())

    def drift_series(self) -> TensorSeries:
        return self.drift if self.drift is not None else TensorSeries.zero(self.dim, self.level, self.scalar)


def brownian_rough_path_esig(spec: BrownianRoughPathSpec) -> TensorSeries:
    """exp(T eta + (T/2) Sigma)."""
    T = spec.horizon if spec.scalar == RATIONAL else float(spec.horizon)
    return exp_series(spec.drift_series() * T + spec.sigma_element() * (T / 2))


# ---------------------------------------------------------------------------
# Levy processes with compound Poisson jumps


@dataclass(frozen=True)
class LevyPiece:
    drift: TensorSeries
    directions: tuple[TensorSeries, ...] = ()
    cov: tuple[tuple[float, ...], ...] = ()
    jumps: tuple[tuple[float, TensorSeries], ...] = ()

    def sigma_element(self) -> TensorSeries:
        if not self.directions:
            return TensorSeries.zero(self.drift.dim, self.drift.level, self.drift.scalar)
        return covariation_element(self.cov, self.drift.dim, self.drift.level, self.drift.scalar,
                                   self.directions)


@dataclass(frozen=True)
class LevyTriplet:
    """Characteristics (b, Sigma, K), constant on each grid piece."""

    grid: tuple[float, ...]
    pieces: tuple[LevyPiece, ...]
    step: float | None = None

    def __post_init__(self):
        grid = tuple(float(g) for g in self.grid)
        if len(grid) < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise UsageError("grid must be strictly increasing with at least two points")
        if len(self.pieces) != len(grid) - 1:
            raise UsageError("need one characteristic triplet per grid piece")
        ref = self.pieces[0].drift
        for pc in self.pieces:
            for x in (pc.drift, *pc.directions, *(j for _, j in pc.jumps)):
                ref._check(x)
                if x.scalar_part != 0:
                    raise UsageError("drift, directions and jumps must lie in T_0")
            if any(r < 0 for r, _ in pc.jumps):
                raise UsageError("jump rates must be nonnegative")
            if len(pc.cov) != len(pc.directions):
                raise UsageError("covariance must be square over the directions")
        if self.step is not None and self.step <= 0:
            raise UsageError("quadrature step must be positive")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "pieces", tuple(self.pieces))

    @property
    def like(self) -> TensorSeries:
        return self.pieces[0].drift

    @property
    def horizon(self) -> float:
        return self.grid[-1]

    def piece_at(self, t: float) -> int:
        k = int(np.searchsorted(self.grid, t, side="right")) - 1
        return min(max(k, 0), len(self.pieces) - 1)

    def cells(self, t: float, T: float | None, step: float | None) -> Cells:
        T = self.horizon if T is None else T
        h = step if step is not None else (self.step if self.step is not None else (T - t) / 1024)
        return quadrature_cells(self.grid, t, T, h)


def small_jump(x: TensorSeries) -> bool:
    """Indicator of |x| <= 1 in norm_max, equality included."""
    return norm_max(x) <= 1.0


def levy_eta_piece(piece: LevyPiece) -> TensorSeries:
    """b + Sigma/2 + sum rate (exp(x) - 1 - x 1[|x| <= 1])."""
    eta = piece.drift + piece.sigma_element() * (Fraction(1, 2) if piece.drift.exact else 0.5)
    for rate, x in piece.jumps:
        jump = exp_series(x) - 1
        if small_jump(x):
            jump = jump - x
        eta = eta + jump * rate
    return eta


def levy_eta(triplet: LevyTriplet, t: float) -> TensorSeries:
    return levy_eta_piece(triplet.pieces[triplet.piece_at(t)])


def levy_expected_signature(triplet: LevyTriplet, t: float = 0.0, T: float | None = None,
                            step: float | None = None, method: str = "quadrature") -> TensorSeries:
    """mu_t solving mu_t = 1 + int_t^T eta(u) mu_u du.

    ``quadrature`` is the trapezoid level recursion; ``signature`` is the
    signature of the path with increments eta(u) h.
    """
    cells = triplet.cells(t, T, step)
    etas = [levy_eta_piece(pc).to_float() for pc in triplet.pieces]
    if method == "quadrature":
        return _node_series(linear_backward_quadrature(cells, etas), 0, triplet.like.dim)
    if method == "signature":
        return _piecewise_signature(cells, etas)
    raise UsageError(f"unknown method {method!r}")


def levy_cumulants(triplet: LevyTriplet, t: float = 0.0, T: float | None = None,
                   step: float | None = None, method: str = "quadrature") -> TensorSeries:
    cells = triplet.cells(t, T, step)
    etas = [levy_eta_piece(pc).to_float() for pc in triplet.pieces]
    if method == "quadrature":
        return _node_series(magnus_backward_quadrature(cells, etas), 0, triplet.like.dim)
    if method == "ode":
        return magnus_ode_cumulants(cells, etas)
    raise UsageError(f"unknown method {method!r}")


def eta_integral_norms(cells: Cells, etas: Sequence[TensorSeries]) -> list[float]:
    """int |eta^(n)(u)| du per degree n = 0..N (piecewise constant eta)."""
    norms = np.array([level_norms(e) for e in etas])
    return (cells.widths[:, None] * norms[cells.piece]).sum(axis=0).tolist()


# ---------------------------------------------------------------------------
# radius bound


@dataclass(frozen=True)
class RadiusReport:
    lam: float
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def radius_bound_check(mu: TensorSeries, eta_norms: Sequence[float],
                       lambdas: Sequence[float]) -> list[RadiusReport]:
    """sum_n lam^n |mu^(n)| against exp(sum_{n>=1} lam^n int |eta^(n)|)."""
    mu_norms = level_norms(mu)
    out = []
    for lam in lambdas:
        if lam <= 0:
            raise UsageError("lambda must be positive")
        lhs = sum(lam ** n * v for n, v in enumerate(mu_norms))
        rhs = math.exp(sum(lam ** n * eta_norms[n] for n in range(1, min(len(eta_norms), mu.level + 1))))
        out.append(RadiusReport(float(lam), float(lhs), float(rhs)))
    return out


# ---------------------------------------------------------------------------
# ModelSpec JSON


def _rat(v) -> Fraction:
    try:
        return parse_rational(v)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad rational {v!r}") from exc


def _num(v) -> float:
    if isinstance(v, str):
        return float(_rat(v))
    return float(v)


@dataclass
class Model:
    """A parsed ModelSpec: the model object plus evaluation defaults."""

    kind: str
    spec: object
    level: int
    dim: int
    extra: dict = field(default_factory=dict)


def model_from_json(obj: Mapping) -> Model:
    if not isinstance(obj, Mapping) or "kind" not in obj:
        raise UsageError("model JSON needs a 'kind' field")
    kind = obj["kind"]
    try:
        if kind == "random_walk":
            atoms = tuple((_rat(a["prob"]), series_from_json(a["value"])) for a in obj["atoms"])
            dist = AtomDistribution(atoms)
            J = int(obj.get("J", 1))
            return Model(kind, dist, dist.like.level, dist.like.dim, {"J": J, "j": int(obj.get("j", 0))})
        if kind == "markov_chain":
            states = [tuple(_rat(x) for x in s) for s in obj["states"]]
            kernels = [[[_rat(p) for p in row] for row in k] for k in obj["kernels"]]
            spec = MarkovChainSpec(tuple(states), tuple(kernels), int(obj.get("level", 4)))
            initial = int(obj.get("initial", 0))
            if not 0 <= initial < len(states):
                raise UsageError("initial state index out of range")
            return Model(kind, spec, spec.level, spec.dim, {"initial": initial, "j": int(obj.get("j", 0))})
        if kind == "gaussian_martingale":
            spec = GaussianMartingaleSpec(tuple(_num(g) for g in obj["grid"]),
                                          tuple(np.array([[_num(x) for x in row] for row in s]) for s in obj["sigma"]),
                                          int(obj.get("level", 4)),
                                          None if obj.get("step") is None else _num(obj["step"]))
            return Model(kind, spec, spec.level, spec.dim)
        if kind == "brownian_rough_path":
            dim, N = int(obj["dim"]), int(obj.get("N", 1))
            dirs = tuple(tuple(int(i) for i in w) for w in obj.get("directions", [[i] for i in range(1, dim + 1)]))
            if "corr" in obj:
                corr = tuple(tuple(_rat(x) for x in row) for row in obj["corr"])
            else:
                corr = tuple(tuple(Fraction(int(i == j)) for j in range(len(dirs))) for i in range(len(dirs)))
            drift = series_from_json(obj["drift"]) if obj.get("drift") is not None else None
            spec = BrownianRoughPathSpec(dim, N, dirs, corr, drift, _rat(obj.get("T", 1)))
            return Model(kind, spec, spec.level, dim)
        if kind == "levy":
            pieces = []
            for pc in obj["pieces"]:
                drift = series_from_json(pc["drift"]).to_float()
                dirs = tuple(series_from_json(u).to_float() for u in pc.get("directions", []))
                cov = tuple(tuple(_num(x) for x in row) for row in pc.get("cov", []))
                jumps = tuple((_num(j["rate"]), series_from_json(j["value"]).to_float()) for j in pc.get("jumps", []))
                pieces.append(LevyPiece(drift, dirs, cov, jumps))
            trip = LevyTriplet(tuple(_num(g) for g in obj["grid"]), tuple(pieces),
                               None if obj.get("step") is None else _num(obj["step"]))
            return Model(kind, trip, trip.like.level, trip.like.dim)
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"malformed {kind} model: {exc!r}") from exc
    raise UsageError(f"unknown model kind {kind!r}")


def model_expected_signature(model: Model, t: float | None = None, T: float | None = None,
                             step: float | None = None) -> TensorSeries:
    """Dispatch to the closed form or quadrature for each model kind."""
    spec = model.spec
    if model.kind == "random_walk":
        j = model.extra["j"] if t is None else int(t)
        J = model.extra["J"] if T is None else int(T)
        return rw_expected_signature(spec, J, j)
    if model.kind == "markov_chain":
        j = model.extra["j"] if t is None else int(t)
        if not 0 <= j <= spec.horizon:
            raise UsageError(f"time {j} outside 0..{spec.horizon}")
        if j != 0:
            raise UsageError("markov_chain evaluation needs t = 0 with the initial state")
        return markov_expected_signature(spec)[0][model.extra["initial"]]
    if model.kind == "gaussian_martingale":
        if T is not None and abs(T - spec.horizon) > 1e-15:
            raise UsageError("gaussian_martingale horizon is fixed by its grid")
        return gaussian_moments(spec, 0.0 if t is None else t, step)
    if model.kind == "brownian_rough_path":
        if T is not None:
            spec = BrownianRoughPathSpec(spec.dim, spec.N, spec.directions, spec.corr, spec.drift,
                                         Fraction(T) if not isinstance(T, float) else Fraction(T).limit_denominator())
        return brownian_rough_path_esig(spec)
    if model.kind == "levy":
        return levy_expected_signature(spec, 0.0 if t is None else t, T, step)
    raise UsageError(f"unknown model kind {model.kind!r}")


def model_cumulants(model: Model, t: float | None = None, T: float | None = None,
                    step: float | None = None) -> TensorSeries:
    return log_series(model_expected_signature(model, t, T, step))

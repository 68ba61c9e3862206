"""Reproducible Monte Carlo estimation of expected signatures.

Sample i is drawn from its own counter-based Philox stream keyed by
(master seed, i), so a sample's path never depends on scheduling. Samples
are processed in fixed-size chunks by index, each chunk producing a
(count, mean, M2) summary, and the summaries are merged in chunk order; the
float result is therefore identical for any worker count.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .algebra import FLOAT, TensorSeries, UsageError, _outer, mul_levels, words
from .models import (
    AtomDistribution,
    BrownianRoughPathSpec,
    GaussianMartingaleSpec,
    LevyTriplet,
    small_jump,
)
from .signatures import CONTINUOUS, JUMP, DrivePath

MASK64 = (1 << 64) - 1
DEFAULT_CHUNK = 2048


@dataclass(frozen=True)
class SeedSpec:
    master: int

    def generator(self, index: int) -> np.random.Generator:
        key = np.array([self.master & MASK64, index & MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def _flat(x: TensorSeries) -> np.ndarray:
    """Degrees 1..N of a series as one float vector."""
    return np.concatenate(x.to_float().levels[1:]) if x.level else np.zeros(0)


def _unflat(vec: np.ndarray, dim: int, level: int) -> list[np.ndarray]:
    """Split (..., D) into per-degree arrays, prepending a zero degree-0 part."""
    out = [np.zeros(vec.shape[:-1] + (1,))]
    pos = 0
    for k in range(1, level + 1):
        out.append(vec[..., pos:pos + dim ** k])
        pos += dim ** k
    return out


class Sampler(Protocol):
    dim: int
    level: int
    level1_only: bool
    steps: int

    def draw(self, rng: np.random.Generator) -> tuple[np.ndarray, list[str]]:
        """Increments as an (m, D) array (degrees 1..N flattened) and one tag per row."""
        ...


# ---------------------------------------------------------------------------
# samplers


class RandomWalkSampler:
    def __init__(self, dist: AtomDistribution, J: int):
        if J < 0:
            raise UsageError("J must be nonnegative")
        like = dist.like
        self.dim, self.level, self.steps = like.dim, like.level, J
        self.atoms = np.stack([_flat(v) for _, v in dist.atoms]) if like.level else np.zeros((len(dist.atoms), 0))
        self.probs = np.array([float(p) for p, _ in dist.atoms])
        self.probs /= self.probs.sum()
        self.level1_only = not np.any(self.atoms[:, self.dim:])

    def draw(self, rng):
        idx = rng.choice(len(self.probs), size=self.steps, p=self.probs)
        return self.atoms[idx], [CONTINUOUS] * self.steps


def psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root; tolerates singular PSD matrices."""
    cov = np.asarray(cov, dtype=float)
    if cov.size == 0:
        return cov
    if not np.allclose(cov, cov.T):
        raise UsageError("covariance must be symmetric")
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < -1e-10 * max(1.0, abs(vals).max()):
        raise UsageError("covariance is not positive semidefinite")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


class BrownianDevelopmentSampler:
    """Piecewise-linear development of sum_i B^i u_i plus drift eta t."""

    def __init__(self, spec: BrownianRoughPathSpec, steps: int):
        if steps < 1:
            raise UsageError("steps must be at least 1")
        self.dim, self.level, self.steps = spec.dim, spec.level, steps
        self.h = float(spec.horizon) / steps
        dirs = spec.direction_series()
        self.U = np.stack([_flat(u) for u in dirs]) if dirs else np.zeros((0, sum(spec.dim ** k for k in range(1, spec.level + 1))))
        self.root = psd_sqrt(np.array(spec.corr, dtype=float)) if dirs else np.zeros((0, 0))
        self.drift = _flat(spec.drift_series()) * self.h
        self.level1_only = not np.any(self.U[:, self.dim:]) and not np.any(self.drift[self.dim:])

    def draw(self, rng):
        z = rng.standard_normal((self.steps, self.U.shape[0])) * math.sqrt(self.h)
        inc = (z @ self.root) @ self.U + self.drift
        return inc, [CONTINUOUS] * self.steps


class GaussianMartingaleSampler:
    """Increments sigma(cell) (B_{t+h} - B_t) on a uniform grid of the horizon."""

    def __init__(self, spec: GaussianMartingaleSpec, steps: int):
        if steps < 1:
            raise UsageError("steps must be at least 1")
        self.dim, self.level, self.steps = spec.dim, spec.level, steps
        t0, T = spec.grid[0], spec.horizon
        self.h = (T - t0) / steps
        mids = t0 + (np.arange(steps) + 0.5) * self.h
        pieces = np.clip(np.searchsorted(spec.grid, mids, side="right") - 1, 0, len(spec.sigmas) - 1)
        self.sig = np.stack([spec.sigmas[p] for p in pieces])
        self.width = sum(self.dim ** k for k in range(1, self.level + 1))
        self.level1_only = True

    def draw(self, rng):
        z = rng.standard_normal((self.steps, self.sig.shape[2])) * math.sqrt(self.h)
        x = np.einsum("sij,sj->si", self.sig, z)
        inc = np.zeros((self.steps, self.width))
        inc[:, :self.dim] = x
        return inc, [CONTINUOUS] * self.steps


class LevySampler:
    """Drift, Gaussian part and compound Poisson jumps, stepped on a uniform grid.

    Small jumps (norm_max <= 1) are compensated in the drift, matching the
    truncation in the generator. Within a step the continuous motion is split
    at the jump times so each jump sits at its event time.
    """

    def __init__(self, triplet: LevyTriplet, steps: int):
        if steps < 1:
            raise UsageError("steps must be at least 1")
        like = triplet.like
        self.dim, self.level, self.steps = like.dim, like.level, steps
        t0, T = triplet.grid[0], triplet.horizon
        self.h = (T - t0) / steps
        self.pieces = []
        for pc in triplet.pieces:
            drift = _flat(pc.drift)
            for rate, x in pc.jumps:
                if small_jump(x):
                    drift = drift - rate * _flat(x)
            U = np.stack([_flat(u) for u in pc.directions]) if pc.directions else np.zeros((0, drift.size))
            root = psd_sqrt(np.array(pc.cov, dtype=float)) if pc.directions else np.zeros((0, 0))
            rates = np.array([r for r, _ in pc.jumps], dtype=float)
            jumps = np.stack([_flat(x) for _, x in pc.jumps]) if pc.jumps else np.zeros((0, drift.size))
            self.pieces.append((drift, U, root, rates, jumps))
        mids = t0 + (np.arange(steps) + 0.5) * self.h
        self.piece_of = np.clip(np.searchsorted(triplet.grid, mids, side="right") - 1, 0, len(self.pieces) - 1)
        self.level1_only = all(not np.any(U[:, self.dim:]) and not np.any(j[:, self.dim:]) and not np.any(d[self.dim:])
                               for d, U, _, _, j in self.pieces)

    def draw(self, rng):
        h, steps = self.h, self.steps
        totals = np.array([pc[3].sum() for pc in self.pieces])[self.piece_of]
        counts = rng.poisson(totals * h)
        n_jumps = int(counts.sum())
        jump_step = np.repeat(np.arange(steps), counts)
        jump_time = jump_step * h + rng.uniform(0.0, h, size=n_jumps)
        jump_time = jump_time[np.lexsort((jump_time, jump_step))]
        jump_step = np.sort(jump_step)
        which = np.zeros(n_jumps, dtype=int)
        for k, (_, _, _, rates, _) in enumerate(self.pieces):
            sel = self.piece_of[jump_step] == k
            if sel.any():
                which[sel] = rng.choice(len(rates), size=int(sel.sum()), p=rates / rates.sum())
        # segment edges: grid points and jump times, in time order
        grid = np.arange(steps + 1) * h
        edges = np.concatenate([grid, jump_time])
        is_jump = np.concatenate([np.zeros(steps + 1, dtype=bool), np.ones(n_jumps, dtype=bool)])
        order = np.argsort(edges, kind="stable")
        edges, is_jump = edges[order], is_jump[order]
        dt = np.diff(edges)
        seg_step = np.minimum(((edges[:-1] + 0.5 * dt) / h).astype(int), steps - 1)
        seg_piece = self.piece_of[seg_step]
        width = self.pieces[0][0].size
        seg = np.zeros((dt.size, width))
        for k, (drift, U, root, _, _) in enumerate(self.pieces):
            sel = seg_piece == k
            if not sel.any():
                continue
            seg[sel] = dt[sel, None] * drift
            if U.shape[0]:
                z = rng.standard_normal((int(sel.sum()), U.shape[0])) * np.sqrt(dt[sel])[:, None]
                seg[sel] += z @ root @ U
        rows, tags = [], []
        jump_rows = iter(which)
        for q in range(dt.size):
            rows.append(seg[q])
            tags.append(CONTINUOUS)
            if is_jump[q + 1]:
                j = next(jump_rows)
                rows.append(self.pieces[seg_piece[q]][4][j])
                tags.append(JUMP)
        return np.array(rows), tags


def sample_path(sampler, seed: SeedSpec, index: int) -> DrivePath:
    """One sample as a DrivePath (for inspection; the estimator works batched)."""
    inc, tags = sampler.draw(seed.generator(index))
    series = [TensorSeries(sampler.dim, sampler.level, _unflat(row, sampler.dim, sampler.level), FLOAT)
              for row in inc]
    return DrivePath.from_increments(series, tags, dim=sampler.dim, level=sampler.level, scalar=FLOAT)


# ---------------------------------------------------------------------------
# batched signatures


def _batch_exp(x: list[np.ndarray], dim: int, level: int, level1_only: bool) -> list[np.ndarray]:
    batch = x[0].shape[0]
    out = [np.ones((batch, 1))]
    if level1_only:
        p = x[1]
        out.append(p)
        for k in range(2, level + 1):
            p = _outer(p, x[1]) / k
            out.append(p)
        return out
    # Horner: E = 1 + x (1 + x/2 (1 + ...))
    acc = [np.ones((batch, 1))] + [np.zeros((batch, dim ** k)) for k in range(1, level + 1)]
    for k in range(level, 0, -1):
        prod = mul_levels(x, acc, level, False, 1, 0)
        acc = [np.ones((batch, 1))] + [prod[n] / k for n in range(1, level + 1)]
    return acc


def batch_signature(increments: np.ndarray, dim: int, level: int, level1_only: bool = False) -> np.ndarray:
    """Signatures of a (B, m, D) increment stack; returns (B, 1 + D) flattened levels."""
    B, m, _ = increments.shape
    sig = [np.ones((B, 1))] + [np.zeros((B, dim ** k)) for k in range(1, level + 1)]
    for s in range(m):
        e = _batch_exp(_unflat(increments[:, s, :], dim, level), dim, level, level1_only)
        sig = mul_levels(sig, e, level, False)
    return np.concatenate(sig, axis=1)


# ---------------------------------------------------------------------------
# estimation


@dataclass
class Estimate:
    dim: int
    level: int
    n: int
    mean: np.ndarray
    m2: np.ndarray
    wall_time: float = 0.0

    @property
    def variance(self) -> np.ndarray:
        return self.m2 / (self.n - 1)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(self.variance / self.n)

    def mean_series(self) -> TensorSeries:
        return TensorSeries(self.dim, self.level, _split(self.mean, self.dim, self.level), FLOAT)

    def se_series(self) -> TensorSeries:
        return TensorSeries(self.dim, self.level, _split(self.se, self.dim, self.level), FLOAT)


def _split(vec: np.ndarray, dim: int, level: int) -> list[np.ndarray]:
    out, pos = [], 0
    for k in range(level + 1):
        out.append(vec[pos:pos + dim ** k].copy())
        pos += dim ** k
    return out


def _chunk_stats(sampler, seed: SeedSpec, start: int, stop: int):
    draws = [sampler.draw(seed.generator(i))[0] for i in range(start, stop)]
    width = max(d.shape[1] for d in draws) if draws else 0
    longest = max(d.shape[0] for d in draws)
    stack = np.zeros((len(draws), longest, width))
    for b, d in enumerate(draws):
        stack[b, :d.shape[0]] = d  # zero padding multiplies by exp(0) = 1
    sig = batch_signature(stack, sampler.dim, sampler.level, sampler.level1_only)
    mean = sig.mean(axis=0)
    m2 = ((sig - mean) ** 2).sum(axis=0)
    return stop - start, mean, m2


def _merge(a, b):
    """Chan et al. pairwise update of (count, mean, M2)."""
    na, ma, sa = a
    nb, mb, sb = b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * (nb / n), sa + sb + delta ** 2 * (na * nb / n)


def estimate_expected_signature(sampler, n_samples: int, seed: int | SeedSpec = 0,
                                workers: int | None = None, chunk: int = DEFAULT_CHUNK) -> Estimate:
    """Streaming mean and variance of the sample signatures."""
    if n_samples < 2:
        raise UsageError("need at least two samples")
    seed = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    if workers is None:
        workers = int(os.environ.get("SIGCUM_THREADS", "1"))
    bounds = [(s, min(s + chunk, n_samples)) for s in range(0, n_samples, chunk)]
    start = time.perf_counter()
    if workers <= 1:
        parts = [_chunk_stats(sampler, seed, a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ab: _chunk_stats(sampler, seed, *ab), bounds))
    total = parts[0]
    for p in parts[1:]:
        total = _merge(total, p)
    n, mean, m2 = total
    return Estimate(sampler.dim, sampler.level, n, mean, m2, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# comparison


@dataclass
class McRecord:
    word: tuple[int, ...]
    mean: float
    se: float
    ref: float
    z: float | None
    flag: str | None = None


@dataclass
class McReport:
    records: list[McRecord]
    n: int
    seed: int | None
    steps: int | None
    wall_time: float = 0.0
    settings: dict = field(default_factory=dict)

    @property
    def z_values(self) -> np.ndarray:
        return np.array([abs(r.z) for r in self.records if r.z is not None])

    @property
    def max_abs_z(self) -> float:
        z = self.z_values
        return float(z.max()) if z.size else 0.0

    def count_above(self, threshold: float) -> int:
        return int((self.z_values > threshold).sum())

    @property
    def frac_gt_3(self) -> float:
        return self.count_above(3.0) / len(self.records) if self.records else 0.0

    @property
    def mismatches(self) -> list[McRecord]:
        return [r for r in self.records if r.flag == "exact_mismatch"]

    def passed(self, threshold: float = 5.0) -> bool:
        return not self.mismatches and self.max_abs_z < threshold

    def summary(self) -> dict:
        return {"n": self.n, "seed": self.seed, "steps": self.steps,
                "max_abs_z": self.max_abs_z, "frac_gt_3": self.frac_gt_3,
                "count_gt_2": self.count_above(2.0), "count_gt_3": self.count_above(3.0),
                "count_gt_4": self.count_above(4.0), "monitored": len(self.records),
                "exact_mismatches": len(self.mismatches)}

    def to_json(self, include_time: bool = False) -> dict:
        recs = []
        for r in self.records:
            rec = {"word": list(r.word), "mean": r.mean, "se": r.se, "ref": r.ref, "z": r.z}
            if r.flag:
                rec["flag"] = r.flag
            recs.append(rec)
        out = {"records": recs, "summary": self.summary()}
        if self.settings:
            out["settings"] = self.settings
        if include_time:
            out["wall_time"] = self.wall_time
        return out


def compare(estimate: Estimate, reference: TensorSeries, seed: int | None = None,
            steps: int | None = None, exact_tol: float = 1e-12) -> McReport:
    """Per-word z-scores of the empirical mean against a reference, degrees 1..N."""
    if (reference.dim, reference.level) != (estimate.dim, estimate.level):
        raise UsageError("reference and estimate have different shapes")
    ref = np.concatenate(reference.to_float().levels)
    se = estimate.se
    records = []
    pos = 1
    for k in range(1, estimate.level + 1):
        for w in words(estimate.dim, k):
            m, s, r = float(estimate.mean[pos]), float(se[pos]), float(ref[pos])
            if s > 0:
                records.append(McRecord(w, m, s, r, (m - r) / s))
            elif abs(m - r) <= exact_tol * max(1.0, abs(r)):
                records.append(McRecord(w, m, s, r, 0.0))
            else:
                records.append(McRecord(w, m, s, r, None, "exact_mismatch"))
            pos += 1
    return McReport(records, estimate.n, seed, steps, estimate.wall_time)


def make_sampler(model, steps: int):
    """Sampler for a parsed ModelSpec (see models.model_from_json)."""
    if model.kind == "random_walk":
        return RandomWalkSampler(model.spec, model.extra["J"] - model.extra["j"])
    if model.kind == "brownian_rough_path":
        return BrownianDevelopmentSampler(model.spec, steps)
    if model.kind == "gaussian_martingale":
        return GaussianMartingaleSampler(model.spec, steps)
    if model.kind == "levy":
        return LevySampler(model.spec, steps)
    raise UsageError(f"no Monte Carlo sampler with a closed-form reference for kind {model.kind!r}")


__all__ = [
    "BrownianDevelopmentSampler", "Estimate", "GaussianMartingaleSampler", "LevySampler", "McRecord",
    "McReport", "RandomWalkSampler", "SeedSpec", "batch_signature", "compare", "estimate_expected_signature",
    "make_sampler", "psd_sqrt", "sample_path",
]

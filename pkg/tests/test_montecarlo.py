import math
from fractions import Fraction

import numpy as np
import pytest

from sigcum import FLOAT, TensorSeries, UsageError, exp_series, signature
from sigcum.models import (
    AtomDistribution,
    BrownianRoughPathSpec,
    GaussianMartingaleSpec,
    LevyPiece,
    LevyTriplet,
    brownian_rough_path_esig,
    simple_walk,
)
from sigcum.montecarlo import (
    BrownianDevelopmentSampler,
    Estimate,
    GaussianMartingaleSampler,
    LevySampler,
    RandomWalkSampler,
    SeedSpec,
    batch_signature,
    compare,
    estimate_expected_signature,
    sample_path,
)
from sigcum.randgen import random_lie, random_series
from sigcum.signatures import CONTINUOUS


def flat_all(x: TensorSeries) -> np.ndarray:
    return np.concatenate(x.to_float().levels)


def single_atom_sampler(rng, J=3):
    x = random_series(rng, 2, 3)
    return x, RandomWalkSampler(AtomDistribution(((Fraction(1), x),)), J)


def test_seed_streams_reproducible_and_distinct():
    s = SeedSpec(42)
    a, b = s.generator(3).standard_normal(4), s.generator(3).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, s.generator(4).standard_normal(4))
    assert not np.array_equal(a, SeedSpec(43).generator(3).standard_normal(4))


def test_deterministic_sampler_has_zero_se(rng):
    x, sampler = single_atom_sampler(rng)
    est = estimate_expected_signature(sampler, 10, seed=1)
    want = exp_series(x) * exp_series(x) * exp_series(x)
    assert np.allclose(est.mean, flat_all(want), atol=1e-12)
    assert np.all(est.se < 1e-12)
    rep = compare(est, want.to_float())
    assert rep.max_abs_z == 0.0 and not rep.mismatches and rep.passed()


def test_exact_mismatch_flagged(rng):
    x, sampler = single_atom_sampler(rng, 1)
    est = estimate_expected_signature(sampler, 4, seed=0)
    wrong = exp_series(x).to_float() + TensorSeries.letter(1, 2, 3, FLOAT) * 0.25
    rep = compare(est, wrong)
    assert [r.word for r in rep.mismatches] == [(1,)]
    assert rep.mismatches[0].z is None
    assert not rep.passed()
    assert rep.summary()["exact_mismatches"] == 1


def test_compare_counts_thresholds():
    est = Estimate(1, 3, 100, np.array([1.0, 0.5, 3.5, -4.5]), np.full(4, 99.0))
    # se = sqrt(99/99/100) = 0.1 on every word
    ref = TensorSeries(1, 3, [np.array([1.0]), np.array([0.25]), np.array([3.2]), np.array([-4.0])], FLOAT)
    rep = compare(est, ref, seed=9, steps=7)
    assert np.allclose([r.z for r in rep.records], [2.5, 3.0, -5.0])
    assert (rep.count_above(2), rep.count_above(3), rep.count_above(4)) == (3, 1, 1)
    assert rep.max_abs_z == pytest.approx(5.0)
    assert not rep.passed(5.0) and rep.passed(5.5)
    s = rep.summary()
    assert (s["seed"], s["steps"], s["monitored"]) == (9, 7, 3)
    assert s["frac_gt_3"] == pytest.approx(1 / 3)


def test_compare_reference_perfect_gives_zero_z():
    est = Estimate(1, 2, 50, np.array([1.0, 0.3, 0.1]), np.full(3, 2.0))
    ref = TensorSeries(1, 2, [np.array([1.0]), np.array([0.3]), np.array([0.1])], FLOAT)
    assert compare(est, ref).max_abs_z == 0.0


def test_compare_shape_mismatch(rng):
    _, sampler = single_atom_sampler(rng)
    est = estimate_expected_signature(sampler, 3)
    with pytest.raises(UsageError):
        compare(est, TensorSeries.one(2, 2, FLOAT))


def test_antithetic_pair_degree_one_cancels(rng):
    inc = np.stack([rng.normal(size=(5, 2 + 4))])
    both = np.concatenate([inc, -inc])
    sig = batch_signature(both, 2, 2)
    assert np.allclose(sig.mean(axis=0)[1:3], 0.0, atol=1e-14)


def test_worker_count_does_not_change_result():
    sampler = BrownianDevelopmentSampler(
        BrownianRoughPathSpec(2, 2, ((1,), (2,), (1, 2)), ((1, 0, 0), (0, 1, 0), (0, 0, 1))), 8)
    a = estimate_expected_signature(sampler, 700, seed=5, workers=1, chunk=128)
    b = estimate_expected_signature(sampler, 700, seed=5, workers=4, chunk=128)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.m2, b.m2)
    c = estimate_expected_signature(sampler, 700, seed=6, workers=1, chunk=128)
    assert not np.array_equal(a.mean, c.mean)


def test_worker_count_from_environment(monkeypatch):
    sampler = RandomWalkSampler(simple_walk(2, 3, FLOAT), 4)
    base = estimate_expected_signature(sampler, 300, seed=2, chunk=64)
    monkeypatch.setenv("SIGCUM_THREADS", "3")
    assert np.array_equal(estimate_expected_signature(sampler, 300, seed=2, chunk=64).mean, base.mean)


def test_se_is_sample_std_over_root_n():
    sampler = RandomWalkSampler(simple_walk(2, 3, FLOAT), 3)
    seed = SeedSpec(11)
    n = 40
    est = estimate_expected_signature(sampler, n, seed=seed, chunk=16)
    sigs = np.stack([flat_all(signature(sample_path(sampler, seed, i))) for i in range(n)])
    assert np.allclose(est.mean, sigs.mean(axis=0), atol=1e-13)
    assert np.allclose(est.se, sigs.std(axis=0, ddof=1) / math.sqrt(n), atol=1e-13)


def test_se_scales_like_inverse_root_n():
    sampler = BrownianDevelopmentSampler(BrownianRoughPathSpec(2, 1, ((1,), (2,)), ((1, 0), (0, 1))), 10)
    small = estimate_expected_signature(sampler, 10_000, seed=3)
    big = estimate_expected_signature(sampler, 40_000, seed=4)
    ratio = small.se[1:] / big.se[1:]
    assert np.all(np.abs(ratio / 2.0 - 1.0) < 0.2)


def test_too_few_samples(rng):
    _, sampler = single_atom_sampler(rng)
    with pytest.raises(UsageError):
        estimate_expected_signature(sampler, 1)


def test_random_walk_zero_steps_is_empty():
    sampler = RandomWalkSampler(simple_walk(2, 3, FLOAT), 0)
    p = sample_path(sampler, SeedSpec(0), 0)
    assert p.steps == 0
    assert signature(p) == TensorSeries.one(2, 3, FLOAT)
    with pytest.raises(UsageError):
        RandomWalkSampler(simple_walk(2, 3, FLOAT), -1)


def test_brownian_zero_correlation_is_trivial():
    spec = BrownianRoughPathSpec(2, 2, ((1,), (1, 2)), ((0, 0), (0, 0)))
    sampler = BrownianDevelopmentSampler(spec, 6)
    est = estimate_expected_signature(sampler, 20, seed=0)
    assert np.allclose(est.mean, flat_all(TensorSeries.one(2, 4)), atol=0)
    assert np.all(est.se == 0)
    assert compare(est, brownian_rough_path_esig(spec)).passed()


def test_brownian_pure_drift(rng):
    drift = random_lie(rng, 2, 4, 2).to_float()
    spec = BrownianRoughPathSpec(2, 2, ((1,),), ((0,),), drift, Fraction(3, 2))
    est = estimate_expected_signature(BrownianDevelopmentSampler(spec, 5), 5)
    assert np.allclose(est.mean, flat_all(exp_series(drift * 1.5)), atol=1e-12)


def test_levy_zero_triplet_is_constant():
    zero = TensorSeries.zero(2, 3, FLOAT)
    sampler = LevySampler(LevyTriplet((0.0, 1.0), (LevyPiece(zero),)), 4)
    p = sample_path(sampler, SeedSpec(1), 0)
    assert all(x.is_zero() for x in p.increments)
    assert signature(p) == TensorSeries.one(2, 3, FLOAT)


def test_levy_pure_drift(rng):
    b = random_series(rng, 2, 3).to_float()
    trip = LevyTriplet((0.0, 0.5, 2.0), (LevyPiece(b), LevyPiece(b)))
    est = estimate_expected_signature(LevySampler(trip, 7), 3)
    assert np.allclose(est.mean, flat_all(exp_series(b * 2.0)), atol=1e-12)
    assert np.all(est.se < 1e-12)


def test_levy_small_jump_compensated_in_drift():
    e1 = TensorSeries.letter(1, 1, 2, FLOAT)
    trip = LevyTriplet((0.0, 1.0), (LevyPiece(TensorSeries.zero(1, 2, FLOAT), jumps=((4.0, e1 * 0.5),)),))
    sampler = LevySampler(trip, 3)
    # expected degree-1 increment is zero: jump mean 4 * 0.5 is cancelled
    est = estimate_expected_signature(sampler, 4000, seed=8)
    assert abs(est.mean[1]) < 4 * est.se[1]
    assert sampler.pieces[0][0][0] == pytest.approx(-2.0)


def levy_mixed():
    e1, e2 = TensorSeries.letter(1, 2, 3, FLOAT), TensorSeries.letter(2, 2, 3, FLOAT)
    area = e1 * e2 - e2 * e1
    piece = LevyPiece(e1 * 0.2, (e1, area), ((1.0, 0.3), (0.3, 0.5)), ((1.5, e2 * 2.0), (2.0, e1 * 0.4 + area * 0.1)))
    return LevyTriplet((0.0, 0.4, 1.0), (piece, LevyPiece(e2 * -0.1, (e2,), ((0.7,),))))


@pytest.mark.parametrize("make", [
    lambda: RandomWalkSampler(simple_walk(2, 3, FLOAT), 5),
    lambda: BrownianDevelopmentSampler(BrownianRoughPathSpec(2, 2, ((1,), (1, 2)), ((1, 0.5), (0.5, 1))), 6),
    lambda: GaussianMartingaleSampler(GaussianMartingaleSpec((0.0, 0.5, 1.0), (np.eye(2), [[1, 0.5], [0, 2]]), 3), 6),
    lambda: LevySampler(levy_mixed(), 5),
])
def test_batch_signature_matches_single_paths(make):
    sampler = make()
    seed = SeedSpec(77)
    for i in range(5):
        inc, tags = sampler.draw(seed.generator(i))
        batch = batch_signature(inc[None], sampler.dim, sampler.level, sampler.level1_only)[0]
        assert np.allclose(batch, flat_all(signature(sample_path(sampler, seed, i))), atol=1e-12)
        if sampler.level1_only:
            assert np.allclose(batch, batch_signature(inc[None], sampler.dim, sampler.level)[0], atol=1e-12)


def test_levy_jump_rows_tagged():
    sampler = LevySampler(levy_mixed(), 5)
    for i in range(10):
        inc, tags = sampler.draw(SeedSpec(3).generator(i))
        assert len(tags) == inc.shape[0]
        assert tags.count(CONTINUOUS) >= 5


def piecewise_linear_bm_esig(h: float, steps: int) -> np.ndarray:
    """Exact expected signature of piecewise-linear 2d Brownian motion at level 4."""
    dim, level = 2, 4
    m = [np.ones(1), np.zeros(2), h * np.eye(2).ravel() / 2, np.zeros(8), np.zeros(16)]
    fourth = np.zeros((2,) * 4)
    for a, b, c, d in np.ndindex(2, 2, 2, 2):
        fourth[a, b, c, d] = (a == b) * (c == d) + (a == c) * (b == d) + (a == d) * (b == c)
    m[4] = h * h * fourth.ravel() / 24
    step = TensorSeries(dim, level, m, FLOAT)
    out = TensorSeries.one(dim, level, FLOAT)
    for _ in range(steps):
        out = out * step
    return flat_all(out)


def test_discretisation_bias_shrinks_with_steps():
    exact = flat_all(brownian_rough_path_esig(BrownianRoughPathSpec(2, 2, ((1,), (2,)), ((1, 0), (0, 1)))))
    errs = [np.abs(piecewise_linear_bm_esig(1.0 / s, s) - exact).max() for s in (25, 50, 100)]
    assert errs[0] > errs[1] > errs[2] > 0
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)


def test_piecewise_linear_bias_visible_in_sampler():
    # the sampler targets the discretised law; with few steps the bias dominates the noise
    spec = BrownianRoughPathSpec(2, 2, ((1,), (2,)), ((1, 0), (0, 1)))
    est = estimate_expected_signature(BrownianDevelopmentSampler(spec, 2), 20_000, seed=12)
    target = piecewise_linear_bm_esig(0.5, 2)
    z = (est.mean[1:] - target[1:]) / np.where(est.se[1:] > 0, est.se[1:], 1.0)
    assert np.abs(z).max() < 5

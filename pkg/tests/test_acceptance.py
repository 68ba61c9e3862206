"""Acceptance criteria 1 to 13, each at its stated tolerance.

Every test records one PASS/FAIL line; conftest prints the collected lines
in the terminal summary. Run ``pytest tests/test_acceptance.py -v`` or
``python tests/test_acceptance.py``.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

import oracle
from sigcum import (
    FLOAT,
    DrivePath,
    FiltrationTree,
    TensorSeries,
    apply_G,
    apply_H,
    bch_exact,
    bch_log_signature,
    bch_psi,
    dilate,
    dynkin_is_lie,
    exp_series,
    expected_signature_direct,
    expected_signature_recursive,
    log_series,
    project_sym,
    signature,
    sym_exp,
)
from sigcum.filtration import random_tree, residual_fields
from sigcum.lie import lyndon_bracket
from sigcum.models import (
    BrownianRoughPathSpec,
    GaussianMartingaleSpec,
    LevyPiece,
    LevyTriplet,
    area_walk,
    brownian_rough_path_esig,
    eta_integral_norms,
    gaussian_magnus_cumulants,
    gaussian_moments,
    levy_eta_piece,
    levy_expected_signature,
    radius_bound_check,
    rw_expected_signature,
    simple_walk,
)
from sigcum.montecarlo import (
    BrownianDevelopmentSampler,
    LevySampler,
    compare,
    estimate_expected_signature,
)
from sigcum.multivariate import (
    classical_cumulant_oracle,
    cumulants_from_sym,
    discrete_K_recursion,
    gaussian_diamond_cumulants,
    moments_from_sym,
    multivariate_cumulants,
    multivariate_moments,
    quadratic_variation_correction,
)
from sigcum.randgen import random_lie, random_series, random_vector_series
from sigcum.verify import coin_tree

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def max_err(a: TensorSeries, b: TensorSeries) -> float:
    return float(np.max(np.abs(a.to_float().flat() - b.to_float().flat())))


def test_criterion_01_bch_identity():
    rng = np.random.default_rng(101)
    ok = True
    with Timer() as t:
        for _ in range(20):
            x, y = random_series(rng, 2, 5), random_series(rng, 2, 5)
            ref = bch_exact(x, y)
            ok &= bch_psi(x, y) == ref and bch_log_signature([x, y]) == ref
        e1, e2 = TensorSeries.letter(1, 2, 3), TensorSeries.letter(2, 2, 3)
        z = bch_exact(e1, e2)
        # independent route: log(exp(e1) exp(e2)) in dict arithmetic
        want = oracle.log(oracle.mul(oracle.exp({(1,): Fraction(1)}, 3), oracle.exp({(2,): Fraction(1)}, 3), 3), 3)
        c12 = z[(1, 2)]
        c112 = z[(1, 1, 2)]
        c122 = z[(1, 2, 2)]
        shape = (e1 + e2 + lyndon_bracket((1, 2), 2, 3) * Fraction(1, 2)
                 + lyndon_bracket((1, 1, 2), 2, 3) * Fraction(1, 12)
                 + lyndon_bracket((1, 2, 2), 2, 3) * Fraction(1, 12))
    coeffs_ok = oracle.to_dict(z) == want and z == shape and c12 == Fraction(1, 2) and c112 == Fraction(1, 12)
    record(1, bool(ok and coeffs_ok and t.seconds < 10),
           f"20 pairs exact; level-3 coefficients [1,2]: {c12}, e112: {c112}, e122: {c122}; {t.seconds:.2f}s")


def test_criterion_02_H_inverts_G():
    rng = np.random.default_rng(202)
    ok = True
    with Timer() as t:
        for _ in range(50):
            x, v = random_series(rng, 2, 6), random_series(rng, 2, 6)
            ok &= apply_H(x, apply_G(x, v)) == v
    record(2, bool(ok and t.seconds < 10), f"50 exact pairs, N=6; {t.seconds:.2f}s")


def test_criterion_03_chen_relation():
    rng = np.random.default_rng(303)
    ok, triples = True, 0
    for _ in range(10):
        p = DrivePath.from_increments([random_vector_series(rng, 3, 4) for _ in range(8)])
        sigs = {(s, u): signature(p, s, u) for s in range(9) for u in range(s, 9)}
        for s in range(9):
            for t in range(s, 9):
                for u in range(t, 9):
                    ok &= sigs[(s, t)] * sigs[(t, u)] == sigs[(s, u)]
                    triples += 1
    record(3, bool(ok), f"{triples} triples exact on 10 paths, d=3, N=4")


def test_criterion_04_log_signature_is_lie():
    rng = np.random.default_rng(404)
    ok = True
    for _ in range(10):
        xs = [random_lie(rng, 2, 5, 3) for _ in range(4)]
        prod = TensorSeries.one(2, 5)
        for x in xs:
            prod = prod * exp_series(x)
        flags = dynkin_is_lie(log_series(prod))
        ok &= all(flags[n] for n in range(1, 6))
    record(4, bool(ok), "Dynkin criterion holds at degrees 1..5 for 10 products of 4 exponentials")


def test_criterion_05_recursive_equals_direct():
    rng = np.random.default_rng(505)
    ok, leaves = True, 0
    for i in range(20):
        depth = 1 + i % 5
        level = 1 + (i % 4)
        tree = random_tree(rng, depth, 3, int(rng.integers(1, 3)), level)
        leaves += len(tree.levels[tree.depth])
        ok &= expected_signature_recursive(tree) == expected_signature_direct(tree)
        one_step, summed = residual_fields(tree)
        ok &= all(v.is_zero() for v in (*one_step.values(), *summed.values()))
    record(5, bool(ok), f"20 trees ({leaves} leaves), depth <= 5, branching <= 3, N <= 4; residuals exactly 0")


def test_criterion_06_random_walk():
    dist = simple_walk(2, 4)
    exact = True
    for J in range(1, 7):
        tree = FiltrationTree.from_steps(list(dist.atoms), J)
        exact &= expected_signature_recursive(tree)[tree.root] == rw_expected_signature(dist, J)
    # the J = 6 tree has 4096 leaves; brute force on the smaller ones
    for J in range(1, 5):
        tree = FiltrationTree.from_steps(list(dist.atoms), J)
        exact &= expected_signature_direct(tree)[tree.root] == rw_expected_signature(dist, J)
    e1, e2 = TensorSeries.letter(1, 2, 4), TensorSeries.letter(2, 2, 4)
    limit = exp_series((e1 * e1 + e2 * e2) * Fraction(1, 2))
    errs = []
    for J in (64, 128, 256):
        scaled = dilate(rw_expected_signature(dist, J).to_float(), 1 / math.sqrt(J))
        errs.append(max_err(scaled, limit))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = exact and all(abs(r - 2) <= 0.6 for r in ratios)
    record(6, bool(ok), f"M^J exact for J <= 6; errors {errs[0]:.3e}, {errs[1]:.3e}, {errs[2]:.3e}; "
           f"ratios {ratios[0]:.3f}, {ratios[1]:.3f} (target 2 +- 30%)")


@pytest.mark.slow
def test_criterion_07_fawcett_monte_carlo():
    spec = BrownianRoughPathSpec(2, 2, ((1,), (2,)), ((1, 0), (0, 1)))
    with Timer() as t:
        est = estimate_expected_signature(BrownianDevelopmentSampler(spec, 100), 100_000, seed=20240611)
    rep = compare(est, brownian_rough_path_esig(spec), 20240611, 100)
    ok = rep.max_abs_z < 4 and rep.frac_gt_3 < 0.01 and not rep.mismatches and t.seconds < 300
    record(7, bool(ok), f"max |z| {rep.max_abs_z:.2f} over {len(rep.records)} words; "
           f"frac |z|>3 {rep.frac_gt_3:.4f}; {t.seconds:.1f}s")


def test_criterion_08_pure_area_limit():
    d = 3
    dist = area_walk(d, 4)
    area_sq = TensorSeries.zero(d, 4)
    for i in range(1, d + 1):
        for j in range(i + 1, d + 1):
            b = lyndon_bracket((i, j), d, 4)
            area_sq = area_sq + b * b
    target = exp_series(area_sq * Fraction(2, d * (d - 1)))
    errs = {J: max_err(dilate(rw_expected_signature(dist, J).to_float(), J ** -0.25), target) for J in (64, 256)}
    ratio = errs[64] / errs[256]
    # O(J^-1/2) decay means the error shrinks by a factor 2 from J = 64 to J = 256
    ok = abs(ratio - 2) <= 0.6
    # diagnostic only: distance to the limit with coefficient 1/(d(d-1)), the mean-square area per step / 2
    alt = exp_series(area_sq * Fraction(1, d * (d - 1)))
    alt_err = max_err(dilate(rw_expected_signature(dist, 256).to_float(), 256 ** -0.25), alt)
    record(8, bool(ok), f"errors J=64: {errs[64]:.3e}, J=256: {errs[256]:.3e}; ratio {ratio:.3f} (target 2 +- 30%); "
           f"error against coefficient 1/(d(d-1)) at J=256: {alt_err:.1e}")


def test_criterion_09_gaussian_magnus():
    s1 = np.array([[1.0, 0.0], [0.5, 0.8]])
    s2 = np.array([[0.3, -0.7], [0.9, 0.2]])
    h = 1.0 / 1024
    spec = GaussianMartingaleSpec((0.0, 0.4, 1.0), (s1, s2), 6, h)
    mu = gaussian_moments(spec)
    kappa = gaussian_magnus_cumulants(spec)
    err = max_err(exp_series(kappa), mu)
    odd = all(not np.any(x.levels[n]) for x in (mu, kappa) for n in (1, 3, 5))
    a1, a2 = s1 @ s1.T, s2 @ s2.T
    noncommuting = np.abs(a1 @ a2 - a2 @ a1).max() > 0.1
    record(9, bool(err < 10 * h * h and odd and noncommuting),
           f"max |exp(kappa) - mu| {err:.3e} < {10 * h * h:.3e}; odd degrees exactly 0")


def levy_d1(level):
    e = TensorSeries.letter(1, 1, level, FLOAT)
    piece = LevyPiece(e * 0.3, (e,), ((0.5,),), ((1.0, e), (1.0, -e)))
    return LevyTriplet((0.0, 1.0), (piece,), 1.0 / 1024), piece


@pytest.mark.slow
def test_criterion_10_levy():
    h = 1.0 / 1024
    trip, piece = levy_d1(8)
    quad = levy_expected_signature(trip)
    via_sig = levy_expected_signature(trip, method="signature")
    q_err = max_err(quad, via_sig)
    mc_trip, _ = levy_d1(8)
    with Timer() as t:
        est = estimate_expected_signature(LevySampler(mc_trip, 100), 100_000, seed=7)
    rep = compare(est, quad, 7, 100)
    norms = eta_integral_norms(trip.cells(0.0, None, None), [levy_eta_piece(piece)])
    bounds = radius_bound_check(quad, norms, (0.5, 1.0, 2.0))
    margins = ", ".join(f"lambda={r.lam:g}: {r.margin:.4g}" for r in bounds)
    ok = q_err < 10 * h * h and rep.max_abs_z < 4 and not rep.mismatches and all(r.holds for r in bounds)
    record(10, bool(ok), f"quadrature vs signature {q_err:.2e}; MC max |z| {rep.max_abs_z:.2f} "
           f"({t.seconds:.1f}s); radius margins {margins}")


@pytest.mark.slow
def test_criterion_11_rough_path_with_drift():
    A = Fraction(1, 2)
    drift = lyndon_bracket((1, 2), 2, 2).to_float() * float(A)
    spec = BrownianRoughPathSpec(2, 1, ((1,), (2,)), ((1, 0), (0, 1)), drift)
    with Timer() as t:
        est = estimate_expected_signature(BrownianDevelopmentSampler(spec, 200), 100_000, seed=11)
    rep = compare(est, brownian_rough_path_esig(spec), 11, 200)
    ok = rep.max_abs_z < 4 and not rep.mismatches
    record(11, bool(ok), f"A={A}; max |z| {rep.max_abs_z:.2f} over {len(rep.records)} words; {t.seconds:.1f}s")


def test_criterion_12_multivariate_cumulants():
    ok = True
    for p, values in ((Fraction(1, 2), (1, -1)), (Fraction(1, 3), (1, 0))):
        for depth in (1, 3):
            tree = coin_tree(6, p, values, depth)
            k = multivariate_cumulants(tree)[tree.root]
            moments = moments_from_sym(multivariate_moments(tree)[tree.root])
            ok &= cumulants_from_sym(k) == classical_cumulant_oracle(moments, 1, 6)
            xi = {leaf: project_sym(tree.nodes[leaf].value) for leaf in tree.levels[tree.depth]}
            ok &= discrete_K_recursion(tree, xi).all_zero()
    h = 1.0 / 1024
    s1 = np.array([[1.0, 0.2], [0.4, 0.9]])
    s2 = np.array([[0.5, -0.3], [0.1, 1.1]])
    spec = GaussianMartingaleSpec((0.0, 0.5, 1.0), (s1, s2), 4, h)
    K = gaussian_diamond_cumulants(spec, quadratic_variation_correction(spec))
    ok &= K.max_abs() < 10 * h * h
    record(12, bool(ok), f"partition oracle and recursion residuals exact on fair coin and Bernoulli(1/3); "
           f"Gaussian |K| {K.max_abs():.2e} < {10 * h * h:.2e}")


def test_criterion_13_projection_naturality():
    rng = np.random.default_rng(1313)
    ok = True
    for _ in range(10):
        p = DrivePath.from_increments([random_vector_series(rng, 2, 4) for _ in range(5)])
        total = sum(p.increments, TensorSeries.zero(2, 4))
        ok &= project_sym(signature(p)) == sym_exp(project_sym(total))
    record(13, bool(ok), "exact on 10 random 5-step paths, d=2, N=4")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))

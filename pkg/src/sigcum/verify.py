"""Invariant suites shared by the CLI ``verify`` command and the tests."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import algebra as alg
from .algebra import FLOAT, TensorSeries, UsageError, norm_max
from .filtration import (
    FiltrationTree,
    chen_martingale_residual,
    discrete_cumulants,
    expected_signature_direct,
    expected_signature_recursive,
    random_tree,
    residual_fields,
)
from .lie import apply_G, apply_H, bch_exact, bch_log_signature, bch_psi, dynkin_is_lie, lyndon_bracket
from .models import (
    BrownianRoughPathSpec,
    LevyPiece,
    LevyTriplet,
    brownian_rough_path_esig,
    eta_integral_norms,
    levy_eta_piece,
    levy_expected_signature,
    quadrature_cells,
    radius_bound_check,
)
from .multivariate import (
    classical_cumulant_oracle,
    cumulants_from_sym,
    discrete_K_recursion,
    moments_from_sym,
    multivariate_cumulants,
    multivariate_moments,
    project_sym,
    sym_exp,
    sym_log,
)
from .randgen import random_lie, random_series, random_vector_series
from .signatures import DrivePath, SignaturePrefix, signature

SUITES = ("algebra", "bch", "chen", "tree", "multivariate", "radius")


@dataclass
class Check:
    name: str
    passed: bool
    residual: float = 0.0
    detail: str = ""

    def to_json(self) -> dict:
        out = {"name": self.name, "passed": self.passed, "residual": self.residual}
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass
class SuiteReport:
    suite: str
    settings: dict
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, residual: float, tol: float = 0.0, detail: str = "") -> None:
        self.checks.append(Check(name, bool(residual <= tol), float(residual), detail))

    def to_json(self) -> dict:
        return {"suite": self.suite, "settings": self.settings, "passed": self.passed,
                "checks": [c.to_json() for c in self.checks]}


def _res(x: TensorSeries) -> float:
    """Largest absolute coefficient; exact zero stays exactly 0.0."""
    return 0.0 if x.is_zero() else norm_max(x)


def suite_algebra(level: int, dim: int, count: int, seed: int) -> SuiteReport:
    rep = SuiteReport("algebra", {"level": level, "dim": dim, "count": count, "seed": seed})
    rng = np.random.default_rng(seed)
    worst = {"exp_log_roundtrip": 0.0, "group_inverse": 0.0, "associativity": 0.0, "json_roundtrip": 0.0}
    for _ in range(count):
        x = random_series(rng, dim, level)
        a, b, c = (random_series(rng, dim, level, 0) for _ in range(3))
        worst["exp_log_roundtrip"] = max(worst["exp_log_roundtrip"], _res(alg.log_series(alg.exp_series(x)) - x))
        s = alg.exp_series(x)
        worst["group_inverse"] = max(worst["group_inverse"], _res(alg.group_inverse(s) * s - 1))
        worst["associativity"] = max(worst["associativity"], _res((a * b) * c - a * (b * c)))
        back = alg.series_from_json(json.loads(json.dumps(alg.series_to_json(a))))
        worst["json_roundtrip"] = max(worst["json_roundtrip"], _res(back - a))
    for name, r in worst.items():
        rep.add(name, r)
    return rep


def suite_bch(level: int, dim: int, count: int, seed: int) -> SuiteReport:
    rep = SuiteReport("bch", {"level": level, "dim": dim, "count": count, "seed": seed})
    rng = np.random.default_rng(seed)
    psi, rec, hg = 0.0, 0.0, 0.0
    for _ in range(count):
        x, y = random_series(rng, dim, level), random_series(rng, dim, level)
        ref = bch_exact(x, y)
        psi = max(psi, _res(bch_psi(x, y) - ref))
        rec = max(rec, _res(bch_log_signature([x, y]) - ref))
        v = random_series(rng, dim, level)
        hg = max(hg, _res(apply_H(x, apply_G(x, v)) - v))
    rep.add("bch_psi_equals_exact", psi)
    rep.add("bch_recursion_equals_exact", rec)
    rep.add("H_inverts_G", hg)
    if level >= 3 and dim >= 2:
        e1, e2 = (TensorSeries.letter(i, dim, 3) for i in (1, 2))
        b = lyndon_bracket
        expect = (e1 + e2 + b((1, 2), dim, 3) * Fraction(1, 2) + b((1, 1, 2), dim, 3) * Fraction(1, 12)
                  + b((1, 2, 2), dim, 3) * Fraction(1, 12))
        rep.add("level3_coefficients", _res(bch_exact(e1, e2) - expect))
    return rep


def suite_chen(level: int, dim: int, count: int, seed: int, steps: int = 6) -> SuiteReport:
    rep = SuiteReport("chen", {"level": level, "dim": dim, "count": count, "seed": seed, "steps": steps})
    rng = np.random.default_rng(seed)
    chen, lie = 0.0, True
    for _ in range(count):
        path = DrivePath.from_increments([random_vector_series(rng, dim, level) for _ in range(steps)])
        pre = SignaturePrefix(path)
        for s in range(steps + 1):
            for t in range(s, steps + 1):
                for u in range(t, steps + 1):
                    chen = max(chen, _res(pre(s, t) * pre(t, u) - pre(s, u)))
        lie_path = DrivePath.from_increments([random_lie(rng, dim, level, 2) for _ in range(3)])
        lie = lie and all(dynkin_is_lie(alg.log_series(signature(lie_path))).values())
    rep.add("chen_relation", chen)
    rep.add("log_signature_is_lie", 0.0 if lie else 1.0)
    return rep


def shipped_trees() -> list[tuple[str, dict]]:
    base = resources.files("sigcum") / "data" / "trees"
    return [(p.name, json.loads(p.read_text())) for p in sorted(base.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".json")]


def check_tree(rep: SuiteReport, name: str, obj: dict) -> None:
    tree = FiltrationTree.from_json(obj)
    direct = expected_signature_direct(tree)
    rec = expected_signature_recursive(tree)
    rep.add(f"{name}:recursive_equals_direct", max(_res(rec[n] - direct[n]) for n in tree.nodes))
    kappa = discrete_cumulants(tree, rec)
    one_step, summed = residual_fields(tree, kappa)
    rep.add(f"{name}:one_step_identity", max(_res(v) for v in one_step.values()))
    rep.add(f"{name}:summed_H_identity", max(_res(v) for v in summed.values()))
    chen = 0.0
    for j in range(tree.depth):
        chen = max(chen, max(_res(v) for v in chen_martingale_residual(tree, j, rec).values()))
    rep.add(f"{name}:chen_martingale", chen)
    if "claimed_mu0" in obj:
        claimed = alg.series_from_json(obj["claimed_mu0"])
        rep.add(f"{name}:claimed_root_expected_signature", _res(claimed - rec[tree.root]))


def suite_tree(level: int, dim: int, count: int, seed: int, trees: Sequence[tuple[str, dict]] | None = None) -> SuiteReport:
    rep = SuiteReport("tree", {"level": level, "dim": dim, "count": count, "seed": seed})
    for name, obj in (shipped_trees() if trees is None else trees):
        check_tree(rep, name, obj)
    rng = np.random.default_rng(seed)
    for i in range(count):
        depth = int(rng.integers(1, 4))
        tree = random_tree(rng, depth, 3, dim, level)
        check_tree(rep, f"random{i}", tree.to_json())
    return rep


def coin_tree(level: int, p: Fraction = Fraction(1, 2), values=(1, -1), depth: int = 1) -> FiltrationTree:
    up, down = (TensorSeries.from_vector([v], level) for v in values)
    return FiltrationTree.from_steps([(p, up), (1 - p, down)], depth)


def suite_multivariate(level: int, dim: int, count: int, seed: int) -> SuiteReport:
    rep = SuiteReport("multivariate", {"level": level, "dim": dim, "count": count, "seed": seed})
    cases = {"fair_coin": coin_tree(level), "bernoulli_third": coin_tree(level, Fraction(1, 3), (1, 0))}
    for name, tree in cases.items():
        k = multivariate_cumulants(tree)[tree.root]
        oracle = classical_cumulant_oracle(moments_from_sym(multivariate_moments(tree)[tree.root]), 1, level)
        got = cumulants_from_sym(k)
        rep.add(f"{name}:partition_oracle", max(abs(float(got[m] - oracle[m])) for m in oracle))
    rng = np.random.default_rng(seed)
    worst_k, worst_nat = 0.0, 0.0
    for _ in range(count):
        tree = random_tree(rng, int(rng.integers(1, 4)), 2, dim, level, increment_degree=1)
        xi = {leaf: project_sym(tree.nodes[leaf].value) for leaf in tree.levels[tree.depth]}
        worst_k = max(worst_k, discrete_K_recursion(tree, xi).max_residual())
        kappa = discrete_cumulants(tree)
        mom = multivariate_moments(tree, 0)[tree.root]
        diff = project_sym(kappa[tree.root]) - sym_log(mom)
        worst_nat = max(worst_nat, diff.max_abs())
        path = DrivePath.from_increments([random_vector_series(rng, dim, level) for _ in range(4)])
        total = sum((inc for inc in path.increments), TensorSeries.zero(dim, level))
        worst_nat = max(worst_nat, (project_sym(signature(path)) - sym_exp(project_sym(total))).max_abs())
    rep.add("cumulant_recursion_identities", worst_k)
    rep.add("projection_naturality", worst_nat)
    return rep


def suite_radius(level: int, dim: int, count: int, seed: int,
                 lambdas: Sequence[float] = (0.5, 1.0, 2.0)) -> SuiteReport:
    rep = SuiteReport("radius", {"level": level, "dim": dim, "lambdas": list(lambdas)})
    T = 1.0
    bm = BrownianRoughPathSpec(dim, max(1, level // 2), tuple((i,) for i in range(1, dim + 1)),
                               tuple(tuple(Fraction(int(i == j)) for j in range(dim)) for i in range(dim)))
    mu = brownian_rough_path_esig(bm).to_float()
    eta = bm.sigma_element().to_float() * 0.5
    norms = [T * v for v in alg.level_norms(eta)]
    for r in radius_bound_check(mu, norms, lambdas):
        rep.add(f"brownian:lambda={r.lam:g}", max(0.0, r.lhs - r.rhs), detail=f"lhs={r.lhs:.6g} rhs={r.rhs:.6g}")
    e = TensorSeries.letter(1, 1, level, FLOAT)
    piece = LevyPiece(e * 0.2, (e,), ((1.0,),), ((0.5, e), (0.5, -e)))
    trip = LevyTriplet((0.0, T), (piece,))
    mu = levy_expected_signature(trip)
    cells = quadrature_cells(trip.grid, 0.0, T, T / 1024)
    norms = eta_integral_norms(cells, [levy_eta_piece(piece)])
    for r in radius_bound_check(mu, norms, lambdas):
        rep.add(f"levy:lambda={r.lam:g}", max(0.0, r.lhs - r.rhs), detail=f"lhs={r.lhs:.6g} rhs={r.rhs:.6g}")
    return rep


def run_suite(name: str, level: int = 4, dim: int = 2, count: int = 5, seed: int = 0,
              tree_files: Sequence[str | Path] | None = None) -> SuiteReport:
    if name not in SUITES:
        raise UsageError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    if level < 1 or dim < 1 or count < 0:
        raise UsageError("level and dim must be positive, count nonnegative")
    if name == "tree":
        trees = None
        if tree_files:
            trees = []
            for f in tree_files:
                try:
                    trees.append((Path(f).name, json.loads(Path(f).read_text())))
                except (OSError, json.JSONDecodeError) as exc:
                    raise UsageError(f"cannot read tree file {f}: {exc}") from exc
        return suite_tree(level, dim, count, seed, trees)
    fn: Callable[..., SuiteReport] = {
        "algebra": suite_algebra, "bch": suite_bch, "chen": suite_chen,
        "multivariate": suite_multivariate, "radius": suite_radius,
    }[name]
    return fn(level, dim, count, seed)

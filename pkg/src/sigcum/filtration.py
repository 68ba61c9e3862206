"""Finite probability trees: exact conditional expectations and expected signatures.

A tree of depth J models a filtration G_0 c ... c G_J; each node at level j
is an atom of G_j and carries the process value X_j. Expected signatures
mu_j = E[S_j^{-1} S_J | G_j] and cumulants kappa_j = log mu_j are computed
both by brute-force path enumeration and by the degree-wise recursion, and
the discrete martingale identities are evaluated exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .algebra import (
    RATIONAL,
    TensorSeries,
    UsageError,
    _outer,
    _zeros,
    compositions,
    exp_series,
    log_series,
    parse_rational,
    series_from_json,
    series_to_json,
)
from .lie import apply_H

NodeField = dict[int, TensorSeries]


@dataclass(frozen=True)
class Node:
    id: int
    parent: int | None
    prob: Fraction
    value: TensorSeries
    depth: int


class FiltrationTree:
    """Rooted tree with rational transition probabilities; all leaves sit at depth J."""

    def __init__(self, nodes: Sequence[Node]):
        if not nodes:
            raise UsageError("tree needs at least a root")
        by_id = {n.id: n for n in nodes}
        if len(by_id) != len(nodes):
            raise UsageError("duplicate node ids")
        roots = [n for n in nodes if n.parent is None]
        if len(roots) != 1:
            raise UsageError(f"tree needs exactly one root, found {len(roots)}")
        self.root = roots[0].id
        children: dict[int, list[int]] = {n.id: [] for n in nodes}
        for n in nodes:
            if n.parent is not None:
                if n.parent not in by_id:
                    raise UsageError(f"node {n.id}: unknown parent {n.parent}")
                if n.depth != by_id[n.parent].depth + 1:
                    raise UsageError(f"node {n.id}: depth inconsistent with parent")
                if n.prob <= 0:
                    raise UsageError(f"node {n.id}: transition probability must be positive")
                children[n.parent].append(n.id)
        ref = roots[0].value
        for n in nodes:
            if (n.value.dim, n.value.level, n.value.scalar) != (ref.dim, ref.level, ref.scalar):
                raise UsageError(f"node {n.id}: value incompatible with root")
        depth = max(n.depth for n in nodes)
        for n in nodes:
            kids = children[n.id]
            if kids:
                total = sum(by_id[c].prob for c in kids)
                if total != 1:
                    raise UsageError(f"node {n.id}: child probabilities sum to {total}, not 1")
            elif n.depth != depth:
                raise UsageError(f"node {n.id}: leaf at depth {n.depth} but tree depth is {depth}")
        self.nodes = by_id
        self.children = {k: tuple(v) for k, v in children.items()}
        self.depth = depth
        self.levels: list[list[int]] = [[] for _ in range(depth + 1)]
        for n in sorted(nodes, key=lambda n: n.id):
            self.levels[n.depth].append(n.id)
        self.dim, self.level, self.scalar = ref.dim, ref.level, ref.scalar

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, root_value: TensorSeries,
              expand: Callable[[int, TensorSeries], Sequence[tuple[Fraction, TensorSeries]]],
              depth: int) -> FiltrationTree:
        """Grow a tree: ``expand(level, value)`` lists (probability, child value)."""
        nodes = [Node(0, None, Fraction(1), root_value, 0)]
        frontier = [0]
        for j in range(depth):
            nxt = []
            for nid in frontier:
                for p, val in expand(j, nodes[nid].value):
                    nodes.append(Node(len(nodes), nid, Fraction(p), val, j + 1))
                    nxt.append(len(nodes) - 1)
            frontier = nxt
        return cls(nodes)

    @classmethod
    def from_steps(cls, atoms: Sequence[tuple[Fraction, TensorSeries]], depth: int,
                   start: TensorSeries | None = None) -> FiltrationTree:
        """IID increments drawn from ``atoms`` at every node."""
        ref = atoms[0][1]
        start = TensorSeries.zero(ref.dim, ref.level, ref.scalar) if start is None else start
        return cls.build(start, lambda j, v: [(p, v + g) for p, g in atoms], depth)

    def node(self, nid: int) -> Node:
        return self.nodes[nid]

    def increment(self, nid: int) -> TensorSeries:
        n = self.nodes[nid]
        return n.value - self.nodes[n.parent].value

    def leaves_below(self, nid: int) -> list[tuple[Fraction, list[int]]]:
        """All continuations from a node: (path probability, node ids after nid)."""
        kids = self.children[nid]
        if not kids:
            return [(Fraction(1), [])]
        out = []
        for c in kids:
            for p, rest in self.leaves_below(c):
                out.append((self.nodes[c].prob * p, [c] + rest))
        return out

    # -- JSON ---------------------------------------------------------------

    def to_json(self) -> dict:
        nodes = []
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            nodes.append({"id": n.id, "parent": n.parent,
                          "prob": f"{n.prob.numerator}/{n.prob.denominator}",
                          "value": series_to_json(n.value)})
        return {"dim": self.dim, "level": self.level, "scalar": self.scalar, "nodes": nodes}

    @classmethod
    def from_json(cls, obj: Mapping) -> FiltrationTree:
        try:
            raw = obj["nodes"]
            parents = {int(r["id"]): (None if r.get("parent") is None else int(r["parent"])) for r in raw}
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"malformed tree JSON: {exc}") from exc
        depth: dict[int, int] = {}

        def depth_of(nid: int, seen: tuple = ()) -> int:
            if nid in depth:
                return depth[nid]
            if nid in seen:
                raise UsageError(f"cycle through node {nid}")
            par = parents.get(nid)
            if par is not None and par not in parents:
                raise UsageError(f"node {nid}: unknown parent {par}")
            depth[nid] = 0 if par is None else depth_of(par, seen + (nid,)) + 1
            return depth[nid]

        nodes = []
        for r in raw:
            nid = int(r["id"])
            try:
                prob = parse_rational(r.get("prob", "1"))
            except (ValueError, ZeroDivisionError) as exc:
                raise UsageError(f"node {nid}: bad probability {r.get('prob')!r}") from exc
            nodes.append(Node(nid, parents[nid], prob, series_from_json(r["value"]), depth_of(nid)))
        return cls(nodes)


# ---------------------------------------------------------------------------
# conditional expectation


def cond_expect(tree: FiltrationTree, j: int, field: NodeField, k: int | None = None) -> NodeField:
    """E[field | G_j] for a field given on level k >= j."""
    if k is None:
        if not field:
            raise UsageError("empty field needs an explicit level k")
        k = max(tree.nodes[n].depth for n in field)
    if not 0 <= j <= k <= tree.depth:
        raise UsageError(f"need 0 <= j <= k <= {tree.depth}")
    missing = [n for n in tree.levels[k] if n not in field]
    if missing:
        raise UsageError(f"field undefined at level-{k} nodes {missing[:5]}")
    current = {n: field[n] for n in tree.levels[k]}
    for lvl in range(k - 1, j - 1, -1):
        nxt = {}
        for nid in tree.levels[lvl]:
            acc = None
            for c in tree.children[nid]:
                term = current[c] * tree.nodes[c].prob
                acc = term if acc is None else acc + term
            nxt[nid] = acc
        current = nxt
    return current


# ---------------------------------------------------------------------------
# expected signatures


def expected_signature_direct(tree: FiltrationTree) -> NodeField:
    """mu at every node by enumerating every continuation to the leaves."""
    exp_inc = {nid: exp_series(tree.increment(nid)) for nid in tree.nodes if nid != tree.root}
    mu: NodeField = {}
    for nid in tree.nodes:
        acc = TensorSeries.zero(tree.dim, tree.level, tree.scalar)
        for p, path in tree.leaves_below(nid):
            sig = TensorSeries.one(tree.dim, tree.level, tree.scalar)
            for c in path:
                sig = sig * exp_inc[c]
            acc = acc + sig * p
        mu[nid] = acc
    return mu


def _increment_word_products(inc_levels: Sequence[np.ndarray], m: int, level: int, exact: bool):
    """For each composition l of m: the product of homogeneous pieces divided by (#parts)!."""
    total = _zeros((inc_levels[1].shape[0] ** m,), exact) if level >= 1 else None
    for comp in compositions(m):
        if any(not np.any(inc_levels[p] != 0) for p in comp):
            continue
        prod = inc_levels[comp[0]]
        for p in comp[1:]:
            prod = _outer(prod, inc_levels[p])
        scale = Fraction(1, math.factorial(len(comp)))
        total = total + (prod * scale if exact else prod * float(scale))
    return total


def recursion_degree(tree: FiltrationTree, lower: Mapping[int, Sequence[np.ndarray]], n: int) -> dict[int, np.ndarray]:
    """Degree-n component of mu at every node, from degrees 0..n-1 only.

    mu_j^(n) = sum_{k<n} sum_{i>=j} sum_{|l|=n-k} 1/(#l)! E[dX_i^(l) mu_{i+1}^(k) | G_j],
    accumulated backward in time: mu_v^(n) = sum_c p_c (A_c + mu_c^(n)).
    """
    exact = tree.scalar == RATIONAL
    size = tree.dim ** n
    out: dict[int, np.ndarray] = {}
    for lvl in range(tree.depth, -1, -1):
        for nid in tree.levels[lvl]:
            acc = _zeros((size,), exact)
            for c in tree.children[nid]:
                inc = tree.increment(c).levels
                mu_c = lower[c]
                local = _zeros((size,), exact)
                for k in range(n):
                    if not np.any(mu_c[k] != 0):
                        continue
                    piece = _increment_word_products(inc, n - k, tree.level, exact)
                    local = local + _outer(piece, mu_c[k])
                p = tree.nodes[c].prob
                acc = acc + (local + out[c]) * (p if exact else float(p))
            out[nid] = acc
    return out


def expected_signature_recursive(tree: FiltrationTree) -> NodeField:
    exact = tree.scalar == RATIONAL
    one = _zeros((1,), exact)
    one[0] = Fraction(1) if exact else 1.0
    levels: dict[int, list[np.ndarray]] = {nid: [one] for nid in tree.nodes}
    for n in range(1, tree.level + 1):
        deg = recursion_degree(tree, levels, n)
        for nid, arr in deg.items():
            levels[nid].append(arr)
    return {nid: TensorSeries(tree.dim, tree.level, arrs, tree.scalar) for nid, arrs in levels.items()}


def discrete_cumulants(tree: FiltrationTree, mu: NodeField | None = None) -> NodeField:
    mu = expected_signature_recursive(tree) if mu is None else mu
    return {nid: log_series(m) for nid, m in mu.items()}


def residual_fields(tree: FiltrationTree, kappa: NodeField | None = None) -> tuple[NodeField, NodeField]:
    """Both discrete cumulant identities at every node; each should vanish identically.

    The first is the one-step conditional identity
    E[(e^{dX} - 1) e^{k_{j+1}} e^{-k_j} + (e^{k_{j+1}} e^{-k_j} - 1) | G_j];
    the second sums the H(ad kappa_i)-transformed edge terms over all later
    steps i >= j.
    """
    kappa = discrete_cumulants(tree) if kappa is None else kappa
    exp_k = {nid: exp_series(k) for nid, k in kappa.items()}
    zero = TensorSeries.zero(tree.dim, tree.level, tree.scalar)
    one_step: NodeField = {}
    summed: NodeField = {}
    for lvl in range(tree.depth, -1, -1):
        for nid in tree.levels[lvl]:
            neg = exp_series(-kappa[nid])
            r1, r2 = zero, zero
            for c in tree.children[nid]:
                p = tree.nodes[c].prob
                ratio = exp_k[c] * neg
                term = (exp_series(tree.increment(c)) - 1) * ratio + (ratio - 1)
                r1 = r1 + term * p
                r2 = r2 + (apply_H(kappa[nid], term) + summed[c]) * p
            one_step[nid] = r1
            summed[nid] = r2
    return one_step, summed


def martingale_identity_residual(tree: FiltrationTree, j: int,
                                 kappa: NodeField | None = None) -> tuple[NodeField, NodeField]:
    """The two identity residuals restricted to the level-j nodes."""
    if not 0 <= j <= tree.depth:
        raise UsageError(f"level {j} outside 0..{tree.depth}")
    one_step, summed = residual_fields(tree, kappa)
    return ({n: one_step[n] for n in tree.levels[j]}, {n: summed[n] for n in tree.levels[j]})


def path_signatures(tree: FiltrationTree) -> NodeField:
    """Realized signature S_j from the root to every node."""
    sig: NodeField = {tree.root: TensorSeries.one(tree.dim, tree.level, tree.scalar)}
    for lvl in range(1, tree.depth + 1):
        for nid in tree.levels[lvl]:
            sig[nid] = sig[tree.nodes[nid].parent] * exp_series(tree.increment(nid))
    return sig


def chen_martingale_residual(tree: FiltrationTree, j: int, mu: NodeField | None = None) -> NodeField:
    """E[S_{j+1} mu_{j+1} | G_j] - S_j mu_j at level j (for j < J)."""
    mu = expected_signature_recursive(tree) if mu is None else mu
    sig = path_signatures(tree)
    prod = {nid: sig[nid] * mu[nid] for nid in tree.levels[j + 1]}
    ce = cond_expect(tree, j, prod, j + 1)
    return {nid: ce[nid] - sig[nid] * mu[nid] for nid in tree.levels[j]}


# ---------------------------------------------------------------------------
# random trees


def random_tree(rng: np.random.Generator, depth: int, max_branching: int, dim: int, level: int,
                increment_degree: int | None = None) -> FiltrationTree:
    """Random rational tree; increments have support in degrees 1..increment_degree."""
    from .randgen import random_probabilities, random_series

    top = level if increment_degree is None else increment_degree

    def expand(j: int, value: TensorSeries):
        k = int(rng.integers(1, max_branching + 1))
        probs = random_probabilities(rng, k)
        return [(p, value + random_series(rng, dim, level, 1, 0.5, max_degree=top)) for p in probs]

    return FiltrationTree.build(TensorSeries.zero(dim, level), expand, depth)

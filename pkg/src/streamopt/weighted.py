"""Weighted bipartite matching under an l1 budget, with two instantiations:
discrete optimal transport with exact marginals and additive-approximate
maximum weight matching via dummy saturation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import boxsimplex
from .config import PipelineConfig
from .linkcut import cycle_cancel_stream
from .matching import Matching, remove_overflow
from .stream import (EdgeSource, GeneratorSource, ResourceMeter, RowSource,
                     SparseFlow)

__all__ = ["WeightedInstance", "TransportPlan", "solve_weighted",
           "remove_overflow_weighted", "ot_solve", "mwm_solve", "forest_mwm"]


@dataclass
class WeightedInstance:
    """max <w, x> over x >= 0 with B^T x <= d, given the l1 norm S of an
    optimal feasible solution."""

    n_left: int
    n_right: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    d: np.ndarray
    S: float

    @property
    def m(self) -> int:
        return len(self.u)

    @property
    def n(self) -> int:
        return self.n_left + self.n_right

    def w_inf(self) -> float:
        return float(self.w.max()) if len(self.w) else 0.0

    def game(self) -> boxsimplex.BoxSimplexInstance:
        """Rows (S w_inf / 2) * B~ plus the zero dummy row; costs
        S (w_inf - w_e), dummy cost S w_inf; b = (w_inf / 2) d."""
        w_inf = self.w_inf()
        half = 0.5 * self.S * w_inf
        m = self.m
        indptr = np.concatenate([np.arange(0, 2 * m + 1, 2), [2 * m]]).astype(np.int64)
        cols = np.empty(2 * m, dtype=np.int64)
        cols[0::2] = self.u
        cols[1::2] = self.n_left + self.v
        vals = np.full(2 * m, half)
        costs = np.concatenate([self.S * (w_inf - self.w), [self.S * w_inf]])
        rows = RowSource(indptr, cols, vals, costs)
        rows.set_pair_structure(np.concatenate([self.u, [self.n]]),
                                np.concatenate([self.n_left + self.v, [self.n]]),
                                half, scratch_col=self.n)
        b = 0.5 * w_inf * self.d
        return boxsimplex.BoxSimplexInstance(rows, b, self.n)


def remove_overflow_weighted(x: SparseFlow, d: np.ndarray, n_left: int,
                             weight_of) -> SparseFlow:
    """Same scaling as the cardinality case; by Hoelder the weighted value
    drops by at most ||w||_inf times the overflow removed."""
    return remove_overflow(x, d, n_left)


def _solve_weighted_once(inst: WeightedInstance, eps: float,
                         meter: ResourceMeter,
                         cfg: PipelineConfig) -> tuple[SparseFlow, float]:
    """One solve+round; returns the flow and a certified upper bound on the
    optimal weight (from the game value and its duality gap)."""
    game = inst.game()
    with meter.stage("solve"):
        report = boxsimplex.solve(game, eps, meter, cfg.solver)
    m = inst.m
    eu, ev, S = inst.u, inst.v, inst.S
    coord = boxsimplex.certified_minimizer_stream(report, game, meter, cfg.solver,
                                                 drop_below=cfg.drop_below)

    def factory():
        for ids, vals in coord.chunks():
            keep = ids < m
            ids_k = ids[keep]
            yield eu[ids_k], ev[ids_k], vals[keep] * S

    stream = GeneratorSource(factory, length=coord.length, passes_per_replay=0)
    wmap = {(int(a), int(b)): float(ww) for a, b, ww in zip(inst.u, inst.v, inst.w)}
    with meter.stage("round"):
        flow = cycle_cancel_stream(stream, inst.n_left, inst.n_right,
                                   weight_of=lambda e: wmap.get(e, 0.0), meter=meter)
        flow = remove_overflow_weighted(flow, inst.d, inst.n_left,
                                        lambda e: wmap.get(e, 0.0))
    gap = report.gap if report.gap is not None else report.eps
    # game optimum = w_inf ||d||_1 / 2 - optimal weight, so the measured value
    # bounds the optimal weight from above
    w_hi = 0.5 * inst.w_inf() * float(np.abs(inst.d).sum()) - report.value + gap
    report.iterates.close()
    return flow, w_hi


def solve_weighted(inst: WeightedInstance, eps: float,
                   meter: ResourceMeter | None = None,
                   cfg: PipelineConfig | None = None) -> SparseFlow:
    """eps-additively approximate n-sparse solution with B^T x <= d."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    meter = meter if meter is not None else ResourceMeter()
    cfg = cfg or PipelineConfig()
    if inst.w_inf() == 0.0:
        return SparseFlow({})
    flow, _ = _solve_weighted_once(inst, eps, meter, cfg)
    return flow


@dataclass
class TransportPlan:
    entries: SparseFlow
    marginals_left: np.ndarray
    marginals_right: np.ndarray

    def cost(self, costs: np.ndarray) -> float:
        return float(sum(costs[i, j] * x for (i, j), x in self.entries.items()))


def _plan_marginals(flow: SparseFlow, n_l: int, n_r: int) -> tuple[np.ndarray, np.ndarray]:
    ml = np.zeros(n_l)
    mr = np.zeros(n_r)
    for (i, j), x in flow.items():
        ml[i] += x
        mr[j] += x
    return ml, mr


def ot_solve(costs: np.ndarray, ell: np.ndarray, r: np.ndarray, eps: float,
             meter: ResourceMeter | None = None,
             cfg: PipelineConfig | None = None) -> TransportPlan:
    """eps*||c||_inf-additive optimal transport with exact marginals.

    Reduction: maximize <||c||_inf - c, x> under the marginal caps with S=1,
    then stream a rank-one outer-product correction to meet the marginals
    exactly, and cycle-cancel once more to keep the support O(n).
    """
    meter = meter if meter is not None else ResourceMeter()
    cfg = cfg or PipelineConfig()
    costs = np.asarray(costs, dtype=np.float64)
    ell = np.asarray(ell, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    n_l, n_r = costs.shape
    if abs(ell.sum() - r.sum()) > 1e-12:
        raise ValueError("demands must have equal totals")
    if eps <= 0.0 or eps > 1.0:
        raise ValueError("eps must lie in (0, 1]")
    shifted = costs - costs.min() if costs.min() < 0.0 else costs
    cmax = float(shifted.max())
    if cmax == 0.0:
        flow = {(i, j): float(ell[i] * r[j]) for i in range(n_l) for j in range(n_r)
                if ell[i] * r[j] > 0.0}
        return TransportPlan(SparseFlow(flow), ell.copy(), r.copy())

    ii, jj = np.meshgrid(np.arange(n_l), np.arange(n_r), indexing="ij")
    eu = ii.ravel().astype(np.int64)
    ev = jj.ravel().astype(np.int64)
    w = (cmax - shifted).ravel()
    inst = WeightedInstance(n_l, n_r, eu, ev, w, np.concatenate([ell, r]), S=1.0)
    flow = solve_weighted(inst, eps * cmax, meter, cfg)

    ml, mr = _plan_marginals(flow, n_l, n_r)
    def_l = np.maximum(ell - ml, 0.0)
    def_r = np.maximum(r - mr, 0.0)
    items = list(flow.items())

    def factory():
        for (i, j), x in items:
            yield (np.asarray([i]), np.asarray([j]), np.asarray([x]))
        tot = def_l.sum()
        if tot > 0.0:
            e_row = def_l / tot
            for i in range(n_l):
                if e_row[i] > 0.0:
                    vals = e_row[i] * def_r
                    mask = vals > 0.0
                    yield (np.full(int(mask.sum()), i, dtype=np.int64),
                           np.where(mask)[0].astype(np.int64), vals[mask])

    n_rec = len(items) + (n_l * n_r if def_l.sum() > 0 else 0)
    stream = GeneratorSource(factory, length=n_rec, passes_per_replay=1)
    wmap = (cmax - shifted)
    final = cycle_cancel_stream(stream, n_l, n_r,
                                weight_of=lambda e: float(wmap[e[0], e[1]]),
                                meter=meter)
    ml, mr = _plan_marginals(final, n_l, n_r)
    return TransportPlan(final, ml, mr)


def forest_mwm(flow: SparseFlow, weight_of, n_left: int) -> list[tuple[int, int]]:
    """Exact maximum-weight matching on a forest support.

    Two-state tree DP: free[z] / used[z] are the best subtree values with z
    unmatched / matched to one of its children.  Ties prefer leaving z free;
    among equal-gain children the lexicographically smallest edge wins (the
    adjacency lists are sorted).
    """
    adj: dict[int, list[tuple[int, tuple[int, int]]]] = {}
    for (u, v) in flow.values:
        a, b = u, n_left + v
        adj.setdefault(a, []).append((b, (u, v)))
        adj.setdefault(b, []).append((a, (u, v)))
    for a in adj:
        adj[a].sort(key=lambda t: t[1])
    seen: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for root in sorted(adj):
        if root in seen:
            continue
        order: list[tuple[int, int]] = []
        stack = [(root, -1)]
        seen.add(root)
        while stack:
            z, par = stack.pop()
            order.append((z, par))
            for nb, _ in adj[z]:
                if nb != par and nb not in seen:
                    seen.add(nb)
                    stack.append((nb, z))
        free: dict[int, float] = {}
        used: dict[int, float] = {}
        pick: dict[int, tuple[int, tuple[int, int]] | None] = {}
        for z, par in reversed(order):
            base = 0.0
            for nb, _ in adj[z]:
                if nb != par:
                    base += max(free[nb], used[nb])
            free[z] = base
            used[z] = -math.inf
            pick[z] = None
            for nb, edge in adj[z]:
                if nb == par:
                    continue
                cand = base - max(free[nb], used[nb]) + free[nb] + weight_of(edge)
                if cand > used[z]:
                    used[z] = cand
                    pick[z] = (nb, edge)
        # top-down: a vertex matched to its parent must use its free state
        state = [(root, -1, False)]
        while state:
            z, par, forced_free = state.pop()
            matched_child = None
            if not forced_free and pick[z] is not None and used[z] > free[z]:
                matched_child, edge = pick[z]
                pairs.append(edge)
            for nb, _ in adj[z]:
                if nb != par:
                    state.append((nb, z, nb == matched_child))
        # children of a matched vertex other than its pick keep their own best
    return pairs


def mwm_solve(n_left: int, n_right: int, u: np.ndarray, v: np.ndarray,
              w: np.ndarray, eps: float, meter: ResourceMeter | None = None,
              cfg: PipelineConfig | None = None) -> Matching:
    """eps-additive maximum weight matching.

    Pads with one dummy vertex per side and zero-weight star edges so any
    matching extends to a saturated l1 norm, runs the budgeted weighted
    solver, and extracts an integral matching from the forest support by tree
    DP.  S is any certified bound on a maximum matching's cardinality (twice
    a maximal matching here; the dummy edge absorbs the slack), and the solve
    escalates until the tree-DP weight provably reaches (optimum - eps).
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    meter = meter if meter is not None else ResourceMeter()
    cfg = cfg or PipelineConfig()
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    w = np.asarray(w, dtype=np.float64)
    if len(w) == 0 or w.max() == 0.0:
        return Matching([])
    # greedy maximal matching bounds any matching's cardinality by 2M
    taken_l = set()
    taken_r = set()
    for a, b in zip(u.tolist(), v.tolist()):
        if a not in taken_l and b not in taken_r:
            taken_l.add(a)
            taken_r.add(b)
    meter.add_pass()
    S = float(min(n_left, n_right, 2 * len(taken_l)))
    ell_id, r_id = n_left, n_right
    pad_u = np.concatenate([u, np.arange(n_left), np.full(n_right, ell_id)])
    pad_v = np.concatenate([v, np.full(n_left, r_id), np.arange(n_right)])
    pad_w = np.concatenate([w, np.zeros(n_left + n_right)])
    d = np.ones(n_left + n_right + 2)
    inst = WeightedInstance(n_left + 1, n_right + 1, pad_u, pad_v, pad_w, d, S)
    wmap = {(int(a), int(b)): float(ww) for a, b, ww in zip(u, v, w)}
    best = Matching([])
    best_w = 0.0
    delta = eps
    for _ in range(8):
        flow, w_hi = _solve_weighted_once(inst, delta, meter, cfg)
        pairs = forest_mwm(flow, lambda e: wmap.get(e, 0.0), n_left + 1)
        real = Matching(sorted((a, b) for a, b in pairs if (a, b) in wmap))
        got = real.weight(lambda e: wmap[e])
        if got >= best_w:
            best, best_w = real, got
        if best_w >= w_hi - eps - 1e-12:
            break
        delta *= 0.5
    return best

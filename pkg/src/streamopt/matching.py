"""Approximate and exact maximum-cardinality bipartite matching.

Pipeline: greedy 2-approximation -> optional vertex reduction -> reduction of
MCM to an l1-regression game over the edge simplex -> low-space solve ->
streamed cycle cancelling -> overflow removal -> exact matching on the forest
support.  The optional exact stage augments with multi-pass BFS.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import boxsimplex
from .config import PipelineConfig
from .linkcut import cycle_cancel_stream
from .stream import (EdgeSource, GeneratorSource, ResourceMeter, RowSource,
                     SparseFlow, open_stream)

__all__ = [
    "BipartiteGraph", "Matching", "greedy_matching", "vertex_reduction",
    "remove_overflow", "forest_mcm", "mcm_approx", "mcm_exact", "overflow_of",
]


@dataclass
class BipartiteGraph:
    n_left: int
    n_right: int
    edges: EdgeSource

    @property
    def m(self) -> int:
        return self.edges.length

    @property
    def n(self) -> int:
        return self.n_left + self.n_right

    @staticmethod
    def from_arrays(u, v, w=None, n_left=None, n_right=None) -> "BipartiteGraph":
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        if w is None:
            w = np.ones(len(u))
        src = EdgeSource(u, v, np.asarray(w, dtype=np.float64),
                         n_left=n_left, n_right=n_right)
        return BipartiteGraph(src.n_left, src.n_right, src)

    @staticmethod
    def from_file(path: str, expect_header: bool = False) -> "BipartiteGraph":
        src = open_stream(path, "edge", bipartite=True, expect_header=expect_header)
        return BipartiteGraph(src.n_left, src.n_right, src)


@dataclass
class Matching:
    pairs: list[tuple[int, int]] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.pairs)

    def weight(self, weight_of) -> float:
        return float(sum(weight_of(p) for p in self.pairs))

    def check_valid(self, g: BipartiteGraph) -> None:
        seen_l: set[int] = set()
        seen_r: set[int] = set()
        edge_set = set(zip(g.edges.u.tolist(), g.edges.v.tolist()))
        for u, v in self.pairs:
            if u in seen_l or v in seen_r:
                raise ValueError(f"vertex repeated in matching at ({u}, {v})")
            if (u, v) not in edge_set:
                raise ValueError(f"pair ({u}, {v}) is not an input edge")
            seen_l.add(u)
            seen_r.add(v)

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            for u, v in self.pairs:
                fh.write(f"{u} {v}\n")


def greedy_matching(g: BipartiteGraph, meter: ResourceMeter) -> Matching:
    """One-pass maximal matching; size M satisfies M <= M* <= 2M."""
    taken_l = np.zeros(g.n_left, dtype=bool)
    taken_r = np.zeros(g.n_right, dtype=bool)
    meter.alloc(g.n)
    pairs: list[tuple[int, int]] = []
    with meter.stage("greedy"):
        for cu, cv, _ in g.edges.chunks(meter):
            for u, v in zip(cu.tolist(), cv.tolist()):
                if not taken_l[u] and not taken_r[v]:
                    taken_l[u] = True
                    taken_r[v] = True
                    pairs.append((u, v))
    meter.add_work(g.m)
    meter.free(g.n)
    return Matching(pairs)


def vertex_reduction(g: BipartiteGraph, eps: float,
                     meter: ResourceMeter) -> tuple[np.ndarray, np.ndarray]:
    """Shrink to a vertex subset whose induced subgraph keeps a
    (1-eps)-fraction of the maximum matching.

    One pass seeds the set with a maximal matching; each of ceil(3 ln(1/eps))
    further passes adds a maximal matching between the current set and its
    complement.
    """
    if not (0.0 < eps < 1.0):
        raise ValueError("eps must lie in (0, 1)")
    in_l = np.zeros(g.n_left, dtype=bool)
    in_r = np.zeros(g.n_right, dtype=bool)
    meter.alloc(2 * g.n)
    with meter.stage("vertex_reduction"):
        for u, v in greedy_matching(g, meter).pairs:
            in_l[u] = True
            in_r[v] = True
        rounds = math.ceil(3.0 * math.log(1.0 / eps))
        for _ in range(rounds):
            used_l = np.zeros(g.n_left, dtype=bool)
            used_r = np.zeros(g.n_right, dtype=bool)
            added: list[tuple[int, int, bool]] = []
            for cu, cv, _ in g.edges.chunks(meter):
                for u, v in zip(cu.tolist(), cv.tolist()):
                    if used_l[u] or used_r[v]:
                        continue
                    lu, rv = bool(in_l[u]), bool(in_r[v])
                    if lu == rv:
                        continue  # need exactly one endpoint inside
                    used_l[u] = True
                    used_r[v] = True
                    added.append((u, v, lu))
            for u, v, lu in added:
                if lu:
                    in_r[v] = True
                else:
                    in_l[u] = True
            meter.add_work(g.m)
    meter.free(2 * g.n)
    return in_l, in_r


def overflow_of(x: SparseFlow, d: np.ndarray, n_left: int) -> float:
    """Total demand violation ||(B^T x - d)_+||_1."""
    marg = np.zeros(len(d))
    for (u, v), val in x.items():
        marg[u] += val
        marg[n_left + v] += val
    return float(np.maximum(marg - d, 0.0).sum())


def remove_overflow(x: SparseFlow, d: np.ndarray, n_left: int) -> SparseFlow:
    """Scale flow down edge-by-edge so no vertex demand is violated.

    Output satisfies x~ <= x entrywise, B^T x~ <= d, and
    ||x~||_1 >= ||x||_1 - ||(B^T x - d)_+||_1.
    """
    marg = np.zeros(len(d))
    for (u, v), val in x.items():
        marg[u] += val
        marg[n_left + v] += val
    over = np.maximum(marg - d, 0.0)
    out: dict[tuple[int, int], float] = {}
    for (u, v), val in x.items():
        if val <= 0.0:
            continue
        frac = max(over[u] / marg[u], over[n_left + v] / marg[n_left + v])
        scaled = val * (1.0 - frac)
        if scaled > 0.0:
            out[(u, v)] = scaled
    return SparseFlow(out)


def forest_mcm(flow: SparseFlow, n_left: int) -> Matching:
    """Exact MCM of a forest-supported flow by repeated leaf peeling."""
    adj: dict[int, dict[int, tuple[int, int]]] = {}
    for (u, v) in flow.values:
        a, b = u, n_left + v
        adj.setdefault(a, {})[b] = (u, v)
        adj.setdefault(b, {})[a] = (u, v)
    n_nodes = len(adj)
    n_edges = len(flow.values)
    # a forest on its support has fewer edges than vertices per component
    comp = _count_components(adj)
    if n_edges != n_nodes - comp:
        raise ValueError("flow support is not a forest")
    pairs: list[tuple[int, int]] = []
    leaves = [a for a, nb in adj.items() if len(nb) == 1]
    while leaves:
        a = leaves.pop()
        nb = adj.get(a)
        if nb is None or len(nb) != 1:
            continue
        b, edge = next(iter(nb.items()))
        pairs.append(edge)
        for z in (a, b):
            for other in list(adj.get(z, {})):
                adj[other].pop(z, None)
                if len(adj[other]) == 1:
                    leaves.append(other)
            adj.pop(z, None)
    return Matching(sorted(pairs))


def _count_components(adj: dict[int, dict]) -> int:
    seen: set[int] = set()
    comp = 0
    for start in adj:
        if start in seen:
            continue
        comp += 1
        stack = [start]
        seen.add(start)
        while stack:
            z = stack.pop()
            for nb in adj[z]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
    return comp


def build_mcm_instance(g: BipartiteGraph, M: int, in_l: np.ndarray,
                       in_r: np.ndarray) -> tuple[boxsimplex.BoxSimplexInstance, np.ndarray, np.ndarray]:
    """Rows M*B over the induced edge set plus one all-zero dummy row;
    b = 1/2 on the kept vertices."""
    keep = in_l[g.edges.u] & in_r[g.edges.v]
    eu = g.edges.u[keep]
    ev = g.edges.v[keep]
    m_sel = len(eu)
    n = g.n
    indptr = np.concatenate([np.arange(0, 2 * m_sel + 1, 2), [2 * m_sel]])
    cols = np.empty(2 * m_sel, dtype=np.int64)
    cols[0::2] = eu
    cols[1::2] = g.n_left + ev
    vals = np.full(2 * m_sel, float(M))
    costs = np.zeros(m_sel + 1)
    rows = RowSource(indptr.astype(np.int64), cols, vals, costs)
    rows.set_pair_structure(np.concatenate([eu, [n]]),
                            np.concatenate([g.n_left + ev, [n]]),
                            float(M), scratch_col=n)
    b = np.zeros(n)
    b[:g.n_left][in_l] = 0.5
    b[g.n_left:][in_r] = 0.5
    inst = boxsimplex.BoxSimplexInstance(rows, b, n)
    return inst, eu, ev


def _flow_stream_from_report(report, inst, eu, ev, scale: float, meter,
                             cfg: PipelineConfig) -> GeneratorSource:
    """Map the solver's coordinate stream onto graph edges, scaled, with the
    dummy row dropped."""
    m_sel = len(eu)
    coord = boxsimplex.certified_minimizer_stream(report, inst, meter, cfg.solver,
                                                 drop_below=cfg.drop_below)

    def factory():
        for ids, vals in coord.chunks():
            keep = ids < m_sel
            ids_k = ids[keep]
            yield eu[ids_k], ev[ids_k], vals[keep] * scale

    return GeneratorSource(factory, length=coord.length,
                           passes_per_replay=0)  # coord stream meters itself


def mcm_approx(g: BipartiteGraph, eps: float, meter: ResourceMeter | None = None,
               cfg: PipelineConfig | None = None) -> tuple[Matching, ResourceMeter]:
    """(1-eps)-approximate maximum-cardinality matching in O(n) workspace."""
    if not (0.0 < eps <= 0.5):
        raise ValueError("eps must lie in (0, 1/2]")
    meter = meter if meter is not None else ResourceMeter()
    cfg = cfg or PipelineConfig()

    base = greedy_matching(g, meter)
    M = base.size
    if M == 0:
        return Matching([]), meter

    reduced = M * math.log(1.0 / eps) <= g.n
    if reduced:
        eps_red = cfg.mcm_reduction_split * eps
        in_l, in_r = vertex_reduction(g, eps_red, meter)
        solver_eps = cfg.mcm_solver_fraction * (1.0 - cfg.mcm_reduction_split) * eps * M
    else:
        eps_red = 0.0
        in_l = np.ones(g.n_left, dtype=bool)
        in_r = np.ones(g.n_right, dtype=bool)
        solver_eps = cfg.mcm_solver_fraction * eps * M

    inst, eu, ev = build_mcm_instance(g, M, in_l, in_r)
    d = np.zeros(g.n)
    d[:g.n_left][in_l] = 1.0
    d[g.n_left:][in_r] = 1.0
    b_l1 = 0.5 * float(d.sum())

    # Escalate the solve accuracy until the result certifies: the game value
    # pins the induced matching size M*_ind to [b_l1 - value, b_l1 - value + gap],
    # so a found matching of size s is provably (1-eps)-approximate once
    # s >= (1-eps) * (b_l1 - value + gap) / (1 - eps_red).
    matching = Matching([])
    for _ in range(8):
        with meter.stage("solve"):
            report = boxsimplex.solve(inst, solver_eps, meter, cfg.solver)
        with meter.stage("round"):
            stream = _flow_stream_from_report(report, inst, eu, ev, 2.0 * M, meter, cfg)
            flow = cycle_cancel_stream(stream, g.n_left, g.n_right,
                                       weight_of=lambda e: 1.0, meter=meter)
            feasible = remove_overflow(flow, d, g.n_left)
            cand = forest_mcm(feasible, g.n_left)
        report.iterates.close()
        if cand.size > matching.size:
            matching = cand
        gap = report.gap if report.gap is not None else report.eps
        m_hi = min(2.0 * M, (b_l1 - report.value + gap) / (1.0 - eps_red))
        if matching.size >= (1.0 - eps) * m_hi - 1e-9 or matching.size >= 2 * M:
            break
        solver_eps *= 0.5
    return matching, meter


def _bfs_augment(g: BipartiteGraph, match_l: np.ndarray, match_r: np.ndarray,
                 meter: ResourceMeter) -> bool:
    """One BFS phase over the residual graph; augments along one shortest
    alternating path if any free-to-free path exists."""
    n_l = g.n_left
    frontier = np.where(match_l < 0)[0]
    if len(frontier) == 0:
        return False
    parent_r = np.full(g.n_right, -1, dtype=np.int64)
    visited_l = np.zeros(n_l, dtype=bool)
    visited_l[frontier] = True
    meter.alloc(2 * g.n)
    end = -1
    eu, ev = g.edges.u, g.edges.v
    while len(frontier) > 0 and end < 0:
        in_front = np.zeros(n_l, dtype=bool)
        in_front[frontier] = True
        meter.add_pass()
        meter.add_work(g.m)
        cand = in_front[eu] & (parent_r[ev] < 0)
        new_r: list[int] = []
        for u, v in zip(eu[cand].tolist(), ev[cand].tolist()):
            if parent_r[v] >= 0:
                continue
            parent_r[v] = u
            if match_r[v] < 0:
                end = v
                break
            new_r.append(v)
        if end >= 0:
            break
        nxt = []
        for v in new_r:
            u2 = match_r[v]
            if not visited_l[u2]:
                visited_l[u2] = True
                nxt.append(u2)
        frontier = np.asarray(nxt, dtype=np.int64)
    meter.free(2 * g.n)
    if end < 0:
        return False
    v = end
    while v >= 0:
        u = parent_r[v]
        pv = match_l[u]
        match_l[u] = v
        match_r[v] = u
        v = pv
    return True


def mcm_exact(g: BipartiteGraph, meter: ResourceMeter | None = None,
              cfg: PipelineConfig | None = None) -> Matching:
    """Exact MCM: approximate solve, then BFS augmenting passes to optimality."""
    meter = meter if meter is not None else ResourceMeter()
    eps = min(0.5, max(g.n, 2) ** -0.75)
    approx, meter = mcm_approx(g, eps, meter, cfg)
    match_l = np.full(g.n_left, -1, dtype=np.int64)
    match_r = np.full(g.n_right, -1, dtype=np.int64)
    for u, v in approx.pairs:
        match_l[u] = v
        match_r[v] = u
    with meter.stage("augment"):
        while _bfs_augment(g, match_l, match_r, meter):
            pass
    pairs = [(int(u), int(match_l[u])) for u in range(g.n_left) if match_l[u] >= 0]
    return Matching(sorted(pairs))

"""(1+eps)-approximate undirected transshipment and s-t shortest paths.

The value of the flow-constrained game min_{||f||_1 <= t} ||R B^T W^-1 f - Rd||_1
distinguishes t >= opt from t < opt, so a binary search over t with the
low-space game solver brackets the transshipment cost; the streamed minimizer
is rounded to a sparse signed flow on the double cover and the tiny residual
demand is routed exactly on a stored spanner.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import boxsimplex
from .config import PipelineConfig
from .linkcut import CycleCanceller
from .stream import EdgeSource, ResourceMeter, RowSource

__all__ = [
    "TransshipInstance", "StretchApprox", "SignedFlow", "build_spanner",
    "build_stretch_approx", "flow_constrained_game", "round_stream",
    "approx_transshipment", "shortest_path", "route_exact",
]


@dataclass
class SignedFlow:
    """Edge -> signed value, relative to the stored (min id -> max id)
    orientation."""

    values: dict[tuple[int, int], float]

    def cost(self, weight_of) -> float:
        return float(sum(abs(x) * weight_of(e) for e, x in self.values.items()))

    def marginals(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        for (a, b), x in self.values.items():
            out[a] += x
            out[b] -= x
        return out


class TransshipInstance:
    """Undirected weighted graph with a balanced demand vector.

    Edges are stored with the fixed orientation min id -> max id; zero-weight
    edges are contracted in a preprocessing pass (they shortcut the problem)
    and the returned flow is lifted back across them at zero cost.
    """

    def __init__(self, n: int, u, v, w, d):
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        w = np.asarray(w, dtype=np.float64)
        self.d = np.asarray(d, dtype=np.float64)
        if abs(self.d.sum()) > 1e-9:
            raise ValueError("demand must sum to zero")
        if (w < 0).any():
            raise ValueError("weights must be nonnegative")
        lo = np.minimum(u, v)
        hi = np.maximum(u, v)
        if (lo == hi).any():
            raise ValueError("self loop")
        self.n = n
        self.u, self.v, self.w = lo, hi, w
        self.edges = EdgeSource(self.u, self.v, self.w)

    @property
    def m(self) -> int:
        return len(self.u)

    def components(self) -> np.ndarray:
        parent = np.arange(self.n)

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in zip(self.u.tolist(), self.v.tolist()):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
        return np.asarray([find(x) for x in range(self.n)])

    def check_balanced_components(self) -> None:
        comp = self.components()
        sums: dict[int, float] = {}
        for x in range(self.n):
            sums[comp[x]] = sums.get(comp[x], 0.0) + self.d[x]
        for c, s in sums.items():
            if abs(s) > 1e-9:
                raise ValueError("demand not balanced within a connected component")


def _adjacency(n: int, u, v, w, subset=None):
    adj: list[list[tuple[int, float, int]]] = [[] for _ in range(n)]
    idxs = range(len(u)) if subset is None else subset
    for e in idxs:
        a, b, ww = int(u[e]), int(v[e]), float(w[e])
        adj[a].append((b, ww, e))
        adj[b].append((a, ww, e))
    return adj


def _bounded_dijkstra(adj, src: int, dst: int, bound: float) -> float:
    """Distance src->dst, early-exited once it provably exceeds bound."""
    dist = {src: 0.0}
    pq = [(0.0, src)]
    while pq:
        dd, x = heapq.heappop(pq)
        if dd > dist.get(x, math.inf):
            continue
        if x == dst:
            return dd
        if dd > bound:
            return math.inf
        for y, ww, _ in adj[x]:
            nd = dd + ww
            if nd < dist.get(y, math.inf) and nd <= bound:
                dist[y] = nd
                heapq.heappush(pq, (nd, y))
    return dist.get(dst, math.inf)


def build_spanner(inst: TransshipInstance, meter: ResourceMeter) -> np.ndarray:
    """Greedy (2k-1)-spanner with k = ceil(log2 n): each pass admits edges
    whose endpoints are farther than (2k-1) w_e apart in the current spanner;
    repeats until a pass admits nothing."""
    n = inst.n
    k = max(1, math.ceil(math.log2(max(n, 2))))
    stretch = 2 * k - 1
    chosen: list[int] = []
    adj: list[list[tuple[int, float, int]]] = [[] for _ in range(n)]
    with meter.stage("spanner"):
        for _ in range(max(2, k)):
            added = 0
            meter.add_pass()
            for e in range(inst.m):
                a, b, ww = int(inst.u[e]), int(inst.v[e]), float(inst.w[e])
                if _bounded_dijkstra(adj, a, b, stretch * ww) > stretch * ww:
                    chosen.append(e)
                    adj[a].append((b, ww, e))
                    adj[b].append((a, ww, e))
                    added += 1
            meter.add_work(inst.m)
            if added == 0:
                break
    return np.asarray(sorted(chosen), dtype=np.int64)


@dataclass
class StretchApprox:
    R: sp.csr_matrix
    alpha: float
    beta: float
    seed: int


def _sp_distances(n: int, adj, src: int) -> np.ndarray:
    dist = np.full(n, math.inf)
    dist[src] = 0.0
    pq = [(0.0, src)]
    while pq:
        dd, x = heapq.heappop(pq)
        if dd > dist[x]:
            continue
        for y, ww, _ in adj[x]:
            nd = dd + ww
            if nd < dist[y]:
                dist[y] = nd
                heapq.heappush(pq, (nd, y))
    return dist


def build_stretch_approx(inst: TransshipInstance, spanner: np.ndarray,
                         seed: int = 0) -> StretchApprox:
    """Stacked random hierarchical tree embeddings of the spanner metric.

    Each tree's distances dominate the spanner's (hence the graph's), so
    ||R d||_1 always upper-bounds the optimal transshipment cost; averaging
    ceil(4 ln n) trees keeps the overestimate near-logarithmic in expectation.
    Offline construction; the result is stored explicitly.
    """
    n = inst.n
    rng = np.random.default_rng(seed)
    adj = _adjacency(n, inst.u, inst.v, inst.w, spanner.tolist())
    dmat = np.vstack([_sp_distances(n, adj, s) for s in range(n)])
    comp = inst.components()
    k_t = max(1, math.ceil(4.0 * math.log(max(n, 2))))
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[float] = []
    row_count = 0

    finite = dmat[np.isfinite(dmat) & (dmat > 0)]
    if len(finite) == 0:
        R = sp.csr_matrix((1, n))
        return StretchApprox(R, 1.0, 0.0, seed)
    dmin, dmax = float(finite.min()), float(finite.max())
    i_min = math.floor(math.log2(max(dmin, 1e-300))) - 1
    i_max = math.ceil(math.log2(dmax)) + 1

    for _ in range(k_t):
        beta = float(rng.uniform(1.0, 2.0))
        pi = rng.permutation(n)
        rank = np.empty(n, dtype=np.int64)
        rank[pi] = np.arange(n)
        for root in np.unique(comp):
            members = np.where(comp == root)[0]
            if len(members) <= 1:
                continue
            groups = {(): members}
            for level in range(i_max, i_min - 1, -1):
                radius = beta * (2.0 ** level)
                gamma = 2.0 * radius  # tight: separation at this level implies d <= 2*diameter
                new_groups: dict[tuple, np.ndarray] = {}
                for key, verts in groups.items():
                    if len(verts) == 1:
                        new_groups[key + (int(verts[0]),)] = verts
                        continue
                    sub = dmat[np.ix_(verts, verts)]
                    centers: dict[int, list[int]] = {}
                    for a_i, a in enumerate(verts):
                        within = verts[sub[a_i] <= radius]
                        c = int(within[np.argmin(rank[within])])
                        centers.setdefault(c, []).append(int(a))
                    for c, vs in centers.items():
                        new_groups[key + (c,)] = np.asarray(vs, dtype=np.int64)
                for key, verts in new_groups.items():
                    if len(verts) == len(groups[key[:-1]]):
                        continue  # chain node: same leaf set as parent, merge upward
                    rows.append(np.full(len(verts), row_count, dtype=np.int64))
                    cols.append(verts)
                    vals.append(gamma / k_t)
                    row_count += 1
                groups = new_groups
                if all(len(g) == 1 for g in groups.values()):
                    break

    data = np.concatenate([np.full(len(r), val) for r, val in zip(rows, vals)]) \
        if rows else np.zeros(0)
    rows_cat = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols_cat = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    R = sp.csr_matrix((data, (rows_cat, cols_cat)), shape=(max(row_count, 1), n))
    R.sum_duplicates()
    beta_stat = float(np.diff(R.tocsc().indptr).mean()) if R.nnz else 0.0
    alpha_nom = 4.0 * math.log(max(n, 2)) ** 2
    return StretchApprox(R, alpha_nom, beta_stat, seed)


def stretch_value(R: sp.csr_matrix, d: np.ndarray) -> float:
    return float(np.abs(R @ d).sum())


def flow_constrained_game(inst: TransshipInstance, R: sp.csr_matrix, t: float,
                          spanner_only: bool = False,
                          meter: ResourceMeter | None = None) -> boxsimplex.BoxSimplexInstance:
    """Box-simplex game whose value is min_{||f||_1<=t} ||R B^T W^-1 f - R d||_1.

    2m rows: the sign-split f = t [I; -I]^T f^ makes the simplex variable the
    scaled positive/negative parts.  Row streams are simulated from the graph
    plus the stored sparse R columns (one graph pass per build).
    """
    if t <= 0.0:
        raise ValueError("flow budget t must be positive")
    if meter is not None:
        meter.add_pass()
    m = inst.m
    Bs = sp.csr_matrix(
        (np.concatenate([np.ones(m), -np.ones(m)]),
         (np.concatenate([np.arange(m), np.arange(m)]),
          np.concatenate([inst.u, inst.v]))),
        shape=(m, inst.n))
    X = (Bs @ R.T).multiply(1.0 / inst.w[:, None]).tocsr()  # m x K
    A_top = X * t
    A = sp.vstack([A_top, -A_top]).tocsr()
    A.sort_indices()
    K = R.shape[0]
    rows = RowSource(A.indptr.astype(np.int64), A.indices.astype(np.int64),
                     A.data.astype(np.float64), np.zeros(2 * m))
    b = np.asarray((R @ inst.d)).ravel()
    if meter is not None:
        meter.add_work(A.nnz)
    return boxsimplex.BoxSimplexInstance(rows, b, K)


def round_stream(f_plus, f_minus, inst: TransshipInstance,
                 meter: ResourceMeter) -> SignedFlow:
    """Cycle-cancel the positive and negative parts separately on the
    bipartite double cover, then net shared edges.

    Inputs are chunk streams of (u, v, value) contributions in edge-flow
    units; cancelling uses weight -w_e so the weighted cost never increases.
    Output support is O(n), and B^T output = B^T (f_plus - f_minus).
    """
    n = inst.n
    wmap = {(int(a), int(b)): float(ww)
            for a, b, ww in zip(inst.u, inst.v, inst.w)}

    def side(vid: int) -> int:
        return 0 if vid < n else 1

    out: list[dict] = []
    for stream, flip in ((f_plus, False), (f_minus, True)):
        cc = CycleCanceller(side, lambda e: -wmap.get(e, 0.0), meter)
        for cu, cv, cw in stream.chunks(meter):
            for a, b, x in zip(cu.tolist(), cv.tolist(), cw.tolist()):
                if x <= 0.0:
                    continue
                key = (a, b)
                if flip:
                    cc.insert(key, b, n + a, x)
                else:
                    cc.insert(key, a, n + b, x)
        out.append(dict(cc.extract().values))
    xp, xm = out
    for key in set(xp) & set(xm):
        c = min(xp[key], xm[key])
        xp[key] -= c
        xm[key] -= c
        if xp[key] <= 0.0:
            del xp[key]
        if xm[key] <= 0.0:
            del xm[key]
    if set(xp) & set(xm):
        raise RuntimeError("overlapping supports after pre-cancelling")
    vals = dict(xp)
    for key, x in xm.items():
        vals[key] = vals.get(key, 0.0) - x
    return SignedFlow(vals)


def route_exact(n: int, u, v, w, d: np.ndarray,
                tol: float = 1e-12) -> tuple[dict[tuple[int, int], float], float]:
    """Exact uncapacitated min-cost routing of demand d (positive = supply)
    by successive shortest paths with potentials."""
    adj = _adjacency(n, u, v, w)
    g: dict[int, float] = {}
    pot = np.zeros(n)
    excess = d.astype(np.float64).copy()
    scale = float(np.abs(d).sum())
    if scale == 0.0:
        return {}, 0.0
    while True:
        sources = np.where(excess > tol * scale)[0]
        if len(sources) == 0:
            break
        dist = np.full(n, math.inf)
        par_edge = np.full(n, -1, dtype=np.int64)
        par_dir = np.zeros(n, dtype=np.int64)
        par_node = np.full(n, -1, dtype=np.int64)
        pq = []
        for s in sources:
            dist[s] = 0.0
            heapq.heappush(pq, (0.0, int(s)))
        while pq:
            dd, x = heapq.heappop(pq)
            if dd > dist[x]:
                continue
            for y, ww, e in adj[x]:
                a, b = int(u[e]), int(v[e])
                fwd = 1 if x == a else -1
                cur = g.get(e, 0.0)
                # moving flow x->y cancels opposing flow first (cost -w)
                cost = -ww if cur * fwd < -tol * scale else ww
                rc = cost + pot[x] - pot[y]
                nd = dd + rc
                if nd < dist[y] - 1e-15:
                    dist[y] = nd
                    par_edge[y] = e
                    par_dir[y] = fwd
                    par_node[y] = x
                    heapq.heappush(pq, (nd, y))
        sinks = np.where(excess < -tol * scale)[0]
        sinks = sinks[np.isfinite(dist[sinks])]
        if len(sinks) == 0:
            raise ValueError("demand not routable (disconnected component)")
        t_node = int(sinks[np.argmin(dist[sinks])])
        amount = -excess[t_node]
        path = []
        x = t_node
        while par_edge[x] >= 0:
            e, fwd = int(par_edge[x]), int(par_dir[x])
            cur = g.get(e, 0.0)
            if cur * fwd < -tol * scale:
                amount = min(amount, -cur * fwd)
            path.append((e, fwd))
            x = int(par_node[x])
        amount = min(amount, excess[x])
        for e, fwd in path:
            g[e] = g.get(e, 0.0) + fwd * amount
        excess[x] -= amount
        excess[t_node] += amount
        reach = np.isfinite(dist)
        pot[reach] += np.minimum(dist[reach], dist[t_node])
        pot[~reach] += dist[t_node]
    flow: dict[tuple[int, int], float] = {}
    value = 0.0
    for e, x in g.items():
        if abs(x) > tol * scale:
            flow[(int(u[e]), int(v[e]))] = flow.get((int(u[e]), int(v[e])), 0.0) + x
            value += abs(x) * float(w[e])
    return flow, value


def _rescale_iterate(warm, t_new: float):
    """Map a saved iterate between games that differ only in the budget t:
    the implicit exponent t X v is preserved by scaling v (and u) by t/t'."""
    if warm is None or warm[1] is None:
        return None
    t_old, (v, u, lam, y) = warm
    s = t_old / t_new
    return (v * s, u * s, lam, y)


class _DictStream:
    """Chunk stream over a dict of edge -> nonnegative value."""

    def __init__(self, vals: dict[tuple[int, int], float]):
        self.vals = vals
        self.length = len(vals)

    def chunks(self, meter: ResourceMeter | None = None):
        if meter is not None:
            meter.add_pass()
        items = sorted(self.vals.items())
        if not items:
            return
        us = np.asarray([e[0] for e, _ in items], dtype=np.int64)
        vs = np.asarray([e[1] for e, _ in items], dtype=np.int64)
        ws = np.asarray([x for _, x in items])
        yield us, vs, ws


class _GameHalfStream:
    """Restrict the solver's coordinate stream to one sign block, scaling
    each contribution to edge-flow units (t / w_e)."""

    def __init__(self, coord, inst: TransshipInstance, t: float, top: bool):
        self.coord = coord
        self.inst = inst
        self.t = t
        self.top = top
        self.length = coord.length

    def chunks(self, meter: ResourceMeter | None = None):
        m = self.inst.m
        for ids, vals in self.coord.chunks():
            if self.top:
                keep = ids < m
                eids = ids[keep]
            else:
                keep = ids >= m
                eids = ids[keep] - m
            scaled = vals[keep] * self.t / self.inst.w[eids]
            yield self.inst.u[eids], self.inst.v[eids], scaled


def approx_transshipment(inst: TransshipInstance, eps: float,
                         meter: ResourceMeter | None = None,
                         cfg: PipelineConfig | None = None,
                         seed: int = 0) -> tuple[SignedFlow, float]:
    """Binary search on the flow budget with game probes, then round and
    route the residual demand exactly on the spanner."""
    if not (0.0 < eps < 1.0):
        raise ValueError("eps must lie in (0, 1)")
    meter = meter if meter is not None else ResourceMeter()
    cfg = cfg or PipelineConfig()
    inst.check_balanced_components()

    zero = inst.w == 0.0
    if zero.any():
        return _solve_with_contraction(inst, eps, meter, cfg, seed)

    if np.abs(inst.d).sum() == 0.0:
        return SignedFlow({}), 0.0

    spanner = build_spanner(inst, meter)
    approx = build_stretch_approx(inst, spanner, seed)
    R = approx.R
    su, sv, sw = inst.u[spanner], inst.v[spanner], inst.w[spanner]
    _, t_max = route_exact(inst.n, su, sv, sw, inst.d)
    t_max *= 1.0 + 1e-9
    k = max(1, math.ceil(math.log2(max(inst.n, 2))))
    t_min = t_max / (2 * k - 1)
    log_n = max(math.log(max(inst.n, 3)), 3.0)

    wmap = {(int(a), int(b)): float(ww)
            for a, b, ww in zip(inst.u, inst.v, inst.w)}
    best = None
    c_l = cfg.transship_c_l
    for _attempt in range(3):
        lo, hi = t_min, t_max
        saved = None  # report of the last feasible probe, reused when final t == hi
        warm = None  # (t, iterate) from the previous probe
        while hi >= (1.0 + cfg.transship_c_bs * eps / log_n) * lo:
            t = 0.5 * (lo + hi)
            game = flow_constrained_game(inst, R, t, meter=meter)
            delta = eps * t / (c_l * log_n)
            init = _rescale_iterate(warm, t)
            with meter.stage("probe"):
                rep = boxsimplex.solve(game, delta, meter, cfg.solver,
                                       probe_threshold=delta, init=init)
            warm = (t, rep.last_iterate)
            feasible = rep.probe == "le" if rep.probe else rep.value <= delta
            if feasible:
                hi = t
                if saved is not None:
                    saved[1].iterates.close()
                saved = (t, rep, game)
            else:
                lo = t  # certified t < opt
                rep.iterates.close()

        final, value = None, math.inf
        for _bump in range(4):
            t = hi
            delta = eps * t / (c_l * log_n)
            if saved is not None and saved[0] == t:
                _, report, game = saved
                saved = None
            else:
                game = flow_constrained_game(inst, R, t, meter=meter)
                init = _rescale_iterate(warm, t)
                with meter.stage("final-solve"):
                    report = boxsimplex.solve(game, delta, meter, cfg.solver,
                                              probe_threshold=delta, init=init)
                warm = (t, report.last_iterate)
            if report.probe == "gt":
                report.iterates.close()
                hi *= 1.0 + eps / log_n  # budget was a hair under the optimum
                continue
            coord = boxsimplex.certified_minimizer_stream(
                report, game, meter, cfg.solver, drop_below=cfg.drop_below)
            f_plus = _GameHalfStream(coord, inst, t, top=True)
            f_minus = _GameHalfStream(coord, inst, t, top=False)
            with meter.stage("round"):
                rounded = round_stream(f_plus, f_minus, inst, meter)
            report.iterates.close()

            resid = inst.d - rounded.marginals(inst.n)
            res_flow, _ = route_exact(inst.n, su, sv, sw, resid)
            combined = dict(rounded.values)
            for key, x in res_flow.items():
                combined[key] = combined.get(key, 0.0) + x
            pos = {k: x for k, x in combined.items() if x > 0.0}
            neg = {k: -x for k, x in combined.items() if x < 0.0}
            with meter.stage("round"):
                final = round_stream(_DictStream(pos), _DictStream(neg), inst, meter)
            value = final.cost(lambda e: wmap[e])
            break
        if saved is not None:
            saved[1].iterates.close()
        if final is not None and (best is None or value < best[1]):
            best = (final, value)
        # certified: lo (and the initial t_min) never exceed the optimum
        if final is not None and value <= (1.0 + eps) * lo * (1.0 + 1e-9):
            return final, value
        c_l *= 4.0  # tighten the probe accuracy and retry
    if best is None:
        raise RuntimeError("transshipment rounding failed to produce a flow")
    return best


def _solve_with_contraction(inst: TransshipInstance, eps: float,
                            meter: ResourceMeter, cfg: PipelineConfig,
                            seed: int) -> tuple[SignedFlow, float]:
    """Contract zero-weight edges, solve, and lift the flow back by routing
    the intra-component residuals across the zero edges at no cost."""
    n = inst.n
    parent = np.arange(n)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    zero_idx = np.where(inst.w == 0.0)[0]
    for e in zero_idx:
        ra, rb = find(int(inst.u[e])), find(int(inst.v[e]))
        if ra != rb:
            parent[ra] = rb
    rep = np.asarray([find(x) for x in range(n)])
    labels, mapping = np.unique(rep, return_inverse=True)
    nc = len(labels)
    d_c = np.zeros(nc)
    np.add.at(d_c, mapping, inst.d)

    best: dict[tuple[int, int], tuple[float, int]] = {}
    for e in np.where(inst.w > 0.0)[0]:
        a, b = mapping[inst.u[e]], mapping[inst.v[e]]
        if a == b:
            continue
        key = (min(a, b), max(a, b))
        if key not in best or inst.w[e] < best[key][0]:
            best[key] = (float(inst.w[e]), int(e))
    cu = np.asarray([k[0] for k in best], dtype=np.int64)
    cv = np.asarray([k[1] for k in best], dtype=np.int64)
    cw = np.asarray([t[0] for t in best.values()])
    sub = TransshipInstance(nc, cu, cv, cw, d_c)
    cflow, value = approx_transshipment(sub, eps, meter, cfg, seed)

    lifted: dict[tuple[int, int], float] = {}
    ckey_to_edge = {(min(a, b), max(a, b)): e for (a, b), (_, e) in best.items()}
    net = inst.d.copy()
    for (a, b), x in cflow.values.items():
        e = ckey_to_edge[(a, b)]
        ea, eb = int(inst.u[e]), int(inst.v[e])
        sgn = 1.0 if mapping[ea] == a else -1.0
        lifted[(ea, eb)] = lifted.get((ea, eb), 0.0) + sgn * x
        net[ea] -= sgn * x
        net[eb] += sgn * x
    # fix intra-component imbalances across the zero-weight edges
    zflow, _ = route_exact(n, inst.u[zero_idx], inst.v[zero_idx],
                           np.ones(len(zero_idx)), net)
    for key, x in zflow.items():
        lifted[key] = lifted.get(key, 0.0) + x
    return SignedFlow(lifted), value


def shortest_path(inst: TransshipInstance, s: int, t: int, eps: float,
                  meter: ResourceMeter | None = None,
                  cfg: PipelineConfig | None = None,
                  seed: int = 0) -> tuple[list[int], float]:
    """(1+eps)-approximate s-t shortest path: route a unit demand, then run
    Dijkstra restricted to the O(n)-sparse support."""
    if s == t:
        raise ValueError("endpoints must differ")
    meter = meter if meter is not None else ResourceMeter()
    d = np.zeros(inst.n)
    d[s] = 1.0
    d[t] = -1.0
    flow, _ = approx_transshipment(TransshipInstance(inst.n, inst.u, inst.v,
                                                     inst.w, d),
                                   eps, meter, cfg, seed)
    wmap = {(int(a), int(b)): float(ww)
            for a, b, ww in zip(inst.u, inst.v, inst.w)}
    scale = max((abs(x) for x in flow.values.values()), default=0.0)
    support = [e for e, x in flow.values.items() if abs(x) > 1e-9 * max(scale, 1.0)]
    adj: dict[int, list[tuple[int, float]]] = {}
    for (a, b) in support:
        ww = wmap[(a, b)]
        adj.setdefault(a, []).append((b, ww))
        adj.setdefault(b, []).append((a, ww))
    dist = {s: 0.0}
    prev: dict[int, int] = {}
    pq = [(0.0, s)]
    while pq:
        dd, x = heapq.heappop(pq)
        if dd > dist.get(x, math.inf):
            continue
        if x == t:
            break
        for y, ww in adj.get(x, []):
            nd = dd + ww
            if nd < dist.get(y, math.inf):
                dist[y] = nd
                prev[y] = x
                heapq.heappush(pq, (nd, y))
    if t not in dist:
        raise ValueError("endpoints are disconnected in the rounded support")
    path = [t]
    while path[-1] != s:
        path.append(prev[path[-1]])
    return path[::-1], float(dist[t])

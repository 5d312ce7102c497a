"""Exact desk-scale baselines for tests and acceptance runs.

Everything here is dense, ignores the pass/space discipline, and shares no
code with the metered modules; it exists so every streamed result can be
checked against an independent computation.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize as sopt
import scipy.sparse as sp

__all__ = [
    "OracleResult", "hopcroft_karp", "max_matching_bruteforce", "hungarian_mwm",
    "exact_lp_box_simplex", "exact_ot", "exact_transshipment", "dijkstra",
    "bellman_ford", "dense_alt_min", "dense_subproblem_value",
]


@dataclass
class OracleResult:
    value: float
    certificate: object
    method: str


def hopcroft_karp(n_left: int, n_right: int, edges) -> list[tuple[int, int]]:
    """Exact MCM in O(m sqrt(n)) via layered BFS + DFS phases."""
    adj: list[list[int]] = [[] for _ in range(n_left)]
    for u, v in edges:
        adj[u].append(v)
    match_l = [-1] * n_left
    match_r = [-1] * n_right
    INF = math.inf

    def bfs() -> bool:
        dist = [INF] * n_left
        dq = []
        for u in range(n_left):
            if match_l[u] < 0:
                dist[u] = 0
                dq.append(u)
        found = False
        qi = 0
        while qi < len(dq):
            u = dq[qi]
            qi += 1
            for v in adj[u]:
                w = match_r[v]
                if w < 0:
                    found = True
                elif dist[w] == INF:
                    dist[w] = dist[u] + 1
                    dq.append(w)
        self_dist[:] = dist
        return found

    self_dist = [INF] * n_left

    def dfs(u: int) -> bool:
        for v in adj[u]:
            w = match_r[v]
            if w < 0 or (self_dist[w] == self_dist[u] + 1 and dfs(w)):
                match_l[u] = v
                match_r[v] = u
                return True
        self_dist[u] = INF
        return False

    while bfs():
        for u in range(n_left):
            if match_l[u] < 0:
                dfs(u)
    return [(u, match_l[u]) for u in range(n_left) if match_l[u] >= 0]


def max_matching_bruteforce(n_left: int, n_right: int, edges) -> int:
    """Exhaustive MCM size for tiny graphs (cross-validates hopcroft_karp)."""
    edges = list(edges)
    best = 0
    for k in range(len(edges), 0, -1):
        if k <= best:
            break
        for combo in itertools.combinations(edges, k):
            ls = {u for u, _ in combo}
            rs = {v for _, v in combo}
            if len(ls) == k and len(rs) == k:
                best = max(best, k)
                break
    return best


def hungarian_mwm(n_left: int, n_right: int, edges, weights) -> tuple[float, list]:
    """Exact maximum-weight matching via the rectangular assignment solver."""
    cost = np.zeros((n_left, n_right))
    wmap = {}
    for (u, v), w in zip(edges, weights):
        cost[u, v] = max(cost[u, v], w)
        wmap[(u, v)] = max(wmap.get((u, v), 0.0), w)
    rows, cols = sopt.linear_sum_assignment(cost, maximize=True)
    pairs = [(int(i), int(j)) for i, j in zip(rows, cols)
             if (int(i), int(j)) in wmap and cost[i, j] > 0]
    value = float(sum(cost[i, j] for i, j in pairs))
    return value, pairs


def exact_lp_box_simplex(A: np.ndarray, b: np.ndarray, c: np.ndarray) -> OracleResult:
    """min over the simplex of c^T x + ||A^T x - b||_1 by LP (HiGHS)."""
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    # variables [x (m), s (n)]: minimize c.x + 1.s, s >= +-(A^T x - b)
    c_lp = np.concatenate([c, np.ones(n)])
    A_ub = np.block([[A.T, -np.eye(n)], [-A.T, -np.eye(n)]])
    b_ub = np.concatenate([b, -b])
    A_eq = np.concatenate([np.ones(m), np.zeros(n)])[None, :]
    res = sopt.linprog(c_lp, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                       bounds=[(0, None)] * (m + n), method="highs")
    if not res.success:
        raise RuntimeError(f"box-simplex LP failed: {res.message}")
    return OracleResult(float(res.fun), res.x[:m], "linprog")


def exact_ot(costs: np.ndarray, ell: np.ndarray, r: np.ndarray) -> OracleResult:
    """Exact optimal transport by LP with equality marginals."""
    costs = np.asarray(costs, dtype=np.float64)
    n_l, n_r = costs.shape
    idx = lambda i, j: i * n_r + j  # noqa: E731
    rows, cols, vals = [], [], []
    for i in range(n_l):
        for j in range(n_r):
            rows.append(i)
            cols.append(idx(i, j))
            vals.append(1.0)
            rows.append(n_l + j)
            cols.append(idx(i, j))
            vals.append(1.0)
    A_eq = sp.csr_matrix((vals, (rows, cols)), shape=(n_l + n_r, n_l * n_r))
    b_eq = np.concatenate([ell, r])
    res = sopt.linprog(costs.ravel(), A_eq=A_eq, b_eq=b_eq,
                       bounds=[(0, None)] * (n_l * n_r), method="highs")
    if not res.success:
        raise RuntimeError(f"OT LP failed: {res.message}")
    return OracleResult(float(res.fun), res.x.reshape(n_l, n_r), "linprog")


def exact_transshipment(n: int, edges, weights, d: np.ndarray) -> OracleResult:
    """min sum_e w_e |f_e| subject to B^T f = d, as an LP over split flows."""
    m = len(edges)
    rows, cols, vals = [], [], []
    for e, (a, b) in enumerate(edges):
        for sgn, col in ((1.0, e), (-1.0, m + e)):
            rows.append(a)
            cols.append(col)
            vals.append(sgn)
            rows.append(b)
            cols.append(col)
            vals.append(-sgn)
    A_eq = sp.csr_matrix((vals, (rows, cols)), shape=(n, 2 * m))
    c = np.concatenate([weights, weights])
    res = sopt.linprog(c, A_eq=A_eq, b_eq=d, bounds=[(0, None)] * (2 * m),
                       method="highs")
    if not res.success:
        raise RuntimeError(f"transshipment LP failed: {res.message}")
    f = res.x[:m] - res.x[m:]
    return OracleResult(float(res.fun), f, "linprog")


def dijkstra(n: int, edges, weights, s: int) -> np.ndarray:
    adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for (a, b), w in zip(edges, weights):
        adj[a].append((b, w))
        adj[b].append((a, w))
    dist = np.full(n, math.inf)
    dist[s] = 0.0
    pq = [(0.0, s)]
    while pq:
        dd, x = heapq.heappop(pq)
        if dd > dist[x]:
            continue
        for y, w in adj[x]:
            nd = dd + w
            if nd < dist[y]:
                dist[y] = nd
                heapq.heappush(pq, (nd, y))
    return dist


def bellman_ford(n: int, edges, weights, s: int) -> np.ndarray:
    dist = np.full(n, math.inf)
    dist[s] = 0.0
    for _ in range(n):
        changed = False
        for (a, b), w in zip(edges, weights):
            if dist[a] + w < dist[b]:
                dist[b] = dist[a] + w
                changed = True
            if dist[b] + w < dist[a]:
                dist[a] = dist[b] + w
                changed = True
        if not changed:
            break
    return dist


# -- dense reference for the implicit solver --------------------------------

def dense_subproblem_value(A: np.ndarray, a_inf: float, gx: np.ndarray,
                           gy: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    """Objective <gx, x> + <gy, y> + x^T |A| y^2 + 10||A||_inf sum x log x."""
    ent = float(np.sum(np.where(x > 0, x * np.log(np.maximum(x, 1e-300)), 0.0)))
    return float(gx @ x + gy @ y + x @ (np.abs(A) @ (y * y)) + 10.0 * a_inf * ent)


def dense_alt_min(A: np.ndarray, c: np.ndarray, a_inf: float,
                  x0: np.ndarray, y0: np.ndarray, y_src: np.ndarray,
                  gamma_y: np.ndarray, K: int):
    """Reference alternating minimization with explicit simplex iterates.

    Mirrors the implicit closed forms: the x-step is the entropic softmax of
    the anchored linear term, the y-step truncates -gamma_y / (2|A|^T x).
    Returns the list of (x, y) after each full step.
    """
    absA = np.abs(A)
    logx0 = np.log(np.maximum(x0, 1e-300))
    gx = (A @ y_src + c) / 3.0 - 10.0 * a_inf * logx0 - absA @ (y0 * y0)
    y = y0.copy()
    steps = []
    for _ in range(K):
        expo = -(gx + absA @ (y * y)) / (10.0 * a_inf)
        expo -= expo.max()
        x = np.exp(expo)
        x /= x.sum()
        d = 2.0 * (absA.T @ x)
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = np.where(d > 0, -gamma_y / d,
                           np.where(gamma_y != 0, -np.sign(gamma_y), 0.0))
        y = np.clip(raw, -1.0, 1.0)
        steps.append((x.copy(), y.copy()))
    return steps

import math

import numpy as np
import pytest

from streamopt import matching, oracles
from streamopt.config import PipelineConfig
from streamopt.stream import ResourceMeter, SparseFlow

FAST = PipelineConfig.fast()


def graph(edges, n_left=None, n_right=None):
    eu = np.asarray([e[0] for e in edges], dtype=np.int64)
    ev = np.asarray([e[1] for e in edges], dtype=np.int64)
    return matching.BipartiteGraph.from_arrays(eu, ev, n_left=n_left,
                                               n_right=n_right)


def random_graph(rng, max_side=30, max_m=300):
    nl = int(rng.integers(2, max_side))
    nr = int(rng.integers(2, max_side))
    m = int(rng.integers(1, min(nl * nr, max_m) + 1))
    eu = rng.integers(0, nl, size=m)
    ev = rng.integers(0, nr, size=m)
    return matching.BipartiteGraph.from_arrays(eu, ev, n_left=nl, n_right=nr)


def hk_size(g):
    return len(oracles.hopcroft_karp(g.n_left, g.n_right,
                                     zip(g.edges.u.tolist(), g.edges.v.tolist())))


# -- greedy -------------------------------------------------------------------

def test_greedy_trace_one():
    g = graph([(0, 0), (1, 0)])
    got = matching.greedy_matching(g, ResourceMeter())
    assert got.pairs == [(0, 0)]


def test_greedy_trace_two():
    g = graph([(0, 0), (0, 1), (1, 1)])
    got = matching.greedy_matching(g, ResourceMeter())
    assert got.pairs == [(0, 0), (1, 1)]


def test_greedy_half_approximation():
    rng = np.random.default_rng(0)
    for _ in range(15):
        g = random_graph(rng)
        M = matching.greedy_matching(g, ResourceMeter()).size
        star = hk_size(g)
        assert M <= star <= 2 * M


def test_greedy_one_pass():
    g = graph([(0, 0), (1, 1)])
    meter = ResourceMeter()
    matching.greedy_matching(g, meter)
    assert meter.passes == 1


# -- vertex reduction ---------------------------------------------------------

def test_vertex_reduction_star():
    g = graph([(0, j) for j in range(10)], n_left=1, n_right=10)
    in_l, in_r = matching.vertex_reduction(g, 0.1, ResourceMeter())
    assert in_l.sum() == 1
    assert in_r.sum() <= 1 + math.ceil(3 * math.log(10))
    keep = in_l[g.edges.u] & in_r[g.edges.v]
    assert hk_size(matching.BipartiteGraph.from_arrays(
        g.edges.u[keep], g.edges.v[keep], n_left=1, n_right=10)) == 1


def test_vertex_reduction_pass_count():
    g = graph([(0, 0), (1, 1)])
    meter = ResourceMeter()
    matching.vertex_reduction(g, 0.25, meter)
    assert meter.passes == 1 + math.ceil(3 * math.log(1 / 0.25))


@pytest.mark.parametrize("seed", range(6))
def test_vertex_reduction_keeps_matching(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, max_side=25, max_m=120)
    eps = 0.1
    in_l, in_r = matching.vertex_reduction(g, eps, ResourceMeter())
    star = hk_size(g)
    keep = in_l[g.edges.u] & in_r[g.edges.v]
    sub = matching.BipartiteGraph.from_arrays(g.edges.u[keep], g.edges.v[keep],
                                              n_left=g.n_left, n_right=g.n_right)
    assert hk_size(sub) >= (1 - eps) * star


# -- overflow removal ---------------------------------------------------------

def test_remove_overflow_single_edge():
    x = SparseFlow({(0, 0): 2.0})
    d = np.ones(2)
    out = matching.remove_overflow(x, d, 1)
    assert out.values[(0, 0)] == pytest.approx(1.0)


def test_remove_overflow_star():
    x = SparseFlow({(0, 0): 1.0, (0, 1): 1.0})
    d = np.ones(3)
    out = matching.remove_overflow(x, d, 1)
    assert out.values[(0, 0)] == pytest.approx(0.5)
    assert out.values[(0, 1)] == pytest.approx(0.5)
    assert out.l1() == pytest.approx(x.l1() - matching.overflow_of(x, d, 1))


@pytest.mark.parametrize("seed", range(10))
def test_remove_overflow_postconditions(seed):
    rng = np.random.default_rng(seed)
    nl, nr = 8, 9
    x = SparseFlow({(int(rng.integers(nl)), int(rng.integers(nr))): float(v)
                    for v in rng.uniform(0, 2, size=25)})
    d = rng.uniform(0.2, 1.5, size=nl + nr)
    over = matching.overflow_of(x, d, nl)
    out = matching.remove_overflow(x, d, nl)
    for e, val in out.items():
        assert val <= x.values[e] + 1e-12
    marg = np.zeros(nl + nr)
    for (u, v), val in out.items():
        marg[u] += val
        marg[nl + v] += val
    assert (marg <= d + 1e-9).all()
    assert out.l1() >= x.l1() - over - 1e-9


# -- forest matching ----------------------------------------------------------

def test_forest_mcm_path():
    flow = SparseFlow({(0, 0): 0.5, (1, 0): 0.5, (1, 1): 0.5})
    got = matching.forest_mcm(flow, 2)
    assert got.size == 2
    assert set(got.pairs) == {(0, 0), (1, 1)}


def test_forest_mcm_single_edge():
    assert matching.forest_mcm(SparseFlow({(3, 4): 0.7}), 5).size == 1


def test_forest_mcm_rejects_cycles():
    flow = SparseFlow({(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): 1})
    with pytest.raises(ValueError, match="forest"):
        matching.forest_mcm(flow, 2)


@pytest.mark.parametrize("seed", range(6))
def test_forest_mcm_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    # random forest: attach each new right vertex to a random left vertex
    edges = set()
    nl = nr = 12
    parent = {}
    for v in range(nr):
        u = int(rng.integers(nl))
        if (u, v) not in edges:
            edges.add((u, v))
    flow = SparseFlow({e: float(rng.uniform(0.1, 1)) for e in edges})
    try:
        got = matching.forest_mcm(flow, nl)
    except ValueError:
        return  # the random attachment happened to close a cycle
    want = len(oracles.hopcroft_karp(nl, nr, list(edges)))
    assert got.size == want


# -- objective equivalence ----------------------------------------------------

def test_overflow_objective_equals_l1_objective_up_to_constant():
    rng = np.random.default_rng(3)
    g = random_graph(rng, max_side=8, max_m=20)
    M = matching.greedy_matching(g, ResourceMeter()).size
    nl, nr = g.n_left, g.n_right
    n = nl + nr
    in_l = np.ones(nl, dtype=bool)
    in_r = np.ones(nr, dtype=bool)
    inst, eu, ev = matching.build_mcm_instance(g, M, in_l, in_r)
    m_sel = len(eu)
    A = np.zeros((m_sel + 1, n))
    A[np.arange(m_sel), eu] = M
    A[np.arange(m_sel), nl + ev] = M
    b = np.full(n, 0.5)
    diffs = []
    for _ in range(20):
        x = rng.dirichlet(np.ones(m_sel + 1))
        flow = 2 * M * x[:m_sel]
        marg = np.zeros(n)
        np.add.at(marg, eu, flow)
        np.add.at(marg, nl + ev, flow)
        overflow_obj = -flow.sum() + np.maximum(marg - 1.0, 0.0).sum()
        l1_obj = np.abs(A.T @ x - b).sum()
        diffs.append(overflow_obj - l1_obj)
    assert np.ptp(diffs) < 1e-9  # constant difference in x


# -- pipelines ----------------------------------------------------------------

def test_mcm_approx_perfect_matching_graph():
    rng = np.random.default_rng(5)
    nl = nr = 8
    perm = rng.permutation(nr)
    edges = [(i, int(perm[i])) for i in range(nl)]
    extra = [(int(rng.integers(nl)), int(rng.integers(nr))) for _ in range(10)]
    g = graph(edges + extra, n_left=nl, n_right=nr)
    sol, _ = matching.mcm_approx(g, 0.1, cfg=FAST)
    sol.check_valid(g)
    assert sol.size == 8  # ceil(0.9 * 8) = 8 forces exactness


def test_mcm_approx_k33_minus_matching():
    edges = [(i, j) for i in range(3) for j in range(3) if i != j]
    g = graph(edges, n_left=3, n_right=3)
    sol, _ = matching.mcm_approx(g, 0.05, cfg=FAST)
    assert sol.size == 3


def test_mcm_approx_empty_graph():
    g = matching.BipartiteGraph.from_arrays(np.zeros(0, dtype=np.int64),
                                            np.zeros(0, dtype=np.int64),
                                            n_left=3, n_right=3)
    sol, _ = matching.mcm_approx(g, 0.1, cfg=FAST)
    assert sol.size == 0


def test_mcm_approx_eps_validation():
    g = graph([(0, 0)])
    with pytest.raises(ValueError):
        matching.mcm_approx(g, 0.7, cfg=FAST)


@pytest.mark.parametrize("seed", range(5))
def test_mcm_approx_random_quality(seed):
    rng = np.random.default_rng(100 + seed)
    g = random_graph(rng, max_side=20, max_m=150)
    star = hk_size(g)
    for eps in (0.1, 0.2):
        sol, _ = matching.mcm_approx(g, eps, cfg=FAST)
        sol.check_valid(g)
        assert sol.size >= math.ceil((1 - eps) * star)


def test_mcm_exact_brute_force_tiny():
    rng = np.random.default_rng(9)
    for _ in range(6):
        nl, nr = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        m = int(rng.integers(1, nl * nr + 1))
        g = matching.BipartiteGraph.from_arrays(rng.integers(0, nl, size=m),
                                                rng.integers(0, nr, size=m),
                                                n_left=nl, n_right=nr)
        sol = matching.mcm_exact(g, cfg=FAST)
        sol.check_valid(g)
        want = oracles.max_matching_bruteforce(
            nl, nr, set(zip(g.edges.u.tolist(), g.edges.v.tolist())))
        assert sol.size == want


@pytest.mark.parametrize("seed", range(4))
def test_mcm_exact_matches_hopcroft_karp(seed):
    rng = np.random.default_rng(40 + seed)
    g = random_graph(rng, max_side=25, max_m=200)
    sol = matching.mcm_exact(g, cfg=FAST)
    sol.check_valid(g)
    assert sol.size == hk_size(g)


def test_overflow_preserved_by_cancelling():
    # cancelling preserves marginals exactly, so overflow never grows
    from streamopt.linkcut import bcco
    rng = np.random.default_rng(2)
    nl = nr = 10
    pairs = [((int(rng.integers(nl)), int(rng.integers(nr))),
              float(rng.uniform(0, 1))) for _ in range(80)]
    dense = {}
    for e, x in pairs:
        dense[e] = dense.get(e, 0.0) + x
    out = bcco(nl, nr, pairs, lambda e: 1.0)
    d = np.ones(nl + nr)
    before = matching.overflow_of(SparseFlow(dense), d, nl)
    after = matching.overflow_of(out, d, nl)
    assert after <= before + 1e-9

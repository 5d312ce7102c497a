"""Acceptance suite: every criterion prints one pass/fail line.

Heavy end-to-end criteria run the fast profile (certified early stopping,
full-eps budget on the solver); solver-level criteria (3, 4, 12) run the
shipped default constants.  Every tolerance is the stated one.
"""
import math
import random
import time

import numpy as np
import pytest

from streamopt import boxsimplex as bs
from streamopt import matching, oracles, sampling, transship, weighted
from streamopt.config import PipelineConfig, SolverConfig
from streamopt.linkcut import DynForest, bcco
from streamopt.stream import ResourceMeter, RowSource, SparseFlow

FAST = PipelineConfig.fast()


def report(num, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"\ncriterion {num:2d}: {status} — {detail}")
    assert ok, f"criterion {num}: {detail}"


def random_bipartite(rng, max_side, max_m, skew=1.0):
    nl = int(2 + (max_side - 2) * rng.random() ** skew)
    nr = int(2 + (max_side - 2) * rng.random() ** skew)
    m = int(rng.integers(max(nl, nr), min(nl * nr, max_m) + 1))
    eu = rng.integers(0, nl, size=m)
    ev = rng.integers(0, nr, size=m)
    return matching.BipartiteGraph.from_arrays(eu, ev, n_left=nl, n_right=nr)


def hk(g):
    return len(oracles.hopcroft_karp(g.n_left, g.n_right,
                                     zip(g.edges.u.tolist(), g.edges.v.tolist())))


def test_criterion_1_mcm_quality():
    rng = np.random.default_rng(101)
    started = time.time()
    checked = 0
    for _ in range(50):
        g = random_bipartite(rng, max_side=100, max_m=2000, skew=2.0)
        assert g.n <= 200 and g.m <= 2000
        star = hk(g)
        for eps in (0.05, 0.1, 0.2):
            sol, _ = matching.mcm_approx(g, eps, cfg=FAST)
            sol.check_valid(g)
            need = math.ceil((1 - eps) * star)
            assert sol.size >= need, \
                f"n={g.n} m={g.m} eps={eps}: {sol.size} < {need} (M*={star})"
            checked += 1
    elapsed = time.time() - started
    report(1, elapsed <= 300.0,
           f"{checked} runs all >= ceil((1-eps)M*), {elapsed:.0f}s (budget 300s)")


def test_criterion_2_space_independent_of_m():
    rng = np.random.default_rng(7)
    peaks = {}
    for m in (1000, 10000):
        eu = rng.integers(0, 50, size=m)
        ev = rng.integers(0, 50, size=m)
        g = matching.BipartiteGraph.from_arrays(eu, ev, n_left=50, n_right=50)
        _, meter = matching.mcm_approx(g, 0.5, cfg=FAST)
        peaks[m] = meter.peak_words
    ratio = max(peaks[10000], peaks[1000]) / min(peaks[10000], peaks[1000])
    report(2, ratio <= 1.1,
           f"peak_words m=1000: {peaks[1000]}, m=10000: {peaks[10000]}, "
           f"ratio {ratio:.3f} <= 1.1")


def test_criterion_3_pass_scaling():
    rng = np.random.default_rng(3)
    m, n = 24, 4
    A = rng.normal(size=(m, n))
    c = np.abs(rng.normal(size=m))
    b = rng.normal(size=n)
    indptr = np.arange(0, m * n + 1, n, dtype=np.int64)
    idx = np.tile(np.arange(n, dtype=np.int64), m)
    rows = RowSource(indptr, idx, A.ravel(), c)
    inst = bs.preprocess(bs.BoxSimplexInstance(rows, b), ResourceMeter())
    eps0 = 0.5 * inst.a_inf
    passes = []
    for k in range(4):
        meter = ResourceMeter()
        rep = bs.solve(inst, eps0 / 2 ** k, meter)  # default config
        passes.append(rep.passes)
        rep.iterates.close()
    ratios = [passes[i + 1] / passes[i] for i in range(3)]
    ok = all(1.8 <= r <= 2.6 for r in ratios)
    report(3, ok, f"passes {passes}, ratios {[round(r, 2) for r in ratios]} "
                  f"in [1.8, 2.6]")


def test_criterion_4_box_simplex_value():
    rng = np.random.default_rng(4)
    worst = 0.0
    cfg = SolverConfig(early_stop=True, gap_checks=128)
    for trial in range(30):
        m, n = int(rng.integers(2, 31)), int(rng.integers(1, 7))
        A = rng.normal(size=(m, n)) * (rng.random(size=(m, n)) < 0.7)
        if np.abs(A).sum(1).max() == 0:
            A[0, 0] = 1.0
        b = 2 * rng.normal(size=n)
        c = np.abs(rng.normal(size=m))
        if trial % 3 == 0:
            c[rng.integers(0, m)] += 10 * np.abs(A).sum(1).max()
        indptr = [0]
        idx, vals = [], []
        for i in range(m):
            nz = np.nonzero(A[i])[0]
            idx.extend(nz.tolist())
            vals.extend(A[i, nz].tolist())
            indptr.append(len(idx))
        rows = RowSource(np.asarray(indptr, dtype=np.int64),
                         np.asarray(idx, dtype=np.int64), np.asarray(vals), c)
        inst = bs.BoxSimplexInstance(rows, b)
        pre = bs.preprocess(inst, ResourceMeter())
        eps = 0.02 * pre.a_inf
        rep = bs.solve(inst, eps, ResourceMeter(), cfg)
        opt = oracles.exact_lp_box_simplex(A, b, c).value
        err = rep.value - opt
        rep.iterates.close()
        assert -1e-7 <= err <= eps + 1e-9, f"trial {trial}: err={err}, eps={eps}"
        worst = max(worst, err / eps)
    report(4, True, f"30/30 within eps of the LP optimum "
                    f"(worst err/eps = {worst:.2f})")


def test_criterion_5_rounding_invariants():
    rng = np.random.default_rng(5)
    # RemoveOverflow postconditions, 1000 fuzz cases
    for case in range(1000):
        nl, nr = int(rng.integers(2, 10)), int(rng.integers(2, 10))
        cnt = int(rng.integers(1, 25))
        x = {}
        for _ in range(cnt):
            e = (int(rng.integers(nl)), int(rng.integers(nr)))
            x[e] = x.get(e, 0.0) + float(rng.uniform(0, 2))
        flow = SparseFlow(x)
        d = rng.uniform(0.1, 1.5, size=nl + nr)
        over = matching.overflow_of(flow, d, nl)
        out = matching.remove_overflow(flow, d, nl)
        marg = np.zeros(nl + nr)
        for (u, v), val in out.items():
            assert val <= x[(u, v)] + 1e-9
            marg[u] += val
            marg[nl + v] += val
        assert (marg <= d + 1e-9).all()
        assert out.l1() >= flow.l1() - over - 1e-9
    # cycle cancelling invariants, 1000 fuzz cases
    for case in range(1000):
        nl, nr = int(rng.integers(2, 16)), int(rng.integers(2, 16))
        cnt = int(rng.integers(1, 6 * (nl + nr)))
        pairs = [((int(rng.integers(nl)), int(rng.integers(nr))),
                  float(rng.uniform(0, 1))) for _ in range(cnt)]
        w = {}
        for e, _ in pairs:
            w.setdefault(e, float(rng.uniform(0, 2)))
        out = bcco(nl, nr, pairs, lambda e: w[e])
        dense = {}
        for e, val in pairs:
            dense[e] = dense.get(e, 0.0) + val
        m_in = np.zeros(nl + nr)
        m_out = np.zeros(nl + nr)
        for e, val in dense.items():
            m_in[e[0]] += val
            m_in[nl + e[1]] += val
        for e, val in out.items():
            m_out[e[0]] += val
            m_out[nl + e[1]] += val
        assert np.abs(m_in - m_out).max() <= 1e-6
        w_in = sum(w[e] * v for e, v in dense.items())
        w_out = sum(w[e] * v for e, v in out.items())
        assert w_out >= w_in - 1e-9 * max(1.0, abs(w_in))
        assert out.support() <= nl + nr
        parent = {}

        def find(z):
            while parent.setdefault(z, z) != z:
                parent[z] = parent[parent[z]]
                z = parent[z]
            return z

        for (u, v) in out.values:
            ra, rb = find(("L", u)), find(("R", v))
            assert ra != rb, "cycle in output support"
            parent[ra] = rb
    report(5, True, "1000 RemoveOverflow + 1000 cycle-cancel fuzz cases, "
                    "0 failures")


def test_criterion_6_linkcut_differential():
    import sys
    sys.path.insert(0, str(__file__).rsplit("/", 1)[0])
    from test_linkcut import NaiveForest
    rng = random.Random(6)
    n = 200
    started = time.time()
    f = DynForest()
    g = NaiveForest()
    for v in range(n):
        g._ensure(v)
    mismatches = 0
    ops = 0
    while ops < 10_000:
        op = rng.random()
        v = rng.randrange(n)
        w = rng.randrange(n)
        ops += 1
        if op < 0.3:
            if v != w and not g.connected(v, w):
                val = round(rng.uniform(-5, 5), 3)
                g.link(v, w, val)
                f.link(v, w, val)
        elif op < 0.45:
            if g.parent(v) is not None:
                g.cut(v)
                f.cut(v)
        elif op < 0.55:
            g.change_root(v)
            f.change_root(v)
        elif op < 0.65:
            d = round(rng.uniform(-2, 2), 3)
            g.path_add(v, d)
            f.path_add(v, d)
        elif op < 0.8:
            if abs(f.path_sum(v) - g.path_sum(v)) > 1e-6:
                mismatches += 1
        elif op < 0.95:
            if abs(f.path_min(v) - g.path_min(v)) > 1e-6 \
                    and f.path_min(v) != g.path_min(v):
                mismatches += 1
        else:
            if g.connected(v, w):
                if f.lca(v, w) != g.lca(v, w):
                    mismatches += 1
            if f.connected(v, w) != g.connected(v, w):
                mismatches += 1
    elapsed = time.time() - started
    report(6, mismatches == 0 and elapsed <= 10.0,
           f"10^4 ops vs naive oracle on 200 vertices: {mismatches} mismatches, "
           f"{elapsed:.1f}s (budget 10s)")


def test_criterion_7_exact_mcm():
    rng = np.random.default_rng(77)
    for trial in range(100):
        g = random_bipartite(rng, max_side=50, max_m=500, skew=1.5)
        assert g.n <= 100
        sol = matching.mcm_exact(g, cfg=FAST)
        sol.check_valid(g)
        star = hk(g)
        assert sol.size == star, f"trial {trial}: {sol.size} != {star}"
    report(7, True, "mcm-exact == hopcroft_karp on 100 random graphs")


def test_criterion_8_optimal_transport():
    rng = np.random.default_rng(8)
    for trial in range(20):
        costs = rng.uniform(0, 1, size=(10, 10))
        ell = rng.dirichlet(np.ones(10))
        r = rng.dirichlet(np.ones(10))
        plan = weighted.ot_solve(costs, ell, r, 0.05, cfg=FAST)
        opt = oracles.exact_ot(costs, ell, r).value
        assert np.abs(plan.marginals_left - ell).max() <= 1e-9
        assert np.abs(plan.marginals_right - r).max() <= 1e-9
        cost = plan.cost(costs)
        assert cost <= opt + 0.05 * costs.max() + 1e-9, \
            f"trial {trial}: {cost} > {opt} + eps"
    report(8, True, "20/20 10x10 instances: marginals exact to 1e-9, "
                    "cost <= OPT + 0.05 ||c||_inf")


def test_criterion_9_mwm():
    rng = np.random.default_rng(9)
    for trial in range(20):
        nl = int(3 + 27 * rng.random() ** 2)
        nr = int(3 + 27 * rng.random() ** 2)
        assert nl + nr <= 60
        m = int(rng.integers(max(nl, nr), min(nl * nr, 200) + 1))
        raw = {}
        for a, b in zip(rng.integers(0, nl, size=m), rng.integers(0, nr, size=m)):
            raw[(int(a), int(b))] = float(rng.uniform(0.05, 1.0))
        keys = sorted(raw)
        eu = np.asarray([k[0] for k in keys], dtype=np.int64)
        ev = np.asarray([k[1] for k in keys], dtype=np.int64)
        w = np.asarray([raw[k] for k in keys])
        eps = 0.05 * w.max()
        sol = weighted.mwm_solve(nl, nr, eu, ev, w, eps, cfg=FAST)
        got = sol.weight(lambda e: raw[e])
        want, _ = oracles.hungarian_mwm(nl, nr, keys, w.tolist())
        assert got >= want - eps - 1e-9, \
            f"trial {trial} ({nl}x{nr}): {got} < {want} - {eps}"
    report(9, True, "20/20 weighted graphs: weight >= Hungarian - 0.05||w||_inf")


def _random_connected(rng, n, extra_factor=1.5):
    edges = set()
    for v in range(1, n):
        edges.add((int(rng.integers(0, v)), v))
    for _ in range(int(extra_factor * n)):
        a, b = int(rng.integers(n)), int(rng.integers(n))
        if a != b:
            edges.add((min(a, b), max(a, b)))
    el = sorted(edges)
    w = rng.uniform(0.5, 2.0, size=len(el))
    return el, w


def test_criterion_10_transshipment_and_sssp():
    rng = np.random.default_rng(10)
    sizes = [5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 18, 20, 22, 25,
             30, 35, 45, 60]
    for trial, n in enumerate(sizes):
        el, w = _random_connected(rng, n)
        d = rng.normal(size=n)
        d -= d.mean()
        inst = transship.TransshipInstance(n, [e[0] for e in el],
                                           [e[1] for e in el], w, d)
        flow, val = transship.approx_transshipment(inst, 0.1, cfg=FAST,
                                                   seed=trial)
        opt = oracles.exact_transshipment(n, el, w, d).value
        assert np.abs(flow.marginals(n) - d).max() <= 1e-8
        assert val <= 1.1 * opt + 1e-9, f"n={n}: {val} > 1.1*{opt}"
    for trial in range(20):
        n = int(rng.integers(5, 16))
        el, w = _random_connected(rng, n, extra_factor=2.0)
        inst = transship.TransshipInstance(n, [e[0] for e in el],
                                           [e[1] for e in el], w, np.zeros(n))
        s, t = 0, n - 1
        path, length = transship.shortest_path(inst, s, t, 0.1, cfg=FAST,
                                               seed=100 + trial)
        dist = oracles.dijkstra(n, el, w, s)[t]
        assert length <= 1.1 * dist + 1e-9, f"sssp {trial}: {length} > 1.1*{dist}"
        assert path[0] == s and path[-1] == t
    report(10, True, "20/20 transshipment within 1.1*OPT with demands met to "
                     "1e-8; 20/20 sssp within 1.1*Dijkstra")


def test_criterion_11_sampling_concentration():
    rng = np.random.default_rng(11)
    n_l = n_r = 10
    m_bar = 10
    m = n_l * n_r
    n = n_l + n_r
    eu = np.repeat(np.arange(n_l), n_r)
    ev = np.tile(np.arange(n_r), n_l)
    indptr = np.arange(0, 2 * m + 1, 2, dtype=np.int64)
    cols = np.empty(2 * m, dtype=np.int64)
    cols[0::2] = eu
    cols[1::2] = n_l + ev
    vals = np.full(2 * m, float(m_bar))
    costs = rng.uniform(0.0, 1.0, size=m)
    rows = RowSource(indptr, cols, vals, costs)
    inst = bs.BoxSimplexInstance(rows, np.zeros(n))
    x = np.full(m, 1.0 / m)
    eps = 0.3
    K = sampling.sample_count(m, n, eps)
    assert K == math.ceil(12 * math.log(m * n) / eps ** 2)
    B = sampling.column_mass(inst, sampling.as_coords(x), ResourceMeter())
    np.testing.assert_allclose(B, 1.0)
    at_x = np.full(n, 1.0)  # A^T x for the uniform x
    c_x = float(costs @ x)
    big_b = 1.0 / m_bar  # max_i M_i
    sparsity_mass = float(x.sum() * m_bar)  # sum_i x_i max_j |A_ij| / B_j
    bound4 = 2.0 * (1.0 + sparsity_mass) * math.log(m * n) / eps ** 2
    support_gate = 4.0 * m_bar * math.log(n) / eps ** 2
    trials = 200
    violations = 0
    support_ok = 0
    spec = None
    for s in range(trials):
        spec = sampling.SampleSpec(B=B, K=K, seed=s)
        xhat = sampling.random_sample(x, inst, spec, ResourceMeter())
        at_h = np.zeros(n)
        l1_h = 0.0
        c_h = 0.0
        for i, v in xhat.items():
            at_h[eu[i]] += m_bar * v
            at_h[n_l + ev[i]] += m_bar * v
            l1_h += v
            c_h += costs[i] * v
        bad = (np.abs(at_h - at_x).max() > eps * 1.0
               or abs(l1_h - 1.0) > eps * max(1.0, big_b)
               or abs(c_h - c_x) > eps * costs.max() * max(1.0, big_b)
               or len(xhat) > bound4)
        violations += bad
        support_ok += len(xhat) <= support_gate
    ok = violations <= 0.05 * trials and support_ok >= 0.95 * trials
    report(11, ok, f"{violations}/{trials} trials violated a conclusion "
                   f"(<= 5% allowed); support within 4x Cor-E.8 bound in "
                   f"{support_ok}/{trials}")


def test_criterion_12_implicit_iterate_fidelity():
    rng = np.random.default_rng(12)
    for trial in range(20):
        m = int(rng.integers(2, 21))
        n = int(rng.integers(1, 5))
        A = rng.normal(size=(m, n)) * (rng.random(size=(m, n)) < 0.8)
        if np.abs(A).sum(1).max() == 0:
            A[0, 0] = 1.0
        c = np.zeros(m)
        b = rng.normal(size=n)
        indptr = [0]
        idx, vals = [], []
        for i in range(m):
            nz = np.nonzero(A[i])[0]
            idx.extend(nz.tolist())
            vals.extend(A[i, nz].tolist())
            indptr.append(len(idx))
        rows = RowSource(np.asarray(indptr, dtype=np.int64),
                         np.asarray(idx, dtype=np.int64), np.asarray(vals), c)
        inst = bs.preprocess(bs.BoxSimplexInstance(rows, b), ResourceMeter())
        a = inst.a_inf
        x0 = np.full(m, 1.0 / m)
        y0 = rng.uniform(-1, 1, size=n)
        y_src = rng.uniform(-1, 1, size=n)
        gamma_y = rng.normal(size=n)
        K = 8
        dense_steps = oracles.dense_alt_min(A, c, a, x0, y0, y_src, gamma_y, K)
        p0 = bs.ImplicitSimplexPoint(np.zeros(n), np.zeros(n), 0.0)
        for k in range(1, K + 1):
            p, y = bs.alt_min(inst, gamma_y, (p0, y0), y_src, k, ResourceMeter())
            z = A @ p.v + np.abs(A) @ p.u + p.lam * c
            x_imp = np.exp(z - z.max())
            x_imp /= x_imp.sum()
            x_ref, y_ref = dense_steps[k - 1]
            np.testing.assert_allclose(x_imp, x_ref, rtol=1e-8)
            np.testing.assert_allclose(y, y_ref, rtol=1e-8, atol=1e-12)
    report(12, True, "20 instances x 8 inner steps: dense reference matches "
                     "implicit iterates to 1e-8 relative")

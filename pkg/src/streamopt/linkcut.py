"""Link/cut forest with path aggregates and bipartite cycle cancelling.

One splay-based structure serves two surfaces: DynForest exposes the classic
dynamic-tree operations (link, cut, change_root, lca, path min/add/sum), and
the cycle canceller folds an arbitrary stream of nonnegative edge flows into
an equivalent forest-supported flow with identical vertex marginals and no
smaller weighted value.

Edges are nodes sitting between their endpoints in the represented paths.
Each edge carries a flow value, a weight, and the bipartition side of the
endpoint that comes first in the current traversal direction.  Bucketing path
aggregates by that side is exactly the alternating parity class of any path
(consecutive path edges enter through opposite sides), and it survives
re-rooting because reversal just swaps the two buckets.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable

from .stream import ResourceMeter, SparseFlow

INF = math.inf

NODE_WORDS = 24


class LinkCutError(ValueError):
    pass


class _Node:
    __slots__ = ("parent", "left", "right", "rev", "is_edge", "side", "x", "w",
                 "key", "ea", "eb", "vid",
                 "mn0", "mn1", "sx0", "sx1", "sw0", "sw1", "c0", "c1", "p0", "p1")

    def __init__(self):
        self.parent = None
        self.left = None
        self.right = None
        self.rev = False
        self.is_edge = False
        self.side = 0
        self.x = 0.0
        self.w = 0.0
        self.key = None
        self.ea = None
        self.eb = None
        self.vid = None
        self.mn0 = INF
        self.mn1 = INF
        self.sx0 = 0.0
        self.sx1 = 0.0
        self.sw0 = 0.0
        self.sw1 = 0.0
        self.c0 = 0
        self.c1 = 0
        self.p0 = 0.0
        self.p1 = 0.0


def _pull(n: _Node) -> None:
    mn0 = mn1 = INF
    sx0 = sx1 = sw0 = sw1 = 0.0
    c0 = c1 = 0
    for ch in (n.left, n.right):
        if ch is not None:
            if ch.mn0 < mn0:
                mn0 = ch.mn0
            if ch.mn1 < mn1:
                mn1 = ch.mn1
            sx0 += ch.sx0
            sx1 += ch.sx1
            sw0 += ch.sw0
            sw1 += ch.sw1
            c0 += ch.c0
            c1 += ch.c1
    if n.is_edge:
        if n.side == 0:
            if n.x < mn0:
                mn0 = n.x
            sx0 += n.x
            sw0 += n.w
            c0 += 1
        else:
            if n.x < mn1:
                mn1 = n.x
            sx1 += n.x
            sw1 += n.w
            c1 += 1
    n.mn0, n.mn1, n.sx0, n.sx1 = mn0, mn1, sx0, sx1
    n.sw0, n.sw1, n.c0, n.c1 = sw0, sw1, c0, c1


def _flip(n: _Node) -> None:
    n.rev = not n.rev
    n.left, n.right = n.right, n.left
    n.mn0, n.mn1 = n.mn1, n.mn0
    n.sx0, n.sx1 = n.sx1, n.sx0
    n.sw0, n.sw1 = n.sw1, n.sw0
    n.c0, n.c1 = n.c1, n.c0
    n.p0, n.p1 = n.p1, n.p0
    if n.is_edge:
        n.side ^= 1


def _apply_add(n: _Node, d0: float, d1: float) -> None:
    if n.is_edge:
        n.x += d0 if n.side == 0 else d1
    if n.c0:
        n.mn0 += d0
        n.sx0 += d0 * n.c0
    if n.c1:
        n.mn1 += d1
        n.sx1 += d1 * n.c1
    n.p0 += d0
    n.p1 += d1


def _push(n: _Node) -> None:
    if n.rev:
        if n.left is not None:
            _flip(n.left)
        if n.right is not None:
            _flip(n.right)
        n.rev = False
    if n.p0 != 0.0 or n.p1 != 0.0:
        if n.left is not None:
            _apply_add(n.left, n.p0, n.p1)
        if n.right is not None:
            _apply_add(n.right, n.p0, n.p1)
        n.p0 = n.p1 = 0.0


def _is_aux_root(n: _Node) -> bool:
    p = n.parent
    return p is None or (p.left is not n and p.right is not n)


def _rotate(n: _Node) -> None:
    p = n.parent
    g = p.parent
    root = _is_aux_root(p)
    if n is p.left:
        b = n.right
        p.left = b
        n.right = p
    else:
        b = n.left
        p.right = b
        n.left = p
    if b is not None:
        b.parent = p
    n.parent = g
    p.parent = n
    if not root:
        if g.left is p:
            g.left = n
        elif g.right is p:
            g.right = n
    _pull(p)
    _pull(n)


def _splay(n: _Node) -> None:
    chain = [n]
    x = n
    while not _is_aux_root(x):
        x = x.parent
        chain.append(x)
    for node in reversed(chain):
        _push(node)
    while not _is_aux_root(n):
        p = n.parent
        if _is_aux_root(p):
            _rotate(n)
        else:
            g = p.parent
            if (g.left is p) == (p.left is n):
                _rotate(p)
            else:
                _rotate(n)
            _rotate(n)


def _access(n: _Node) -> _Node:
    _splay(n)
    if n.right is not None:
        n.right = None
        _pull(n)
    last = n
    x = n
    while x.parent is not None:
        w = x.parent
        _splay(w)
        if w.right is not None:
            w.right = None
            _pull(w)
        w.right = x
        _pull(w)
        _splay(x)
        last = w
    return last


def _find_root(n: _Node) -> _Node:
    _access(n)
    x = n
    _push(x)
    while x.left is not None:
        x = x.left
        _push(x)
    _splay(x)
    return x


def _make_root(n: _Node) -> None:
    _access(n)
    _flip(n)


def _rightmost(n: _Node) -> _Node:
    _push(n)
    while n.right is not None:
        n = n.right
        _push(n)
    return n


def _detach_edge(e: _Node) -> None:
    """Remove an edge node whose aux tree has been arranged around it."""
    _splay(e)
    if e.left is not None:
        e.left.parent = None
        e.left = None
    if e.right is not None:
        e.right.parent = None
        e.right = None
    e.parent = None
    _pull(e)


class _Forest:
    """Shared engine: vertices keyed by id, edges keyed by canonical pair."""

    def __init__(self, side_of: Callable[[int], int], meter: ResourceMeter | None = None):
        self.side_of = side_of
        self.meter = meter
        self.vertices: dict[int, _Node] = {}
        self.edges: dict = {}

    def vertex(self, vid: int) -> _Node:
        node = self.vertices.get(vid)
        if node is None:
            node = _Node()
            node.vid = vid
            self.vertices[vid] = node
            if self.meter:
                self.meter.alloc(NODE_WORDS)
        return node

    def connected(self, a: _Node, b: _Node) -> bool:
        return _find_root(a) is _find_root(b)

    def attach(self, a: _Node, b: _Node, key, value: float, weight: float) -> _Node:
        """Link a's tree under b through a fresh edge node (no cycle check)."""
        e = _Node()
        e.is_edge = True
        e.x = value
        e.w = weight
        e.key = key
        e.ea, e.eb = a, b
        e.side = self.side_of(b.vid)
        _pull(e)
        _make_root(a)
        a.parent = e
        e.parent = b
        self.edges[key] = e
        if self.meter:
            self.meter.alloc(NODE_WORDS)
        return e

    def remove_edge(self, e: _Node) -> None:
        _make_root(e.ea)
        _access(e.eb)
        _detach_edge(e)
        self.discard(e)

    def discard(self, e: _Node) -> None:
        del self.edges[e.key]
        if self.meter:
            self.meter.free(NODE_WORDS)

    def edge_value(self, e: _Node) -> float:
        _splay(e)
        return e.x

    def add_edge_value(self, e: _Node, delta: float) -> None:
        _splay(e)
        e.x += delta
        _pull(e)


def _bucket_min_edge(root: _Node, bucket: int) -> _Node:
    """Descend to the edge attaining the bucket minimum of root's subtree.

    Walks toward the smallest aggregate rather than comparing against a fixed
    target: composed lazy adds are not bit-exact, so equality tests against
    the root minimum can miss.
    """
    n = root
    while True:
        _push(n)
        lmn = (n.left.mn0 if bucket == 0 else n.left.mn1) if n.left is not None else INF
        rmn = (n.right.mn0 if bucket == 0 else n.right.mn1) if n.right is not None else INF
        smn = n.x if (n.is_edge and n.side == bucket) else INF
        if lmn <= smn and lmn <= rmn:
            n = n.left
        elif smn <= rmn:
            return n
        else:
            n = n.right


class CycleCanceller:
    """Streaming bipartite cycle-cancelling oracle.

    Feed nonnegative (edge, value) contributions; the maintained flow is
    always forest-supported, preserves every vertex marginal exactly, and its
    weighted value never decreases.  Edges whose value falls below
    zero_rel * (running max contribution) are cut immediately.
    """

    def __init__(self, side_of: Callable[[int], int],
                 weight_of: Callable[[tuple], float],
                 meter: ResourceMeter | None = None, zero_rel: float = 1e-12):
        self.forest = _Forest(side_of, meter)
        self.weight_of = weight_of
        self.zero_rel = zero_rel
        self.x_max = 0.0
        self.meter = meter

    def _thr(self) -> float:
        return self.zero_rel * self.x_max

    def insert(self, key: tuple, ua: int, vb: int, value: float) -> None:
        if value < 0.0:
            raise LinkCutError(f"negative flow contribution on {key}")
        if value == 0.0:
            return
        if value > self.x_max:
            self.x_max = value
        if self.meter:
            self.meter.add_work(1)
        fo = self.forest
        e = fo.edges.get(key)
        if e is not None:
            fo.add_edge_value(e, value)
            return
        a, b = fo.vertex(ua), fo.vertex(vb)
        weight = self.weight_of(key)
        if not fo.connected(a, b):
            fo.attach(a, b, key, value, weight)
            return
        self._cancel(key, a, b, value, weight)

    def _cancel(self, key, a: _Node, b: _Node, value: float, weight: float) -> None:
        fo = self.forest
        _make_root(a)
        root = _access(b)
        _splay(b)
        root = b
        new_bucket = fo.side_of(b.vid)
        other = 1 - new_bucket
        w_new_side = (root.sw0 if new_bucket == 0 else root.sw1) + weight
        w_other = root.sw1 if new_bucket == 0 else root.sw0
        if w_new_side >= w_other:
            gain, lose = new_bucket, other
            new_gains = True
        else:
            gain, lose = other, new_bucket
            new_gains = False
        path_min = root.mn0 if lose == 0 else root.mn1
        delta = path_min if new_gains else min(value, path_min)
        if delta > 0.0:
            d0 = delta if gain == 0 else -delta
            d1 = delta if gain == 1 else -delta
            _apply_add(root, d0, d1)
        new_value = value + delta if new_gains else value - delta
        thr = self._thr()
        # cut every path edge the cancel zeroed (ties cut together)
        cut_any = False
        while True:
            if not fo.connected(a, b):
                break
            _make_root(a)
            _access(b)
            _splay(b)
            lo = b.mn0 if lose == 0 else b.mn1
            cnt = b.c0 if lose == 0 else b.c1
            if cnt == 0 or lo > thr:
                break
            victim = _bucket_min_edge(b, lose)
            fo.remove_edge(victim)
            cut_any = True
        if new_value > thr:
            if cut_any:
                fo.attach(a, b, key, new_value, weight)
            # else: the new edge itself was cancelled to ~zero against the path

    def extract(self) -> SparseFlow:
        thr = self._thr()
        out: dict = {}
        fo = self.forest
        for key, e in list(fo.edges.items()):
            val = fo.edge_value(e)
            if val > thr:
                out[key] = val
            else:
                fo.remove_edge(e)
        return SparseFlow(out)


def bipartite_sides(n_left: int) -> Callable[[int], int]:
    return lambda vid: 0 if vid < n_left else 1


def bcco(n_left: int, n_right: int, pairs: Iterable[tuple[tuple[int, int], float]],
         weight_of: Callable[[tuple[int, int]], float],
         meter: ResourceMeter | None = None, zero_rel: float = 1e-12) -> SparseFlow:
    """Bipartite cycle-cancelling oracle over explicit (edge, value) pairs.

    Output is forest-supported on at most n_left + n_right - 1 edges with the
    same vertex marginals and no smaller <weight, flow>.
    """
    cc = CycleCanceller(bipartite_sides(n_left), weight_of, meter, zero_rel)
    for (u, v), val in pairs:
        cc.insert((u, v), u, n_left + v, val)
    return cc.extract()


def cycle_cancel_stream(src, n_left: int, n_right: int,
                        weight_of: Callable[[tuple[int, int]], float],
                        meter: ResourceMeter, zero_rel: float = 1e-12) -> SparseFlow:
    """One pass over a stream of nonnegative 1-sparse flow contributions;
    duplicates accumulate.  O(n) workspace, O(L log n) work.

    Records are buffered in chunks of n = n_left + n_right (duplicate edges
    within a chunk merge) before entering the oracle.
    """
    n = max(n_left + n_right, 1)
    cc = CycleCanceller(bipartite_sides(n_left), weight_of, meter, zero_rel)
    buf: dict[tuple[int, int], float] = {}
    with meter.borrow(4 * n):
        count = 0
        for cu, cv, cw in src.chunks(meter):
            for i in range(len(cu)):
                val = float(cw[i])
                if val < 0.0:
                    raise LinkCutError("negative flow contribution in stream")
                key = (int(cu[i]), int(cv[i]))
                buf[key] = buf.get(key, 0.0) + val
                count += 1
                if count == n:
                    for (u, v), x in buf.items():
                        cc.insert((u, v), u, n_left + v, x)
                    buf.clear()
                    count = 0
        for (u, v), x in buf.items():
            cc.insert((u, v), u, n_left + v, x)
    return cc.extract()


class DynForest:
    """Spec-level dynamic forest: per-edge scalar values, path aggregates
    relative to the current root."""

    def __init__(self, meter: ResourceMeter | None = None):
        self._f = _Forest(lambda vid: 0, meter)

    def _vertex(self, v: int) -> _Node:
        return self._f.vertex(v)

    def link(self, v: int, w: int, value: float) -> None:
        if not math.isfinite(value):
            raise LinkCutError("edge value must be finite")
        a, b = self._vertex(v), self._vertex(w)
        if a is b or self._f.connected(a, b):
            raise LinkCutError("would create cycle")
        key = (min(v, w), max(v, w), len(self._f.edges))
        self._f.attach(a, b, key, value, 0.0)

    def cut(self, v: int) -> None:
        node = self._vertex(v)
        _access(node)
        if node.left is None:
            raise LinkCutError("cut at root")
        # the in-order predecessor is the edge to v's parent; access(v) has
        # already pulled it and both endpoints into one auxiliary tree, so
        # detaching in place keeps the far side's root unchanged
        e = _rightmost(node.left)
        _detach_edge(e)
        self._f.discard(e)

    def change_root(self, r: int) -> None:
        _make_root(self._vertex(r))

    def lca(self, v: int, w: int) -> int:
        a, b = self._vertex(v), self._vertex(w)
        if not self._f.connected(a, b):
            raise LinkCutError("vertices in different trees")
        _access(a)
        last = _access(b)
        return last.vid

    def _path_root(self, v: int) -> _Node:
        node = self._vertex(v)
        _access(node)
        return node

    def path_min(self, v: int) -> float:
        node = self._path_root(v)
        return min(node.mn0, node.mn1)

    def path_sum(self, v: int) -> float:
        node = self._path_root(v)
        return node.sx0 + node.sx1

    def path_add(self, v: int, delta: float) -> None:
        node = self._path_root(v)
        _apply_add(node, delta, delta)

    def connected(self, v: int, w: int) -> bool:
        return self._f.connected(self._vertex(v), self._vertex(w))

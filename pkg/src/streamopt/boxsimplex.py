"""Low-space solver for box-simplex games over streamed constraint rows.

Solves min_{x in simplex} max_{y in box} y^T A^T x + c^T x - b^T y, which has
the primal form min_x c^T x + ||A^T x - b||_1.  Simplex iterates stay implicit
as normalized exponentials exp(A v + |A| u + lam c) described by two n-vectors
and a scalar; every gradient the method needs is a one-pass fold over the row
stream in O(n) workspace.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import kernels
from .config import SolverConfig
from .stream import ResourceMeter, RowSource

__all__ = [
    "BoxSimplexInstance", "ImplicitSimplexPoint", "MatvecResult", "SolveReport",
    "preprocess", "implicit_matvec", "alt_min", "solve", "stream_minimizer",
    "CoordStream",
]


@dataclass
class ImplicitSimplexPoint:
    """x proportional to exp(A v + |A| u + lam c), never materialized."""

    v: np.ndarray
    u: np.ndarray
    lam: float


class BoxSimplexInstance:
    """Streamed rows of (A, c) plus a dense target b.

    After preprocessing, rows whose cost exceeds min(c) + 2||A||_inf are
    filtered lazily on replay (their contributions are zeroed per chunk; no
    per-row mask is stored), costs are shifted so min(c) = 0, and b is clamped
    entrywise to [-||A||_inf, ||A||_inf].  `shift` converts objective values
    back to the original instance.
    """

    def __init__(self, rows: RowSource, b: np.ndarray, n: int | None = None):
        self.rows = rows
        self.b = np.asarray(b, dtype=np.float64)
        self.n = int(n) if n is not None else len(self.b)
        if len(self.b) != self.n:
            raise ValueError("b must have one entry per column")
        self.m = rows.length
        self.a_inf = 0.0
        self.c_shift = 0.0
        self.keep_threshold: float | None = None
        self.m_eff = self.m
        self.shift = 0.0
        self.preprocessed = False
        # A == |A| lets the kernels fold A v + |A| u into one product
        self.all_nonneg = bool((rows.values >= 0.0).all()) if rows.length else True

    def effective_costs(self, lo: int, hi: int) -> np.ndarray:
        c = self.rows.costs[lo:hi] - self.c_shift
        if self.keep_threshold is not None:
            c = np.where(self.keep_mask(lo, hi), c, 0.0)
        return c

    def keep_mask(self, lo: int, hi: int) -> np.ndarray | None:
        if self.keep_threshold is None:
            return None
        return self.rows.costs[lo:hi] <= self.keep_threshold

    def chunk_rows(self, cfg: SolverConfig) -> int:
        if cfg.chunk_rows > 0:
            return cfg.chunk_rows
        return max(8 * self.n, 2048)


def preprocess(instance: BoxSimplexInstance, meter: ResourceMeter) -> BoxSimplexInstance:
    """One pass: measure ||A||_inf and the cost range, install the lazy row
    filter, clamp b, and record the scalar shift tying values back to the
    original instance."""
    rows = instance.rows
    meter.add_pass()
    meter.add_work(2 * len(rows.values) + 2 * rows.length)
    if rows.length == 0:
        raise ValueError("empty effective instance")
    norms = rows.row_norms_l1()
    a_inf = float(norms.max())
    if not (a_inf > 0.0):
        raise ValueError("||A||_inf must be positive")
    c_min = float(rows.costs.min())
    threshold = c_min + 2.0 * a_inf
    keep = rows.costs <= threshold
    m_eff = int(keep.sum())
    if m_eff == 0:
        raise ValueError("empty effective instance")

    out = BoxSimplexInstance(rows, instance.b.copy(), instance.n)
    out.a_inf = a_inf
    out.c_shift = c_min
    out.keep_threshold = threshold if m_eff < rows.length else None
    out.m_eff = m_eff
    clipped = np.clip(instance.b, -a_inf, a_inf)
    out.shift = instance.shift + c_min + float(np.abs(instance.b - clipped).sum())
    out.b = clipped
    out.preprocessed = True
    return out


@dataclass
class MatvecResult:
    """One-pass fold of a normalized-exponential iterate against the rows.

    All exponentials share the running shift m_shift, so norm1 and the matrix
    products are exp(m_shift) times the scaled fields.
    """

    m_shift: float
    scaled_norm: float
    scaled_at: np.ndarray | None
    scaled_abs: np.ndarray | None
    scaled_c: float

    @property
    def norm1(self) -> float:
        return self.scaled_norm * math.exp(self.m_shift)

    @property
    def at_x(self) -> np.ndarray:
        return self.scaled_at * math.exp(self.m_shift)

    @property
    def abs_at_x(self) -> np.ndarray:
        return self.scaled_abs * math.exp(self.m_shift)

    def normalized(self, which: str) -> np.ndarray:
        vec = self.scaled_at if which == "at" else self.scaled_abs
        return vec / self.scaled_norm

    @property
    def c_dot(self) -> float:
        return self.scaled_c / self.scaled_norm


def implicit_matvec(instance: BoxSimplexInstance, p: ImplicitSimplexPoint,
                    meter: ResourceMeter, cfg: SolverConfig | None = None,
                    need_at: bool = True, need_abs: bool = True) -> MatvecResult:
    """Compute ||exp(Av+|A|u+lam c)||_1, A^T exp(.), |A|^T exp(.) in one pass.

    Exponent overflow is impossible: a running maximum is folded through the
    pass and accumulators are rescaled when it grows, so every stored
    exponential lies in (0, 1].
    """
    cfg = cfg or SolverConfig()
    if kernels.HAVE_NUMBA:
        return _matvec_jit(instance, p, meter, need_at, need_abs)
    rows = instance.rows
    n = instance.n
    chunk = instance.chunk_rows(cfg)
    meter.add_pass()
    nonneg = instance.all_nonneg
    at = np.zeros(n) if (need_at and not nonneg) else None
    ab = np.zeros(n) if (need_abs or (need_at and nonneg)) else None
    with meter.borrow(12 * chunk + 4 * n):
        m_shift = -math.inf
        s_norm = 0.0
        c_dot = 0.0
        indptr, idx = rows.indptr, rows.indices
        dat, adat, rid = rows.values, rows.abs_values, rows.row_ids
        v, u, lam = p.v, p.u, p.lam
        vu = v + u if nonneg else None
        pair = rows.pair if nonneg else None
        if pair is not None:
            c1, c2, pscale = pair
            vu_ext = np.append(vu, 0.0)
        for i0 in range(0, rows.length, chunk):
            i1 = min(i0 + chunk, rows.length)
            lo, hi = int(indptr[i0]), int(indptr[i1])
            if pair is not None:
                z = pscale * (vu_ext[c1[i0:i1]] + vu_ext[c2[i0:i1]])
            elif nonneg:
                rr = rid[lo:hi] - i0
                z = np.bincount(rr, weights=adat[lo:hi] * vu[idx[lo:hi]],
                                minlength=i1 - i0)
            else:
                ii = idx[lo:hi]
                rr = rid[lo:hi] - i0
                z = np.bincount(rr, weights=dat[lo:hi] * v[ii], minlength=i1 - i0)
                z += np.bincount(rr, weights=adat[lo:hi] * u[ii], minlength=i1 - i0)
            ce = instance.effective_costs(i0, i1)
            if lam != 0.0:
                z += lam * ce
            keep = instance.keep_mask(i0, i1)
            if keep is not None:
                zmax = float(z[keep].max()) if keep.any() else -math.inf
            else:
                zmax = float(z.max())
            if zmax == -math.inf:
                continue
            if zmax > m_shift:
                if math.isfinite(m_shift):
                    scale = math.exp(m_shift - zmax)
                    s_norm *= scale
                    c_dot *= scale
                    if at is not None:
                        at *= scale
                    if ab is not None:
                        ab *= scale
                m_shift = zmax
            e = np.exp(z - m_shift)
            if keep is not None:
                e[~keep] = 0.0
            s_norm += float(e.sum())
            c_dot += float(e @ ce)
            if ab is not None or at is not None:
                if pair is not None:
                    if ab is not None:
                        es = e * pscale
                        acc = np.bincount(c1[i0:i1], weights=es, minlength=n + 1)
                        acc += np.bincount(c2[i0:i1], weights=es, minlength=n + 1)
                        ab += acc[:n]
                else:
                    er = e[rid[lo:hi] - i0]
                    if at is not None:
                        at += np.bincount(idx[lo:hi], weights=dat[lo:hi] * er,
                                          minlength=n)
                    if ab is not None:
                        ab += np.bincount(idx[lo:hi], weights=adat[lo:hi] * er,
                                          minlength=n)
            meter.add_work(6 * (hi - lo) + 4 * (i1 - i0))
    if nonneg:
        return MatvecResult(m_shift, s_norm, ab if need_at else None,
                            ab if need_abs else None, c_dot)
    return MatvecResult(m_shift, s_norm, at, ab, c_dot)


def _matvec_jit(instance: BoxSimplexInstance, p: ImplicitSimplexPoint,
                meter: ResourceMeter, need_at: bool, need_abs: bool) -> MatvecResult:
    """Whole-pass scalar-row fold via the compiled kernels: O(n) workspace
    with no stream-length temporaries at all."""
    rows = instance.rows
    n = instance.n
    meter.add_pass()
    has_filter = instance.keep_threshold is not None
    thr = instance.keep_threshold if has_filter else 0.0
    nonneg = instance.all_nonneg
    with meter.borrow(4 * n):
        if nonneg and rows.pair is not None:
            c1, c2, pscale = rows.pair
            vu_ext = np.append(p.v + p.u, 0.0)
            ab = np.zeros(n)
            m_shift, s_norm, c_dot = kernels.pair_fold(
                c1, c2, pscale, rows.costs, instance.c_shift, thr, has_filter,
                vu_ext, p.lam, need_at or need_abs, ab)
            meter.add_work(4 * rows.length)
            return MatvecResult(m_shift, s_norm, ab if need_at else None,
                                ab if need_abs else None, c_dot)
        if nonneg:
            ab = np.zeros(n)
            at = ab
            vu = p.v + p.u
            zero = np.zeros(n)
            m_shift, s_norm, c_dot = kernels.csr_fold(
                rows.indptr, rows.indices, rows.abs_values, rows.abs_values,
                rows.costs, instance.c_shift, thr, has_filter, vu, zero, p.lam,
                False, need_at or need_abs, zero, ab)
            meter.add_work(3 * len(rows.values))
            return MatvecResult(m_shift, s_norm, ab if need_at else None,
                                ab if need_abs else None, c_dot)
        at = np.zeros(n)
        ab = np.zeros(n)
        m_shift, s_norm, c_dot = kernels.csr_fold(
            rows.indptr, rows.indices, rows.values, rows.abs_values,
            rows.costs, instance.c_shift, thr, has_filter, p.v, p.u, p.lam,
            need_at, need_abs, at, ab)
        meter.add_work(4 * len(rows.values))
    return MatvecResult(m_shift, s_norm, at if need_at else None,
                        ab if need_abs else None, c_dot)


def _box_dual(instance: BoxSimplexInstance, y: np.ndarray, meter: ResourceMeter,
              cfg: SolverConfig) -> float:
    """min_x f(x, y) over the simplex = min_i (c_i + <A_i, y>) - b^T y."""
    if kernels.HAVE_NUMBA:
        meter.add_pass()
        rows = instance.rows
        has_filter = instance.keep_threshold is not None
        thr = instance.keep_threshold if has_filter else 0.0
        meter.add_work(2 * len(rows.values))
        best = kernels.csr_min_row(rows.indptr, rows.indices, rows.values,
                                   rows.costs, instance.c_shift, thr,
                                   has_filter, y)
        return float(best) - float(instance.b @ y)
    rows = instance.rows
    chunk = instance.chunk_rows(cfg)
    meter.add_pass()
    best = math.inf
    indptr, idx = rows.indptr, rows.indices
    dat, rid = rows.values, rows.row_ids
    with meter.borrow(6 * chunk):
        for i0 in range(0, rows.length, chunk):
            i1 = min(i0 + chunk, rows.length)
            lo, hi = int(indptr[i0]), int(indptr[i1])
            ay = np.bincount(rid[lo:hi] - i0, weights=dat[lo:hi] * y[idx[lo:hi]],
                             minlength=i1 - i0)
            vals = ay + instance.effective_costs(i0, i1)
            keep = instance.keep_mask(i0, i1)
            if keep is not None:
                if not keep.any():
                    continue
                vals = vals[keep]
            best = min(best, float(vals.min()))
            meter.add_work(2 * (hi - lo))
    return best - float(instance.b @ y)


def alt_min(instance: BoxSimplexInstance, gamma_y: np.ndarray,
            anchor: tuple[ImplicitSimplexPoint, np.ndarray], y_src: np.ndarray,
            K: int, meter: ResourceMeter,
            cfg: SolverConfig | None = None) -> tuple[ImplicitSimplexPoint, np.ndarray]:
    """K alternating closed-form steps on the coupled regularized subproblem.

    The x-step updates the implicit triple directly; the y-step needs one pass
    for d = 2 |A|^T x and truncates entrywise to the box.  Exactly K + O(1)
    passes.
    """
    cfg = cfg or SolverConfig()
    point0, y0 = anchor
    if K == 0:
        return point0, y0
    a10 = 10.0 * instance.a_inf
    v1 = point0.v - y_src / (3.0 * a10)
    lam1 = point0.lam - 1.0 / (3.0 * a10)
    y0sq = y0 * y0
    if kernels.HAVE_NUMBA:
        rows = instance.rows
        has_filter = instance.keep_threshold is not None
        thr = instance.keep_threshold if has_filter else 0.0
        meter.add_pass(K)
        with meter.borrow(4 * instance.n):
            if instance.all_nonneg and rows.pair is not None:
                c1, c2, pscale = rows.pair
                u1, y = kernels.alt_min_pair(
                    c1, c2, pscale, rows.costs, instance.c_shift, thr,
                    has_filter, v1, point0.u, lam1, y0sq, gamma_y, y0, a10, K)
                meter.add_work(4 * rows.length * K)
            else:
                u1, y = kernels.alt_min_csr(
                    rows.indptr, rows.indices, rows.values, rows.abs_values,
                    rows.costs, instance.c_shift, thr, has_filter, v1,
                    point0.u, lam1, y0sq, gamma_y, y0, a10, K)
                meter.add_work(4 * len(rows.values) * K)
        return ImplicitSimplexPoint(v1, u1, lam1), y
    y = y0
    u1 = point0.u
    for _ in range(K):
        u1 = point0.u + (y0sq - y * y) / a10
        p = ImplicitSimplexPoint(v1, u1, lam1)
        mv = implicit_matvec(instance, p, meter, cfg, need_at=False)
        d = 2.0 * mv.normalized("abs")
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = -gamma_y / d
        zero_d = d == 0.0
        if zero_d.any():
            raw[zero_d] = np.where(gamma_y[zero_d] != 0.0,
                                   -np.sign(gamma_y[zero_d]), 0.0)
        y = np.clip(raw, -1.0, 1.0)
    return ImplicitSimplexPoint(v1, u1, lam1), y


class IterateStore:
    """Per-iterate certificates (v', u', lam', y', shift, norm).

    Held in RAM while small; spills to a temp file once past cap_words so the
    working set stays O(n) for long runs.
    """

    def __init__(self, n: int, cap_words: int, meter: ResourceMeter):
        self.n = n
        self.row_len = 3 * n + 3
        self.cap_words = cap_words
        self.meter = meter
        self._ram: list[np.ndarray] = []
        self._path: str | None = None
        self._file = None
        self._count = 0

    def append(self, point: ImplicitSimplexPoint, y: np.ndarray,
               m_shift: float, scaled_norm: float) -> None:
        row = np.concatenate([point.v, point.u, y,
                              [point.lam, m_shift, scaled_norm]])
        self._count += 1
        if self._file is not None:
            row.tofile(self._file)
            return
        self._ram.append(row)
        self.meter.alloc(self.row_len)
        if len(self._ram) * self.row_len > self.cap_words:
            self._spill()

    def _spill(self) -> None:
        fd, self._path = tempfile.mkstemp(prefix="streamopt-certs-", suffix=".bin")
        self._file = os.fdopen(fd, "wb")
        for row in self._ram:
            row.tofile(self._file)
        self.meter.free(len(self._ram) * self.row_len)
        self._ram = []

    def __len__(self) -> int:
        return self._count

    def __iter__(self):
        n = self.n
        if self._file is not None:
            self._file.flush()
            batch = max(1, (1 << 16) // self.row_len)
            with open(self._path, "rb") as fh:
                left = self._count
                while left > 0:
                    take = min(batch, left)
                    block = np.fromfile(fh, dtype=np.float64,
                                        count=take * self.row_len)
                    block = block.reshape(take, self.row_len)
                    left -= take
                    for row in block:
                        yield (ImplicitSimplexPoint(row[:n], row[n:2 * n], float(row[3 * n])),
                               row[2 * n:3 * n], float(row[3 * n + 1]), float(row[3 * n + 2]))
        else:
            for row in self._ram:
                yield (ImplicitSimplexPoint(row[:n], row[n:2 * n], float(row[3 * n])),
                       row[2 * n:3 * n], float(row[3 * n + 1]), float(row[3 * n + 2]))

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            os.unlink(self._path)
            self._file = None
            self._path = None
        elif self._ram:
            self.meter.free(len(self._ram) * self.row_len)
        self._ram = []

    def __del__(self):  # noqa: D105
        try:
            if self._file is not None:
                self._file.close()
                os.unlink(self._path)
        except Exception:
            pass


@dataclass
class SolveReport:
    value: float
    iterates: IterateStore
    T: int
    K: int
    eps: float
    shift: float
    passes: int
    gap: float | None = None
    probe: str | None = None
    last_iterate: tuple | None = None
    best_index: int = -1
    best_primal: float = math.inf
    avg_primal: float = math.inf

    def points(self):
        for point, y, _, _ in self.iterates:
            yield point, y

    def to_json(self) -> str:
        its = [{"v": p.v.tolist(), "u": p.u.tolist(), "lambda": p.lam,
                "y": y.tolist()} for p, y in self.points()]
        return json.dumps({"value": self.value, "shift": self.shift, "T": self.T,
                           "K": self.K, "eps": self.eps, "iterates": its})


def plan_iterations(a_inf: float, b_l1: float, m_eff: int, eps: float,
                    cfg: SolverConfig) -> tuple[int, int]:
    T = math.ceil(cfg.c_t * a_inf * math.log(max(m_eff, 2)) / eps)
    K = math.ceil(cfg.c_k * math.log(max(a_inf, b_l1, 1.0) * max(m_eff, 1.0 / eps))) + 2
    return max(T, 1), max(K, 1)


def solve(instance: BoxSimplexInstance, eps: float, meter: ResourceMeter,
          cfg: SolverConfig | None = None,
          probe_threshold: float | None = None,
          init: tuple | None = None) -> SolveReport:
    """Mirror-prox outer loop with alternating-minimization inner solves.

    Stores one (v', u', lam', y') certificate per iteration; the averaged
    implicit iterate is an eps-approximate primal minimizer and `value`
    reports its objective against the original (unshifted) instance.

    With probe_threshold set, the loop also exits as soon as it can certify
    which side of the threshold the optimum lies on: the primal value of the
    running average falling to the threshold proves OPT <= thr, the box dual
    exceeding it proves OPT > thr (report.probe is "le" or "gt").
    """
    cfg = cfg or SolverConfig()
    inst = instance if instance.preprocessed else preprocess(instance, meter)
    a = inst.a_inf
    if not (0.0 < eps <= a):
        raise ValueError(f"accuracy must lie in (0, ||A||_inf]; got {eps} vs {a}")
    n = inst.n
    b_l1 = float(np.abs(inst.b).sum())
    T, K = plan_iterations(a, b_l1, inst.m_eff, eps, cfg)

    passes0 = meter.passes
    if init is not None:
        v0, u0, lam, y0 = init
        v = meter.track(np.asarray(v0, dtype=np.float64).copy())
        u = meter.track(np.asarray(u0, dtype=np.float64).copy())
        y = meter.track(np.asarray(y0, dtype=np.float64).copy())
        lam = float(lam)
    else:
        v = meter.track(np.zeros(n))
        u = meter.track(np.zeros(n))
        y = meter.track(np.zeros(n))
        lam = 0.0
    s_at = meter.track(np.zeros(n))
    y_sum = meter.track(np.zeros(n))
    s_c = 0.0
    store = IterateStore(n, cfg.cert_cap_words, meter)
    gap: float | None = None
    probe: str | None = None
    checking = cfg.early_stop or probe_threshold is not None
    check_every = max(1, T // max(cfg.gap_checks, 1))
    thr = (probe_threshold - inst.shift) if probe_threshold is not None else None
    best_primal = math.inf
    best_idx = -1

    t_done = 0
    for t in range(T):
        point = ImplicitSimplexPoint(v, u, lam)
        mv = implicit_matvec(inst, point, meter, cfg)
        ab_n = mv.normalized("abs")
        gy = (inst.b - mv.normalized("at")) / 3.0 - 2.0 * y * ab_n
        w_point, w_y = alt_min(inst, gy, (point, y), y, K, meter, cfg)
        mv2 = implicit_matvec(inst, w_point, meter, cfg, need_abs=False)
        gy2 = (inst.b - mv2.normalized("at")) / 3.0 - 2.0 * y * ab_n
        z_point, z_y = alt_min(inst, gy2, (point, y), w_y, K, meter, cfg)

        store.append(w_point, w_y, mv2.m_shift, mv2.scaled_norm)
        at2 = mv2.normalized("at")
        primal_t = mv2.c_dot + float(np.abs(at2 - inst.b).sum())
        if primal_t < best_primal:
            best_primal = primal_t
            best_idx = t
        s_at += at2
        s_c += mv2.c_dot
        y_sum += w_y
        v, u, lam, y = z_point.v, z_point.u, z_point.lam, z_y
        t_done = t + 1
        if not np.isfinite(y).all():
            raise RuntimeError("non-finite iterate; instance violates its invariants")

        if checking and (t_done % check_every == 0 or t_done == T
                         or (t_done & (t_done - 1)) == 0):
            primal = min(s_c / t_done + float(np.abs(s_at / t_done - inst.b).sum()),
                         best_primal)
            if thr is not None and primal <= thr:
                probe = "le"
                break
            dual = _box_dual(inst, y_sum / t_done, meter, cfg)
            gap = primal - dual
            if thr is not None and dual > thr:
                probe = "gt"
                break
            if gap <= eps:
                if thr is not None:
                    probe = "le" if primal <= thr else "gt"
                break

    avg_primal = s_c / t_done + float(np.abs(s_at / t_done - inst.b).sum())
    value = min(avg_primal, best_primal) + inst.shift
    meter.free(5 * n)  # v, u, y, s_at, y_sum retire with the solve
    return SolveReport(value=value, iterates=store, T=t_done, K=K, eps=eps,
                       shift=inst.shift, passes=meter.passes - passes0, gap=gap,
                       probe=probe, last_iterate=(v, u, lam, y),
                       best_index=best_idx, best_primal=best_primal,
                       avg_primal=avg_primal)


class CoordStream:
    """Replayable stream of 1-sparse coordinate contributions (index, value).

    Each full replay re-derives every iterate's normalized exponential from
    its certificate, one pass over the rows per iterate.
    """

    def __init__(self, report: SolveReport, instance: BoxSimplexInstance,
                 meter: ResourceMeter, cfg: SolverConfig | None = None,
                 drop_below: float = 0.0):
        self.report = report
        self.instance = instance
        self.meter = meter
        self.cfg = cfg or SolverConfig()
        self.drop_below = drop_below
        self.length = report.T * instance.m
        self.passes_per_replay = report.T

    def chunks(self):
        inst = self.instance
        rows = inst.rows
        chunk = inst.chunk_rows(self.cfg)
        T = self.report.T
        self.meter.add_pass(T)
        indptr, idx = rows.indptr, rows.indices
        dat, adat, rid = rows.values, rows.abs_values, rows.row_ids
        with self.meter.borrow(12 * chunk):
            for point, _y, m_shift, s_norm in self.report.iterates:
                v, u, lam = point.v, point.u, point.lam
                for i0 in range(0, rows.length, chunk):
                    i1 = min(i0 + chunk, rows.length)
                    lo, hi = int(indptr[i0]), int(indptr[i1])
                    rr = rid[lo:hi] - i0
                    z = np.bincount(rr, weights=dat[lo:hi] * v[idx[lo:hi]],
                                    minlength=i1 - i0)
                    z += np.bincount(rr, weights=adat[lo:hi] * u[idx[lo:hi]],
                                     minlength=i1 - i0)
                    ce = inst.effective_costs(i0, i1)
                    if lam != 0.0:
                        z += lam * ce
                    vals = np.exp(z - m_shift) / (s_norm * T)
                    keep = inst.keep_mask(i0, i1)
                    if keep is not None:
                        vals[~keep] = 0.0
                    ids = np.arange(i0, i1, dtype=np.int64)
                    if self.drop_below > 0.0:
                        m = vals > self.drop_below
                        ids, vals = ids[m], vals[m]
                    self.meter.add_work(4 * (hi - lo))
                    yield ids, vals

    def records(self):
        for ids, vals in self.chunks():
            for i in range(len(ids)):
                yield int(ids[i]), float(vals[i])

    def sum_dense(self) -> np.ndarray:
        out = np.zeros(self.instance.m)
        for ids, vals in self.chunks():
            np.add.at(out, ids, vals)
        return out


def stream_minimizer(report: SolveReport, instance: BoxSimplexInstance,
                     meter: ResourceMeter, cfg: SolverConfig | None = None,
                     drop_below: float = 0.0) -> CoordStream:
    """Emit, over T passes, the per-row contributions [(1/T) x'_t]_i whose sum
    is the averaged minimizer."""
    return CoordStream(report, instance, meter, cfg, drop_below)


class AveragedStream:
    """Averaged minimizer emitted as one record per row.

    Same pass count and work as the per-iterate stream (each row chunk is
    evaluated against every certificate), but the emitted stream has length m
    instead of T*m, which keeps downstream per-record structures cheap.
    """

    def __init__(self, report: SolveReport, instance: BoxSimplexInstance,
                 meter: ResourceMeter, cfg: SolverConfig | None = None,
                 drop_below: float = 0.0, only_index: int | None = None):
        self.report = report
        self.instance = instance
        self.meter = meter
        self.cfg = cfg or SolverConfig()
        self.drop_below = drop_below
        self.only_index = only_index
        self.length = instance.m
        self.passes_per_replay = report.T if only_index is None else 1

    def chunks(self):
        inst = self.instance
        rows = inst.rows
        chunk = inst.chunk_rows(self.cfg)
        T = self.report.T if self.only_index is None else 1
        self.meter.add_pass(T)
        indptr, idx = rows.indptr, rows.indices
        dat, adat, rid = rows.values, rows.abs_values, rows.row_ids
        nonneg = inst.all_nonneg
        pair = rows.pair if nonneg else None
        jit = kernels.HAVE_NUMBA
        has_filter = inst.keep_threshold is not None
        f_thr = inst.keep_threshold if has_filter else 0.0
        with self.meter.borrow(12 * chunk):
            for i0 in range(0, rows.length, chunk):
                i1 = min(i0 + chunk, rows.length)
                lo, hi = int(indptr[i0]), int(indptr[i1])
                ce = inst.effective_costs(i0, i1)
                keep = inst.keep_mask(i0, i1)
                acc = np.zeros(i1 - i0)
                buf = np.empty(i1 - i0) if jit else None
                for it_idx, (point, _y, m_shift, s_norm) in enumerate(self.report.iterates):
                    if self.only_index is not None and it_idx != self.only_index:
                        continue
                    inv = 1.0 / (s_norm * T)
                    if jit and pair is not None:
                        c1, c2, pscale = pair
                        vu_ext = np.append(point.v + point.u, 0.0)
                        kernels.pair_emit(c1[i0:i1], c2[i0:i1], pscale,
                                          rows.costs[i0:i1], inst.c_shift,
                                          f_thr, has_filter, vu_ext, point.lam,
                                          m_shift, inv, buf)
                        acc += buf
                    elif jit:
                        kernels.csr_emit(indptr[i0:i1 + 1], idx, dat, adat,
                                         rows.costs[i0:i1], inst.c_shift,
                                         f_thr, has_filter, point.v, point.u,
                                         point.lam, m_shift, inv, buf)
                        acc += buf
                    else:
                        ii = idx[lo:hi]
                        rr = rid[lo:hi] - i0
                        if pair is not None:
                            c1, c2, pscale = pair
                            vu_ext = np.append(point.v + point.u, 0.0)
                            z = pscale * (vu_ext[c1[i0:i1]] + vu_ext[c2[i0:i1]])
                        elif nonneg:
                            vu = point.v + point.u
                            z = np.bincount(rr, weights=adat[lo:hi] * vu[ii],
                                            minlength=i1 - i0)
                        else:
                            z = np.bincount(rr, weights=dat[lo:hi] * point.v[ii],
                                            minlength=i1 - i0)
                            z += np.bincount(rr, weights=adat[lo:hi] * point.u[ii],
                                             minlength=i1 - i0)
                        if point.lam != 0.0:
                            z += point.lam * ce
                        acc += np.exp(z - m_shift) * inv
                    self.meter.add_work(3 * (hi - lo))
                if keep is not None and not jit:
                    acc[~keep] = 0.0
                ids = np.arange(i0, i1, dtype=np.int64)
                if self.drop_below > 0.0:
                    m = acc > self.drop_below
                    ids, acc = ids[m], acc[m]
                yield ids, acc

    def records(self):
        for ids, vals in self.chunks():
            for i in range(len(ids)):
                yield int(ids[i]), float(vals[i])

    def sum_dense(self) -> np.ndarray:
        out = np.zeros(self.instance.m)
        for ids, vals in self.chunks():
            np.add.at(out, ids, vals)
        return out


def averaged_minimizer_stream(report: SolveReport, instance: BoxSimplexInstance,
                              meter: ResourceMeter,
                              cfg: SolverConfig | None = None,
                              drop_below: float = 0.0) -> AveragedStream:
    return AveragedStream(report, instance, meter, cfg, drop_below)


def certified_minimizer_stream(report: SolveReport, instance: BoxSimplexInstance,
                               meter: ResourceMeter,
                               cfg: SolverConfig | None = None,
                               drop_below: float = 0.0) -> AveragedStream:
    """Stream whichever certified minimizer is better: the averaged iterate
    or the single iterate with the smallest measured objective."""
    if 0 <= report.best_index and report.best_primal < report.avg_primal:
        return AveragedStream(report, instance, meter, cfg, drop_below,
                              only_index=report.best_index)
    return AveragedStream(report, instance, meter, cfg, drop_below)


def average_x_dense(report: SolveReport, instance: BoxSimplexInstance) -> np.ndarray:
    """Materialize the averaged simplex iterate (test/diagnostic scale only)."""
    return stream_minimizer(report, instance, ResourceMeter()).sum_dense()

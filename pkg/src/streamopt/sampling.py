"""Randomized sparsification of streamed simplex solutions.

Each coordinate is kept via K scaled Bernoulli draws (realized as one
binomial) so that x^_i = Binomial(K, x_i / M_i) * M_i / K is unbiased; with
K = 12 log(mn) / eps^2 the matrix products, l1 norm, and cost concentrate to
relative eps.  An alternative rounding path to cycle cancelling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boxsimplex import BoxSimplexInstance
from .stream import ResourceMeter

__all__ = ["SampleSpec", "random_sample", "sample_and_verify", "sample_count"]


@dataclass
class SampleSpec:
    """Per-coordinate scales M_i = min_j B_j / |A_ij| plus the draw count."""

    B: np.ndarray
    K: int
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("sample count K must be at least 1")


def sample_count(m: int, n: int, eps: float) -> int:
    return max(1, math.ceil(12.0 * math.log(max(m * n, 2)) / eps ** 2))


def column_mass(instance: BoxSimplexInstance, x, meter: ResourceMeter) -> np.ndarray:
    """B_j = [|A|^T x]_j in one pass over coordinate chunks of x."""
    rows = instance.rows
    out = np.zeros(instance.n)
    meter.add_pass()
    for ids, vals in x.chunks():
        for i, xv in zip(ids.tolist(), vals.tolist()):
            lo, hi = int(rows.indptr[i]), int(rows.indptr[i + 1])
            np.add.at(out, rows.indices[lo:hi], rows.abs_values[lo:hi] * xv)
    meter.add_work(rows.length)
    return out


class _ArrayCoords:
    """Adapter presenting a dense vector as a one-shot coordinate stream."""

    def __init__(self, x: np.ndarray):
        self.x = np.asarray(x, dtype=np.float64)
        self.length = len(self.x)

    def chunks(self):
        yield np.arange(self.length, dtype=np.int64), self.x


def as_coords(x) -> "_ArrayCoords":
    return _ArrayCoords(x) if isinstance(x, np.ndarray) else x


def _scales_for_chunk(instance: BoxSimplexInstance, ids: np.ndarray,
                      B: np.ndarray) -> np.ndarray:
    rows = instance.rows
    out = np.empty(len(ids))
    for k, i in enumerate(ids.tolist()):
        lo, hi = int(rows.indptr[i]), int(rows.indptr[i + 1])
        av = rows.abs_values[lo:hi]
        nz = av > 0.0
        if nz.any():
            out[k] = float((B[rows.indices[lo:hi]][nz] / av[nz]).min())
        else:
            out[k] = math.inf
    return out


def random_sample(x, instance: BoxSimplexInstance, spec: SampleSpec,
                  meter: ResourceMeter) -> dict[int, float]:
    """One pass of scaled-Bernoulli rounding; deterministic under the seed.

    Coordinates with zero scale rows (M_i infinite) are kept exactly.
    """
    rng = np.random.default_rng(spec.seed)
    x = as_coords(x)
    meter.add_pass()
    out: dict[int, float] = {}
    for ids, vals in x.chunks():
        M = _scales_for_chunk(instance, ids, spec.B)
        finite = np.isfinite(M) & (M > 0.0)
        p = np.zeros(len(ids))
        with np.errstate(invalid="ignore"):
            p[finite] = vals[finite] / M[finite]
        if ((M == 0.0) & (vals > 0.0)).any() or (p > 1.0 + 1e-12).any():
            bad = int(ids[np.argmax(np.where(M > 0, p, np.where(vals > 0, 2.0, 0.0)))])
            raise ValueError(f"coordinate {bad}: x_i exceeds its scale M_i")
        np.clip(p, 0.0, 1.0, out=p)
        draws = rng.binomial(spec.K, p)
        meter.add_work(len(ids))
        for k in range(len(ids)):
            if not finite[k]:
                if vals[k] != 0.0:
                    out[int(ids[k])] = float(vals[k])
            elif draws[k] > 0:
                out[int(ids[k])] = float(draws[k]) * M[k] / spec.K
    return out


def sample_and_verify(x, instance: BoxSimplexInstance, eps: float,
                      meter: ResourceMeter, seed: int = 0,
                      B: np.ndarray | None = None) -> tuple[dict[int, float], dict]:
    """Sample with the default tight scales and report measured deviations
    (per-column matrix error over B_j, cost error, l1 error, support) for
    harness consumption."""
    x = as_coords(x)
    if B is None:
        B = column_mass(instance, x, meter)
    K = sample_count(instance.m, instance.n, eps)
    spec = SampleSpec(B=B, K=K, seed=seed)
    xhat = random_sample(x, instance, spec, meter)

    rows = instance.rows
    at_x = np.zeros(instance.n)
    c_x = 0.0
    l1_x = 0.0
    meter.add_pass()
    for ids, vals in x.chunks():
        for i, xv in zip(ids.tolist(), vals.tolist()):
            lo, hi = int(rows.indptr[i]), int(rows.indptr[i + 1])
            np.add.at(at_x, rows.indices[lo:hi], rows.values[lo:hi] * xv)
            c_x += rows.costs[i] * xv
            l1_x += xv
    at_h = np.zeros(instance.n)
    c_h = 0.0
    l1_h = 0.0
    for i, xv in xhat.items():
        lo, hi = int(rows.indptr[i]), int(rows.indptr[i + 1])
        np.add.at(at_h, rows.indices[lo:hi], rows.values[lo:hi] * xv)
        c_h += rows.costs[i] * xv
        l1_h += xv
    with np.errstate(divide="ignore", invalid="ignore"):
        col_dev = np.where(B > 0, np.abs(at_h - at_x) / B, 0.0)
    report = {
        "K": K,
        "column_dev": col_dev,
        "max_column_dev": float(col_dev.max()) if len(col_dev) else 0.0,
        "cost_dev": abs(c_h - c_x),
        "l1_dev": abs(l1_h - l1_x),
        "support": len(xhat),
    }
    return xhat, report

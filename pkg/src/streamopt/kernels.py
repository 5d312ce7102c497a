"""Hot inner kernels for the row-stream folds.

Pure-scalar row loops: each row's exponent is computed, rescaled against a
running maximum, and scattered into O(n) accumulators, so the fold uses O(n)
workspace with no stream-length temporaries.  Compiled with numba when
available; the numpy chunk path in boxsimplex is the fallback.
"""
from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except Exception:  # pragma: no cover - numba is an optional accelerator
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap if not (args and callable(args[0])) else args[0]


@njit(cache=True)
def csr_fold(indptr, indices, data, absdata, costs, c_shift, keep_threshold,
             has_filter, v, u, lam, need_at, need_abs, at, ab):
    """One pass over CSR rows: running-max-shifted exponential fold.

    Returns (m_shift, s_norm, c_dot); at/ab are filled in place when asked.
    """
    n = at.shape[0]
    m = costs.shape[0]
    m_shift = -np.inf
    s_norm = 0.0
    c_dot = 0.0
    for i in range(m):
        if has_filter and costs[i] > keep_threshold:
            continue
        ce = costs[i] - c_shift
        z = lam * ce
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            z += data[k] * v[j] + absdata[k] * u[j]
        if z > m_shift:
            if m_shift > -np.inf:
                f = np.exp(m_shift - z)
                s_norm *= f
                c_dot *= f
                if need_at:
                    for j in range(n):
                        at[j] *= f
                if need_abs:
                    for j in range(n):
                        ab[j] *= f
            m_shift = z
        e = np.exp(z - m_shift)
        s_norm += e
        c_dot += e * ce
        if need_at or need_abs:
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if need_at:
                    at[j] += data[k] * e
                if need_abs:
                    ab[j] += absdata[k] * e
    return m_shift, s_norm, c_dot


@njit(cache=True)
def pair_fold(c1, c2, scale, costs, c_shift, keep_threshold, has_filter,
              vu, lam, need_ab, ab):
    """csr_fold specialised to rows scale*(e_a + e_b); vu = v + u padded with
    a trailing scratch zero, accumulators only for |A| (= A here)."""
    m = costs.shape[0]
    n = ab.shape[0]
    m_shift = -np.inf
    s_norm = 0.0
    c_dot = 0.0
    for i in range(m):
        if has_filter and costs[i] > keep_threshold:
            continue
        ce = costs[i] - c_shift
        z = lam * ce + scale * (vu[c1[i]] + vu[c2[i]])
        if z > m_shift:
            if m_shift > -np.inf:
                f = np.exp(m_shift - z)
                s_norm *= f
                c_dot *= f
                if need_ab:
                    for j in range(n):
                        ab[j] *= f
            m_shift = z
        e = np.exp(z - m_shift)
        s_norm += e
        c_dot += e * ce
        if need_ab:
            es = e * scale
            if c1[i] < n:
                ab[c1[i]] += es
            if c2[i] < n:
                ab[c2[i]] += es
    return m_shift, s_norm, c_dot


@njit(cache=True)
def alt_min_csr(indptr, indices, data, absdata, costs, c_shift, keep_threshold,
                has_filter, v1, u0, lam1, y0sq, gamma_y, y_init, a10, K):
    """K alternating steps fused: per step one scalar-row fold for
    d = 2|A|^T x then the entrywise box truncation of -gamma_y/d."""
    n = v1.shape[0]
    m = costs.shape[0]
    y = y_init.copy()
    u1 = u0.copy()
    ab = np.zeros(n)
    for _ in range(K):
        for j in range(n):
            u1[j] = u0[j] + (y0sq[j] - y[j] * y[j]) / a10
            ab[j] = 0.0
        m_shift = -np.inf
        s_norm = 0.0
        for i in range(m):
            if has_filter and costs[i] > keep_threshold:
                continue
            z = lam1 * (costs[i] - c_shift)
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                z += data[k] * v1[j] + absdata[k] * u1[j]
            if z > m_shift:
                if m_shift > -np.inf:
                    f = np.exp(m_shift - z)
                    s_norm *= f
                    for j in range(n):
                        ab[j] *= f
                m_shift = z
            e = np.exp(z - m_shift)
            s_norm += e
            for k in range(indptr[i], indptr[i + 1]):
                ab[indices[k]] += absdata[k] * e
        for j in range(n):
            d = 2.0 * ab[j] / s_norm
            if d > 0.0:
                raw = -gamma_y[j] / d
            elif gamma_y[j] > 0.0:
                raw = -1.0
            elif gamma_y[j] < 0.0:
                raw = 1.0
            else:
                raw = 0.0
            y[j] = min(1.0, max(-1.0, raw))
    return u1, y


@njit(cache=True)
def alt_min_pair(c1, c2, scale, costs, c_shift, keep_threshold, has_filter,
                 v1, u0, lam1, y0sq, gamma_y, y_init, a10, K):
    """alt_min_csr specialised to two-entry incidence rows."""
    n = v1.shape[0]
    m = costs.shape[0]
    y = y_init.copy()
    u1 = u0.copy()
    ab = np.zeros(n)
    vu = np.zeros(n + 1)
    for _ in range(K):
        for j in range(n):
            u1[j] = u0[j] + (y0sq[j] - y[j] * y[j]) / a10
            vu[j] = v1[j] + u1[j]
            ab[j] = 0.0
        m_shift = -np.inf
        s_norm = 0.0
        for i in range(m):
            if has_filter and costs[i] > keep_threshold:
                continue
            z = lam1 * (costs[i] - c_shift) + scale * (vu[c1[i]] + vu[c2[i]])
            if z > m_shift:
                if m_shift > -np.inf:
                    f = np.exp(m_shift - z)
                    s_norm *= f
                    for j in range(n):
                        ab[j] *= f
                m_shift = z
            e = np.exp(z - m_shift)
            s_norm += e
            es = e * scale
            if c1[i] < n:
                ab[c1[i]] += es
            if c2[i] < n:
                ab[c2[i]] += es
        for j in range(n):
            d = 2.0 * ab[j] / s_norm
            if d > 0.0:
                raw = -gamma_y[j] / d
            elif gamma_y[j] > 0.0:
                raw = -1.0
            elif gamma_y[j] < 0.0:
                raw = 1.0
            else:
                raw = 0.0
            y[j] = min(1.0, max(-1.0, raw))
    return u1, y


@njit(cache=True)
def csr_min_row(indptr, indices, data, costs, c_shift, keep_threshold,
                has_filter, y):
    """min over kept rows of (c_i + <A_i, y>), one pass."""
    m = costs.shape[0]
    best = np.inf
    for i in range(m):
        if has_filter and costs[i] > keep_threshold:
            continue
        val = costs[i] - c_shift
        for k in range(indptr[i], indptr[i + 1]):
            val += data[k] * y[indices[k]]
        if val < best:
            best = val
    return best


@njit(cache=True)
def csr_emit(indptr, indices, data, absdata, costs, c_shift, keep_threshold,
             has_filter, v, u, lam, m_shift, inv_norm, out):
    """Materialize one iterate's normalized entries into out (length m)."""
    m = costs.shape[0]
    for i in range(m):
        if has_filter and costs[i] > keep_threshold:
            out[i] = 0.0
            continue
        z = lam * (costs[i] - c_shift)
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            z += data[k] * v[j] + absdata[k] * u[j]
        out[i] = np.exp(z - m_shift) * inv_norm


@njit(cache=True)
def pair_emit(c1, c2, scale, costs, c_shift, keep_threshold, has_filter,
              vu, lam, m_shift, inv_norm, out):
    m = costs.shape[0]
    for i in range(m):
        if has_filter and costs[i] > keep_threshold:
            out[i] = 0.0
            continue
        z = lam * (costs[i] - c_shift) + scale * (vu[c1[i]] + vu[c2[i]])
        out[i] = np.exp(z - m_shift) * inv_norm

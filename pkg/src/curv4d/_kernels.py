"""Compiled inner loops (numba).

Every kernel computes each output element independently and in a fixed
iteration order, so results do not depend on the numba thread count.
"""

import math
import os

import numba
import numpy as np
from numba import njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    # skip probing for TBB; every kernel is safe on the portable layer
    numba.config.THREADING_LAYER = "workqueue"


@njit(cache=True)
def grid_build(points, lo, cell, dims):
    n = points.shape[0]
    ncell = dims[0] * dims[1] * dims[2]
    keys = np.empty(n, np.int64)
    for i in range(n):
        ix = int(math.floor((points[i, 0] - lo[0]) / cell))
        iy = int(math.floor((points[i, 1] - lo[1]) / cell))
        iz = int(math.floor((points[i, 2] - lo[2]) / cell))
        ix = min(max(ix, 0), dims[0] - 1)
        iy = min(max(iy, 0), dims[1] - 1)
        iz = min(max(iz, 0), dims[2] - 1)
        keys[i] = ix + dims[0] * (iy + dims[1] * iz)
    starts = np.zeros(ncell + 1, np.int64)
    for i in range(n):
        starts[keys[i] + 1] += 1
    for c in range(ncell):
        starts[c + 1] += starts[c]
    fill = starts[:-1].copy()
    order = np.empty(n, np.int64)
    for i in range(n):
        order[fill[keys[i]]] = i
        fill[keys[i]] += 1
    return order, starts


@njit(cache=True)
def _cell_range(q, radius, lo, cell, dim):
    # slack covers squared distances that underflow to zero; surplus cells are
    # harmless because every candidate still passes the exact distance test
    radius = radius * (1.0 + 1e-12) + 1e-150
    a = (q - radius - lo) / cell
    b = (q + radius - lo) / cell
    if b < 0.0 or a >= dim:
        return 0, -1
    i0 = int(math.floor(max(a, 0.0)))
    i1 = int(math.floor(min(b, dim - 1.0)))
    return max(i0, 0), min(i1, dim - 1)


@njit(cache=True)
def grid_count(sorted_pts, lo, cell, dims, order, starts, query, radius):
    r2 = radius * radius
    x0, x1 = _cell_range(query[0], radius, lo[0], cell, dims[0])
    y0, y1 = _cell_range(query[1], radius, lo[1], cell, dims[1])
    z0, z1 = _cell_range(query[2], radius, lo[2], cell, dims[2])
    out = np.empty(0, np.int64)
    total = 0
    # two passes: count, then fill
    for npass in range(2):
        if npass == 1:
            out = np.empty(total, np.int64)
        m = 0
        for iz in range(z0, z1 + 1):
            for iy in range(y0, y1 + 1):
                base = (iz * dims[1] + iy) * dims[0]
                for ix in range(x0, x1 + 1):
                    c = base + ix
                    for t in range(starts[c], starts[c + 1]):
                        dx = sorted_pts[t, 0] - query[0]
                        dy = sorted_pts[t, 1] - query[1]
                        dz = sorted_pts[t, 2] - query[2]
                        if dx * dx + dy * dy + dz * dz <= r2:
                            if npass == 1:
                                out[m] = order[t]
                            m += 1
        total = m
    return out


@njit(cache=True, parallel=True)
def grid_moments(sorted_pts, lo, cell, dims, starts, queries, radius):
    """Neighbour count and population covariance for each query ball.

    ``sorted_pts`` holds the cloud ordered by grid cell.
    """
    nq = queries.shape[0]
    counts = np.zeros(nq, np.int64)
    cov = np.zeros((nq, 3, 3))
    r2 = radius * radius
    for q in prange(nq):
        qx = queries[q, 0]
        qy = queries[q, 1]
        qz = queries[q, 2]
        x0, x1 = _cell_range(qx, radius, lo[0], cell, dims[0])
        y0, y1 = _cell_range(qy, radius, lo[1], cell, dims[1])
        z0, z1 = _cell_range(qz, radius, lo[2], cell, dims[2])
        n = 0
        sx = 0.0
        sy = 0.0
        sz = 0.0
        sxx = 0.0
        sxy = 0.0
        sxz = 0.0
        syy = 0.0
        syz = 0.0
        szz = 0.0
        for iz in range(z0, z1 + 1):
            for iy in range(y0, y1 + 1):
                base = (iz * dims[1] + iy) * dims[0]
                for ix in range(x0, x1 + 1):
                    c = base + ix
                    for t in range(starts[c], starts[c + 1]):
                        dx = sorted_pts[t, 0] - qx
                        dy = sorted_pts[t, 1] - qy
                        dz = sorted_pts[t, 2] - qz
                        if dx * dx + dy * dy + dz * dz <= r2:
                            n += 1
                            sx += dx
                            sy += dy
                            sz += dz
                            sxx += dx * dx
                            sxy += dx * dy
                            sxz += dx * dz
                            syy += dy * dy
                            syz += dy * dz
                            szz += dz * dz
        counts[q] = n
        if n > 0:
            mx = sx / n
            my = sy / n
            mz = sz / n
            cov[q, 0, 0] = sxx / n - mx * mx
            cov[q, 1, 1] = syy / n - my * my
            cov[q, 2, 2] = szz / n - mz * mz
            cov[q, 0, 1] = cov[q, 1, 0] = sxy / n - mx * my
            cov[q, 0, 2] = cov[q, 2, 0] = sxz / n - mx * mz
            cov[q, 1, 2] = cov[q, 2, 1] = syz / n - my * mz
    return counts, cov


@njit(cache=True)
def _slot_update(k, b, i, spacing, m, best_idx, best_dist):
    j = int(math.floor(b / spacing + 0.5)) - 1
    if j < 0 or j >= m:
        return
    d = abs(b - (j + 1) * spacing)
    if d <= 0.5 * spacing and d < best_dist[k, j]:
        best_dist[k, j] = d
        best_idx[k, j] = i


@njit(cache=True)
def stripe_slots(points, origin, base1, base2, n1s, n2s, delta, extent, m):
    """Nearest stripe point per (stripe, slot); -1 where the slot is empty.

    Equivalent to running the per-stripe membership test and grid snapping
    for every stripe; an angular window prunes which stripes a point is
    tested against, the membership test itself stays exact.
    """
    nstripe = n1s.shape[0]
    alpha = 2.0 * math.pi / nstripe
    spacing = extent / m
    best_idx = np.full((nstripe, m), -1, np.int64)
    best_dist = np.full((nstripe, m), np.inf)
    for i in range(points.shape[0]):
        px = points[i, 0] - origin[0]
        py = points[i, 1] - origin[1]
        pz = points[i, 2] - origin[2]
        u = px * base1[0] + py * base1[1] + pz * base1[2]
        v = px * base2[0] + py * base2[1] + pz * base2[2]
        rho = math.sqrt(u * u + v * v)
        if rho <= 2.0 * delta:
            k0 = 0
            k1 = nstripe - 1
        else:
            half = math.asin(min(1.0, delta / rho)) / alpha
            centre = (math.atan2(v, u) - 0.5 * math.pi) / alpha
            k0 = int(math.floor(centre - half)) - 1
            k1 = int(math.ceil(centre + half)) + 1
            if k1 - k0 + 1 >= nstripe:
                k0 = 0
                k1 = nstripe - 1
        for kk in range(k0, k1 + 1):
            k = kk % nstripe
            a = px * n1s[k, 0] + py * n1s[k, 1] + pz * n1s[k, 2]
            if abs(a) > delta:
                continue
            b = px * n2s[k, 0] + py * n2s[k, 1] + pz * n2s[k, 2]
            if b > 0.0:
                _slot_update(k, b, i, spacing, m, best_idx, best_dist)
    return best_idx


@njit(cache=True, parallel=True)
def xcorr_rows(prev, cur, max_lag):
    """Row-wise lag-maximised product sums, zero padded outside the row."""
    nrow, m = cur.shape
    values = np.zeros(nrow)
    lags = np.zeros(nrow, np.int64)
    for k in prange(nrow):
        best = -np.inf
        best_j = 0
        for step in range(2 * max_lag + 1):
            # visit lags as 0, -1, +1, -2, +2, ... and keep the first maximum
            if step == 0:
                j = 0
            elif step % 2 == 1:
                j = -((step + 1) // 2)
            else:
                j = step // 2
            s = 0.0
            for i in range(max(0, -j), min(m, m - j)):
                s += cur[k, i] * prev[k, i + j]
            if s > best:
                best = s
                best_j = j
        values[k] = best
        lags[k] = best_j
    return values, lags

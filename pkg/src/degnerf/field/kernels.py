"""Compiled per-ray forward and backward passes over a packed grid.

The grid is ``(Nx, Ny, Nz, 4)``: raw density followed by raw RGB.  Both
kernels walk rays serially in a fixed order, so results are bit-reproducible.
Samples outside the box have zero density and contribute nothing; the box
clip only skips them early.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _softplus(x):
    if x > 20.0:
        return x
    return math.log1p(math.exp(x))


@njit(cache=True, inline="always")
def _sigmoid(x):
    return 0.5 * (1.0 + math.tanh(0.5 * x))


@njit(cache=True, inline="always")
def _axis(p, lo, hi, n):
    g = (p - lo) / (hi - lo) * n - 0.5
    b = math.floor(g)
    f = g - b
    i0 = int(b)
    i1 = i0 + 1
    if i0 < 0:
        i0 = 0
    if i1 > n - 1:
        i1 = n - 1
    if i1 < 0:
        i1 = 0
    if i0 > n - 1:
        i0 = n - 1
    return i0, i1, f


@njit(cache=True, inline="always")
def _sample_range(o, d, near, step, n_samples, lo, hi):
    """Sample indices [k0, k1) whose segments can touch the box (padded by one)."""
    tmin = -1e300
    tmax = 1e300
    for a in range(3):
        if d[a] != 0.0:
            t0 = (lo[a] - o[a]) / d[a]
            t1 = (hi[a] - o[a]) / d[a]
            if t0 > t1:
                t0, t1 = t1, t0
            if t0 > tmin:
                tmin = t0
            if t1 < tmax:
                tmax = t1
        elif o[a] < lo[a] or o[a] > hi[a]:
            return 0, 0
    if tmax < tmin:
        return 0, 0
    k0 = int(math.floor((tmin - near) / step)) - 1
    k1 = int(math.floor((tmax - near) / step)) + 2
    if k0 < 0:
        k0 = 0
    if k1 > n_samples:
        k1 = n_samples
    return k0, k1


@njit(cache=True, inline="always")
def _inside(px, py, pz, lo, hi):
    return not (px < lo[0] or px > hi[0] or py < lo[1] or py > hi[1]
                or pz < lo[2] or pz > hi[2])


@njit(cache=True)
def render_rays_kernel(grid, bbox, origins, dirs, near, far, n_samples, jitter, bg,
                       out_rgb, out_trans, t_stop=0.0):
    """Rays stop marching once transmittance drops below ``t_stop`` (0 = never)."""
    nx, ny, nz, _ = grid.shape
    lo = bbox[0]
    hi = bbox[1]
    stratified = jitter.shape[0] > 0
    for r in range(origins.shape[0]):
        step = (far[r] - near[r]) / n_samples
        trans = 1.0
        cr = 0.0
        cg = 0.0
        cb = 0.0
        k0, k1 = _sample_range(origins[r], dirs[r], near[r], step, n_samples, lo, hi)
        for k in range(k0, k1):
            u = jitter[r, k] if stratified else 0.5
            t = near[r] + (k + u) * step
            px = origins[r, 0] + t * dirs[r, 0]
            py = origins[r, 1] + t * dirs[r, 1]
            pz = origins[r, 2] + t * dirs[r, 2]
            if not _inside(px, py, pz, lo, hi):
                continue
            x0, x1, fx = _axis(px, lo[0], hi[0], nx)
            y0, y1, fy = _axis(py, lo[1], hi[1], ny)
            z0, z1, fz = _axis(pz, lo[2], hi[2], nz)
            a0 = 0.0
            a1 = 0.0
            a2 = 0.0
            a3 = 0.0
            for c in range(8):
                ix = x1 if c & 4 else x0
                iy = y1 if c & 2 else y0
                iz = z1 if c & 1 else z0
                w = ((fx if c & 4 else 1.0 - fx) * (fy if c & 2 else 1.0 - fy)
                     * (fz if c & 1 else 1.0 - fz))
                a0 += w * grid[ix, iy, iz, 0]
                a1 += w * grid[ix, iy, iz, 1]
                a2 += w * grid[ix, iy, iz, 2]
                a3 += w * grid[ix, iy, iz, 3]
            ex = math.exp(-_softplus(a0) * step)
            wgt = trans * (1.0 - ex)
            cr += wgt * _sigmoid(a1)
            cg += wgt * _sigmoid(a2)
            cb += wgt * _sigmoid(a3)
            trans *= ex
            if trans < t_stop:
                break
        out_rgb[r, 0] = cr + trans * bg[0]
        out_rgb[r, 1] = cg + trans * bg[1]
        out_rgb[r, 2] = cb + trans * bg[2]
        out_trans[r] = trans


@njit(cache=True)
def backward_rays_kernel(grid, bbox, origins, dirs, near, far, n_samples, jitter, bg,
                         grad_rgb, grad_grid):
    """Accumulate dL/d(raw grid) into ``grad_grid`` given dL/d(rgb) per ray."""
    nx, ny, nz, _ = grid.shape
    lo = bbox[0]
    hi = bbox[1]
    stratified = jitter.shape[0] > 0
    # per-sample scratch: corner indices, fractions, sigma, dsoftplus, rgb, T before
    idx = np.zeros((n_samples, 6), dtype=np.int64)
    val = np.zeros((n_samples, 9), dtype=np.float64)
    used = np.zeros(n_samples, dtype=np.bool_)
    for r in range(origins.shape[0]):
        g0 = grad_rgb[r, 0]
        g1 = grad_rgb[r, 1]
        g2 = grad_rgb[r, 2]
        if g0 == 0.0 and g1 == 0.0 and g2 == 0.0:
            continue
        step = (far[r] - near[r]) / n_samples
        trans = 1.0
        cr = 0.0
        cg = 0.0
        cb = 0.0
        k0, k1 = _sample_range(origins[r], dirs[r], near[r], step, n_samples, lo, hi)
        for k in range(k0, k1):
            u = jitter[r, k] if stratified else 0.5
            t = near[r] + (k + u) * step
            px = origins[r, 0] + t * dirs[r, 0]
            py = origins[r, 1] + t * dirs[r, 1]
            pz = origins[r, 2] + t * dirs[r, 2]
            used[k] = _inside(px, py, pz, lo, hi)
            if not used[k]:
                continue
            x0, x1, fx = _axis(px, lo[0], hi[0], nx)
            y0, y1, fy = _axis(py, lo[1], hi[1], ny)
            z0, z1, fz = _axis(pz, lo[2], hi[2], nz)
            a0 = 0.0
            a1 = 0.0
            a2 = 0.0
            a3 = 0.0
            for c in range(8):
                ix = x1 if c & 4 else x0
                iy = y1 if c & 2 else y0
                iz = z1 if c & 1 else z0
                w = ((fx if c & 4 else 1.0 - fx) * (fy if c & 2 else 1.0 - fy)
                     * (fz if c & 1 else 1.0 - fz))
                a0 += w * grid[ix, iy, iz, 0]
                a1 += w * grid[ix, iy, iz, 1]
                a2 += w * grid[ix, iy, iz, 2]
                a3 += w * grid[ix, iy, iz, 3]
            sigma = _softplus(a0)
            c0 = _sigmoid(a1)
            c1 = _sigmoid(a2)
            c2 = _sigmoid(a3)
            idx[k, 0] = x0
            idx[k, 1] = x1
            idx[k, 2] = y0
            idx[k, 3] = y1
            idx[k, 4] = z0
            idx[k, 5] = z1
            val[k, 0] = fx
            val[k, 1] = fy
            val[k, 2] = fz
            val[k, 3] = sigma
            val[k, 4] = _sigmoid(a0)
            val[k, 5] = c0
            val[k, 6] = c1
            val[k, 7] = c2
            val[k, 8] = trans
            ex = math.exp(-sigma * step)
            wgt = trans * (1.0 - ex)
            cr += wgt * c0
            cg += wgt * c1
            cb += wgt * c2
            trans *= ex
        tot0 = cr + trans * bg[0]
        tot1 = cg + trans * bg[1]
        tot2 = cb + trans * bg[2]
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        for k in range(k0, k1):
            if not used[k]:
                continue
            t_before = val[k, 8]
            t_after = t_before * math.exp(-val[k, 3] * step)
            wgt = t_before - t_after
            c0 = val[k, 5]
            c1 = val[k, 6]
            c2 = val[k, 7]
            acc0 += wgt * c0
            acc1 += wgt * c1
            acc2 += wgt * c2
            # dC/dsigma_k = step * (T_{k+1} c_k - (C - C_{<=k}))
            dsig = step * (g0 * (t_after * c0 - (tot0 - acc0))
                           + g1 * (t_after * c1 - (tot1 - acc1))
                           + g2 * (t_after * c2 - (tot2 - acc2)))
            d_s = dsig * val[k, 4]
            d0 = g0 * wgt * c0 * (1.0 - c0)
            d1 = g1 * wgt * c1 * (1.0 - c1)
            d2 = g2 * wgt * c2 * (1.0 - c2)
            fx = val[k, 0]
            fy = val[k, 1]
            fz = val[k, 2]
            for c in range(8):
                ix = idx[k, 1] if c & 4 else idx[k, 0]
                iy = idx[k, 3] if c & 2 else idx[k, 2]
                iz = idx[k, 5] if c & 1 else idx[k, 4]
                w = ((fx if c & 4 else 1.0 - fx) * (fy if c & 2 else 1.0 - fy)
                     * (fz if c & 1 else 1.0 - fz))
                grad_grid[ix, iy, iz, 0] += w * d_s
                grad_grid[ix, iy, iz, 1] += w * d0
                grad_grid[ix, iy, iz, 2] += w * d1
                grad_grid[ix, iy, iz, 3] += w * d2

"""Numba kernels for window spreading/interpolation and cloud-in-cell.

All loops are serial per rank by design: particle order fixes the
floating-point accumulation order, which keeps runs bit-reproducible.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _stencil(c, n, w, half, inv_half, beta, wt, idx):
    """Window weights and wrapped grid indices for one coordinate.

    c is the position in grid units; the stencil covers w consecutive grid
    points around it, mapped to t in [-1, 1] for the exponential-of-
    semicircle window exp(beta*(sqrt(1-t^2)-1)).
    """
    i0 = int(np.ceil(c - half))
    for a in range(w):
        i = i0 + a
        t = (c - i) * inv_half
        u = 1.0 - t * t
        if u < 0.0:
            u = 0.0
        wt[a] = np.exp(beta * (np.sqrt(u) - 1.0))
        idx[a] = i % n
    return i0


@njit(cache=True, nogil=True)
def spread_c(pts, vals, grid, n, h, w, beta):
    """Scatter complex strengths onto the flat (n^3,) periodic fine grid."""
    half = 0.5 * w
    inv_half = 2.0 / w
    wx = np.empty(w)
    wy = np.empty(w)
    wz = np.empty(w)
    ix = np.empty(w, np.int64)
    iy = np.empty(w, np.int64)
    iz = np.empty(w, np.int64)
    for p in range(pts.shape[0]):
        _stencil(pts[p, 0] / h, n, w, half, inv_half, beta, wx, ix)
        _stencil(pts[p, 1] / h, n, w, half, inv_half, beta, wy, iy)
        _stencil(pts[p, 2] / h, n, w, half, inv_half, beta, wz, iz)
        s = vals[p]
        for a in range(w):
            sa = s * wx[a]
            ra = ix[a] * n
            for b in range(w):
                sab = sa * wy[b]
                base = (ra + iy[b]) * n
                for c in range(w):
                    grid[base + iz[c]] += sab * wz[c]


@njit(cache=True, nogil=True)
def spread_r(pts, vals, grid, n, h, w, beta):
    """Real-strength variant of spread_c (the charge-deposition hot path).

    The z stencil is written as a contiguous run when it does not cross the
    periodic seam, which lets the innermost loop vectorize; writes go to
    distinct slots, so vectorization cannot change the accumulation order.
    """
    half = 0.5 * w
    inv_half = 2.0 / w
    wx = np.empty(w)
    wy = np.empty(w)
    wz = np.empty(w)
    ix = np.empty(w, np.int64)
    iy = np.empty(w, np.int64)
    iz = np.empty(w, np.int64)
    for p in range(pts.shape[0]):
        _stencil(pts[p, 0] / h, n, w, half, inv_half, beta, wx, ix)
        _stencil(pts[p, 1] / h, n, w, half, inv_half, beta, wy, iy)
        i0z = _stencil(pts[p, 2] / h, n, w, half, inv_half, beta, wz, iz)
        s = vals[p]
        z0 = i0z % n
        if z0 + w <= n:
            for a in range(w):
                sa = s * wx[a]
                ra = ix[a] * n
                for b in range(w):
                    sab = sa * wy[b]
                    base = (ra + iy[b]) * n + z0
                    for c in range(w):
                        grid[base + c] += sab * wz[c]
        else:
            for a in range(w):
                sa = s * wx[a]
                ra = ix[a] * n
                for b in range(w):
                    sab = sa * wy[b]
                    base = (ra + iy[b]) * n
                    for c in range(w):
                        grid[base + iz[c]] += sab * wz[c]


@njit(cache=True, nogil=True)
def interp_c(pts, grid, out, n, h, w, beta):
    """Gather complex grid values back to points (adjoint of spread_c)."""
    half = 0.5 * w
    inv_half = 2.0 / w
    wx = np.empty(w)
    wy = np.empty(w)
    wz = np.empty(w)
    ix = np.empty(w, np.int64)
    iy = np.empty(w, np.int64)
    iz = np.empty(w, np.int64)
    for p in range(pts.shape[0]):
        _stencil(pts[p, 0] / h, n, w, half, inv_half, beta, wx, ix)
        _stencil(pts[p, 1] / h, n, w, half, inv_half, beta, wy, iy)
        _stencil(pts[p, 2] / h, n, w, half, inv_half, beta, wz, iz)
        acc = 0.0 + 0.0j
        for a in range(w):
            ra = ix[a] * n
            for b in range(w):
                base = (ra + iy[b]) * n
                wab = wx[a] * wy[b]
                for c in range(w):
                    acc += grid[base + iz[c]] * (wab * wz[c])
        out[p] = acc


@njit(cache=True, nogil=True)
def interp_r3(pts, g0, g1, g2, out, n, h, w, beta):
    """Gather three real grids at once (electric-field hot path).

    Partial sums are kept per z-lane so the inner loop vectorizes with a
    fixed, run-independent accumulation order; the z weights are applied in
    a final ordered dot product.
    """
    half = 0.5 * w
    inv_half = 2.0 / w
    wx = np.empty(w)
    wy = np.empty(w)
    wz = np.empty(w)
    ix = np.empty(w, np.int64)
    iy = np.empty(w, np.int64)
    iz = np.empty(w, np.int64)
    lane0 = np.empty(w)
    lane1 = np.empty(w)
    lane2 = np.empty(w)
    for p in range(pts.shape[0]):
        _stencil(pts[p, 0] / h, n, w, half, inv_half, beta, wx, ix)
        _stencil(pts[p, 1] / h, n, w, half, inv_half, beta, wy, iy)
        i0z = _stencil(pts[p, 2] / h, n, w, half, inv_half, beta, wz, iz)
        for c in range(w):
            lane0[c] = 0.0
            lane1[c] = 0.0
            lane2[c] = 0.0
        z0 = i0z % n
        if z0 + w <= n:
            for a in range(w):
                ra = ix[a] * n
                for b in range(w):
                    base = (ra + iy[b]) * n + z0
                    wab = wx[a] * wy[b]
                    for c in range(w):
                        lane0[c] += g0[base + c] * wab
                        lane1[c] += g1[base + c] * wab
                        lane2[c] += g2[base + c] * wab
        else:
            for a in range(w):
                ra = ix[a] * n
                for b in range(w):
                    base = (ra + iy[b]) * n
                    wab = wx[a] * wy[b]
                    for c in range(w):
                        j = base + iz[c]
                        lane0[c] += g0[j] * wab
                        lane1[c] += g1[j] * wab
                        lane2[c] += g2[j] * wab
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        for c in range(w):
            a0 += lane0[c] * wz[c]
            a1 += lane1[c] * wz[c]
            a2 += lane2[c] * wz[c]
        out[p, 0] = a0
        out[p, 1] = a1
        out[p, 2] = a2


@njit(cache=True, nogil=True)
def spread_slab_c(pts, vals, buf, n, nzbuf, z0, h, w, beta):
    """Scatter onto a z-slab buffer of nzbuf planes starting at global plane
    z0 (slab plus halo).  x/y wrap periodically; z indices are guaranteed in
    range because the halo is at least ceil(w/2) planes deep."""
    half = 0.5 * w
    inv_half = 2.0 / w
    wx = np.empty(w)
    wy = np.empty(w)
    wz = np.empty(w)
    ix = np.empty(w, np.int64)
    iy = np.empty(w, np.int64)
    iz = np.empty(w, np.int64)
    for p in range(pts.shape[0]):
        _stencil(pts[p, 0] / h, n, w, half, inv_half, beta, wx, ix)
        _stencil(pts[p, 1] / h, n, w, half, inv_half, beta, wy, iy)
        cz = pts[p, 2] / h
        i0 = int(np.ceil(cz - half))
        for a in range(w):
            i = i0 + a
            t = (cz - i) * inv_half
            u = 1.0 - t * t
            if u < 0.0:
                u = 0.0
            wz[a] = np.exp(beta * (np.sqrt(u) - 1.0))
            iz[a] = i - z0
        s = vals[p]
        for a in range(w):
            sa = s * wx[a]
            ra = ix[a] * n
            for b in range(w):
                sab = sa * wy[b]
                base = (ra + iy[b]) * nzbuf
                for c in range(w):
                    buf[base + iz[c]] += sab * wz[c]


@njit(cache=True, nogil=True)
def interp_slab_c(pts, buf, out, n, nzbuf, z0, h, w, beta):
    """Gather from a z-slab buffer (slab plus halo planes)."""
    half = 0.5 * w
    inv_half = 2.0 / w
    wx = np.empty(w)
    wy = np.empty(w)
    wz = np.empty(w)
    ix = np.empty(w, np.int64)
    iy = np.empty(w, np.int64)
    iz = np.empty(w, np.int64)
    for p in range(pts.shape[0]):
        _stencil(pts[p, 0] / h, n, w, half, inv_half, beta, wx, ix)
        _stencil(pts[p, 1] / h, n, w, half, inv_half, beta, wy, iy)
        cz = pts[p, 2] / h
        i0 = int(np.ceil(cz - half))
        for a in range(w):
            i = i0 + a
            t = (cz - i) * inv_half
            u = 1.0 - t * t
            if u < 0.0:
                u = 0.0
            wz[a] = np.exp(beta * (np.sqrt(u) - 1.0))
            iz[a] = i - z0
        acc = 0.0 + 0.0j
        for a in range(w):
            ra = ix[a] * n
            for b in range(w):
                base = (ra + iy[b]) * nzbuf
                wab = wx[a] * wy[b]
                for c in range(w):
                    acc += buf[base + iz[c]] * (wab * wz[c])
        out[p] = acc


@njit(cache=True, nogil=True)
def cic_spread_r(pts, vals, grid, n, h):
    """Cloud-in-cell (trilinear) deposition onto a flat (n^3,) periodic grid."""
    for p in range(pts.shape[0]):
        s = vals[p]
        fx = pts[p, 0] / h
        fy = pts[p, 1] / h
        fz = pts[p, 2] / h
        i = int(np.floor(fx))
        j = int(np.floor(fy))
        k = int(np.floor(fz))
        dx = fx - i
        dy = fy - j
        dz = fz - k
        i0 = i % n
        j0 = j % n
        k0 = k % n
        i1 = (i + 1) % n
        j1 = (j + 1) % n
        k1 = (k + 1) % n
        grid[(i0 * n + j0) * n + k0] += s * (1 - dx) * (1 - dy) * (1 - dz)
        grid[(i0 * n + j0) * n + k1] += s * (1 - dx) * (1 - dy) * dz
        grid[(i0 * n + j1) * n + k0] += s * (1 - dx) * dy * (1 - dz)
        grid[(i0 * n + j1) * n + k1] += s * (1 - dx) * dy * dz
        grid[(i1 * n + j0) * n + k0] += s * dx * (1 - dy) * (1 - dz)
        grid[(i1 * n + j0) * n + k1] += s * dx * (1 - dy) * dz
        grid[(i1 * n + j1) * n + k0] += s * dx * dy * (1 - dz)
        grid[(i1 * n + j1) * n + k1] += s * dx * dy * dz


@njit(cache=True, nogil=True)
def cic_interp_r3(pts, g0, g1, g2, out, n, h):
    """Trilinear gather of three real grids."""
    for p in range(pts.shape[0]):
        fx = pts[p, 0] / h
        fy = pts[p, 1] / h
        fz = pts[p, 2] / h
        i = int(np.floor(fx))
        j = int(np.floor(fy))
        k = int(np.floor(fz))
        dx = fx - i
        dy = fy - j
        dz = fz - k
        i0 = i % n
        j0 = j % n
        k0 = k % n
        i1 = (i + 1) % n
        j1 = (j + 1) % n
        k1 = (k + 1) % n
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        for (ii, wxv) in ((i0, 1 - dx), (i1, dx)):
            for (jj, wyv) in ((j0, 1 - dy), (j1, dy)):
                base = (ii * n + jj) * n
                wxy = wxv * wyv
                for (kk, wzv) in ((k0, 1 - dz), (k1, dz)):
                    wgt = wxy * wzv
                    a0 += g0[base + kk] * wgt
                    a1 += g1[base + kk] * wgt
                    a2 += g2[base + kk] * wgt
        out[p, 0] = a0
        out[p, 1] = a1
        out[p, 2] = a2

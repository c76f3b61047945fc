# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: marching-cubes triangle emission, z-buffer coverage, NMS.

Each function matches the numpy version in ``_fallback`` operation for
operation; keep the two in sync.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport ceil, floor

cnp.import_array()

NAME = "cython"


def mc_triangles(const cnp.uint8_t[:, :, ::1] cases, edge_ids,
                 const cnp.int8_t[:, ::1] tri_table,
                 const cnp.int64_t[::1] edge_axis,
                 const cnp.int64_t[:, ::1] edge_offset):
    cdef const cnp.int64_t[:, :, ::1] ex = edge_ids[0]
    cdef const cnp.int64_t[:, :, ::1] ey = edge_ids[1]
    cdef const cnp.int64_t[:, :, ::1] ez = edge_ids[2]
    cdef Py_ssize_t nx = cases.shape[0], ny = cases.shape[1], nz = cases.shape[2]
    cdef Py_ssize_t i, j, k, s, n = 0, count = 0
    cdef int c, e, axis
    cdef Py_ssize_t oi, oj, ok
    cdef cnp.int64_t vid

    cdef Py_ssize_t[256] ntri
    for c in range(256):
        s = 0
        while s < 15 and tri_table[c, s] >= 0:
            s += 1
        ntri[c] = s // 3

    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                count += ntri[cases[i, j, k]]

    out = np.empty((count, 3), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] tris = out
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                c = cases[i, j, k]
                for s in range(ntri[c] * 3):
                    e = tri_table[c, s]
                    axis = <int>edge_axis[e]
                    oi = i + edge_offset[e, 0]
                    oj = j + edge_offset[e, 1]
                    ok = k + edge_offset[e, 2]
                    if axis == 0:
                        vid = ex[oi, oj, ok]
                    elif axis == 1:
                        vid = ey[oi, oj, ok]
                    else:
                        vid = ez[oi, oj, ok]
                    tris[n + s // 3, s % 3] = vid
                n += ntri[c]
    return out


def rasterize(const double[:, ::1] xy, const double[::1] inv_z,
              const cnp.uint8_t[::1] valid, const cnp.int64_t[:, ::1] tris,
              Py_ssize_t width, Py_ssize_t height):
    tri_id_arr = np.full((height, width), -1, dtype=np.int64)
    weights_arr = np.zeros((height, width, 3), dtype=np.float64)
    zbuf_arr = np.zeros((height, width), dtype=np.float64)
    cdef cnp.int64_t[:, ::1] tri_id = tri_id_arr
    cdef double[:, :, ::1] weights = weights_arr
    cdef double[:, ::1] zbuf = zbuf_arr

    cdef Py_ssize_t t, a, b, c, px_i, py_i, x0, x1, y0, y1
    cdef double xa, ya, xb, yb, xc, yc, area, px, py
    cdef double w0, w1, w2, b0, b1, b2, iza, izb, izc, iz
    cdef double fx0, fx1, fy0, fy1
    cdef bint inside

    for t in range(tris.shape[0]):
        a = tris[t, 0]
        b = tris[t, 1]
        c = tris[t, 2]
        if not (valid[a] and valid[b] and valid[c]):
            continue
        xa = xy[a, 0]; ya = xy[a, 1]
        xb = xy[b, 0]; yb = xy[b, 1]
        xc = xy[c, 0]; yc = xy[c, 1]
        area = (xb - xa) * (yc - ya) - (xc - xa) * (yb - ya)
        if area == 0.0:
            continue
        fx0 = ceil(min(xa, xb, xc))
        fx1 = floor(max(xa, xb, xc))
        fy0 = ceil(min(ya, yb, yc))
        fy1 = floor(max(ya, yb, yc))
        if fx0 > width - 1 or fx1 < 0 or fy0 > height - 1 or fy1 < 0:
            continue
        x0 = 0 if fx0 < 0 else <Py_ssize_t>fx0
        x1 = width - 1 if fx1 > width - 1 else <Py_ssize_t>fx1
        y0 = 0 if fy0 < 0 else <Py_ssize_t>fy0
        y1 = height - 1 if fy1 > height - 1 else <Py_ssize_t>fy1
        if x0 > x1 or y0 > y1:
            continue
        iza = inv_z[a]; izb = inv_z[b]; izc = inv_z[c]
        for py_i in range(y0, y1 + 1):
            py = <double>py_i
            for px_i in range(x0, x1 + 1):
                px = <double>px_i
                w0 = (xb - px) * (yc - py) - (xc - px) * (yb - py)
                w1 = (xc - px) * (ya - py) - (xa - px) * (yc - py)
                w2 = (xa - px) * (yb - py) - (xb - px) * (ya - py)
                if area > 0.0:
                    inside = w0 >= 0.0 and w1 >= 0.0 and w2 >= 0.0
                else:
                    inside = w0 <= 0.0 and w1 <= 0.0 and w2 <= 0.0
                if not inside:
                    continue
                b0 = w0 / area
                b1 = w1 / area
                b2 = w2 / area
                iz = b0 * iza + b1 * izb + b2 * izc
                if iz > zbuf[py_i, px_i]:
                    zbuf[py_i, px_i] = iz
                    tri_id[py_i, px_i] = t
                    weights[py_i, px_i, 0] = b0 * iza / iz
                    weights[py_i, px_i, 1] = b1 * izb / iz
                    weights[py_i, px_i, 2] = b2 * izc / iz
    return tri_id_arr, weights_arr, zbuf_arr


def nms(const double[:, ::1] mag, const cnp.int8_t[:, ::1] direction):
    cdef Py_ssize_t h = mag.shape[0], w = mag.shape[1]
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, c, dr, dc, rn, cn, rp, cp
    cdef double m, nxt, prv
    cdef int b
    for r in range(h):
        for c in range(w):
            m = mag[r, c]
            if not m > 0.0:
                continue
            b = direction[r, c]
            if b == 0:
                dr = 0; dc = 1
            elif b == 1:
                dr = 1; dc = 1
            elif b == 2:
                dr = 1; dc = 0
            else:
                dr = 1; dc = -1
            rn = r + dr; cn = c + dc
            rp = r - dr; cp = c - dc
            nxt = mag[rn, cn] if 0 <= rn < h and 0 <= cn < w else 0.0
            prv = mag[rp, cp] if 0 <= rp < h and 0 <= cp < w else 0.0
            if m >= prv and m > nxt:
                out[r, c] = m
    return out_arr

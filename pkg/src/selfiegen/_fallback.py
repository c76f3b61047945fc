"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable. Every function
here mirrors its Cython twin operation for operation so both backends give
identical results on the same inputs.
"""

import numpy as np

NAME = "python"


def mc_triangles(cases, edge_ids, tri_table, edge_axis, edge_offset):
    """Emit triangles (as global vertex ids) for every active cell.

    Parameters
    ----------
    cases : (cx, cy, cz) uint8
        Case index per cell.
    edge_ids : tuple of three int64 arrays
        Vertex id for the crossing on each grid edge along x, y and z, -1 where
        the edge has no crossing.
    tri_table : (256, 16) int8
    edge_axis : (12,) int64
    edge_offset : (12, 3) int64

    Returns
    -------
    (F, 3) int64 array, cells visited in C order, triangles in table order.
    """
    flat = cases.ravel()
    active = np.flatnonzero((flat != 0) & (flat != 255))
    if active.size == 0:
        return np.empty((0, 3), dtype=np.int64)
    ci, cj, ck = np.unravel_index(active, cases.shape)
    local = tri_table[flat[active]][:, :15].astype(np.int64)
    present = local >= 0
    safe = np.where(present, local, 0)
    ids = np.full(local.shape, -1, dtype=np.int64)
    for axis in range(3):
        sel = present & (edge_axis[safe] == axis)
        rows, slots = np.nonzero(sel)
        e = safe[rows, slots]
        ids[rows, slots] = edge_ids[axis][
            ci[rows] + edge_offset[e, 0],
            cj[rows] + edge_offset[e, 1],
            ck[rows] + edge_offset[e, 2],
        ]
    tris = ids.reshape(-1, 5, 3)
    keep = present.reshape(-1, 5, 3)[:, :, 0]
    return tris[keep]


def rasterize(xy, inv_z, valid, tris, width, height):
    """Z-buffered coverage pass.

    Pixel centres sit at integer coordinates. A pixel is covered when its centre
    lies inside the triangle or on an edge; the nearer surface (larger 1/z) wins
    and exact ties keep the earlier triangle.

    Returns ``(tri_id, weights, zbuf)`` where ``weights`` are perspective-correct
    barycentric weights and ``zbuf`` holds 1/z (0 where nothing was drawn).
    """
    tri_id = np.full((height, width), -1, dtype=np.int64)
    weights = np.zeros((height, width, 3), dtype=np.float64)
    zbuf = np.zeros((height, width), dtype=np.float64)
    for t in range(tris.shape[0]):
        a, b, c = tris[t]
        if not (valid[a] and valid[b] and valid[c]):
            continue
        xa, ya = xy[a]
        xb, yb = xy[b]
        xc, yc = xy[c]
        area = (xb - xa) * (yc - ya) - (xc - xa) * (yb - ya)
        if area == 0.0:
            continue
        x0 = max(0, int(np.ceil(min(xa, xb, xc))))
        x1 = min(width - 1, int(np.floor(max(xa, xb, xc))))
        y0 = max(0, int(np.ceil(min(ya, yb, yc))))
        y1 = min(height - 1, int(np.floor(max(ya, yb, yc))))
        if x0 > x1 or y0 > y1:
            continue
        px = np.arange(x0, x1 + 1, dtype=np.float64)[None, :]
        py = np.arange(y0, y1 + 1, dtype=np.float64)[:, None]
        w0 = (xb - px) * (yc - py) - (xc - px) * (yb - py)
        w1 = (xc - px) * (ya - py) - (xa - px) * (yc - py)
        w2 = (xa - px) * (yb - py) - (xb - px) * (ya - py)
        if area > 0.0:
            inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        else:
            inside = (w0 <= 0.0) & (w1 <= 0.0) & (w2 <= 0.0)
        b0 = w0 / area
        b1 = w1 / area
        b2 = w2 / area
        iza, izb, izc = inv_z[a], inv_z[b], inv_z[c]
        iz = b0 * iza + b1 * izb + b2 * izc
        region = zbuf[y0:y1 + 1, x0:x1 + 1]
        win = inside & (iz > region)
        if not win.any():
            continue
        region[win] = iz[win]
        tri_id[y0:y1 + 1, x0:x1 + 1][win] = t
        wreg = weights[y0:y1 + 1, x0:x1 + 1]
        wreg[win, 0] = (b0 * iza / iz)[win]
        wreg[win, 1] = (b1 * izb / iz)[win]
        wreg[win, 2] = (b2 * izc / iz)[win]
    return tri_id, weights, zbuf


# (drow, dcol) of the "next" neighbour along the quantised gradient direction
_NMS_STEPS = np.array([[0, 1], [1, 1], [1, 0], [1, -1]], dtype=np.int64)


def nms(mag, direction):
    """Non-maximum suppression along quantised gradient directions.

    ``direction`` holds bins 0..3 (0, 45, 90, 135 degrees). A pixel survives when
    it is >= its predecessor and > its successor along the gradient, so a ridge
    that straddles two pixels with equal magnitude keeps exactly one of them.
    Neighbours outside the image count as zero.
    """
    h, w = mag.shape
    padded = np.zeros((h + 2, w + 2), dtype=np.float64)
    padded[1:-1, 1:-1] = mag
    out = np.zeros_like(mag, dtype=np.float64)
    for b in range(4):
        dr, dc = _NMS_STEPS[b]
        nxt = padded[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
        prv = padded[1 - dr:1 - dr + h, 1 - dc:1 - dc + w]
        keep = (direction == b) & (mag > 0.0) & (mag >= prv) & (mag > nxt)
        out[keep] = mag[keep]
    return out

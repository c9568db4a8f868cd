"""Pure-numpy implementations of the hot kernels.

Reference lane: always available, used when numba is missing or disabled
via VECTRAJ_NUMBA=0. Must stay bit-identical to the numba lane — both
implement the same arithmetic with the same tie-break rules.
"""

import numpy as np


def segment_max(x, seg_ids, n_seg, valid):
    """Per-segment, per-column max over the valid rows of ``x``.

    x       : (N, d) float64
    seg_ids : (N,) int64, values in [0, n_seg)
    valid   : (N,) bool
    Returns (out (n_seg, d), argrow (n_seg, d) int64). Segments with no
    valid row get out = -inf and argrow = -1; callers decide whether that
    is an error. Ties broken by the lowest row index.
    """
    d = x.shape[1]
    out = np.full((n_seg, d), -np.inf)
    argrow = np.full((n_seg, d), -1, dtype=np.int64)
    for s in range(n_seg):
        rows = np.flatnonzero((seg_ids == s) & valid)
        if rows.size == 0:
            continue
        sub = x[rows]
        best = np.argmax(sub, axis=0)
        out[s] = sub[best, np.arange(d)]
        argrow[s] = rows[best]
    return out, argrow


def point_in_polygon(points, poly):
    """Boundary-inclusive even-odd point-in-polygon test.

    points : (m, 2) float64
    poly   : (n, 2) float64, vertices of a simple polygon, not closed
    Returns (m,) bool. A point exactly on an edge counts as inside.
    """
    px = points[:, 0][:, None]
    py = points[:, 1][:, None]
    ax = poly[:, 0][None, :]
    ay = poly[:, 1][None, :]
    bx = np.roll(poly[:, 0], -1)[None, :]
    by = np.roll(poly[:, 1], -1)[None, :]

    # on-edge test: zero cross product and projection within the segment
    ex = bx - ax
    ey = by - ay
    qx = px - ax
    qy = py - ay
    cross = ex * qy - ey * qx
    dot = qx * ex + qy * ey
    seg_len2 = ex * ex + ey * ey
    on_edge = (cross == 0.0) & (dot >= 0.0) & (dot <= seg_len2)
    on_boundary = on_edge.any(axis=1)

    # even-odd ray cast toward +x
    straddles = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_int = (bx - ax) * (py - ay) / (by - ay) + ax
    crossing = straddles & (px < x_int)
    inside = (crossing.sum(axis=1) % 2).astype(bool)
    return inside | on_boundary


def greedy_nms(endpoints, order, threshold, k):
    """Greedy endpoint NMS: walk ``order``, pick a mode iff its endpoint is
    at least ``threshold`` away from every already-picked endpoint, stop at
    k picks.

    endpoints : (M, 2) float64
    order     : (M,) int64, candidate indices in visiting order
    Returns int64 array of picked indices (length <= k). Distances are
    compared squared against threshold**2 in both lanes.
    """
    picked = np.empty(k, dtype=np.int64)
    n_picked = 0
    thr2 = threshold * threshold
    for idx in order:
        if n_picked >= k:
            break
        ok = True
        for j in range(n_picked):
            p = picked[j]
            dx = endpoints[idx, 0] - endpoints[p, 0]
            dy = endpoints[idx, 1] - endpoints[p, 1]
            if dx * dx + dy * dy < thr2:
                ok = False
                break
        if ok:
            picked[n_picked] = idx
            n_picked += 1
    return picked[:n_picked].copy()


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def polygon_self_intersects(poly):
    """True if any two non-adjacent edges of the closed polygon intersect
    or touch. poly: (n, 2) float64, vertices not repeated at the end.
    """
    n = poly.shape[0]
    for i in range(n):
        ax, ay = poly[i, 0], poly[i, 1]
        bx, by = poly[(i + 1) % n, 0], poly[(i + 1) % n, 1]
        for j in range(i + 1, n):
            # skip adjacent edges (shared vertex), including the wrap pair
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            cx, cy = poly[j, 0], poly[j, 1]
            dx, dy = poly[(j + 1) % n, 0], poly[(j + 1) % n, 1]
            d1 = _orient(ax, ay, bx, by, cx, cy)
            d2 = _orient(ax, ay, bx, by, dx, dy)
            d3 = _orient(cx, cy, dx, dy, ax, ay)
            d4 = _orient(cx, cy, dx, dy, bx, by)
            if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
                return True
            if d1 == 0 and _on_segment(ax, ay, bx, by, cx, cy):
                return True
            if d2 == 0 and _on_segment(ax, ay, bx, by, dx, dy):
                return True
            if d3 == 0 and _on_segment(cx, cy, dx, dy, ax, ay):
                return True
            if d4 == 0 and _on_segment(cx, cy, dx, dy, bx, by):
                return True
    return False


def _on_segment(ax, ay, bx, by, px, py):
    return (min(ax, bx) <= px <= max(ax, bx)) and (min(ay, by) <= py <= max(ay, by))

"""Numba-jitted twins of the kernels in _numpy.py.

Same signatures, same arithmetic, same tie-breaks; just explicit loops
instead of vectorized temporaries. cache=True so the compile cost is paid
once per environment.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def segment_max(x, seg_ids, n_seg, valid):
    n, d = x.shape
    out = np.full((n_seg, d), -np.inf)
    argrow = np.full((n_seg, d), -1, dtype=np.int64)
    for i in range(n):
        if not valid[i]:
            continue
        s = seg_ids[i]
        for j in range(d):
            if x[i, j] > out[s, j] or argrow[s, j] < 0:
                out[s, j] = x[i, j]
                argrow[s, j] = i
    return out, argrow


@njit(cache=True)
def point_in_polygon(points, poly):
    m = points.shape[0]
    n = poly.shape[0]
    result = np.zeros(m, dtype=np.bool_)
    for p in range(m):
        px = points[p, 0]
        py = points[p, 1]
        inside = False
        on_boundary = False
        for i in range(n):
            ax = poly[i, 0]
            ay = poly[i, 1]
            bx = poly[(i + 1) % n, 0]
            by = poly[(i + 1) % n, 1]
            ex = bx - ax
            ey = by - ay
            qx = px - ax
            qy = py - ay
            cross = ex * qy - ey * qx
            dot = qx * ex + qy * ey
            seg_len2 = ex * ex + ey * ey
            if cross == 0.0 and dot >= 0.0 and dot <= seg_len2:
                on_boundary = True
                break
            if (ay > py) != (by > py):
                x_int = (bx - ax) * (py - ay) / (by - ay) + ax
                if px < x_int:
                    inside = not inside
        result[p] = inside or on_boundary
    return result


@njit(cache=True)
def greedy_nms(endpoints, order, threshold, k):
    m = order.shape[0]
    picked = np.empty(k, dtype=np.int64)
    n_picked = 0
    thr2 = threshold * threshold
    for oi in range(m):
        if n_picked >= k:
            break
        idx = order[oi]
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


@njit(cache=True)
def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@njit(cache=True)
def _on_segment(ax, ay, bx, by, px, py):
    return (min(ax, bx) <= px <= max(ax, bx)) and (min(ay, by) <= py <= max(ay, by))


@njit(cache=True)
def polygon_self_intersects(poly):
    n = poly.shape[0]
    for i in range(n):
        ax = poly[i, 0]
        ay = poly[i, 1]
        bx = poly[(i + 1) % n, 0]
        by = poly[(i + 1) % n, 1]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            cx = poly[j, 0]
            cy = poly[j, 1]
            dx = poly[(j + 1) % n, 0]
            dy = poly[(j + 1) % n, 1]
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

"""Exact grid/segment geometry kernels shared by sensing, graphs and planners.

Every line-of-sight question in the simulator reduces to one predicate:
does the closed segment between two points touch the closed square of a
grid cell ("supercover" semantics, so exact corner contact blocks)?  The
predicate is written once here with a fixed operation order; the brute
force oracles in the test suite mirror the same formula in pure Python,
so floating-point ties resolve identically on both routes.

Angular sector membership is tested via dot products against a
precomputed cos(fov/2) instead of atan2, for the same reason: libm atan2
may differ by an ulp between the JIT and the interpreter.

Cell (r, c) spans [c*res, (c+1)*res] x [r*res, (r+1)*res]; its center is
((c+0.5)*res, (r+0.5)*res).  Row index r maps to the y axis.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# 36 heading bins, 10 degrees apart, bin b centered at b*10deg.
N_BINS = 36
BIN_CENTERS = np.array([b * math.pi / 18.0 for b in range(N_BINS)])
BIN_UX = np.array([math.cos(a) for a in BIN_CENTERS])
BIN_UY = np.array([math.sin(a) for a in BIN_CENTERS])


def wrap_angle(a: float) -> float:
    """Wrap to [0, 2*pi)."""
    a = math.fmod(a, 2.0 * math.pi)
    return a + 2.0 * math.pi if a < 0.0 else a


def wrap_to_pi(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a > math.pi:
        a -= 2.0 * math.pi
    elif a <= -math.pi:
        a += 2.0 * math.pi
    return a


def cos_half_fov(fov_deg: float) -> float:
    """cos(fov/2), the sector membership threshold (fov >= 360 accepts all)."""
    if fov_deg >= 360.0:
        return -1.0
    return math.cos(math.radians(fov_deg) / 2.0)


def nearest_bin(heading: float) -> int:
    """Closest 10-degree bin center; exact midpoints go to the smaller bin."""
    best, best_d = 0, 10.0
    for b in range(N_BINS):
        d = abs(wrap_to_pi(heading - BIN_CENTERS[b]))
        if d < best_d - 1e-12:
            best, best_d = b, d
    return best


@njit(cache=True)
def _seg_hits_cell(px, py, qx, qy, x0, y0, x1, y1):
    # Closed-interval slab clip of segment [p,q] against square [x0,x1]x[y0,y1].
    dx = qx - px
    dy = qy - py
    tlo = 0.0
    thi = 1.0
    if dx == 0.0:
        if px < x0 or px > x1:
            return False
    else:
        t1 = (x0 - px) / dx
        t2 = (x1 - px) / dx
        if t1 <= t2:
            lo, hi = t1, t2
        else:
            lo, hi = t2, t1
        if lo > tlo:
            tlo = lo
        if hi < thi:
            thi = hi
    if dy == 0.0:
        if py < y0 or py > y1:
            return False
    else:
        t1 = (y0 - py) / dy
        t2 = (y1 - py) / dy
        if t1 <= t2:
            lo, hi = t1, t2
        else:
            lo, hi = t2, t1
        if lo > tlo:
            tlo = lo
        if hi < thi:
            thi = hi
    return tlo <= thi


@njit(cache=True)
def _segment_blocked(blocked, res, px, py, qx, qy, skip_r, skip_c):
    # Any blocked cell touching [p,q], ignoring (skip_r, skip_c)?
    h, w = blocked.shape
    xmin = px if px < qx else qx
    xmax = px if px > qx else qx
    ymin = py if py < qy else qy
    ymax = py if py > qy else qy
    c0 = max(0, int(math.floor(xmin / res)) - 1)
    c1 = min(w - 1, int(math.floor(xmax / res)) + 1)
    r0 = max(0, int(math.floor(ymin / res)) - 1)
    r1 = min(h - 1, int(math.floor(ymax / res)) + 1)
    for r in range(r0, r1 + 1):
        for c in range(c0, c1 + 1):
            if blocked[r, c] == 0:
                continue
            if r == skip_r and c == skip_c:
                continue
            if _seg_hits_cell(px, py, qx, qy, c * res, r * res,
                              (c + 1) * res, (r + 1) * res):
                return True
    return False


@njit(cache=True)
def sector_visible(blocked, res, px, py, ux, uy, cos_half, range_m):
    """Visible-cell mask for a sector sensor at (px, py) facing (ux, uy).

    A cell is visible when its center is within range_m, within the
    angular window (the sensor's own cell bypasses the angle test), and
    the segment from the sensor to the center touches no blocked cell
    other than the target itself.
    """
    h, w = blocked.shape
    out = np.zeros((h, w), dtype=np.uint8)
    self_c = int(math.floor(px / res))
    self_r = int(math.floor(py / res))
    rad_cells = int(math.ceil(range_m / res)) + 1
    r0 = max(0, self_r - rad_cells)
    r1 = min(h - 1, self_r + rad_cells)
    c0 = max(0, self_c - rad_cells)
    c1 = min(w - 1, self_c + rad_cells)
    rng2 = range_m * range_m

    # Gather blockers in the inflated box once, nearest first.
    nb = 0
    for r in range(max(0, r0 - 1), min(h - 1, r1 + 1) + 1):
        for c in range(max(0, c0 - 1), min(w - 1, c1 + 1) + 1):
            if blocked[r, c] != 0:
                nb += 1
    brs = np.empty(nb, dtype=np.int64)
    bcs = np.empty(nb, dtype=np.int64)
    bds = np.empty(nb, dtype=np.float64)
    k = 0
    for r in range(max(0, r0 - 1), min(h - 1, r1 + 1) + 1):
        for c in range(max(0, c0 - 1), min(w - 1, c1 + 1) + 1):
            if blocked[r, c] != 0:
                ddx = (c + 0.5) * res - px
                ddy = (r + 0.5) * res - py
                brs[k] = r
                bcs[k] = c
                bds[k] = math.sqrt(ddx * ddx + ddy * ddy)
                k += 1
    order = np.argsort(bds, kind="mergesort")
    brs = brs[order]
    bcs = bcs[order]
    bds = bds[order]
    reach = 0.5 * math.sqrt(2.0) * res  # blocker center to segment bound

    for r in range(r0, r1 + 1):
        for c in range(c0, c1 + 1):
            cx = (c + 0.5) * res
            cy = (r + 0.5) * res
            dx = cx - px
            dy = cy - py
            d2 = dx * dx + dy * dy
            if d2 > rng2:
                continue
            if not (r == self_r and c == self_c):
                dist = math.sqrt(d2)
                if dx * ux + dy * uy < cos_half * dist:
                    continue
            else:
                dist = math.sqrt(d2)
            vis = True
            for k in range(nb):
                if bds[k] > dist + reach:
                    break
                br = brs[k]
                bc = bcs[k]
                if br == r and bc == c:
                    continue
                if _seg_hits_cell(px, py, cx, cy, bc * res, br * res,
                                  (bc + 1) * res, (br + 1) * res):
                    vis = False
                    break
            if vis:
                out[r, c] = 1
    return out


@njit(cache=True)
def visible_targets(blocked, res, px, py, t_r, t_c, range_m):
    """Per-target range + line-of-sight flags plus offsets from (px, py).

    Returns (flags u8, dx, dy, dist, same u8) where same marks targets in
    the observer's own cell (always visible, every heading sees them).
    """
    n = t_r.shape[0]
    flags = np.zeros(n, dtype=np.uint8)
    dxs = np.empty(n, dtype=np.float64)
    dys = np.empty(n, dtype=np.float64)
    dss = np.empty(n, dtype=np.float64)
    same = np.zeros(n, dtype=np.uint8)
    self_c = int(math.floor(px / res))
    self_r = int(math.floor(py / res))
    rng2 = range_m * range_m
    for i in range(n):
        r = t_r[i]
        c = t_c[i]
        cx = (c + 0.5) * res
        cy = (r + 0.5) * res
        dx = cx - px
        dy = cy - py
        d2 = dx * dx + dy * dy
        dxs[i] = dx
        dys[i] = dy
        dss[i] = math.sqrt(d2)
        if d2 > rng2:
            continue
        if r == self_r and c == self_c:
            flags[i] = 1
            same[i] = 1
            continue
        if not _segment_blocked(blocked, res, px, py, cx, cy, r, c):
            flags[i] = 1
    return flags, dxs, dys, dss, same


@njit(cache=True)
def bin_counts(flags, dxs, dys, dss, same, ubx, uby, cos_half):
    """Count visible targets per heading bin (36 sector placements)."""
    counts = np.zeros(N_BINS, dtype=np.int64)
    n = flags.shape[0]
    for i in range(n):
        if flags[i] == 0:
            continue
        if same[i] == 1:
            for b in range(N_BINS):
                counts[b] += 1
            continue
        d = dss[i]
        for b in range(N_BINS):
            if dxs[i] * ubx[b] + dys[i] * uby[b] >= cos_half * d:
                counts[b] += 1
    return counts


@njit(cache=True)
def heading_counts(flags, dxs, dys, dss, same, hx, hy, cos_half):
    """Count visible targets inside a single sector facing (hx, hy)."""
    out = np.zeros(flags.shape[0], dtype=np.uint8)
    n = flags.shape[0]
    for i in range(n):
        if flags[i] == 0:
            continue
        if same[i] == 1 or dxs[i] * hx + dys[i] * hy >= cos_half * dss[i]:
            out[i] = 1
    return out


@njit(cache=True)
def segments_clear(blocked, res, ax, ay, bx, by):
    """Batch check: segment i touches no blocked cell at all."""
    n = ax.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        if not _segment_blocked(blocked, res, ax[i], ay[i], bx[i], by[i], -1, -1):
            out[i] = 1
    return out


@njit(cache=True)
def points_clear_of(occupied, res, pxs, pys, clearance):
    """True where the distance from point i to every occupied square >= clearance."""
    h, w = occupied.shape
    n = pxs.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    rad = int(math.ceil(clearance / res)) + 1
    for i in range(n):
        px = pxs[i]
        py = pys[i]
        cc = int(math.floor(px / res))
        cr = int(math.floor(py / res))
        ok = True
        for r in range(max(0, cr - rad), min(h - 1, cr + rad) + 1):
            for c in range(max(0, cc - rad), min(w - 1, cc + rad) + 1):
                if occupied[r, c] == 0:
                    continue
                gx = px - max(c * res, min(px, (c + 1) * res))
                gy = py - max(r * res, min(py, (r + 1) * res))
                if gx * gx + gy * gy < clearance * clearance:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            out[i] = 1
    return out

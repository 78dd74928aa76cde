"""Brute-force pure-Python oracles, independent of the production kernels.

Each oracle walks cells or paths in the dumbest correct way.  The segment
membership formula (closed slab clip against the closed cell square) is
the canonical definition the production code must agree with, including
floating-point tie behavior, so it is written with the same operation
order but no shared code.
"""

from __future__ import annotations

import heapq
import math


def seg_hits_cell(px, py, qx, qy, x0, y0, x1, y1):
    """Does the closed segment [p, q] touch the closed box [x0,x1]x[y0,y1]?"""
    dx = qx - px
    dy = qy - py
    tlo, thi = 0.0, 1.0
    if dx == 0.0:
        if px < x0 or px > x1:
            return False
    else:
        t1 = (x0 - px) / dx
        t2 = (x1 - px) / dx
        lo, hi = (t1, t2) if t1 <= t2 else (t2, t1)
        tlo = max(tlo, lo)
        thi = min(thi, hi)
    if dy == 0.0:
        if py < y0 or py > y1:
            return False
    else:
        t1 = (y0 - py) / dy
        t2 = (y1 - py) / dy
        lo, hi = (t1, t2) if t1 <= t2 else (t2, t1)
        tlo = max(tlo, lo)
        thi = min(thi, hi)
    return tlo <= thi


def segment_walk_clear(blocked, res, px, py, qx, qy, skip=None):
    """Walk every cell the segment touches; False when any blocked one is hit."""
    h = len(blocked)
    w = len(blocked[0])
    c0 = max(0, int(math.floor(min(px, qx) / res)) - 1)
    c1 = min(w - 1, int(math.floor(max(px, qx) / res)) + 1)
    r0 = max(0, int(math.floor(min(py, qy) / res)) - 1)
    r1 = min(h - 1, int(math.floor(max(py, qy) / res)) + 1)
    for r in range(r0, r1 + 1):
        for c in range(c0, c1 + 1):
            if not blocked[r][c] or (skip is not None and (r, c) == skip):
                continue
            if seg_hits_cell(px, py, qx, qy, c * res, r * res, (c + 1) * res, (r + 1) * res):
                return False
    return True


def visible_set_fast(blocked_arr, res, px, py, heading, fov_deg, range_m):
    """Vectorized variant of visible_set for the high-volume acceptance run.

    Same per-cell definition, evaluated with numpy elementwise ops (IEEE
    semantics identical to the scalar loop); candidates are clipped by the
    slab test against every blocked cell in the map.
    """
    import numpy as np

    blocked_arr = np.asarray(blocked_arr, dtype=bool)
    h, w = blocked_arr.shape
    cos_half = -1.0 if fov_deg >= 360.0 else math.cos(math.radians(fov_deg) / 2.0)
    ux, uy = math.cos(heading), math.sin(heading)
    rr, cc = np.mgrid[0:h, 0:w]
    cx = (cc + 0.5) * res
    cy = (rr + 0.5) * res
    dx = cx - px
    dy = cy - py
    d2 = dx * dx + dy * dy
    self_r = int(math.floor(py / res))
    self_c = int(math.floor(px / res))
    cand = d2 <= range_m * range_m
    ang_ok = dx * ux + dy * uy >= cos_half * np.sqrt(d2)
    ang_ok[self_r, self_c] = True
    cand &= ang_ok

    br, bc = np.nonzero(blocked_arr)
    bx0 = bc * res
    bx1 = (bc + 1) * res
    by0 = br * res
    by1 = (br + 1) * res
    out = set()
    for r, c in zip(*np.nonzero(cand)):
        qx = (c + 0.5) * res
        qy = (r + 0.5) * res
        ddx = qx - px
        ddy = qy - py
        tlo = np.zeros(br.size)
        thi = np.ones(br.size)
        if ddx == 0.0:
            okx = (px >= bx0) & (px <= bx1)
            tlo = np.where(okx, tlo, 2.0)  # force miss
        else:
            t1 = (bx0 - px) / ddx
            t2 = (bx1 - px) / ddx
            tlo = np.maximum(tlo, np.minimum(t1, t2))
            thi = np.minimum(thi, np.maximum(t1, t2))
        if ddy == 0.0:
            oky = (py >= by0) & (py <= by1)
            tlo = np.where(oky, tlo, 2.0)
        else:
            t1 = (by0 - py) / ddy
            t2 = (by1 - py) / ddy
            tlo = np.maximum(tlo, np.minimum(t1, t2))
            thi = np.minimum(thi, np.maximum(t1, t2))
        hit = (tlo <= thi) & ~((br == r) & (bc == c))
        if not hit.any():
            out.add(int(r) * w + int(c))
    return out


def visible_set(blocked, res, px, py, heading, fov_deg, range_m):
    """Per-cell sector visibility: range, angular window, segment walk."""
    h = len(blocked)
    w = len(blocked[0])
    cos_half = -1.0 if fov_deg >= 360.0 else math.cos(math.radians(fov_deg) / 2.0)
    ux, uy = math.cos(heading), math.sin(heading)
    self_r = int(math.floor(py / res))
    self_c = int(math.floor(px / res))
    out = set()
    for r in range(h):
        for c in range(w):
            cx = (c + 0.5) * res
            cy = (r + 0.5) * res
            dx = cx - px
            dy = cy - py
            d2 = dx * dx + dy * dy
            if d2 > range_m * range_m:
                continue
            if not (r == self_r and c == self_c):
                if dx * ux + dy * uy < cos_half * math.sqrt(d2):
                    continue
            if segment_walk_clear(blocked, res, px, py, cx, cy, skip=(r, c)):
                out.add(r * w + c)
    return out


def frontier_cells(belief_cells, free=1, unknown=0):
    """Free cells with at least one unknown 4-neighbor (flat indices)."""
    h = len(belief_cells)
    w = len(belief_cells[0])
    out = set()
    for r in range(h):
        for c in range(w):
            if belief_cells[r][c] != free:
                continue
            for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if 0 <= nr < h and 0 <= nc < w and belief_cells[nr][nc] == unknown:
                    out.add(r * w + c)
                    break
    return out


def observable_frontier_count(belief_cells, frontiers, node_xy, heading,
                              fov_deg, range_m, res, free=1):
    """Frontiers within range + sector + line of sight (unknown blocks)."""
    h = len(belief_cells)
    w = len(belief_cells[0])
    blocked = [[belief_cells[r][c] != free for c in range(w)] for r in range(h)]
    px, py = node_xy
    cos_half = -1.0 if fov_deg >= 360.0 else math.cos(math.radians(fov_deg) / 2.0)
    ux, uy = math.cos(heading), math.sin(heading)
    self_r = int(math.floor(py / res))
    self_c = int(math.floor(px / res))
    n = 0
    for f in sorted(frontiers):
        r, c = f // w, f % w
        cx = (c + 0.5) * res
        cy = (r + 0.5) * res
        dx = cx - px
        dy = cy - py
        d2 = dx * dx + dy * dy
        if d2 > range_m * range_m:
            continue
        if not (r == self_r and c == self_c):
            if dx * ux + dy * uy < cos_half * math.sqrt(d2):
                continue
        if segment_walk_clear(blocked, res, px, py, cx, cy, skip=(r, c)):
            n += 1
    return n


def dijkstra_cost(n_nodes, edges, start, goal):
    """Plain Dijkstra over weighted edges [(i, j, w)]; inf when disconnected."""
    adj = {i: [] for i in range(n_nodes)}
    for i, j, w in edges:
        adj[i].append((j, w))
        adj[j].append((i, w))
    dist = {start: 0.0}
    heap = [(0.0, start)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == goal:
            return d
        for v, w in adj[u]:
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return math.inf


def flood_fill_free(cells, seed_rc, free=1):
    """4-connected free component of seed as a set of (r, c)."""
    h = len(cells)
    w = len(cells[0])
    if cells[seed_rc[0]][seed_rc[1]] != free:
        return set()
    seen = {seed_rc}
    stack = [seed_rc]
    while stack:
        r, c = stack.pop()
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < h and 0 <= nc < w and (nr, nc) not in seen and cells[nr][nc] == free:
                seen.add((nr, nc))
                stack.append((nr, nc))
    return seen

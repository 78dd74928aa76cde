"""Incremental collision-free viewpoint graph and per-node information cache.

Nodes are cell centers on a coarse lattice (default pitch 2 m = every 4th
cell at 0.5 m resolution, offset so nodes never sit on grid lines).  Edges
connect nodes within the connection radius whose straight segment touches
only known-free cells, which at this pitch is exactly the lattice
8-neighborhood.  Nodes and edges are append-only over an episode; per-node
frontier statistics (utility u, 36-bin distribution, informative heading)
are recomputed only near newly revealed cells.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from . import frontier as frontier_mod
from . import geometry
from .world import FREE, OCCUPIED, Belief, SensorSpec

NODE_SPACING_M = 2.0
CONNECT_RADIUS_M = 3.0
CLEARANCE_M = 0.5

# Per-node feature layout fed to the networks.
FEATURE_DIM = 9  # dx, dy, u, occ_self, occ_other, occ_none, guidepost, sin_h, cos_h


class ViewGraph:
    """Append-only viewpoint graph over a (H, W) raster."""

    def __init__(self, shape: tuple[int, int], resolution: float, sensor: SensorSpec,
                 spacing: float = NODE_SPACING_M, connect_radius: float = CONNECT_RADIUS_M,
                 clearance: float = CLEARANCE_M):
        self.shape = shape
        self.resolution = resolution
        self.sensor = sensor
        self.spacing = spacing
        self.connect_radius = connect_radius
        self.clearance = clearance
        self.step = max(1, int(round(spacing / resolution)))
        self.offset = self.step // 2

        self.nodes = np.zeros((0, 2), dtype=np.float64)
        self.node_cell: dict[tuple[int, int], int] = {}  # lattice (r, c) -> node index
        self.adj: list[list[int]] = []
        self.counts = np.zeros((0, geometry.N_BINS), dtype=np.int64)
        self.bins = np.zeros((0, geometry.N_BINS), dtype=np.float64)
        self.util = np.zeros((0,), dtype=np.int64)
        self.h_bin = np.zeros((0,), dtype=np.int64)
        self._rejected_cells: set[tuple[int, int]] = set()  # failed clearance, final

    # -- construction ------------------------------------------------------

    def __len__(self) -> int:
        return len(self.adj)

    def _lattice_candidates(self, rows: range, cols: range):
        for r in rows:
            if r % self.step != self.offset:
                continue
            for c in cols:
                if c % self.step != self.offset:
                    continue
                yield r, c

    def _cell_center(self, r: int, c: int) -> tuple[float, float]:
        return ((c + 0.5) * self.resolution, (r + 0.5) * self.resolution)

    def extend(self, free_mask: np.ndarray, occupied_mask: np.ndarray,
               los_blocked: np.ndarray, frontiers: np.ndarray,
               changed: np.ndarray | None = None) -> None:
        """Add newly valid nodes/edges and refresh caches near changed cells.

        free_mask gates node cells and edge segments, occupied_mask drives
        clearance, los_blocked is the line-of-sight blocker raster for the
        frontier statistics.  changed = flat indices of cells whose label
        changed since the previous extend (None means everything).
        """
        h, w = self.shape
        res = self.resolution
        if changed is None:
            rows, cols = range(h), range(w)
            ch_x = ch_y = None
        else:
            if changed.size == 0:
                return
            ch_r = changed // w
            ch_c = changed % w
            pad = int(math.ceil((self.clearance + self.connect_radius) / res)) + 1
            rows = range(max(0, int(ch_r.min()) - pad), min(h, int(ch_r.max()) + pad + 1))
            cols = range(max(0, int(ch_c.min()) - pad), min(w, int(ch_c.max()) + pad + 1))
            ch_x = (ch_c + 0.5) * res
            ch_y = (ch_r + 0.5) * res

        # New nodes: known-free lattice cells with enough wall clearance.
        cand = [(r, c) for r, c in self._lattice_candidates(rows, cols)
                if (r, c) not in self.node_cell
                and (r, c) not in self._rejected_cells
                and free_mask[r, c]]
        new_idx: list[int] = []
        if cand:
            pxs = np.array([(c + 0.5) * res for _, c in cand])
            pys = np.array([(r + 0.5) * res for r, _ in cand])
            ok = geometry.points_clear_of(np.ascontiguousarray(occupied_mask, dtype=np.uint8),
                                          res, pxs, pys, self.clearance)
            for (rc, okv) in zip(cand, ok):
                if not okv:
                    self._rejected_cells.add(rc)  # clearance only shrinks later
                    continue
                idx = len(self.adj)
                self.node_cell[rc] = idx
                self.adj.append([])
                new_idx.append(idx)
            if new_idx:
                pts = np.array([self._cell_center(r, c) for (r, c), i in
                                zip(cand, ok) if i], dtype=np.float64)
                self.nodes = np.vstack([self.nodes, pts])
                z36 = np.zeros((len(new_idx), geometry.N_BINS))
                self.counts = np.vstack([self.counts, z36.astype(np.int64)])
                self.bins = np.vstack([self.bins, z36])
                self.util = np.concatenate([self.util, np.zeros(len(new_idx), dtype=np.int64)])
                self.h_bin = np.concatenate([self.h_bin, np.zeros(len(new_idx), dtype=np.int64)])

        # Candidate edges: lattice neighbors of new nodes plus existing nodes
        # near the change (a previously unknown segment may have cleared).
        touch: set[int] = set(new_idx)
        if changed is None:
            touch.update(range(len(self.adj)))
        else:
            near = self._nodes_within(ch_x, ch_y, self.connect_radius + res)
            touch.update(near)
        seg_blocked = np.ascontiguousarray(free_mask == 0, dtype=np.uint8)
        pairs = []
        for i in sorted(touch):
            for j in self._lattice_neighbors(i):
                if j is not None and j not in self.adj[i]:
                    pairs.append((min(i, j), max(i, j)))
        pairs = sorted(set(pairs))
        if pairs:
            a = self.nodes[[p[0] for p in pairs]]
            b = self.nodes[[p[1] for p in pairs]]
            clear = geometry.segments_clear(seg_blocked, res, a[:, 0], a[:, 1], b[:, 0], b[:, 1])
            for (i, j), cl in zip(pairs, clear):
                if cl:
                    self.adj[i].append(j)
                    self.adj[j].append(i)
                    self.adj[i].sort()
                    self.adj[j].sort()

        # Refresh frontier statistics for nodes whose sector may have changed.
        if changed is None:
            dirty = list(range(len(self.adj)))
        else:
            dirty = sorted(set(self._nodes_within(ch_x, ch_y, self.sensor.range_m + res))
                           | set(new_idx))
        if dirty:
            self._recompute(dirty, los_blocked, frontiers)

    def _lattice_neighbors(self, i: int):
        ir, ic = self._cell_of(i)
        for dr in (-self.step, 0, self.step):
            for dc in (-self.step, 0, self.step):
                if dr == 0 and dc == 0:
                    continue
                yield self.node_cell.get((ir + dr, ic + dc))

    def _cell_of(self, i: int) -> tuple[int, int]:
        x, y = self.nodes[i]
        return (int(math.floor(y / self.resolution)), int(math.floor(x / self.resolution)))

    def _nodes_within(self, xs: np.ndarray, ys: np.ndarray, radius: float) -> list[int]:
        if len(self.adj) == 0 or xs is None or xs.size == 0:
            return []
        dx = self.nodes[:, 0:1] - xs[None, :]
        dy = self.nodes[:, 1:2] - ys[None, :]
        near = ((dx * dx + dy * dy).min(axis=1) <= radius * radius)
        return list(np.flatnonzero(near))

    def _recompute(self, dirty: list[int], los_blocked: np.ndarray, frontiers: np.ndarray) -> None:
        res = self.resolution
        blocked = np.ascontiguousarray(los_blocked, dtype=np.uint8)
        carrier = Belief(np.zeros(self.shape, dtype=np.int8), res)  # shape/res carrier only
        n_max = frontier_mod.sector_cell_count(self.sensor.range_m, self.sensor.fov_deg, res)
        for i in dirty:
            if frontiers.size == 0:
                counts = np.zeros(geometry.N_BINS, dtype=np.int64)
            else:
                counts = frontier_mod.frontier_bin_counts(
                    carrier, frontiers, tuple(self.nodes[i]), self.sensor, blocked=blocked)
            self.counts[i] = counts
            self.bins[i] = np.minimum(counts / n_max, 1.0)
            self.util[i] = int(counts.max())
            self.h_bin[i] = int(np.argmax(counts))

    # -- queries -----------------------------------------------------------

    def node_at(self, x: float, y: float) -> int | None:
        """Node whose position matches (x, y) within half a cell."""
        if len(self.adj) == 0:
            return None
        d = np.hypot(self.nodes[:, 0] - x, self.nodes[:, 1] - y)
        i = int(np.argmin(d))
        return i if d[i] <= self.resolution / 2 else None

    def edge_length(self, i: int, j: int) -> float:
        return float(np.hypot(*(self.nodes[i] - self.nodes[j])))

    def total_utility(self) -> int:
        return int(self.util.sum())

    def nearest_node_to_cells(self, flat_cells: np.ndarray, width: int) -> np.ndarray:
        """For each flat cell index, the closest node (euclid, ties to low index)."""
        cx = (flat_cells % width + 0.5) * self.resolution
        cy = (flat_cells // width + 0.5) * self.resolution
        dx = self.nodes[:, 0:1] - cx[None, :]
        dy = self.nodes[:, 1:2] - cy[None, :]
        return np.argmin(dx * dx + dy * dy, axis=0)


def sample_viewpoints(belief: Belief, spacing: float = NODE_SPACING_M,
                      clearance: float = CLEARANCE_M) -> list[tuple[float, float]]:
    """Ordered lattice viewpoints on known-free cells with wall clearance."""
    if spacing <= 0:
        raise ValueError("spacing must be > 0")
    res = belief.resolution
    step = max(1, int(round(spacing / res)))
    offset = step // 2
    h, w = belief.cells.shape
    occupied = np.ascontiguousarray(belief.cells == OCCUPIED, dtype=np.uint8)
    out = []
    cand = [(r, c) for r in range(offset, h, step) for c in range(offset, w, step)
            if belief.cells[r, c] == FREE]
    if not cand:
        return out
    pxs = np.array([(c + 0.5) * res for _, c in cand])
    pys = np.array([(r + 0.5) * res for r, _ in cand])
    ok = geometry.points_clear_of(occupied, res, pxs, pys, clearance)
    for (x, y), okv in zip(zip(pxs, pys), ok):
        if okv:
            out.append((float(x), float(y)))
    return out


def extend_graph(graph: ViewGraph, belief: Belief) -> ViewGraph:
    """Grow the graph to cover the belief (full recompute variant)."""
    graph.extend((belief.cells == FREE), (belief.cells == OCCUPIED),
                 (belief.cells != FREE), frontier_mod.extract_frontiers(belief))
    return graph


# ---------------------------------------------------------------------------
# Shortest paths.  Deterministic tie-breaks: the heap orders by (key, node
# index) and relaxation only accepts strict improvements, so equal-cost
# alternatives resolve toward the first (lowest-index) parent discovered.

def astar(graph: ViewGraph, start: int, goal: int) -> list[int]:
    """Minimal Euclidean-length node path; [] iff disconnected."""
    n = len(graph.adj)
    if start == goal:
        return [start]
    gsc = np.full(n, np.inf)
    gsc[start] = 0.0
    parent = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=bool)
    gx, gy = graph.nodes[goal]
    h0 = math.hypot(graph.nodes[start][0] - gx, graph.nodes[start][1] - gy)
    heap = [(h0, start)]
    while heap:
        f, u = heapq.heappop(heap)
        if closed[u]:
            continue
        closed[u] = True
        if u == goal:
            break
        for v in graph.adj[u]:
            if closed[v]:
                continue
            cand = gsc[u] + graph.edge_length(u, v)
            if cand < gsc[v]:
                gsc[v] = cand
                parent[v] = u
                hv = math.hypot(graph.nodes[v][0] - gx, graph.nodes[v][1] - gy)
                heapq.heappush(heap, (cand + hv, v))
    if not closed[goal]:
        return []
    path = [goal]
    while path[-1] != start:
        path.append(int(parent[path[-1]]))
    return path[::-1]


def dijkstra(graph: ViewGraph, start: int) -> tuple[np.ndarray, np.ndarray]:
    """Distances and parents from start over the whole graph."""
    n = len(graph.adj)
    dist = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    dist[start] = 0.0
    closed = np.zeros(n, dtype=bool)
    heap = [(0.0, start)]
    while heap:
        d, u = heapq.heappop(heap)
        if closed[u]:
            continue
        closed[u] = True
        for v in graph.adj[u]:
            if closed[v]:
                continue
            cand = dist[u] + graph.edge_length(u, v)
            if cand < dist[v]:
                dist[v] = cand
                parent[v] = u
                heapq.heappush(heap, (cand, v))
    return dist, parent


def path_cost(graph: ViewGraph, path: list[int]) -> float:
    return sum(graph.edge_length(a, b) for a, b in zip(path, path[1:]))


@dataclass
class GuidepostInfo:
    mask: np.ndarray          # uint8 per node
    path: list[int]           # agent node .. node nearest the target frontier
    frontier_cell: int        # flat index, -1 when no reachable frontier
    dist: np.ndarray          # graph distances from the agent node


def guidepost_info(graph: ViewGraph, agent_node: int, frontiers: np.ndarray,
                   width: int) -> GuidepostInfo:
    """A*-path marking toward the frontier nearest by graph distance.

    The target frontier minimizes the graph distance from the agent node to
    the node closest to that frontier; ties go to the smaller frontier cell
    index.  Unreachable frontiers are skipped; no reachable frontier yields
    an all-zero mask.
    """
    n = len(graph.adj)
    mask = np.zeros(n, dtype=np.uint8)
    dist, parent = dijkstra(graph, agent_node)
    if frontiers.size == 0:
        return GuidepostInfo(mask, [], -1, dist)
    node_f = graph.nearest_node_to_cells(frontiers, width)
    fdist = dist[node_f]
    best = int(np.argmin(fdist))  # first minimum = smallest frontier index
    if not np.isfinite(fdist[best]):
        return GuidepostInfo(mask, [], -1, dist)
    goal = int(node_f[best])
    path = [goal]
    while path[-1] != agent_node:
        path.append(int(parent[path[-1]]))
    path = path[::-1]
    mask[path] = 1
    return GuidepostInfo(mask, path, int(frontiers[best]), dist)


def guidepost(graph: ViewGraph, agent_node: int, frontiers: np.ndarray,
              belief: Belief) -> np.ndarray:
    """Binary per-node flag: on the path from the agent to its nearest frontier."""
    return guidepost_info(graph, agent_node, frontiers, belief.cells.shape[1]).mask


def adjacency_mask(graph: ViewGraph) -> np.ndarray:
    """Boolean attention mask: true iff edge exists or i == j."""
    n = len(graph.adj)
    m = np.eye(n, dtype=bool)
    for i, nbrs in enumerate(graph.adj):
        m[i, nbrs] = True
    return m


def assemble_features(graph: ViewGraph, agent_nodes: list[int], agent_index: int,
                      half_extent: float, n_max: int,
                      guidepost_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalized per-node features for one agent plus the attention mask.

    Layout: [dx, dy, u, occ_self, occ_other, occ_none, guidepost, sin_h, cos_h]
    with positions divided by the map half-extent and u by the sector
    normalizer.
    """
    n = len(graph.adj)
    if n == 0:
        raise ValueError("cannot assemble features for an empty graph")
    feats = np.zeros((n, FEATURE_DIM), dtype=np.float32)
    ax, ay = graph.nodes[agent_nodes[agent_index]]
    feats[:, 0] = (graph.nodes[:, 0] - ax) / half_extent
    feats[:, 1] = (graph.nodes[:, 1] - ay) / half_extent
    feats[:, 2] = np.minimum(graph.util / n_max, 1.0)
    occ = np.full(n, 2, dtype=np.int64)  # none
    for j, nd in enumerate(agent_nodes):
        if j != agent_index:
            occ[nd] = 1  # other
    occ[agent_nodes[agent_index]] = 0  # self
    feats[np.arange(n), 3 + occ] = 1.0
    feats[:, 6] = guidepost_mask
    h = geometry.BIN_CENTERS[graph.h_bin]
    feats[:, 7] = np.sin(h)
    feats[:, 8] = np.cos(h)
    return feats, adjacency_mask(graph)
